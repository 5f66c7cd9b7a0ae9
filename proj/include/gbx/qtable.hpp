#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "gbx/core.hpp"

namespace gbx {

class ClockRegressionError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class UnknownStateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class InvalidTemperatureError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QEntry {
    double q = 0.0;
    Checkin last_update_t = 0;
    std::uint64_t update_count = 0;
};

struct QHyperparams {
    double alpha = 0.3; // learning rate, (0,1]
    double omega = 1.0; // staleness discount per check-in, (0,1]

    void validate() const;
};

// Boltzmann action distribution derived from a state's Q values,
// indexed by action (0 = wave32, 1 = wave64).
struct EmpiricalPolicy {
    std::array<double, 2> prob{0.5, 0.5};
};

// Empirical single-step Q-table. Entries are keyed by (StateKey, Action)
// and updated with the time-decayed rule
//
//   q <- (1 - alpha) * omega^dt * q_prev + alpha * r,   dt = now - last_update
//
// with a fresh entry initialized to the observed reward. Once a state key is
// inserted it is never removed, so the table only grows.
class QTable {
public:
    explicit QTable(QHyperparams hp = {});

    const QHyperparams& hyperparams() const { return hp_; }

    std::size_t state_count() const { return entries_.size(); }
    std::size_t entry_count() const;
    bool empty() const { return entries_.empty(); }

    // Eq.-5 update. Throws ClockRegressionError when now precedes the
    // entry's last update.
    void update(const StateKey& key, Action a, Reward r, Checkin now);

    // nullptr when the (key, action) pair has never been observed.
    const QEntry* find(const StateKey& key, Action a) const;

    bool has_both_actions(const StateKey& key) const;

    // Argmax over the recorded actions; ties prefer wave64. Throws
    // UnknownStateError for keys never observed.
    Action greedy_action(const StateKey& key) const;

    // Boltzmann softmax over the state's two recorded Q values. Requires
    // rho > 0 and both actions recorded.
    EmpiricalPolicy derive_policy(const StateKey& key, double rho) const;

    // One (state, target distribution) record per key with both actions
    // observed, in key order. States are re-encoded from the key, which
    // carries the full counter tuple.
    std::vector<std::pair<ShaderState, EmpiricalPolicy>>
    snapshot_policy_dataset(double rho) const;

    // Line-delimited text format; see save() for the layout. Round-trips
    // every entry bit-exactly.
    void save(std::ostream& os) const;
    static QTable load(std::istream& is);

    // Sorted iteration for tests and tooling.
    const std::map<StateKey, std::array<std::optional<QEntry>, 2>>& entries() const {
        return entries_;
    }

private:
    QHyperparams hp_;
    std::map<StateKey, std::array<std::optional<QEntry>, 2>> entries_;
};

// Softmax of a two-entry Q pair at temperature rho, with max subtraction.
EmpiricalPolicy boltzmann_pair(double q_wave32, double q_wave64, double rho);

} // namespace gbx
