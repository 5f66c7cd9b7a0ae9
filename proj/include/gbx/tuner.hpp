#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gbx/policy.hpp"
#include "gbx/qtable.hpp"
#include "gbx/simenv.hpp"

namespace gbx {

struct TunerConfig {
    int num_iterations = 45;
    int checkins_per_iteration = 50;
    double epsilon0 = 0.2;
    int epsilon_horizon = 0; // 0 -> num_iterations / 2
    int refresh_period = 1;  // copy decision -> behavior every k iterations
    int samples_per_benchmark = 10;
    QHyperparams qtable{};
    TrainConfig train{};
    std::uint64_t seed = 0;
    int jobs = 1;

    void validate() const;
    double epsilon_at(int iteration) const;

    std::string to_json_string() const;
    static TunerConfig from_json_string(const std::string& text);
    static TunerConfig from_file(const std::filesystem::path& path);
};

struct IterationLog {
    int iteration = 0;
    Checkin checkin = 0;
    double mean_reward = 0.0; // mean over benchmarks of the run reward
    std::size_t table_size = 0;
    double distill_loss = 0.0;
    double agreement_rate = 0.0; // decision policy vs greedy table
};

struct RewardAttribution {
    StateKey key;
    Action action = kDefaultAction;
    Reward reward = 1.0;
};

// Broadcasts the benchmark-level reward mean(samples)/baseline to every
// (state, action) pair observed in the run.
std::vector<RewardAttribution> attribute_rewards(const RunRecord& record,
                                                 std::span<const double> samples,
                                                 double baseline_fps);

struct TunerState {
    SimSuite suite;
    QTable table;
    PolicyNet decision;
    BehaviorPolicy behavior;
};

// One pass of the feedback loop: advance the compiler clock, collect runs
// with the frozen behavior policy (sample mode with epsilon-uniform mix),
// fold rewards into the table, distill the decision policy at the annealed
// temperature, refresh the behavior policy on schedule.
IterationLog run_iteration(TunerState& state, const TunerConfig& cfg, int iteration);

struct WarmStart {
    QTable table;
    PolicyNet policy;
};

struct TrainResult {
    BehaviorPolicy policy;
    QTable table;
    std::vector<IterationLog> logs;
};

TrainResult run_training(SimSuite suite, const TunerConfig& cfg,
                         const std::optional<WarmStart>& warm = std::nullopt);

struct EvalRow {
    std::uint32_t benchmark_id = 0;
    double baseline_fps = 0.0;
    double tuned_fps = 0.0;
    double uplift_pct = 0.0;
};

struct HistBin {
    double lower_pct = 0.0;
    double upper_pct = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<HistBin> histogram; // 1%-wide uplift bins
};

// Greedy deployment evaluation of a frozen policy against the all-wave64
// baseline.
EvalReport evaluate(const SimSuite& suite, const BehaviorPolicy& policy,
                    int n_samples, std::uint64_t seed, int jobs = 1);

void write_training_log_csv(std::ostream& os, std::span<const IterationLog> logs);
void write_eval_csv(std::ostream& os, const EvalReport& report);
void write_histogram_csv(std::ostream& os, const EvalReport& report);

} // namespace gbx
