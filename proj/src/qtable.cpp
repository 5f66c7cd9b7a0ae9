#include "gbx/qtable.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace gbx {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kMagic = "gbx-qtable";

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view tok, const char* what) {
    double v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw ValidationError(std::string("bad q-table field: ") + what);
    }
    return v;
}

std::uint64_t parse_u64(std::string_view tok, const char* what) {
    std::uint64_t v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw ValidationError(std::string("bad q-table field: ") + what);
    }
    return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace

void QHyperparams::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ValidationError("alpha must be in (0, 1]");
    }
    if (!(omega > 0.0 && omega <= 1.0)) {
        throw ValidationError("omega must be in (0, 1]");
    }
}

QTable::QTable(QHyperparams hp) : hp_(hp) { hp_.validate(); }

std::size_t QTable::entry_count() const {
    std::size_t n = 0;
    for (const auto& [key, pair] : entries_) {
        n += (pair[0].has_value() ? 1 : 0) + (pair[1].has_value() ? 1 : 0);
    }
    return n;
}

void QTable::update(const StateKey& key, Action a, Reward r, Checkin now) {
    auto& pair = entries_[key];
    auto& slot = pair[action_index(a)];
    if (!slot.has_value()) {
        slot = QEntry{r, now, 1};
        return;
    }
    if (now < slot->last_update_t) {
        throw ClockRegressionError("q_update at check-in " + std::to_string(now) +
                                   " precedes entry timestamp " +
                                   std::to_string(slot->last_update_t));
    }
    const double dt = static_cast<double>(now - slot->last_update_t);
    slot->q = (1.0 - hp_.alpha) * std::pow(hp_.omega, dt) * slot->q + hp_.alpha * r;
    slot->last_update_t = now;
    slot->update_count += 1;
}

const QEntry* QTable::find(const StateKey& key, Action a) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    const auto& slot = it->second[action_index(a)];
    return slot.has_value() ? &*slot : nullptr;
}

bool QTable::has_both_actions(const StateKey& key) const {
    auto it = entries_.find(key);
    return it != entries_.end() && it->second[0].has_value() &&
           it->second[1].has_value();
}

Action QTable::greedy_action(const StateKey& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw UnknownStateError("state never observed by the q-table");
    }
    const auto& pair = it->second;
    if (pair[0].has_value() && pair[1].has_value()) {
        // tie prefers the default action
        return pair[1]->q >= pair[0]->q ? Action::Wave64 : Action::Wave32;
    }
    if (pair[1].has_value()) return Action::Wave64;
    return Action::Wave32;
}

EmpiricalPolicy boltzmann_pair(double q_wave32, double q_wave64, double rho) {
    if (!(rho > 0.0)) {
        throw InvalidTemperatureError("softmax temperature must be positive");
    }
    const double m = std::max(q_wave32, q_wave64);
    const double e0 = std::exp((q_wave32 - m) / rho);
    const double e1 = std::exp((q_wave64 - m) / rho);
    return EmpiricalPolicy{{e0 / (e0 + e1), e1 / (e0 + e1)}};
}

EmpiricalPolicy QTable::derive_policy(const StateKey& key, double rho) const {
    if (!(rho > 0.0)) {
        throw InvalidTemperatureError("softmax temperature must be positive");
    }
    auto it = entries_.find(key);
    if (it == entries_.end() || !it->second[0].has_value() ||
        !it->second[1].has_value()) {
        throw UnknownStateError("derive_policy needs both actions recorded");
    }
    return boltzmann_pair(it->second[0]->q, it->second[1]->q, rho);
}

std::vector<std::pair<ShaderState, EmpiricalPolicy>>
QTable::snapshot_policy_dataset(double rho) const {
    if (!(rho > 0.0)) {
        throw InvalidTemperatureError("softmax temperature must be positive");
    }
    std::vector<std::pair<ShaderState, EmpiricalPolicy>> out;
    for (const auto& [key, pair] : entries_) {
        if (!pair[0].has_value() || !pair[1].has_value()) continue;
        out.emplace_back(encode_state(counters_from_key(key)),
                         boltzmann_pair(pair[0]->q, pair[1]->q, rho));
    }
    return out;
}

void QTable::save(std::ostream& os) const {
    std::string line = kMagic;
    line += ' ';
    line += std::to_string(kFormatVersion);
    line += ' ';
    append_double(line, hp_.alpha);
    line += ' ';
    append_double(line, hp_.omega);
    line += '\n';
    os << line;
    for (const auto& [key, pair] : entries_) {
        for (int a = 0; a < kActionCount; ++a) {
            if (!pair[a].has_value()) continue;
            line.clear();
            for (std::uint32_t v : key.values) {
                line += std::to_string(v);
                line += ' ';
            }
            line += std::to_string(a);
            line += ' ';
            append_double(line, pair[a]->q);
            line += ' ';
            line += std::to_string(pair[a]->last_update_t);
            line += ' ';
            line += std::to_string(pair[a]->update_count);
            line += '\n';
            os << line;
        }
    }
}

QTable QTable::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw ValidationError("empty q-table file");
    }
    auto head = split_ws(line);
    if (head.size() != 4 || head[0] != kMagic) {
        throw ValidationError("not a q-table file");
    }
    if (parse_u64(head[1], "version") != kFormatVersion) {
        throw ValidationError("unsupported q-table format version");
    }
    QHyperparams hp;
    hp.alpha = parse_double(head[2], "alpha");
    hp.omega = parse_double(head[3], "omega");
    QTable table(hp);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto toks = split_ws(line);
        if (toks.size() != kStateKeySize + 4) {
            throw ValidationError("malformed q-table record at line " +
                                  std::to_string(lineno));
        }
        StateKey key;
        for (int i = 0; i < kStateKeySize; ++i) {
            key.values[i] = static_cast<std::uint32_t>(parse_u64(toks[i], "key"));
        }
        const int a = static_cast<int>(parse_u64(toks[kStateKeySize], "action"));
        if (a != 0 && a != 1) {
            throw ValidationError("bad action index at line " + std::to_string(lineno));
        }
        QEntry e;
        e.q = parse_double(toks[kStateKeySize + 1], "q");
        e.last_update_t = parse_u64(toks[kStateKeySize + 2], "last_update_t");
        e.update_count = parse_u64(toks[kStateKeySize + 3], "update_count");
        if (e.update_count == 0) {
            throw ValidationError("stored entry with zero update count");
        }
        table.entries_[key][a] = e;
    }
    return table;
}

} // namespace gbx
