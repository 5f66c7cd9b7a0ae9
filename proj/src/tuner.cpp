#include "gbx/tuner.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gbx/parallel.hpp"
#include "gbx/rng.hpp"

namespace gbx {

namespace {

using nlohmann::json;

constexpr std::uint64_t kActionTag = 0x414354;
constexpr std::uint64_t kFpsTag = 0x465053;
constexpr std::uint64_t kFitTag = 0x464954;
constexpr std::uint64_t kInitTag = 0x494E49;
constexpr std::uint64_t kEvalTag = 0x45564C;

void append_double(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

} // namespace

void TunerConfig::validate() const {
    if (num_iterations < 0) throw ValidationError("iteration count must be >= 0");
    if (checkins_per_iteration < 0) {
        throw ValidationError("check-ins per iteration must be >= 0");
    }
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0)) {
        throw ValidationError("epsilon0 must be in [0, 1]");
    }
    if (epsilon_horizon < 0) throw ValidationError("epsilon horizon must be >= 0");
    if (refresh_period < 1) throw ValidationError("refresh period must be >= 1");
    if (samples_per_benchmark < 1) throw ValidationError("samples per benchmark must be >= 1");
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
    qtable.validate();
    train.validate();
}

double TunerConfig::epsilon_at(int iteration) const {
    const int horizon =
        epsilon_horizon > 0 ? epsilon_horizon : std::max(1, num_iterations / 2);
    const double frac = 1.0 - static_cast<double>(iteration) / horizon;
    return epsilon0 * std::max(0.0, frac);
}

std::string TunerConfig::to_json_string() const {
    json j{
        {"num_iterations", num_iterations},
        {"checkins_per_iteration", checkins_per_iteration},
        {"epsilon0", epsilon0},
        {"epsilon_horizon", epsilon_horizon},
        {"refresh_period", refresh_period},
        {"samples_per_benchmark", samples_per_benchmark},
        {"qtable", {{"alpha", qtable.alpha}, {"omega", qtable.omega}}},
        {"train",
         {{"learning_rate", train.learning_rate},
          {"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"rho0", train.rho0},
          {"rho_decay", train.rho_decay},
          {"rho_min", train.rho_min}}},
        {"seed", seed},
        {"jobs", jobs},
    };
    return j.dump(2);
}

TunerConfig TunerConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("tuner config is not valid JSON: ") + e.what());
    }
    try {
        TunerConfig cfg;
        if (j.contains("num_iterations")) cfg.num_iterations = j.at("num_iterations").get<int>();
        if (j.contains("checkins_per_iteration")) {
            cfg.checkins_per_iteration = j.at("checkins_per_iteration").get<int>();
        }
        if (j.contains("epsilon0")) cfg.epsilon0 = j.at("epsilon0").get<double>();
        if (j.contains("epsilon_horizon")) cfg.epsilon_horizon = j.at("epsilon_horizon").get<int>();
        if (j.contains("refresh_period")) cfg.refresh_period = j.at("refresh_period").get<int>();
        if (j.contains("samples_per_benchmark")) {
            cfg.samples_per_benchmark = j.at("samples_per_benchmark").get<int>();
        }
        if (j.contains("qtable")) {
            const auto& q = j.at("qtable");
            if (q.contains("alpha")) cfg.qtable.alpha = q.at("alpha").get<double>();
            if (q.contains("omega")) cfg.qtable.omega = q.at("omega").get<double>();
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            if (t.contains("learning_rate")) cfg.train.learning_rate = t.at("learning_rate").get<double>();
            if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
            if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
            if (t.contains("rho0")) cfg.train.rho0 = t.at("rho0").get<double>();
            if (t.contains("rho_decay")) cfg.train.rho_decay = t.at("rho_decay").get<double>();
            if (t.contains("rho_min")) cfg.train.rho_min = t.at("rho_min").get<double>();
        }
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed tuner config: ") + e.what());
    }
}

TunerConfig TunerConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open tuner config: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_string(ss.str());
}

std::vector<RewardAttribution> attribute_rewards(const RunRecord& record,
                                                 std::span<const double> samples,
                                                 double baseline_fps) {
    if (samples.empty()) {
        throw ValidationError("reward attribution needs at least one sample");
    }
    const double mean =
        std::accumulate(samples.begin(), samples.end(), 0.0) /
        static_cast<double>(samples.size());
    const Reward r = reward_from_framerate(mean, baseline_fps);
    std::vector<RewardAttribution> out;
    out.reserve(record.observations.size());
    for (const auto& obs : record.observations) {
        out.push_back({obs.key, obs.action, r});
    }
    return out;
}

namespace {

struct BenchmarkCollection {
    std::vector<RewardAttribution> rewards;
    double run_reward = 1.0;
};

double table_agreement(const QTable& table, const PolicyNet& decision) {
    std::size_t n2 = 0;
    std::size_t agree = 0;
    for (const auto& [key, pair] : table.entries()) {
        if (!pair[0].has_value() || !pair[1].has_value()) continue;
        ++n2;
        const Action greedy = pair[1]->q >= pair[0]->q ? Action::Wave64 : Action::Wave32;
        const auto probs = decision.forward(encode_state(counters_from_key(key)));
        const Action net = probs[1] >= probs[0] ? Action::Wave64 : Action::Wave32;
        agree += (greedy == net) ? 1 : 0;
    }
    return n2 == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(n2);
}

} // namespace

IterationLog run_iteration(TunerState& state, const TunerConfig& cfg, int iteration) {
    cfg.validate();
    state.suite.advance_checkins(cfg.checkins_per_iteration);
    const Checkin now = state.suite.checkin();
    const double eps = cfg.epsilon_at(iteration);

    const auto& benchmarks = state.suite.benchmarks();
    std::vector<BenchmarkCollection> collected(benchmarks.size());

    parallel_for(benchmarks.size(), cfg.jobs, [&](std::size_t bi) {
        const SimBenchmark& bench = benchmarks[bi];
        SplitMix64 rng(derive_seed({cfg.seed, kActionTag,
                                    static_cast<std::uint64_t>(iteration), bench.id}));
        ActionAssignment assignment;
        for (auto id : bench.shader_ids) {
            const auto [shader_state, key] = state.suite.compile(id, kDefaultAction);
            const double u_explore = rng.next_unit();
            const double u_action = rng.next_unit();
            Action a;
            if (u_explore < eps) {
                a = u_action < 0.5 ? Action::Wave32 : Action::Wave64;
            } else {
                const auto probs = state.behavior.forward(shader_state);
                a = u_action < probs[0] ? Action::Wave32 : Action::Wave64;
            }
            assignment[id] = a;
        }
        const auto run = state.suite.run_benchmark(
            bench.id, assignment, cfg.samples_per_benchmark,
            derive_seed({cfg.seed, kFpsTag, static_cast<std::uint64_t>(iteration), bench.id}));
        auto rewards = attribute_rewards(run.record, run.samples, bench.baseline_fps);
        collected[bi].run_reward = rewards.empty() ? 1.0 : rewards.front().reward;
        collected[bi].rewards = std::move(rewards);
    });

    double reward_sum = 0.0;
    for (const auto& c : collected) {
        for (const auto& r : c.rewards) {
            state.table.update(r.key, r.action, r.reward, now);
        }
        reward_sum += c.run_reward;
    }

    const double rho = cfg.train.rho_at(iteration);
    const auto dataset = state.table.snapshot_policy_dataset(rho);
    double distill_loss = 0.0;
    if (!dataset.empty()) {
        TrainConfig tcfg = cfg.train;
        tcfg.seed = derive_seed({cfg.seed, kFitTag, static_cast<std::uint64_t>(iteration)});
        const FitResult fr = fit(state.decision, dataset, tcfg);
        distill_loss = fr.epoch_loss.back();
    }

    if (iteration % cfg.refresh_period == 0) {
        state.behavior =
            BehaviorPolicy{state.decision, static_cast<std::uint32_t>(iteration + 1), now};
    }

    IterationLog log;
    log.iteration = iteration;
    log.checkin = now;
    log.mean_reward =
        benchmarks.empty() ? 1.0 : reward_sum / static_cast<double>(benchmarks.size());
    log.table_size = state.table.state_count();
    log.distill_loss = distill_loss;
    log.agreement_rate = table_agreement(state.table, state.decision);
    return log;
}

TrainResult run_training(SimSuite suite, const TunerConfig& cfg,
                         const std::optional<WarmStart>& warm) {
    cfg.validate();
    TunerState state{std::move(suite),
                     warm ? warm->table : QTable(cfg.qtable),
                     warm ? warm->policy
                          : PolicyNet::init(derive_seed({cfg.seed, kInitTag})),
                     BehaviorPolicy{}};
    state.behavior = BehaviorPolicy{state.decision, 0, state.suite.checkin()};

    TrainResult result{state.behavior, state.table, {}};
    result.logs.reserve(cfg.num_iterations);
    for (int i = 0; i < cfg.num_iterations; ++i) {
        try {
            result.logs.push_back(run_iteration(state, cfg, i));
        } catch (const TrainingDivergedError& e) {
            throw TrainingDivergedError(
                i, "iteration " + std::to_string(i) + ": " + e.what());
        }
    }
    result.policy = state.behavior;
    result.table = std::move(state.table);
    return result;
}

EvalReport evaluate(const SimSuite& suite, const BehaviorPolicy& policy,
                    int n_samples, std::uint64_t seed, int jobs) {
    if (n_samples < 1) throw ValidationError("sample count must be >= 1");
    const auto& benchmarks = suite.benchmarks();
    EvalReport report;
    report.rows.resize(benchmarks.size());

    parallel_for(benchmarks.size(), jobs, [&](std::size_t bi) {
        const SimBenchmark& bench = benchmarks[bi];
        ActionAssignment assignment;
        for (auto id : bench.shader_ids) {
            const auto [shader_state, key] = suite.compile(id, kDefaultAction);
            assignment[id] = select_greedy(policy, shader_state);
        }
        const auto run = suite.run_benchmark(bench.id, assignment, n_samples,
                                             derive_seed({seed, kEvalTag, bench.id}));
        const double tuned =
            std::accumulate(run.samples.begin(), run.samples.end(), 0.0) /
            static_cast<double>(run.samples.size());
        EvalRow row;
        row.benchmark_id = bench.id;
        row.baseline_fps = bench.baseline_fps;
        row.tuned_fps = tuned;
        row.uplift_pct = 100.0 * (tuned / bench.baseline_fps - 1.0);
        report.rows[bi] = row;
    });

    if (!report.rows.empty()) {
        double lo = report.rows.front().uplift_pct;
        double hi = lo;
        for (const auto& row : report.rows) {
            lo = std::min(lo, row.uplift_pct);
            hi = std::max(hi, row.uplift_pct);
        }
        const double lower = std::floor(lo);
        const auto bins = static_cast<std::size_t>(
            std::max(1.0, std::ceil(hi) - lower + (hi == std::ceil(hi) ? 1.0 : 0.0)));
        report.histogram.resize(bins);
        for (std::size_t b = 0; b < bins; ++b) {
            report.histogram[b].lower_pct = lower + static_cast<double>(b);
            report.histogram[b].upper_pct = lower + static_cast<double>(b) + 1.0;
        }
        for (const auto& row : report.rows) {
            auto idx = static_cast<std::size_t>(row.uplift_pct - lower);
            idx = std::min(idx, bins - 1);
            report.histogram[idx].count += 1;
        }
    }
    return report;
}

void write_training_log_csv(std::ostream& os, std::span<const IterationLog> logs) {
    os << "iteration,t,mean_reward,table_size,distill_loss,agreement_rate\n";
    std::string line;
    for (const auto& log : logs) {
        line.clear();
        line += std::to_string(log.iteration);
        line += ',';
        line += std::to_string(log.checkin);
        line += ',';
        append_double(line, log.mean_reward);
        line += ',';
        line += std::to_string(log.table_size);
        line += ',';
        append_double(line, log.distill_loss);
        line += ',';
        append_double(line, log.agreement_rate);
        line += '\n';
        os << line;
    }
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
    os << "benchmark,baseline_fps,tuned_fps,uplift_pct\n";
    std::string line;
    for (const auto& row : report.rows) {
        line.clear();
        line += std::to_string(row.benchmark_id);
        line += ',';
        append_double(line, row.baseline_fps);
        line += ',';
        append_double(line, row.tuned_fps);
        line += ',';
        append_double(line, row.uplift_pct);
        line += '\n';
        os << line;
    }
}

void write_histogram_csv(std::ostream& os, const EvalReport& report) {
    os << "bin_lower_pct,bin_upper_pct,count\n";
    std::string line;
    for (const auto& bin : report.histogram) {
        line.clear();
        append_double(line, bin.lower_pct);
        line += ',';
        append_double(line, bin.upper_pct);
        line += ',';
        line += std::to_string(bin.count);
        line += '\n';
        os << line;
    }
}

} // namespace gbx
