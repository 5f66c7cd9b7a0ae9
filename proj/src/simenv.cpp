#include "gbx/simenv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gbx/rng.hpp"

namespace gbx {

namespace {

using nlohmann::json;

constexpr std::uint64_t kLatentTag = 0x4C4154;
constexpr std::uint64_t kCounterTag = 0x435452;
constexpr std::uint64_t kBenchTag = 0x424E43;
constexpr std::uint64_t kNoiseTag = 0x4E5A45;
constexpr std::uint64_t kDriftTag = 0x445246;

constexpr int kSuiteFormatVersion = 1;
constexpr int kBruteForceShaderCap = 20;

// Relative step scale per driftable counter, in state-key order minus the
// stage slot. Vector/memory counters move the most; the counters that carry
// the latent signal (compute, control flow) move less; work-group dims are
// application-defined and do not drift.
constexpr std::array<double, kDriftableCounters> kDriftWeight = {
    0.8,                          // basic blocks
    1.0, 1.0, 1.0, 1.0, 1.0,      // vector
    0.8, 0.8, 0.8, 0.8,           // scalar
    0.9, 0.9, 0.9, 0.9, 0.9, 0.9, // memory
    0.45, 0.45, 0.45, 0.45,       // compute
    0.45, 0.45, 0.45, 0.45,       // control flow
    0.3, 0.3,                     // registers
    0.0, 0.0, 0.0,                // work groups
};

double range_draw(SplitMix64& rng, const LatentRange& r) {
    return rng.next_range(r.min, r.max);
}

void check_range(const LatentRange& r, double lo, double hi, const char* name) {
    if (!(r.min >= lo && r.max <= hi && r.min <= r.max)) {
        throw ValidationError(std::string("bad range for ") + name);
    }
}

std::uint32_t scaled_count(double target, double jitter) {
    const double v = target * jitter;
    return v <= 0.0 ? 0u : static_cast<std::uint32_t>(std::llround(v));
}

// Drifted integer value of one counter under log-multiplier m.
std::uint32_t apply_drift(std::uint32_t base, double log_m) {
    if (base == 0 || log_m == 0.0) return base;
    const double v = static_cast<double>(base) * std::exp(log_m);
    const long long r = std::llround(v);
    return r < 0 ? 0u : static_cast<std::uint32_t>(r);
}

json range_to_json(const LatentRange& r) {
    return json{{"min", r.min}, {"max", r.max}};
}

LatentRange range_from_json(const json& j, const LatentRange& dflt) {
    if (j.is_null()) return dflt;
    LatentRange r = dflt;
    if (j.contains("min")) r.min = j.at("min").get<double>();
    if (j.contains("max")) r.max = j.at("max").get<double>();
    return r;
}

json spec_to_json(const SuiteSpec& s) {
    return json{
        {"benchmark_count", s.benchmark_count},
        {"shaders_per_benchmark", {{"min", s.shaders_min}, {"max", s.shaders_max}}},
        {"pipelines_per_benchmark", {{"min", s.pipelines_min}, {"max", s.pipelines_max}}},
        {"shared_shader_fraction", s.shared_fraction},
        {"divergence", range_to_json(s.divergence)},
        {"bandwidth_demand", range_to_json(s.bandwidth)},
        {"parallelism", range_to_json(s.parallelism)},
        {"wave64_gap_floor", s.wave64_gap_floor},
        {"wave64_gap_cap", s.wave64_gap_cap},
        {"exec_fraction", range_to_json(s.exec_fraction)},
        {"exec_fraction_cap", s.exec_fraction_cap},
        {"pipeline_base_ms", range_to_json(s.pipeline_base_ms)},
        {"pipeline_weight", range_to_json(s.pipeline_weight)},
        {"bandwidth_capacity", s.bandwidth_capacity},
        {"memory_bound_threshold", s.memory_bound_threshold},
        {"noise_sigma", s.noise_sigma},
        {"drift_rate", s.drift_rate},
        {"drift_cap", s.drift_cap},
        {"year_checkins", s.year_checkins},
        {"seed", s.seed},
    };
}

SuiteSpec spec_from_json(const json& j) {
    SuiteSpec s;
    if (j.contains("benchmark_count")) s.benchmark_count = j.at("benchmark_count").get<int>();
    if (j.contains("shaders_per_benchmark")) {
        const auto& r = j.at("shaders_per_benchmark");
        if (r.contains("min")) s.shaders_min = r.at("min").get<int>();
        if (r.contains("max")) s.shaders_max = r.at("max").get<int>();
    }
    if (j.contains("pipelines_per_benchmark")) {
        const auto& r = j.at("pipelines_per_benchmark");
        if (r.contains("min")) s.pipelines_min = r.at("min").get<int>();
        if (r.contains("max")) s.pipelines_max = r.at("max").get<int>();
    }
    if (j.contains("shared_shader_fraction")) s.shared_fraction = j.at("shared_shader_fraction").get<double>();
    if (j.contains("divergence")) s.divergence = range_from_json(j.at("divergence"), s.divergence);
    if (j.contains("bandwidth_demand")) s.bandwidth = range_from_json(j.at("bandwidth_demand"), s.bandwidth);
    if (j.contains("parallelism")) s.parallelism = range_from_json(j.at("parallelism"), s.parallelism);
    if (j.contains("wave64_gap_floor")) s.wave64_gap_floor = j.at("wave64_gap_floor").get<double>();
    if (j.contains("wave64_gap_cap")) s.wave64_gap_cap = j.at("wave64_gap_cap").get<double>();
    if (j.contains("exec_fraction")) s.exec_fraction = range_from_json(j.at("exec_fraction"), s.exec_fraction);
    if (j.contains("exec_fraction_cap")) s.exec_fraction_cap = j.at("exec_fraction_cap").get<double>();
    if (j.contains("pipeline_base_ms")) s.pipeline_base_ms = range_from_json(j.at("pipeline_base_ms"), s.pipeline_base_ms);
    if (j.contains("pipeline_weight")) s.pipeline_weight = range_from_json(j.at("pipeline_weight"), s.pipeline_weight);
    if (j.contains("bandwidth_capacity")) s.bandwidth_capacity = j.at("bandwidth_capacity").get<double>();
    if (j.contains("memory_bound_threshold")) s.memory_bound_threshold = j.at("memory_bound_threshold").get<double>();
    if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("drift_rate")) s.drift_rate = j.at("drift_rate").get<double>();
    if (j.contains("drift_cap")) s.drift_cap = j.at("drift_cap").get<double>();
    if (j.contains("year_checkins")) s.year_checkins = j.at("year_checkins").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

std::array<std::uint32_t, kDriftableCounters> flatten_counters(const RawCounters& raw) {
    std::array<std::uint32_t, kDriftableCounters> out{};
    int i = 0;
    out[i++] = raw.basic_blocks;
    for (auto c : raw.vector_instrs) out[i++] = c;
    for (auto c : raw.scalar_instrs) out[i++] = c;
    for (auto c : raw.memory_instrs) out[i++] = c;
    for (auto c : raw.compute_instrs) out[i++] = c;
    for (auto c : raw.control_flow_instrs) out[i++] = c;
    for (auto c : raw.registers) out[i++] = c;
    for (auto c : raw.work_groups) out[i++] = c;
    return out;
}

RawCounters unflatten_counters(ShaderStage stage,
                               const std::array<std::uint32_t, kDriftableCounters>& flat) {
    RawCounters raw;
    raw.stage = stage;
    int i = 0;
    raw.basic_blocks = flat[i++];
    for (auto& c : raw.vector_instrs) c = flat[i++];
    for (auto& c : raw.scalar_instrs) c = flat[i++];
    for (auto& c : raw.memory_instrs) c = flat[i++];
    for (auto& c : raw.compute_instrs) c = flat[i++];
    for (auto& c : raw.control_flow_instrs) c = flat[i++];
    for (auto& c : raw.registers) c = flat[i++];
    for (auto& c : raw.work_groups) c = flat[i++];
    raw.recompute_totals();
    return raw;
}

} // namespace

void SuiteSpec::validate() const {
    if (benchmark_count < 1) throw ValidationError("benchmark count must be >= 1");
    if (shaders_min < 1 || shaders_max < shaders_min) {
        throw ValidationError("bad shaders-per-benchmark range");
    }
    if (pipelines_min < 1 || pipelines_max < pipelines_min) {
        throw ValidationError("bad pipelines-per-benchmark range");
    }
    if (!(shared_fraction >= 0.0 && shared_fraction < 1.0)) {
        throw ValidationError("shared fraction must be in [0, 1)");
    }
    check_range(divergence, 0.0, 1.0, "divergence");
    check_range(parallelism, 0.0, 0.6, "parallelism");
    if (!(bandwidth.min >= 0.0 && bandwidth.max >= bandwidth.min)) {
        throw ValidationError("bad range for bandwidth demand");
    }
    if (!(wave64_gap_floor >= 0.0 && wave64_gap_cap >= wave64_gap_floor)) {
        throw ValidationError("bad wave64 gap band");
    }
    if (!(exec_fraction.min > 0.0 && exec_fraction.max >= exec_fraction.min &&
          exec_fraction.max <= 1.0)) {
        throw ValidationError("bad exec fraction range");
    }
    if (!(exec_fraction_cap > 0.0 && exec_fraction_cap <= 1.0)) {
        throw ValidationError("exec fraction cap must be in (0, 1]");
    }
    if (!(pipeline_base_ms.min > 0.0 && pipeline_base_ms.max >= pipeline_base_ms.min)) {
        throw ValidationError("bad pipeline base time range");
    }
    if (!(pipeline_weight.min > 0.0 && pipeline_weight.max >= pipeline_weight.min)) {
        throw ValidationError("bad pipeline weight range");
    }
    if (!(memory_bound_threshold >= 0.0)) {
        throw ValidationError("memory-bound threshold must be >= 0");
    }
    if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
    if (!(drift_rate >= 0.0)) throw ValidationError("drift rate must be >= 0");
    if (!(drift_cap > 0.0 && drift_cap < 1.0)) {
        throw ValidationError("drift cap must be in (0, 1)");
    }
    if (year_checkins < 1) throw ValidationError("year length must be >= 1 check-in");
}

double amdahl_compose(double p, double s) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("execution fraction must be in [0, 1]");
    }
    if (!(s > 0.0)) {
        throw std::domain_error("local speedup must be positive");
    }
    return 1.0 / (1.0 - p + p / s);
}

RawCounters gen_base_counters(std::uint64_t counter_seed, ShaderStage stage,
                              double size_scale, double divergence,
                              double bandwidth, double parallelism) {
    SplitMix64 rng(counter_seed);

    // jitter draws happen first, in a fixed order, so they are identical for
    // any latent values
    std::array<double, 5> cat_jit{};
    for (auto& u : cat_jit) u = rng.next_range(0.8, 1.2);
    std::array<double, 5> vec_jit{};
    for (auto& u : vec_jit) u = rng.next_range(0.6, 1.4);
    std::array<double, 4> sca_jit{};
    for (auto& u : sca_jit) u = rng.next_range(0.6, 1.4);
    std::array<double, 6> mem_jit{};
    for (auto& u : mem_jit) u = rng.next_range(0.6, 1.4);
    std::array<double, 4> cmp_jit{};
    for (auto& u : cmp_jit) u = rng.next_range(0.6, 1.4);
    std::array<double, 4> ctl_jit{};
    for (auto& u : ctl_jit) u = rng.next_range(0.6, 1.4);
    const double bb_jit = rng.next_range(0.7, 1.3);
    const auto vreg = static_cast<std::uint32_t>(16 + rng.next_below(205));
    const auto sreg = static_cast<std::uint32_t>(12 + rng.next_below(89));
    const auto wg_x_pick = rng.next_below(4);
    const auto wg_y_pick = rng.next_below(4);

    const double vec_f = 0.32 * size_scale * cat_jit[0];
    const double sca_f = 0.22 * size_scale * cat_jit[1];
    const double mem_f = 0.18 * size_scale * (0.3 + 1.6 * bandwidth) * cat_jit[2];
    const double cmp_f = 0.18 * size_scale * (0.4 + 2.0 * parallelism) * cat_jit[3];
    const double ctl_f = 0.10 * size_scale * (0.3 + 2.2 * divergence) * cat_jit[4];

    constexpr std::array<double, 5> kVecW = {0.45, 0.25, 0.10, 0.10, 0.10};
    constexpr std::array<double, 4> kScaW = {0.40, 0.25, 0.20, 0.15};
    constexpr std::array<double, 6> kMemW = {0.30, 0.20, 0.20, 0.05, 0.15, 0.10};
    constexpr std::array<double, 4> kCmpW = {0.40, 0.25, 0.25, 0.10};
    constexpr std::array<double, 4> kCtlW = {0.40, 0.30, 0.10, 0.20};

    RawCounters raw;
    raw.stage = stage;
    for (int i = 0; i < 5; ++i) raw.vector_instrs[i] = scaled_count(vec_f * kVecW[i], vec_jit[i]);
    for (int i = 0; i < 4; ++i) raw.scalar_instrs[i] = scaled_count(sca_f * kScaW[i], sca_jit[i]);
    for (int i = 0; i < 6; ++i) raw.memory_instrs[i] = scaled_count(mem_f * kMemW[i], mem_jit[i]);
    for (int i = 0; i < 4; ++i) raw.compute_instrs[i] = scaled_count(cmp_f * kCmpW[i], cmp_jit[i]);
    for (int i = 0; i < 4; ++i) raw.control_flow_instrs[i] = scaled_count(ctl_f * kCtlW[i], ctl_jit[i]);
    raw.basic_blocks = 1 + scaled_count(0.8 * ctl_f, bb_jit);
    raw.registers = {vreg, sreg};
    if (stage == ShaderStage::Compute) {
        raw.work_groups = {32u << wg_x_pick, 1u << wg_y_pick, 1u};
    } else {
        raw.work_groups = {0, 0, 0};
    }
    raw.recompute_totals();
    return raw;
}

SimSuite SimSuite::generate(const SuiteSpec& spec, std::uint64_t seed) {
    spec.validate();
    SimSuite suite;
    suite.spec_ = spec;
    suite.seed_ = seed;
    suite.checkin_ = 0;

    auto make_shader = [&](std::uint32_t id) {
        SplitMix64 lat(derive_seed({seed, kLatentTag, id}));
        SimShader sh;
        sh.id = id;
        int tries = 0;
        for (;;) {
            sh.divergence = range_draw(lat, spec.divergence);
            sh.parallelism = range_draw(lat, spec.parallelism);
            const double gap = std::abs(sh.wave64_speedup() - 1.0);
            if (gap >= spec.wave64_gap_floor && gap <= spec.wave64_gap_cap) break;
            if (++tries > 10000) {
                throw ValidationError("wave64 gap band is infeasible for the latent ranges");
            }
        }
        sh.bandwidth_demand = range_draw(lat, spec.bandwidth);
        const auto stage = static_cast<ShaderStage>(lat.next_below(kStageCount));
        const double size_scale =
            std::exp(lat.next_range(std::log(80.0), std::log(1200.0)));
        sh.base = gen_base_counters(derive_seed({seed, kCounterTag, id}), stage,
                                    size_scale, sh.divergence,
                                    sh.bandwidth_demand, sh.parallelism);
        return sh;
    };

    const double cap =
        spec.bandwidth_capacity > 0.0 ? spec.bandwidth_capacity
                                      : std::numeric_limits<double>::infinity();

    for (int b = 0; b < spec.benchmark_count; ++b) {
        SplitMix64 rng(derive_seed({seed, kBenchTag, static_cast<std::uint64_t>(b)}));
        SimBenchmark bench;
        bench.id = static_cast<std::uint32_t>(b);
        bench.bandwidth_capacity = cap;
        bench.noise_sigma = spec.noise_sigma;
        bench.memory_bound_threshold = spec.memory_bound_threshold;

        const int n_shaders =
            static_cast<int>(rng.next_int(spec.shaders_min, spec.shaders_max));
        std::vector<std::uint32_t> members;
        members.reserve(n_shaders);
        for (int j = 0; j < n_shaders; ++j) {
            std::uint32_t id = 0;
            bool reused = false;
            const double share_draw = rng.next_unit();
            if (!suite.shaders_.empty() && share_draw < spec.shared_fraction) {
                id = static_cast<std::uint32_t>(rng.next_below(suite.shaders_.size()));
                reused = std::find(members.begin(), members.end(), id) == members.end();
            }
            if (!reused) {
                id = static_cast<std::uint32_t>(suite.shaders_.size());
                suite.shaders_.push_back(make_shader(id));
            }
            members.push_back(id);
        }

        const int n_pipes = static_cast<int>(rng.next_int(
            spec.pipelines_min,
            std::min<std::int64_t>(spec.pipelines_max, members.size())));
        const std::size_t base_sz = members.size() / n_pipes;
        std::size_t extra = members.size() % n_pipes;
        std::size_t pos = 0;
        for (int p = 0; p < n_pipes; ++p) {
            SimPipeline pipe;
            pipe.weight = range_draw(rng, spec.pipeline_weight);
            pipe.base_time = range_draw(rng, spec.pipeline_base_ms) * 1e-3;
            std::size_t sz = base_sz + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
            double total = 0.0;
            for (std::size_t k = 0; k < sz; ++k) {
                PipelineSlot slot;
                slot.shader_id = members[pos++];
                slot.exec_fraction = range_draw(rng, spec.exec_fraction);
                total += slot.exec_fraction;
                pipe.slots.push_back(slot);
            }
            if (total > spec.exec_fraction_cap) {
                const double scale = spec.exec_fraction_cap / total;
                for (auto& slot : pipe.slots) slot.exec_fraction *= scale;
            }
            bench.pipelines.push_back(std::move(pipe));
        }

        bench.shader_ids = members;
        std::sort(bench.shader_ids.begin(), bench.shader_ids.end());
        bench.shader_ids.erase(
            std::unique(bench.shader_ids.begin(), bench.shader_ids.end()),
            bench.shader_ids.end());
        suite.benchmarks_.push_back(std::move(bench));
    }

    suite.drift_log_.assign(suite.shaders_.size(), {});

    for (auto& bench : suite.benchmarks_) {
        ActionAssignment all64;
        for (auto id : bench.shader_ids) all64[id] = Action::Wave64;
        bench.baseline_fps = 1.0 / suite.frame_time(bench, all64);
    }
    return suite;
}

const SimShader& SimSuite::shader(std::uint32_t id) const {
    if (id >= shaders_.size()) {
        throw ValidationError("unknown shader id " + std::to_string(id));
    }
    return shaders_[id];
}

const SimBenchmark& SimSuite::benchmark(std::uint32_t id) const {
    if (id >= benchmarks_.size()) {
        throw ValidationError("unknown benchmark id " + std::to_string(id));
    }
    return benchmarks_[id];
}

RawCounters SimSuite::drifted_counters(std::uint32_t shader_id) const {
    const SimShader& sh = shader(shader_id);
    const auto& log_m = drift_log_[shader_id];
    auto flat = flatten_counters(sh.base);
    for (int c = 0; c < kDriftableCounters; ++c) {
        flat[c] = apply_drift(flat[c], log_m[c]);
    }
    return unflatten_counters(sh.base.stage, flat);
}

std::pair<ShaderState, StateKey> SimSuite::compile(std::uint32_t shader_id,
                                                   Action /*action*/) const {
    const RawCounters raw = drifted_counters(shader_id);
    return {encode_state(raw), state_key(raw)};
}

void SimSuite::advance_checkins(std::uint64_t dt) {
    if (dt == 0) return;
    const Checkin from = checkin_;
    checkin_ += dt;
    if (spec_.drift_rate <= 0.0) return;

    const double lo = std::log(1.0 - spec_.drift_cap);
    const double hi = std::log(1.0 + spec_.drift_cap);
    for (std::uint32_t id = 0; id < shaders_.size(); ++id) {
        const auto flat = flatten_counters(shaders_[id].base);
        auto& log_m = drift_log_[id];
        for (int c = 0; c < kDriftableCounters; ++c) {
            if (kDriftWeight[c] == 0.0 || flat[c] == 0) continue;
            const double step = spec_.drift_rate * kDriftWeight[c];
            double m = log_m[c];
            for (Checkin u = from + 1; u <= checkin_; ++u) {
                m += step * hash_signed_unit(seed_ ^ kDriftTag, id,
                                             static_cast<std::uint64_t>(c), u);
                m = std::clamp(m, lo, hi);
            }
            log_m[c] = m;
        }
    }
}

double SimSuite::frame_time(const SimBenchmark& bench,
                            const ActionAssignment& assignment) const {
    auto action_of = [&](std::uint32_t id) {
        auto it = assignment.find(id);
        if (it == assignment.end()) {
            throw ValidationError("assignment misses shader " + std::to_string(id) +
                                  " of benchmark " + std::to_string(bench.id));
        }
        return it->second;
    };

    double load = 0.0;
    for (const auto& pipe : bench.pipelines) {
        for (const auto& slot : pipe.slots) {
            load += slot.exec_fraction * shaders_[slot.shader_id].demand(action_of(slot.shader_id));
        }
    }
    double throttle = 1.0;
    if (std::isfinite(bench.bandwidth_capacity) && load > bench.bandwidth_capacity) {
        throttle = bench.bandwidth_capacity / load;
    }

    double total = 0.0;
    for (const auto& pipe : bench.pipelines) {
        double inner = 1.0;
        for (const auto& slot : pipe.slots) inner -= slot.exec_fraction;
        for (const auto& slot : pipe.slots) {
            const SimShader& sh = shaders_[slot.shader_id];
            double s = action_of(slot.shader_id) == Action::Wave64 ? sh.wave64_speedup() : 1.0;
            if (sh.bandwidth_demand > bench.memory_bound_threshold) s *= throttle;
            inner += slot.exec_fraction / s;
        }
        total += pipe.weight * pipe.base_time * inner;
    }
    return total;
}

double SimSuite::true_fps(std::uint32_t benchmark_id,
                          const ActionAssignment& assignment) const {
    return 1.0 / frame_time(benchmark(benchmark_id), assignment);
}

SimSuite::RunResult SimSuite::run_benchmark(std::uint32_t benchmark_id,
                                            const ActionAssignment& assignment,
                                            int n_samples, std::uint64_t seed) const {
    if (n_samples < 1) throw ValidationError("sample count must be >= 1");
    const SimBenchmark& bench = benchmark(benchmark_id);
    const double fps = 1.0 / frame_time(bench, assignment);

    RunResult out;
    out.samples.reserve(n_samples);
    // noise stream depends on (seed, benchmark) only, never on the
    // assignment, so common-random-number comparisons are possible
    SplitMix64 noise(derive_seed({seed, kNoiseTag, benchmark_id}));
    const double half_width = bench.noise_sigma * std::sqrt(3.0);
    for (int k = 0; k < n_samples; ++k) {
        out.samples.push_back(fps * (1.0 + noise.next_signed_unit() * half_width));
    }

    out.record.benchmark_id = benchmark_id;
    out.record.checkin = checkin_;
    for (auto id : bench.shader_ids) {
        ShaderObservation obs;
        obs.shader_id = id;
        auto [state, key] = compile(id, assignment.at(id));
        obs.state = state;
        obs.key = key;
        obs.action = assignment.at(id);
        out.record.observations.push_back(std::move(obs));
    }
    return out;
}

SimSuite::OracleResult SimSuite::brute_force_optimal(std::uint32_t benchmark_id) const {
    const SimBenchmark& bench = benchmark(benchmark_id);
    const auto& ids = bench.shader_ids;
    const std::size_t n = ids.size();
    if (n > kBruteForceShaderCap) {
        throw ValidationError("brute-force oracle refuses " + std::to_string(n) +
                              " shaders (cap " + std::to_string(kBruteForceShaderCap) + ")");
    }

    OracleResult best;
    best.fps = -1.0;
    ActionAssignment assignment;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        for (std::size_t j = 0; j < n; ++j) {
            const bool wave32 = (mask >> (n - 1 - j)) & 1;
            assignment[ids[j]] = wave32 ? Action::Wave32 : Action::Wave64;
        }
        const double fps = 1.0 / frame_time(bench, assignment);
        if (fps > best.fps) {
            best.fps = fps;
            best.assignment = assignment;
        }
    }
    return best;
}

std::string SimSuite::to_json_string() const {
    json j;
    j["format"] = "gbx-suite";
    j["version"] = kSuiteFormatVersion;
    j["spec"] = spec_to_json(spec_);
    j["seed"] = seed_;
    j["checkin"] = checkin_;

    json shaders = json::array();
    for (const auto& sh : shaders_) {
        json s;
        s["id"] = sh.id;
        s["divergence"] = sh.divergence;
        s["bandwidth_demand"] = sh.bandwidth_demand;
        s["parallelism"] = sh.parallelism;
        s["stage"] = static_cast<int>(sh.base.stage);
        s["counters"] = flatten_counters(sh.base);
        shaders.push_back(std::move(s));
    }
    j["shaders"] = std::move(shaders);

    json drift = json::array();
    for (const auto& log_m : drift_log_) drift.push_back(log_m);
    j["drift_log"] = std::move(drift);

    json benches = json::array();
    for (const auto& b : benchmarks_) {
        json jb;
        jb["id"] = b.id;
        jb["baseline_fps"] = b.baseline_fps;
        jb["bandwidth_capacity"] =
            std::isfinite(b.bandwidth_capacity) ? b.bandwidth_capacity : 0.0;
        jb["noise_sigma"] = b.noise_sigma;
        jb["memory_bound_threshold"] = b.memory_bound_threshold;
        json pipes = json::array();
        for (const auto& p : b.pipelines) {
            json jp;
            jp["weight"] = p.weight;
            jp["base_time"] = p.base_time;
            json slots = json::array();
            for (const auto& s : p.slots) {
                slots.push_back(json{{"shader", s.shader_id},
                                     {"exec_fraction", s.exec_fraction}});
            }
            jp["slots"] = std::move(slots);
            pipes.push_back(std::move(jp));
        }
        jb["pipelines"] = std::move(pipes);
        benches.push_back(std::move(jb));
    }
    j["benchmarks"] = std::move(benches);
    return j.dump(2);
}

SimSuite SimSuite::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("suite file is not valid JSON: ") + e.what());
    }
    try {
        if (!j.contains("format") || j.at("format").get<std::string>() != "gbx-suite") {
            throw ValidationError("not a gbx-suite file");
        }
        if (j.at("version").get<int>() != kSuiteFormatVersion) {
            throw ValidationError("unsupported suite format version");
        }
        SimSuite suite;
        suite.spec_ = spec_from_json(j.at("spec"));
        suite.spec_.validate();
        suite.seed_ = j.at("seed").get<std::uint64_t>();
        suite.checkin_ = j.at("checkin").get<Checkin>();

        for (const auto& s : j.at("shaders")) {
            SimShader sh;
            sh.id = s.at("id").get<std::uint32_t>();
            sh.divergence = s.at("divergence").get<double>();
            sh.bandwidth_demand = s.at("bandwidth_demand").get<double>();
            sh.parallelism = s.at("parallelism").get<double>();
            const int stage = s.at("stage").get<int>();
            if (stage < 0 || stage >= kStageCount) {
                throw ValidationError("bad stage in suite file");
            }
            auto flat = s.at("counters").get<std::array<std::uint32_t, kDriftableCounters>>();
            sh.base = unflatten_counters(static_cast<ShaderStage>(stage), flat);
            if (sh.id != suite.shaders_.size()) {
                throw ValidationError("shader ids must be dense and ordered");
            }
            suite.shaders_.push_back(std::move(sh));
        }

        for (const auto& d : j.at("drift_log")) {
            suite.drift_log_.push_back(d.get<std::array<double, kDriftableCounters>>());
        }
        if (suite.drift_log_.size() != suite.shaders_.size()) {
            throw ValidationError("drift log size disagrees with shader count");
        }

        for (const auto& jb : j.at("benchmarks")) {
            SimBenchmark b;
            b.id = jb.at("id").get<std::uint32_t>();
            b.baseline_fps = jb.at("baseline_fps").get<double>();
            const double cap = jb.at("bandwidth_capacity").get<double>();
            b.bandwidth_capacity =
                cap > 0.0 ? cap : std::numeric_limits<double>::infinity();
            b.noise_sigma = jb.at("noise_sigma").get<double>();
            b.memory_bound_threshold = jb.at("memory_bound_threshold").get<double>();
            for (const auto& jp : jb.at("pipelines")) {
                SimPipeline p;
                p.weight = jp.at("weight").get<double>();
                p.base_time = jp.at("base_time").get<double>();
                for (const auto& js : jp.at("slots")) {
                    PipelineSlot slot;
                    slot.shader_id = js.at("shader").get<std::uint32_t>();
                    slot.exec_fraction = js.at("exec_fraction").get<double>();
                    if (slot.shader_id >= suite.shaders_.size()) {
                        throw ValidationError("pipeline references unknown shader");
                    }
                    p.slots.push_back(slot);
                }
                b.pipelines.push_back(std::move(p));
            }
            for (const auto& p : b.pipelines) {
                for (const auto& s : p.slots) b.shader_ids.push_back(s.shader_id);
            }
            std::sort(b.shader_ids.begin(), b.shader_ids.end());
            b.shader_ids.erase(std::unique(b.shader_ids.begin(), b.shader_ids.end()),
                               b.shader_ids.end());
            suite.benchmarks_.push_back(std::move(b));
        }
        return suite;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed suite file: ") + e.what());
    }
}

void SimSuite::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ValidationError("cannot open suite file for writing: " + path.string());
    os << to_json_string() << '\n';
    if (!os) throw ValidationError("failed writing suite file: " + path.string());
}

SimSuite SimSuite::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open suite file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_string(ss.str());
}

SuiteSpec SimSuite::spec_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("suite spec is not valid JSON: ") + e.what());
    }
    try {
        SuiteSpec spec = spec_from_json(j);
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed suite spec: ") + e.what());
    }
}

SuiteSpec SimSuite::spec_from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open suite spec: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return spec_from_json_string(ss.str());
}

} // namespace gbx
