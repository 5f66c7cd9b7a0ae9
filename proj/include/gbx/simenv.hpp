#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gbx/core.hpp"

namespace gbx {

struct LatentRange {
    double min = 0.0;
    double max = 0.0;

    bool operator==(const LatentRange&) const = default;
};

// Generation parameters for a synthetic benchmark suite. Serialized as JSON
// (see SimSuite::spec_from_json); every field has a default so sparse spec
// files stay short.
struct SuiteSpec {
    int benchmark_count = 16;
    int shaders_min = 184; // per benchmark
    int shaders_max = 276;
    int pipelines_min = 2;
    int pipelines_max = 4;
    double shared_fraction = 0.15; // chance a slot reuses an existing shader

    LatentRange divergence{0.0, 1.0};
    LatentRange bandwidth{0.0, 1.6};
    LatentRange parallelism{0.0, 0.6};
    // Rejection band on |wave64 speedup - 1|; floor 0 disables rejection.
    double wave64_gap_floor = 0.0;
    double wave64_gap_cap = 1.0;

    LatentRange exec_fraction{0.03, 0.09};
    double exec_fraction_cap = 0.85; // per-pipeline sum cap
    LatentRange pipeline_base_ms{2.0, 8.0};
    LatentRange pipeline_weight{0.5, 2.0};

    double bandwidth_capacity = 0.0; // <= 0 means unconstrained
    double memory_bound_threshold = 1.0;
    double noise_sigma = 0.005; // relative frame-rate noise

    double drift_rate = 0.01; // max per-check-in relative step
    double drift_cap = 0.5;   // cumulative |drift| bound
    int year_checkins = 2500;

    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const SuiteSpec&) const = default;
};

struct SimShader {
    std::uint32_t id = 0;
    double divergence = 0.0;       // d in [0,1]
    double bandwidth_demand = 0.0; // b >= 0, per-wave normalized units
    double parallelism = 0.0;      // kappa in [0, 0.6]
    RawCounters base;

    // Isolated speedup of wave64 relative to wave32.
    double wave64_speedup() const {
        return (1.0 + parallelism) * (1.0 - 0.5 * divergence);
    }
    double demand(Action a) const {
        return a == Action::Wave64 ? 2.0 * bandwidth_demand : bandwidth_demand;
    }
};

struct PipelineSlot {
    std::uint32_t shader_id = 0;
    double exec_fraction = 0.0;
};

struct SimPipeline {
    std::vector<PipelineSlot> slots;
    double weight = 1.0;
    double base_time = 0.0; // seconds at unit speedups
};

struct SimBenchmark {
    std::uint32_t id = 0;
    std::vector<SimPipeline> pipelines;
    std::vector<std::uint32_t> shader_ids; // distinct, sorted
    double baseline_fps = 0.0;             // all-wave64 at sigma = 0
    double bandwidth_capacity = 0.0;       // +inf when unconstrained
    double noise_sigma = 0.0;
    double memory_bound_threshold = 1.0;
};

using ActionAssignment = std::map<std::uint32_t, Action>;

struct ShaderObservation {
    std::uint32_t shader_id = 0;
    StateKey key;
    ShaderState state;
    Action action = kDefaultAction;
};

struct RunRecord {
    std::uint32_t benchmark_id = 0;
    Checkin checkin = 0;
    std::vector<ShaderObservation> observations; // sorted by shader id
};

// Amdahl composition: local speedup s on fraction p of execution time.
double amdahl_compose(double p, double s);

inline constexpr int kDriftableCounters = 29;

// Deterministic function of (counter seed, latents): the stream of jitter
// draws is fixed-length and independent of the latent values, so counters
// at zero latents define the jitter-only baseline.
RawCounters gen_base_counters(std::uint64_t counter_seed, ShaderStage stage,
                              double size_scale, double divergence,
                              double bandwidth, double parallelism);

// The synthetic application suite plus the drift clock. Mutates only via
// advance_checkins; all queries are const and safe to run concurrently.
class SimSuite {
public:
    static SimSuite generate(const SuiteSpec& spec, std::uint64_t seed);

    const SuiteSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    Checkin checkin() const { return checkin_; }

    const std::vector<SimShader>& shaders() const { return shaders_; }
    const std::vector<SimBenchmark>& benchmarks() const { return benchmarks_; }
    const SimShader& shader(std::uint32_t id) const;
    const SimBenchmark& benchmark(std::uint32_t id) const;

    // Counters of the shader at the current check-in (base counters scaled
    // by the accumulated drift multipliers).
    RawCounters drifted_counters(std::uint32_t shader_id) const;

    // State precedes the action (pre-optimization IR), so the action does
    // not influence the result.
    std::pair<ShaderState, StateKey> compile(std::uint32_t shader_id,
                                             Action action) const;

    // Seeded multiplicative random walk per counter; per-step value depends
    // only on the absolute check-in index, so advancing by N is independent
    // of batching. Latents never drift.
    void advance_checkins(std::uint64_t dt);

    // Noise-free frame rate of one benchmark under a full assignment.
    double true_fps(std::uint32_t benchmark_id, const ActionAssignment& assignment) const;

    struct RunResult {
        std::vector<double> samples;
        RunRecord record;
    };
    RunResult run_benchmark(std::uint32_t benchmark_id, const ActionAssignment& assignment,
                            int n_samples, std::uint64_t seed) const;

    struct OracleResult {
        ActionAssignment assignment;
        double fps = 0.0;
    };
    // Exhaustive joint optimum at sigma = 0; ties resolve to the
    // lexicographically smallest assignment preferring wave64. Refuses
    // benchmarks with more than 20 shaders.
    OracleResult brute_force_optimal(std::uint32_t benchmark_id) const;

    std::string to_json_string() const;
    static SimSuite from_json_string(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static SimSuite load(const std::filesystem::path& path);

    static SuiteSpec spec_from_json_string(const std::string& text);
    static SuiteSpec spec_from_file(const std::filesystem::path& path);

private:
    SimSuite() = default;

    double frame_time(const SimBenchmark& bench, const ActionAssignment& assignment) const;

    SuiteSpec spec_;
    std::uint64_t seed_ = 0;
    Checkin checkin_ = 0;
    std::vector<SimShader> shaders_;
    std::vector<SimBenchmark> benchmarks_;
    // log drift multiplier per shader per driftable counter
    std::vector<std::array<double, kDriftableCounters>> drift_log_;
};

} // namespace gbx
