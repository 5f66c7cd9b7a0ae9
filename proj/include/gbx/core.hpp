#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace gbx {

class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wavefront execution mode. Wave64 is the baseline compiler behaviour and
// the tie-break winner everywhere an argmax can tie.
enum class Action : int { Wave32 = 0, Wave64 = 1 };

inline constexpr Action kDefaultAction = Action::Wave64;
inline constexpr int kActionCount = 2;

constexpr int action_index(Action a) { return static_cast<int>(a); }

constexpr Action action_from_index(int i) {
    if (i != 0 && i != 1) throw ValidationError("action index out of range");
    return static_cast<Action>(i);
}

constexpr const char* action_name(Action a) {
    return a == Action::Wave32 ? "wave32" : "wave64";
}

// Shader hardware stage, one-hot encoded in feature slots 0..7.
enum class ShaderStage : int {
    Vertex = 0,
    Hull,
    Domain,
    Geometry,
    Pixel,
    Compute,
    Task,
    Mesh,
};

inline constexpr int kStageCount = 8;

// Static per-shader counters lifted from the compiler IR before any
// machine-dependent optimization runs.
struct RawCounters {
    ShaderStage stage = ShaderStage::Vertex;
    std::uint32_t basic_blocks = 0;
    // alu, mul-add, transcendental, conversion, other
    std::array<std::uint32_t, 5> vector_instrs{};
    // alu, branch-setup, constant, other
    std::array<std::uint32_t, 4> scalar_instrs{};
    // vector-load, vector-store, scalar-load, atomic, image-sample, buffer
    std::array<std::uint32_t, 6> memory_instrs{};
    // fp32, fp16/packed, integer, bit-manip
    std::array<std::uint32_t, 4> compute_instrs{};
    // branch, loop-back-edge, call, barrier
    std::array<std::uint32_t, 4> control_flow_instrs{};
    // vector, scalar
    std::array<std::uint32_t, 2> registers{};
    // x, y, z dimensions
    std::array<std::uint32_t, 3> work_groups{};
    // total instructions, then vector/scalar/memory/compute/control-flow/
    // registers/work-group category totals
    std::array<std::uint32_t, 8> totals{};

    // Recomputes the derived totals from the sub-counts.
    void recompute_totals();

    // Throws ValidationError if a total disagrees with its sub-counts or the
    // stage index is out of range.
    void validate() const;

    bool operator==(const RawCounters&) const = default;
};

inline constexpr int kFeatureCount = 44;
inline constexpr int kStateBytes = 176;

// The 44-slot encoded state vector (slot layout below). 32-bit precision by
// contract: 176 bytes serialized.
//
//   0-7    stage one-hot
//   8      basic blocks
//   9-13   vector instruction sub-counts
//   14-17  scalar instruction sub-counts
//   18-23  memory instruction sub-counts
//   24-27  compute instruction sub-counts
//   28-31  control-flow sub-counts
//   32-33  register counts
//   34-36  work-group dimensions
//   37-43  totals: instructions, vector, scalar, memory, compute,
//          control-flow, registers
//
// Counter slots hold log(1 + count); the one-hot slots are 0/1.
struct ShaderState {
    std::array<float, kFeatureCount> features{};

    bool operator==(const ShaderState&) const = default;
};

ShaderState encode_state(const RawCounters& raw);

std::array<std::uint8_t, kStateBytes> serialize_state(const ShaderState& s);
ShaderState deserialize_state(std::span<const std::uint8_t, kStateBytes> bytes);

inline constexpr int kStateKeySize = 30; // stage index + 29 raw counters

// Exact-match table key: the raw integer counters plus stage index, before
// the log1p transform. Two shaders with identical counters share Q entries.
struct StateKey {
    std::array<std::uint32_t, kStateKeySize> values{};

    auto operator<=>(const StateKey&) const = default;
};

StateKey state_key(const RawCounters& raw);

// Inverse of state_key (totals recomputed); every key corresponds to exactly
// one counter tuple, which is what lets the Q-table re-encode states.
RawCounters counters_from_key(const StateKey& key);

struct StateKeyHash {
    std::size_t operator()(const StateKey& k) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (std::uint32_t v : k.values) {
            h = (h ^ v) * 0x100000001B3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

// Relative frame-rate speed-up vs. the all-default baseline; 1.0 is parity.
using Reward = double;

// Throws ValidationError unless baseline_fps > 0 and observed_fps >= 0.
Reward reward_from_framerate(double observed_fps, double baseline_fps);

// Check-in counter of the non-stationarity clock.
using Checkin = std::uint64_t;

} // namespace gbx
