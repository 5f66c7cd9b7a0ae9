#include "gbx/core.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace gbx {

namespace {

std::uint32_t sum(std::span<const std::uint32_t> xs) {
    std::uint64_t s = 0;
    for (auto x : xs) s += x;
    return static_cast<std::uint32_t>(s);
}

} // namespace

void RawCounters::recompute_totals() {
    totals[1] = sum(vector_instrs);
    totals[2] = sum(scalar_instrs);
    totals[3] = sum(memory_instrs);
    totals[4] = sum(compute_instrs);
    totals[5] = sum(control_flow_instrs);
    totals[6] = sum(registers);
    totals[7] = sum(work_groups);
    totals[0] = totals[1] + totals[2] + totals[3] + totals[4] + totals[5];
}

void RawCounters::validate() const {
    const int stage_idx = static_cast<int>(stage);
    if (stage_idx < 0 || stage_idx >= kStageCount) {
        throw ValidationError("shader stage index out of range: " +
                              std::to_string(stage_idx));
    }
    RawCounters expect = *this;
    expect.recompute_totals();
    if (expect.totals != totals) {
        throw ValidationError("counter category totals disagree with sub-counts");
    }
}

ShaderState encode_state(const RawCounters& raw) {
    raw.validate();
    ShaderState s;
    s.features[static_cast<int>(raw.stage)] = 1.0f;

    int slot = 8;
    auto put = [&](std::uint32_t count) {
        s.features[slot++] = std::log1p(static_cast<float>(count));
    };
    put(raw.basic_blocks);
    for (auto c : raw.vector_instrs) put(c);
    for (auto c : raw.scalar_instrs) put(c);
    for (auto c : raw.memory_instrs) put(c);
    for (auto c : raw.compute_instrs) put(c);
    for (auto c : raw.control_flow_instrs) put(c);
    for (auto c : raw.registers) put(c);
    for (auto c : raw.work_groups) put(c);
    for (int i = 0; i < 7; ++i) put(raw.totals[i]);
    return s;
}

std::array<std::uint8_t, kStateBytes> serialize_state(const ShaderState& s) {
    std::array<std::uint8_t, kStateBytes> out{};
    for (int i = 0; i < kFeatureCount; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &s.features[i], 4);
        out[4 * i + 0] = static_cast<std::uint8_t>(bits);
        out[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
        out[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
        out[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
    }
    return out;
}

ShaderState deserialize_state(std::span<const std::uint8_t, kStateBytes> bytes) {
    ShaderState s;
    for (int i = 0; i < kFeatureCount; ++i) {
        std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                             static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                             static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                             static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
        std::memcpy(&s.features[i], &bits, 4);
    }
    return s;
}

StateKey state_key(const RawCounters& raw) {
    raw.validate();
    StateKey k;
    int i = 0;
    k.values[i++] = static_cast<std::uint32_t>(raw.stage);
    k.values[i++] = raw.basic_blocks;
    for (auto c : raw.vector_instrs) k.values[i++] = c;
    for (auto c : raw.scalar_instrs) k.values[i++] = c;
    for (auto c : raw.memory_instrs) k.values[i++] = c;
    for (auto c : raw.compute_instrs) k.values[i++] = c;
    for (auto c : raw.control_flow_instrs) k.values[i++] = c;
    for (auto c : raw.registers) k.values[i++] = c;
    for (auto c : raw.work_groups) k.values[i++] = c;
    return k;
}

RawCounters counters_from_key(const StateKey& key) {
    RawCounters raw;
    int i = 0;
    const std::uint32_t stage = key.values[i++];
    if (stage >= kStageCount) {
        throw ValidationError("state key holds invalid stage index");
    }
    raw.stage = static_cast<ShaderStage>(stage);
    raw.basic_blocks = key.values[i++];
    for (auto& c : raw.vector_instrs) c = key.values[i++];
    for (auto& c : raw.scalar_instrs) c = key.values[i++];
    for (auto& c : raw.memory_instrs) c = key.values[i++];
    for (auto& c : raw.compute_instrs) c = key.values[i++];
    for (auto& c : raw.control_flow_instrs) c = key.values[i++];
    for (auto& c : raw.registers) c = key.values[i++];
    for (auto& c : raw.work_groups) c = key.values[i++];
    raw.recompute_totals();
    return raw;
}

Reward reward_from_framerate(double observed_fps, double baseline_fps) {
    if (!(baseline_fps > 0.0)) {
        throw ValidationError("baseline frame rate must be positive");
    }
    if (!(observed_fps >= 0.0)) {
        throw ValidationError("observed frame rate must be non-negative");
    }
    return observed_fps / baseline_fps;
}

} // namespace gbx
