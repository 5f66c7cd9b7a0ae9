#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gbx/core.hpp"
#include "gbx/rng.hpp"

using namespace gbx;

namespace {

RawCounters sample_counters(ShaderStage stage = ShaderStage::Geometry) {
    RawCounters raw;
    raw.stage = stage;
    raw.basic_blocks = 12;
    raw.vector_instrs = {40, 22, 5, 9, 11};
    raw.scalar_instrs = {31, 14, 18, 7};
    raw.memory_instrs = {25, 16, 12, 2, 9, 6};
    raw.compute_instrs = {28, 13, 17, 4};
    raw.control_flow_instrs = {15, 9, 2, 5};
    raw.registers = {96, 41};
    raw.work_groups = {0, 0, 0};
    raw.recompute_totals();
    return raw;
}

RawCounters random_counters(SplitMix64& rng) {
    RawCounters raw;
    raw.stage = static_cast<ShaderStage>(rng.next_below(kStageCount));
    raw.basic_blocks = static_cast<std::uint32_t>(rng.next_below(500));
    for (auto& c : raw.vector_instrs) c = static_cast<std::uint32_t>(rng.next_below(1000));
    for (auto& c : raw.scalar_instrs) c = static_cast<std::uint32_t>(rng.next_below(1000));
    for (auto& c : raw.memory_instrs) c = static_cast<std::uint32_t>(rng.next_below(1000));
    for (auto& c : raw.compute_instrs) c = static_cast<std::uint32_t>(rng.next_below(1000));
    for (auto& c : raw.control_flow_instrs) c = static_cast<std::uint32_t>(rng.next_below(1000));
    for (auto& c : raw.registers) c = static_cast<std::uint32_t>(rng.next_below(256));
    for (auto& c : raw.work_groups) c = static_cast<std::uint32_t>(rng.next_below(64));
    raw.recompute_totals();
    return raw;
}

} // namespace

TEST_CASE("zero counters encode to a pure one-hot state") {
    RawCounters raw;
    raw.stage = ShaderStage::Geometry; // index 3
    raw.recompute_totals();
    const ShaderState s = encode_state(raw);
    for (int i = 0; i < kFeatureCount; ++i) {
        if (i == 3) {
            CHECK(s.features[i] == 1.0f);
        } else {
            CHECK(s.features[i] == 0.0f);
        }
    }
}

TEST_CASE("single basic block lands ln(2) in its slot only") {
    RawCounters zero;
    zero.stage = ShaderStage::Pixel;
    zero.recompute_totals();
    RawCounters one = zero;
    one.basic_blocks = 1;
    one.recompute_totals();

    const ShaderState s0 = encode_state(zero);
    const ShaderState s1 = encode_state(one);
    CHECK(s1.features[8] == doctest::Approx(0.6931471805599453f).epsilon(1e-6));
    for (int i = 0; i < kFeatureCount; ++i) {
        if (i == 8) continue;
        CHECK(s0.features[i] == s1.features[i]);
    }
}

TEST_CASE("encode_state is injective on counter tuples") {
    SplitMix64 rng(99);
    std::set<std::array<float, kFeatureCount>> seen;
    for (int i = 0; i < 200; ++i) {
        const RawCounters raw = random_counters(rng);
        seen.insert(encode_state(raw).features);
    }
    // collisions would require distinct counters with equal log1p images
    std::set<StateKey> keys;
    SplitMix64 rng2(99);
    for (int i = 0; i < 200; ++i) {
        keys.insert(state_key(random_counters(rng2)));
    }
    CHECK(seen.size() == keys.size());
}

TEST_CASE("encode_state always yields 44 entries, one-hot stage, non-negative counters") {
    SplitMix64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const RawCounters raw = random_counters(rng);
        const ShaderState s = encode_state(raw);
        int hot = 0;
        for (int j = 0; j < kStageCount; ++j) {
            CHECK((s.features[j] == 0.0f || s.features[j] == 1.0f));
            hot += s.features[j] == 1.0f ? 1 : 0;
        }
        CHECK(hot == 1);
        for (int j = kStageCount; j < kFeatureCount; ++j) {
            CHECK(s.features[j] >= 0.0f);
        }
    }
}

TEST_CASE("state serialization is 176 bytes and round-trips") {
    const ShaderState s = encode_state(sample_counters());
    const auto bytes = serialize_state(s);
    static_assert(bytes.size() == 176);
    CHECK(deserialize_state(bytes) == s);
}

TEST_CASE("malformed counters are rejected") {
    RawCounters raw = sample_counters();
    raw.totals[0] += 1; // stale total
    CHECK_THROWS_AS(encode_state(raw), ValidationError);

    RawCounters bad_stage = sample_counters();
    bad_stage.stage = static_cast<ShaderStage>(9);
    CHECK_THROWS_AS(encode_state(bad_stage), ValidationError);
}

TEST_CASE("state keys: equality mirrors raw counter equality") {
    const RawCounters a = sample_counters();
    RawCounters b = sample_counters();
    CHECK(state_key(a) == state_key(b));

    b.basic_blocks += 1;
    b.recompute_totals();
    CHECK(state_key(a) != state_key(b));
}

TEST_CASE("counters round-trip through the key") {
    SplitMix64 rng(13);
    for (int i = 0; i < 100; ++i) {
        const RawCounters raw = random_counters(rng);
        const RawCounters back = counters_from_key(state_key(raw));
        CHECK(back == raw);
    }
}

TEST_CASE("state key equality is an equivalence relation over random draws") {
    SplitMix64 rng(21);
    std::vector<RawCounters> cs;
    for (int i = 0; i < 32; ++i) cs.push_back(random_counters(rng));
    cs.push_back(cs[4]); // force a duplicate
    for (const auto& x : cs) {
        CHECK(state_key(x) == state_key(x));
        for (const auto& y : cs) {
            CHECK((state_key(x) == state_key(y)) == (x == y));
        }
    }
}

TEST_CASE("reward is the frame-rate ratio") {
    CHECK(reward_from_framerate(60.0, 60.0) == 1.0);
    CHECK(reward_from_framerate(60.9, 60.0) == doctest::Approx(1.015).epsilon(1e-12));
    CHECK_THROWS_AS(reward_from_framerate(60.0, 0.0), ValidationError);
    CHECK_THROWS_AS(reward_from_framerate(60.0, -1.0), ValidationError);
}

TEST_CASE("reward ratio is scale invariant") {
    SplitMix64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const double f = rng.next_range(1.0, 200.0);
        const double f0 = rng.next_range(1.0, 200.0);
        const double k = rng.next_range(0.01, 100.0);
        CHECK(reward_from_framerate(k * f, k * f0) ==
              doctest::Approx(reward_from_framerate(f, f0)).epsilon(1e-12));
    }
}
