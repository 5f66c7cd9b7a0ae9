#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gbx/core.hpp"
#include "gbx/qtable.hpp"
#include "gbx/rng.hpp"

namespace gbx {

// Artifact unreadable: bad magic, truncation, checksum mismatch.
class PolicyFormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Artifact readable but incompatible (wrong layer shape / input width).
class PolicySchemaError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(int epoch_, const std::string& what)
        : std::runtime_error(what), epoch(epoch_) {}
    int epoch;
};

inline constexpr std::array<int, 4> kPolicyDims = {44, 64, 32, 2};
inline constexpr int kPolicyLayers = 3;
inline constexpr std::size_t kPolicyParamCount = 5026;
inline constexpr std::size_t kPolicyWeightBytes = 20104;

// 3-layer feed-forward classifier, 44 -> 64 -> 32 -> 2, rectifier hidden
// units, softmax output. Parameters are 32-bit floats (20104 bytes, under
// the 20 KB deployment budget); forward math accumulates in double.
struct PolicyNet {
    std::array<std::vector<float>, kPolicyLayers> weights; // [out][in] row-major
    std::array<std::vector<float>, kPolicyLayers> biases;

    // Fan-scaled uniform init (+-sqrt(6/(fan_in+fan_out))), zero biases,
    // bit-reproducible for a given seed.
    static PolicyNet init(std::uint64_t seed);

    static PolicyNet zeros();

    // Action probability pair (wave32, wave64). Throws ValidationError on
    // non-finite inputs.
    std::array<double, 2> forward(const ShaderState& s) const;

    std::size_t param_count() const;

    // Flat parameter addressing in serialization order: per layer, weights
    // row-major then biases.
    float param(std::size_t i) const;
    void set_param(std::size_t i, float v);

    bool operator==(const PolicyNet&) const = default;
};

// D_KL(predicted || target), both clamped to [1e-7, 1-1e-7] before the log.
double kl_loss(const std::array<double, 2>& predicted,
               const EmpiricalPolicy& target);

using PolicyDataset = std::vector<std::pair<ShaderState, EmpiricalPolicy>>;

// Mean KL loss of the net over a batch.
double batch_kl_loss(const PolicyNet& net, std::span<const std::pair<ShaderState, EmpiricalPolicy>> batch);

// Analytic gradient of batch_kl_loss w.r.t. every parameter, flat order.
std::vector<double> batch_kl_gradient(const PolicyNet& net,
                                      std::span<const std::pair<ShaderState, EmpiricalPolicy>> batch);

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 0;
    // temperature annealing across tuner iterations: rho_i = max(rho_min, rho0 * decay^i)
    double rho0 = 0.1;
    double rho_decay = 0.95;
    double rho_min = 0.01;

    void validate() const;
    double rho_at(int iteration) const;
};

struct FitResult {
    std::vector<double> epoch_loss; // mean loss per epoch
};

// Seeded mini-batch gradient descent on the mean KL loss. Deterministic for
// a given config. Throws TrainingDivergedError if the loss goes non-finite.
FitResult fit(PolicyNet& net, const PolicyDataset& dataset, const TrainConfig& cfg);

// Frozen deployment form of the decision policy.
struct BehaviorPolicy {
    PolicyNet net;
    std::uint32_t version_tag = 0;
    Checkin source_checkin = 0;

    std::array<double, 2> forward(const ShaderState& s) const {
        return net.forward(s);
    }
};

Action select_greedy(const BehaviorPolicy& beh, const ShaderState& s);
Action select_sample(const BehaviorPolicy& beh, const ShaderState& s, SplitMix64& rng);

// GBXP container: magic, format version u16, layer count u8, per-layer
// (in u16, out u16), float32 payload (per layer: weights row-major, then
// biases), crc32 of the payload, then version tag u32 + source check-in u64.
// Little-endian throughout.
void save_policy(const BehaviorPolicy& beh, const std::filesystem::path& path);
BehaviorPolicy load_policy(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_policy(const BehaviorPolicy& beh);
BehaviorPolicy deserialize_policy(std::span<const std::uint8_t> bytes);

} // namespace gbx
