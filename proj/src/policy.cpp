#include "gbx/policy.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace gbx {

namespace {

constexpr double kProbClamp = 1e-7;
constexpr std::uint16_t kPolicyFormatVersion = 1;
constexpr char kPolicyMagic[4] = {'G', 'B', 'X', 'P'};

double clampp(double p) {
    return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

struct Activations {
    std::array<double, 64> h1;
    std::array<double, 32> h2;
    std::array<double, 2> probs;
};

Activations run_forward(const PolicyNet& net, const ShaderState& s) {
    Activations act{};
    for (int j = 0; j < 64; ++j) {
        double z = net.biases[0][j];
        const float* row = &net.weights[0][static_cast<std::size_t>(j) * 44];
        for (int i = 0; i < 44; ++i) z += static_cast<double>(row[i]) * s.features[i];
        act.h1[j] = z > 0.0 ? z : 0.0;
    }
    for (int j = 0; j < 32; ++j) {
        double z = net.biases[1][j];
        const float* row = &net.weights[1][static_cast<std::size_t>(j) * 64];
        for (int i = 0; i < 64; ++i) z += static_cast<double>(row[i]) * act.h1[i];
        act.h2[j] = z > 0.0 ? z : 0.0;
    }
    std::array<double, 2> logits{};
    for (int j = 0; j < 2; ++j) {
        double z = net.biases[2][j];
        const float* row = &net.weights[2][static_cast<std::size_t>(j) * 32];
        for (int i = 0; i < 32; ++i) z += static_cast<double>(row[i]) * act.h2[i];
        logits[j] = z;
    }
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    act.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
    return act;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        auto b = take(4);
        return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
               static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    }
    std::uint64_t u64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw PolicyFormatError("truncated policy file");
        }
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

PolicyNet PolicyNet::zeros() {
    PolicyNet net;
    for (int l = 0; l < kPolicyLayers; ++l) {
        net.weights[l].assign(
            static_cast<std::size_t>(kPolicyDims[l]) * kPolicyDims[l + 1], 0.0f);
        net.biases[l].assign(static_cast<std::size_t>(kPolicyDims[l + 1]), 0.0f);
    }
    return net;
}

PolicyNet PolicyNet::init(std::uint64_t seed) {
    PolicyNet net = zeros();
    for (int l = 0; l < kPolicyLayers; ++l) {
        SplitMix64 rng(derive_seed({seed, 0x1A17u, static_cast<std::uint64_t>(l)}));
        const double bound =
            std::sqrt(6.0 / (kPolicyDims[l] + kPolicyDims[l + 1]));
        for (auto& w : net.weights[l]) {
            w = static_cast<float>(rng.next_signed_unit() * bound);
        }
    }
    return net;
}

std::array<double, 2> PolicyNet::forward(const ShaderState& s) const {
    for (float f : s.features) {
        if (!std::isfinite(f)) {
            throw ValidationError("non-finite feature in shader state");
        }
    }
    return run_forward(*this, s).probs;
}

std::size_t PolicyNet::param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < kPolicyLayers; ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

float PolicyNet::param(std::size_t i) const {
    for (int l = 0; l < kPolicyLayers; ++l) {
        if (i < weights[l].size()) return weights[l][i];
        i -= weights[l].size();
        if (i < biases[l].size()) return biases[l][i];
        i -= biases[l].size();
    }
    throw ValidationError("parameter index out of range");
}

void PolicyNet::set_param(std::size_t i, float v) {
    for (int l = 0; l < kPolicyLayers; ++l) {
        if (i < weights[l].size()) {
            weights[l][i] = v;
            return;
        }
        i -= weights[l].size();
        if (i < biases[l].size()) {
            biases[l][i] = v;
            return;
        }
        i -= biases[l].size();
    }
    throw ValidationError("parameter index out of range");
}

double kl_loss(const std::array<double, 2>& predicted, const EmpiricalPolicy& target) {
    double loss = 0.0;
    for (int a = 0; a < 2; ++a) {
        const double p = clampp(predicted[a]);
        const double t = clampp(target.prob[a]);
        loss += p * std::log(p / t);
    }
    return loss;
}

double batch_kl_loss(const PolicyNet& net,
                     std::span<const std::pair<ShaderState, EmpiricalPolicy>> batch) {
    double total = 0.0;
    for (const auto& [s, target] : batch) {
        total += kl_loss(run_forward(net, s).probs, target);
    }
    return total / static_cast<double>(batch.size());
}

namespace {

// Accumulates d(mean batch KL)/d(params) into flat grad storage laid out in
// serialization order. Softmax + KL combine into
//   dL/dz_k = p_k * (ln(p_k / t_k) - L)
// for a single sample with loss L.
void accumulate_gradient(const PolicyNet& net, const ShaderState& s,
                         const EmpiricalPolicy& target, double inv_batch,
                         std::span<double> grad) {
    const Activations act = run_forward(net, s);
    std::array<double, 2> logp_ratio{};
    double loss = 0.0;
    for (int a = 0; a < 2; ++a) {
        const double p = clampp(act.probs[a]);
        const double t = clampp(target.prob[a]);
        logp_ratio[a] = std::log(p / t);
        loss += p * logp_ratio[a];
    }
    std::array<double, 2> d3{};
    for (int a = 0; a < 2; ++a) {
        d3[a] = act.probs[a] * (logp_ratio[a] - loss) * inv_batch;
    }

    constexpr std::size_t w0 = 0;
    constexpr std::size_t b0 = w0 + 44 * 64;
    constexpr std::size_t w1 = b0 + 64;
    constexpr std::size_t b1 = w1 + 64 * 32;
    constexpr std::size_t w2 = b1 + 32;
    constexpr std::size_t b2 = w2 + 32 * 2;

    std::array<double, 32> d2{};
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 32; ++i) {
            grad[w2 + static_cast<std::size_t>(j) * 32 + i] += d3[j] * act.h2[i];
            d2[i] += d3[j] * static_cast<double>(net.weights[2][static_cast<std::size_t>(j) * 32 + i]);
        }
        grad[b2 + j] += d3[j];
    }
    for (int i = 0; i < 32; ++i) {
        if (act.h2[i] <= 0.0) d2[i] = 0.0;
    }

    std::array<double, 64> d1{};
    for (int j = 0; j < 32; ++j) {
        if (d2[j] == 0.0) continue;
        for (int i = 0; i < 64; ++i) {
            grad[w1 + static_cast<std::size_t>(j) * 64 + i] += d2[j] * act.h1[i];
            d1[i] += d2[j] * static_cast<double>(net.weights[1][static_cast<std::size_t>(j) * 64 + i]);
        }
        grad[b1 + j] += d2[j];
    }
    for (int i = 0; i < 64; ++i) {
        if (act.h1[i] <= 0.0) d1[i] = 0.0;
    }

    for (int j = 0; j < 64; ++j) {
        if (d1[j] == 0.0) continue;
        for (int i = 0; i < 44; ++i) {
            grad[w0 + static_cast<std::size_t>(j) * 44 + i] +=
                d1[j] * static_cast<double>(s.features[i]);
        }
        grad[b0 + j] += d1[j];
    }
}

} // namespace

std::vector<double> batch_kl_gradient(
    const PolicyNet& net,
    std::span<const std::pair<ShaderState, EmpiricalPolicy>> batch) {
    std::vector<double> grad(net.param_count(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& [s, target] : batch) {
        accumulate_gradient(net, s, target, inv, grad);
    }
    return grad;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (!(rho_min > 0.0) || !(rho0 >= rho_min)) {
        throw ValidationError("temperature schedule requires rho0 >= rho_min > 0");
    }
    if (!(rho_decay > 0.0 && rho_decay <= 1.0)) {
        throw ValidationError("rho decay must be in (0, 1]");
    }
}

double TrainConfig::rho_at(int iteration) const {
    return std::max(rho_min, rho0 * std::pow(rho_decay, iteration));
}

FitResult fit(PolicyNet& net, const PolicyDataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) {
        throw ValidationError("fit requires a non-empty dataset");
    }
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::pair<ShaderState, EmpiricalPolicy>> batch;
    FitResult result;
    result.epoch_loss.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 rng(derive_seed({cfg.seed, 0x5F17u, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = rng.next_below(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
            const double loss = batch_kl_loss(net, batch);
            if (!std::isfinite(loss)) {
                throw TrainingDivergedError(
                    epoch, "training loss became non-finite at epoch " +
                               std::to_string(epoch));
            }
            epoch_total += loss * static_cast<double>(batch.size());
            const auto grad = batch_kl_gradient(net, batch);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                net.set_param(i, static_cast<float>(
                                     static_cast<double>(net.param(i)) -
                                     cfg.learning_rate * grad[i]));
            }
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
    }
    return result;
}

Action select_greedy(const BehaviorPolicy& beh, const ShaderState& s) {
    const auto probs = beh.forward(s);
    return probs[1] >= probs[0] ? Action::Wave64 : Action::Wave32;
}

Action select_sample(const BehaviorPolicy& beh, const ShaderState& s, SplitMix64& rng) {
    const auto probs = beh.forward(s);
    return rng.next_unit() < probs[0] ? Action::Wave32 : Action::Wave64;
}

std::vector<std::uint8_t> serialize_policy(const BehaviorPolicy& beh) {
    std::vector<std::uint8_t> out;
    out.reserve(64 + kPolicyWeightBytes);
    out.insert(out.end(), kPolicyMagic, kPolicyMagic + 4);
    put_u16(out, kPolicyFormatVersion);
    out.push_back(static_cast<std::uint8_t>(kPolicyLayers));
    for (int l = 0; l < kPolicyLayers; ++l) {
        put_u16(out, static_cast<std::uint16_t>(kPolicyDims[l]));
        put_u16(out, static_cast<std::uint16_t>(kPolicyDims[l + 1]));
    }
    const std::size_t payload_start = out.size();
    for (int l = 0; l < kPolicyLayers; ++l) {
        for (float w : beh.net.weights[l]) put_f32(out, w);
        for (float b : beh.net.biases[l]) put_f32(out, b);
    }
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + payload_start, static_cast<uInt>(out.size() - payload_start)));
    put_u32(out, crc);
    put_u32(out, beh.version_tag);
    put_u64(out, beh.source_checkin);
    return out;
}

BehaviorPolicy deserialize_policy(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(4);
    if (std::memcmp(magic.data(), kPolicyMagic, 4) != 0) {
        throw PolicyFormatError("not a GBXP policy file");
    }
    if (r.u16() != kPolicyFormatVersion) {
        throw PolicyFormatError("unsupported policy format version");
    }
    const int layers = r.u8();
    if (layers != kPolicyLayers) {
        throw PolicySchemaError("expected 3 layers, found " + std::to_string(layers));
    }
    for (int l = 0; l < kPolicyLayers; ++l) {
        const int in = r.u16();
        const int out_dim = r.u16();
        if (in != kPolicyDims[l] || out_dim != kPolicyDims[l + 1]) {
            throw PolicySchemaError("layer " + std::to_string(l) + " has shape " +
                                    std::to_string(in) + "x" + std::to_string(out_dim) +
                                    ", expected " + std::to_string(kPolicyDims[l]) + "x" +
                                    std::to_string(kPolicyDims[l + 1]));
        }
    }
    const std::size_t payload_start = r.pos();
    BehaviorPolicy beh;
    beh.net = PolicyNet::zeros();
    for (int l = 0; l < kPolicyLayers; ++l) {
        for (auto& w : beh.net.weights[l]) w = r.f32();
        for (auto& b : beh.net.biases[l]) b = r.f32();
    }
    const std::size_t payload_end = r.pos();
    const std::uint32_t stored_crc = r.u32();
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, bytes.data() + payload_start,
              static_cast<uInt>(payload_end - payload_start)));
    if (crc != stored_crc) {
        throw PolicyFormatError("policy payload checksum mismatch");
    }
    beh.version_tag = r.u32();
    beh.source_checkin = r.u64();
    return beh;
}

void save_policy(const BehaviorPolicy& beh, const std::filesystem::path& path) {
    const auto bytes = serialize_policy(beh);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw ValidationError("cannot open policy file for writing: " + path.string());
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw ValidationError("failed writing policy file: " + path.string());
    }
}

BehaviorPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ValidationError("cannot open policy file: " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return deserialize_policy(bytes);
}

} // namespace gbx
