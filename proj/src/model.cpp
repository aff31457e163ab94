#include "sparseshot/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace sparseshot {

namespace {

constexpr char kMagic[4] = {'E', 'C', 'E', 'P'};

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v)) throw NonFinite(std::string(what) + " contains a non-finite value");
}

// Accumulates out[r][c] += w * in[r + dr][c + dc] over the rows/cols where the
// shifted index is inside the image (zero padding elsewhere).
template <class F>
void for_each_tap(std::size_t height, std::size_t width, long dr, long dc, F&& body) {
    const long h = static_cast<long>(height), w = static_cast<long>(width);
    const long r0 = std::max(0L, -dr), r1 = std::min(h, h - dr);
    const long c0 = std::max(0L, -dc), c1 = std::min(w, w - dc);
    for (long r = r0; r < r1; ++r) body(static_cast<std::size_t>(r), static_cast<std::size_t>(r + dr),
                                         static_cast<std::size_t>(c0), static_cast<std::size_t>(c1),
                                         static_cast<std::size_t>(c0 + dc));
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint header");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

ScorerParams::ScorerParams(std::size_t hidden, std::size_t kernel) : hidden_(hidden), kernel_(kernel) {
    if (hidden < 1) throw InvalidConfig("hidden width must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidConfig("kernel size must be odd");
    values_.assign(hidden * (kernel * kernel + 2) + 1, 0.0);
}

OptimizerState OptimizerState::for_params(const ScorerParams& params, double learning_rate, double momentum) {
    if (!(learning_rate >= 0.0)) throw InvalidConfig("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("momentum must lie in [0,1)");
    return OptimizerState{learning_rate, momentum, ScorerParams(params.hidden(), params.kernel())};
}

ScorerParams init_params(std::uint64_t seed, std::size_t hidden, std::size_t kernel) {
    ScorerParams params(hidden, kernel);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> conv1(0.0, std::sqrt(2.0 / static_cast<double>(kernel * kernel)));
    std::normal_distribution<double> conv2(0.0, std::sqrt(2.0 / static_cast<double>(hidden)));
    for (double& w : params.conv1_weights()) w = conv1(rng);
    for (double& w : params.conv2_weights()) w = conv2(rng);
    return params;
}

ForwardCache forward_cached(const Image& image, const ScorerParams& params) {
    require_finite(params.values(), "scorer parameters");
    const std::size_t H = image.height(), W = image.width();
    const std::size_t K = params.hidden(), k = params.kernel();
    const long half = static_cast<long>(k / 2);
    const auto w1 = params.conv1_weights();
    const auto b1 = params.conv1_biases();
    const auto w2 = params.conv2_weights();
    const auto& px = image.pixels();

    ForwardCache cache;
    cache.pre_activation.reserve(K);
    cache.logits = LogitField(H, W, params.conv2_bias());
    for (std::size_t ch = 0; ch < K; ++ch) {
        Grid<double> pre(H, W, b1[ch]);
        for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
                const double w = w1[(ch * k + u) * k + v];
                for_each_tap(H, W, static_cast<long>(u) - half, static_cast<long>(v) - half,
                             [&](std::size_t r, std::size_t src_r, std::size_t c0, std::size_t c1, std::size_t src_c0) {
                                 double* dst = &pre(r, 0);
                                 const double* src = &px(src_r, src_c0);
                                 for (std::size_t c = c0; c < c1; ++c) dst[c] += w * src[c - c0];
                             });
            }
        }
        const double wo = w2[ch];
        for (std::size_t i = 0; i < pre.size(); ++i) cache.logits[i] += wo * std::max(pre[i], 0.0);
        cache.pre_activation.push_back(std::move(pre));
    }
    return cache;
}

LogitField forward(const Image& image, const ScorerParams& params) {
    return std::move(forward_cached(image, params).logits);
}

ParamGrads backward(const Image& image, const ScorerParams& params, const LogitField& grad_wrt_logits) {
    require_same_shape(image.pixels(), grad_wrt_logits, "backward");
    return backward(image, params, forward_cached(image, params), grad_wrt_logits);
}

ParamGrads backward(const Image& image, const ScorerParams& params, const ForwardCache& cache,
                    const LogitField& grad_wrt_logits) {
    require_same_shape(image.pixels(), grad_wrt_logits, "backward");
    require_same_shape(image.pixels(), cache.logits, "backward cache");
    if (cache.pre_activation.size() != params.hidden()) throw ShapeError("backward cache has wrong channel count");

    const std::size_t H = image.height(), W = image.width();
    const std::size_t K = params.hidden(), k = params.kernel();
    const long half = static_cast<long>(k / 2);
    const auto w2 = params.conv2_weights();
    const auto& px = image.pixels();

    ParamGrads grads(K, k);
    auto gw1 = grads.conv1_weights();
    auto gb1 = grads.conv1_biases();
    auto gw2 = grads.conv2_weights();

    double gb2 = 0.0;
    for (double g : grad_wrt_logits.values()) gb2 += g;
    grads.conv2_bias() = gb2;

    Grid<double> grad_pre(H, W, 0.0);
    for (std::size_t ch = 0; ch < K; ++ch) {
        const auto& pre = cache.pre_activation[ch];
        double gw = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < pre.size(); ++i) {
            const double g = grad_wrt_logits[i];
            if (pre[i] > 0.0) {
                gw += g * pre[i];
                grad_pre[i] = g * w2[ch];
                gb += grad_pre[i];
            } else {
                grad_pre[i] = 0.0;
            }
        }
        gw2[ch] = gw;
        gb1[ch] = gb;
        for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
                double acc = 0.0;
                for_each_tap(H, W, static_cast<long>(u) - half, static_cast<long>(v) - half,
                             [&](std::size_t r, std::size_t src_r, std::size_t c0, std::size_t c1, std::size_t src_c0) {
                                 const double* g = &grad_pre(r, 0);
                                 const double* src = &px(src_r, src_c0);
                                 for (std::size_t c = c0; c < c1; ++c) acc += g[c] * src[c - c0];
                             });
                gw1[(ch * k + u) * k + v] = acc;
            }
        }
    }
    return grads;
}

void sgd_step(ScorerParams& params, const ParamGrads& grads, OptimizerState& state) {
    if (!params.same_shape(grads)) throw ShapeError("gradient shape does not match parameters");
    if (!params.same_shape(state.velocity)) throw ShapeError("velocity shape does not match parameters");
    auto p = params.values();
    auto v = state.velocity.values();
    auto g = grads.values();
    std::vector<double> next_v(v.size()), next_p(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        next_v[i] = state.momentum * v[i] - state.learning_rate * g[i];
        next_p[i] = p[i] + next_v[i];
        if (!std::isfinite(next_p[i]) || !std::isfinite(next_v[i]))
            throw NonFinite("non-finite update at parameter " + std::to_string(i));
    }
    std::copy(next_v.begin(), next_v.end(), v.begin());
    std::copy(next_p.begin(), next_p.end(), p.begin());
}

void write_checkpoint(std::ostream& out, const ScorerParams& params) {
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(params.hidden()));
    put_u32(out, static_cast<std::uint32_t>(params.kernel()));
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (double v : params.values()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

ScorerParams read_checkpoint(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a scorer checkpoint");
    const std::uint32_t hidden = get_u32(in), kernel = get_u32(in), count = get_u32(in);
    ScorerParams params;
    try {
        params = ScorerParams(hidden, kernel);
    } catch (const InvalidConfig& e) {
        throw FormatError(std::string("bad checkpoint shape: ") + e.what());
    }
    if (count != params.size()) throw FormatError("checkpoint parameter count mismatch");
    for (double& v : params.values()) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint data");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        v = std::bit_cast<double>(bits);
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const ScorerParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_checkpoint(out, params);
    if (!out) throw IoError("write failed: " + path.string());
}

ScorerParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace sparseshot
