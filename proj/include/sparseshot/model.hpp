#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sparseshot/data.hpp"
#include "sparseshot/grid.hpp"

namespace sparseshot {

/// Weights of the per-pixel scorer:
///   k x k same-padded convolution to K channels, max(0,.), 1x1 convolution to one logit.
/// Stored flat as [conv1 weights K*k*k | conv1 biases K | conv2 weights K | conv2 bias].
class ScorerParams {
public:
    ScorerParams() = default;
    /// Zero-initialized. Throws InvalidConfig for K < 1 or even k.
    ScorerParams(std::size_t hidden, std::size_t kernel);

    std::size_t hidden() const noexcept { return hidden_; }
    std::size_t kernel() const noexcept { return kernel_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    std::span<double> conv1_weights() noexcept { return values().subspan(0, hidden_ * kernel_ * kernel_); }
    std::span<double> conv1_biases() noexcept { return values().subspan(hidden_ * kernel_ * kernel_, hidden_); }
    std::span<double> conv2_weights() noexcept { return values().subspan(hidden_ * (kernel_ * kernel_ + 1), hidden_); }
    double& conv2_bias() noexcept { return values_.back(); }

    std::span<const double> conv1_weights() const noexcept { return values().subspan(0, hidden_ * kernel_ * kernel_); }
    std::span<const double> conv1_biases() const noexcept { return values().subspan(hidden_ * kernel_ * kernel_, hidden_); }
    std::span<const double> conv2_weights() const noexcept { return values().subspan(hidden_ * (kernel_ * kernel_ + 1), hidden_); }
    double conv2_bias() const noexcept { return values_.back(); }

    bool same_shape(const ScorerParams& other) const noexcept {
        return hidden_ == other.hidden_ && kernel_ == other.kernel_;
    }

    friend bool operator==(const ScorerParams&, const ScorerParams&) = default;

private:
    std::size_t hidden_ = 0;
    std::size_t kernel_ = 0;
    std::vector<double> values_;
};

/// Gradients share the parameter layout.
using ParamGrads = ScorerParams;

struct OptimizerState {
    double learning_rate = 0.1;
    double momentum = 0.9;
    ScorerParams velocity;

    /// Zero velocity shaped like `params`.
    static OptimizerState for_params(const ScorerParams& params, double learning_rate, double momentum);
};

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    std::vector<Grid<double>> pre_activation;  ///< one per hidden channel
    LogitField logits;
};

/// He-style init: N(0, 2/(kernel_area * fan_in)) per layer, zero biases.
ScorerParams init_params(std::uint64_t seed, std::size_t hidden, std::size_t kernel);

/// Throws NonFinite on a non-finite parameter.
LogitField forward(const Image& image, const ScorerParams& params);
ForwardCache forward_cached(const Image& image, const ScorerParams& params);

/// Reverse-mode gradient of sum(grad_wrt_logits * logits) w.r.t. the parameters.
/// Throws ShapeError.
ParamGrads backward(const Image& image, const ScorerParams& params, const LogitField& grad_wrt_logits);
ParamGrads backward(const Image& image, const ScorerParams& params, const ForwardCache& cache,
                    const LogitField& grad_wrt_logits);

/// velocity = momentum * velocity - lr * grad; params += velocity. Throws NonFinite.
void sgd_step(ScorerParams& params, const ParamGrads& grads, OptimizerState& state);

// Checkpoint: 16-byte header (magic "ECEP", uint32 K, uint32 k, uint32 count), then
// `count` little-endian float64 values.
void write_checkpoint(std::ostream& out, const ScorerParams& params);
ScorerParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ScorerParams& params);
ScorerParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sparseshot
