#pragma once

#include <span>
#include <string>
#include <string_view>

#include "sparseshot/data.hpp"
#include "sparseshot/grid.hpp"

namespace sparseshot {

enum class LossVariant { CE, Focal, Huber, ECE, FocalECE };

std::string_view to_string(LossVariant v);
/// Accepts ce, focal, huber, ece, focal-ece (case-insensitive, '_' or '-'). Throws InvalidConfig.
LossVariant parse_loss_variant(std::string_view name);

struct LossParams {
    LossVariant variant = LossVariant::CE;
    double alpha = 0.25;
    double gamma = 2.0;
    double huber_delta = 1.0;
    /// Also drop background pixels with p <= 1 - theta (confident negatives).
    bool symmetric_exclusion = false;

    void validate() const;
};

struct LossOutput {
    double total = 0.0;
    LogitField grad_logits;
    std::size_t included_count = 0;  ///< background pixels contributing
    std::size_t excluded_count = 0;  ///< background pixels gated out
};

/// Logistic function; exact symmetry sigmoid(-z) == 1 - sigmoid(z) up to rounding.
/// Throws NonFinite for NaN/inf input.
double sigmoid(double z);

/// log(1 + e^z) without overflow; equals -log(sigmoid(-z)).
double softplus(double z);

ProbabilityField probabilities(const LogitField& logits);

/// Whether an unannotated pixel with probability `p` contributes to the loss at threshold `theta`.
/// Ties at p == theta are excluded. theta >= 1 admits every pixel (sigmoid never reaches 1).
bool background_included(double p, double theta, bool symmetric_exclusion);

/// Value and logit-gradient of the selected loss. ECE/FOCAL_ECE gate background terms
/// by background_included(); the other variants use every pixel.
/// Throws ShapeError, RangeError (theta outside [0,1]).
LossOutput batch_loss(const LogitField& logits, const DenseLabelField& labels, const LossParams& params,
                      double theta);

/// -sum over the oracle-known unannotated positives of log(1 - p).
double bias_term(const ProbabilityField& prob, const Mask& true_unannotated);

/// p^m (1-p)^n, the polynomial form of the background loss acceleration.
double second_order_proxy(double p, int m, int n);

/// true = pixel contributes. Foreground always included.
Mask exclusion_mask(const ProbabilityField& prob, const Grid<Membership>& membership, double theta,
                    bool symmetric_exclusion = false);

/// Pairwise (tree) summation; the reduction order depends only on the length.
double pairwise_sum(std::span<const double> values);

}  // namespace sparseshot
