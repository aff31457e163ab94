#include "sparseshot/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <vector>

namespace sparseshot {

namespace {

struct Term {
    double loss;
    double grad;  // d loss / d z
};

// -log p for an annotated pixel, p = sigmoid(z).
Term positive_ce(double z, double neg) { return {softplus(-z), -neg}; }

// -log(1 - p) for a tentatively negative pixel.
Term negative_ce(double z, double pos) { return {softplus(z), pos}; }

// alpha (1-p)^gamma (-log p)
Term positive_focal(double z, double pos, double neg, double alpha, double gamma) {
    double nll = softplus(-z);
    double weight = alpha * std::pow(neg, gamma);
    return {weight * nll, -weight * (gamma * pos * nll + neg)};
}

// u(1 - p) = alpha p^gamma (-log(1-p))
Term negative_focal(double z, double pos, double neg, double alpha, double gamma) {
    double nll = softplus(z);
    double weight = alpha * std::pow(pos, gamma);
    return {weight * nll, weight * (gamma * neg * nll + pos)};
}

// Huber on the residual r = p - y; dp/dz = p (1 - p).
Term huber(double residual, double pos, double neg, double delta) {
    double a = std::abs(residual);
    double loss, dr;
    if (a <= delta) {
        loss = 0.5 * residual * residual;
        dr = residual;
    } else {
        loss = delta * (a - 0.5 * delta);
        dr = residual > 0 ? delta : -delta;
    }
    return {loss, dr * pos * neg};
}

double pairwise_sum_impl(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum_impl(v, half) + pairwise_sum_impl(v + half, n - half);
}

}  // namespace

std::string_view to_string(LossVariant v) {
    switch (v) {
        case LossVariant::CE: return "ce";
        case LossVariant::Focal: return "focal";
        case LossVariant::Huber: return "huber";
        case LossVariant::ECE: return "ece";
        case LossVariant::FocalECE: return "focal-ece";
    }
    return "?";
}

LossVariant parse_loss_variant(std::string_view name) {
    std::string key;
    for (char c : name) key.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (auto v : {LossVariant::CE, LossVariant::Focal, LossVariant::Huber, LossVariant::ECE, LossVariant::FocalECE})
        if (key == to_string(v)) return v;
    throw InvalidConfig("unknown loss '" + std::string(name) + "'");
}

void LossParams::validate() const {
    if (!(alpha > 0.0)) throw InvalidConfig("focal alpha must be > 0");
    if (!(gamma >= 0.0)) throw InvalidConfig("focal gamma must be >= 0");
    if (!(huber_delta > 0.0)) throw InvalidConfig("huber_delta must be > 0");
}

double sigmoid(double z) {
    if (!std::isfinite(z)) throw NonFinite("sigmoid of non-finite value");
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

ProbabilityField probabilities(const LogitField& logits) {
    ProbabilityField out(logits.height(), logits.width());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
    return out;
}

bool background_included(double p, double theta, bool symmetric_exclusion) {
    if (theta >= 1.0) return true;
    if (!(p < theta)) return false;
    return !symmetric_exclusion || p > 1.0 - theta;
}

LossOutput batch_loss(const LogitField& logits, const DenseLabelField& labels, const LossParams& params,
                      double theta) {
    require_same_shape(logits, labels.labels, "batch_loss");
    require_same_shape(logits, labels.membership, "batch_loss");
    if (!(theta >= 0.0 && theta <= 1.0)) throw RangeError("theta must lie in [0,1]");
    params.validate();

    const bool gated = params.variant == LossVariant::ECE || params.variant == LossVariant::FocalECE;

    LossOutput out;
    out.grad_logits = LogitField(logits.height(), logits.width(), 0.0);
    std::vector<double> terms(logits.size(), 0.0);

    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        const double pos = sigmoid(z);
        const double neg = sigmoid(-z);
        const bool annotated = labels.membership[i] == Membership::Foreground;
        Term t{0.0, 0.0};

        if (annotated) {
            const bool positive = labels.labels[i] == 1;
            switch (params.variant) {
                case LossVariant::CE:
                case LossVariant::ECE:
                case LossVariant::FocalECE:
                    t = positive ? positive_ce(z, neg) : negative_ce(z, pos);
                    break;
                case LossVariant::Focal:
                    t = positive ? positive_focal(z, pos, neg, params.alpha, params.gamma)
                                 : negative_focal(z, pos, neg, params.alpha, params.gamma);
                    break;
                case LossVariant::Huber:
                    t = huber(positive ? -neg : pos, pos, neg, params.huber_delta);
                    break;
            }
        } else {
            if (gated && !background_included(pos, theta, params.symmetric_exclusion)) {
                ++out.excluded_count;
                continue;
            }
            ++out.included_count;
            switch (params.variant) {
                case LossVariant::CE:
                case LossVariant::ECE:
                    t = negative_ce(z, pos);
                    break;
                case LossVariant::Focal:
                case LossVariant::FocalECE:
                    t = negative_focal(z, pos, neg, params.alpha, params.gamma);
                    break;
                case LossVariant::Huber:
                    t = huber(pos, pos, neg, params.huber_delta);
                    break;
            }
        }
        terms[i] = t.loss;
        out.grad_logits[i] = t.grad;
    }
    out.total = pairwise_sum(terms);
    return out;
}

double bias_term(const ProbabilityField& prob, const Mask& true_unannotated) {
    require_same_shape(prob, true_unannotated, "bias_term");
    std::vector<double> terms;
    for (std::size_t i = 0; i < prob.size(); ++i)
        if (true_unannotated[i]) terms.push_back(-std::log1p(-prob[i]));
    return pairwise_sum(terms);
}

double second_order_proxy(double p, int m, int n) {
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("proxy probability outside [0,1]");
    if (m < 1 || n < 1) throw RangeError("proxy exponents must be positive");
    return std::pow(p, m) * std::pow(1.0 - p, n);
}

Mask exclusion_mask(const ProbabilityField& prob, const Grid<Membership>& membership, double theta,
                    bool symmetric_exclusion) {
    require_same_shape(prob, membership, "exclusion_mask");
    if (!(theta >= 0.0 && theta <= 1.0)) throw RangeError("theta must lie in [0,1]");
    Mask out(prob.height(), prob.width(), 0);
    for (std::size_t i = 0; i < prob.size(); ++i)
        out[i] = membership[i] == Membership::Foreground || background_included(prob[i], theta, symmetric_exclusion);
    return out;
}

double pairwise_sum(std::span<const double> values) { return pairwise_sum_impl(values.data(), values.size()); }

}  // namespace sparseshot
