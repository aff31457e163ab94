#include "sparseshot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sparseshot/model.hpp"

namespace sparseshot {

namespace {

constexpr double kStep = 1e-5;

struct Draw {
    LogitField logits;
    DenseLabelField labels;
    double theta;
};

// Margin keeps every probability clear of the gate so a +-h probe cannot flip inclusion.
bool near_gate(const LogitField& logits, double theta, bool symmetric) {
    constexpr double margin = 1e-4;
    for (double z : logits.values()) {
        double p = sigmoid(z);
        if (std::abs(p - theta) < margin) return true;
        if (symmetric && std::abs(p - (1.0 - theta)) < margin) return true;
    }
    return false;
}

bool near_huber_kink(const LogitField& logits, const DenseLabelField& labels, double delta) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double r = sigmoid(logits[i]) - labels.labels[i];
        if (std::abs(std::abs(r) - delta) < 1e-4) return true;
    }
    return false;
}

Draw random_draw(std::mt19937_64& rng, std::size_t side, const LossParams& params) {
    std::uniform_real_distribution<double> logit(-8.0, 8.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution annotated(0.3);
    while (true) {
        Draw d{LogitField(side, side), DenseLabelField(side, side), unit(rng)};
        for (auto& z : d.logits.values()) z = logit(rng);
        for (std::size_t i = 0; i < side * side; ++i)
            if (annotated(rng)) d.labels.set_foreground(i / side, i % side);
        if (near_gate(d.logits, d.theta, params.symmetric_exclusion)) continue;
        if (params.variant == LossVariant::Huber && near_huber_kink(d.logits, d.labels, params.huber_delta)) continue;
        return d;
    }
}

void record(GradcheckResult& res, double analytic, double numeric) {
    ++res.checked;
    res.worst_abs_error = std::max(res.worst_abs_error, std::abs(analytic - numeric));
    if (!gradients_agree(analytic, numeric)) ++res.failures;
}

Mask activation_pattern(const Image& image, const ScorerParams& params) {
    auto cache = forward_cached(image, params);
    const std::size_t n = image.height() * image.width();
    Mask pattern(params.hidden(), n, 0);
    for (std::size_t ch = 0; ch < params.hidden(); ++ch)
        for (std::size_t i = 0; i < n; ++i) pattern(ch, i) = cache.pre_activation[ch][i] > 0.0;
    return pattern;
}

}  // namespace

bool gradients_agree(double analytic, double numeric, double abs_tol, double rel_tol) {
    const double err = std::abs(analytic - numeric);
    return err <= std::max(abs_tol, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

GradcheckResult check_loss_gradients(const LossParams& params, std::size_t trials, std::uint64_t seed,
                                     std::size_t side) {
    GradcheckResult res;
    res.name = "loss/" + std::string(to_string(params.variant));
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        Draw d = random_draw(rng, side, params);
        const LossOutput out = batch_loss(d.logits, d.labels, params, d.theta);
        for (std::size_t i = 0; i < d.logits.size(); ++i) {
            LogitField probe = d.logits;
            probe[i] = d.logits[i] + kStep;
            const double up = batch_loss(probe, d.labels, params, d.theta).total;
            probe[i] = d.logits[i] - kStep;
            const double down = batch_loss(probe, d.labels, params, d.theta).total;
            record(res, out.grad_logits[i], (up - down) / (2.0 * kStep));
        }
    }
    return res;
}

GradcheckResult check_model_gradients(const LossParams& params, std::uint64_t seed, std::size_t side,
                                      std::size_t hidden, std::size_t kernel) {
    GradcheckResult res;
    res.name = "model/" + std::string(to_string(params.variant));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Grid<double> px(side, side);
    for (auto& v : px.values()) v = unit(rng);
    const Image image(std::move(px));

    DenseLabelField labels(side, side);
    std::bernoulli_distribution annotated(0.3);
    for (std::size_t i = 0; i < side * side; ++i)
        if (annotated(rng)) labels.set_foreground(i / side, i % side);

    ScorerParams scorer = init_params(seed, hidden, kernel);
    std::normal_distribution<double> bias(0.0, 0.3);
    for (double& b : scorer.conv1_biases()) b = bias(rng);
    scorer.conv2_bias() = bias(rng);
    const double theta = 0.3 + 0.6 * unit(rng);

    auto loss_of = [&](const ScorerParams& p) { return batch_loss(forward(image, p), labels, params, theta); };
    auto inclusion = [&](const ScorerParams& p) {
        return exclusion_mask(probabilities(forward(image, p)), labels.membership, theta, params.symmetric_exclusion);
    };

    const LossOutput out = loss_of(scorer);
    const ParamGrads grads = backward(image, scorer, out.grad_logits);
    const Mask base_pattern = activation_pattern(image, scorer);
    const Mask base_inclusion = inclusion(scorer);

    for (std::size_t j = 0; j < scorer.size(); ++j) {
        ScorerParams up = scorer, down = scorer;
        up.values()[j] += kStep;
        down.values()[j] -= kStep;
        if (activation_pattern(image, up) != base_pattern || activation_pattern(image, down) != base_pattern ||
            inclusion(up) != base_inclusion || inclusion(down) != base_inclusion) {
            ++res.skipped;
            continue;
        }
        record(res, grads.values()[j], (loss_of(up).total - loss_of(down).total) / (2.0 * kStep));
    }
    return res;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::size_t trials, std::uint64_t seed) {
    std::vector<GradcheckResult> results;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> alpha(0.1, 2.0), gamma(0.0, 4.0), delta(0.2, 1.0);
    for (auto variant : {LossVariant::CE, LossVariant::Focal, LossVariant::Huber, LossVariant::ECE,
                         LossVariant::FocalECE}) {
        LossParams params;
        params.variant = variant;
        params.alpha = alpha(rng);
        params.gamma = gamma(rng);
        params.huber_delta = delta(rng);
        results.push_back(check_loss_gradients(params, trials, rng()));
        results.push_back(check_model_gradients(params, rng()));
        if (variant == LossVariant::ECE || variant == LossVariant::FocalECE) {
            params.symmetric_exclusion = true;
            results.push_back(check_loss_gradients(params, trials, rng()));
            results.back().name += "/symmetric";
        }
    }
    return results;
}

}  // namespace sparseshot
