#include "sparseshot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "sparseshot/synth.hpp"

namespace sparseshot {

namespace {

void check_dataset(const std::vector<TrainSample>& dataset) {
    if (dataset.empty()) throw EmptyDataset("training set is empty");
    for (const auto& s : dataset) {
        require_same_shape(s.image.pixels(), s.labels.labels, "training sample");
        require_same_shape(s.image.pixels(), s.labels.membership, "training sample");
    }
}

struct Counts {
    std::size_t matched = 0;
    std::size_t total = 0;
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("momentum must lie in [0,1)");
    if (!(output_prior > 0.0 && output_prior < 1.0)) throw InvalidConfig("output prior must lie in (0,1)");
    loss.validate();
}

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    check_dataset(dataset);

    TrainResult result;
    result.history.schedule = cfg.schedule;
    result.history.schedule.total_steps = cfg.epochs * dataset.size();
    result.history.schedule.validate();
    result.history.steps.reserve(result.history.schedule.total_steps);

    result.params = init_params(cfg.seed, cfg.hidden, cfg.kernel);
    if (cfg.output_prior != 0.5) result.params.conv2_bias() = std::log(cfg.output_prior / (1.0 - cfg.output_prior));
    OptimizerState state = OptimizerState::for_params(result.params, cfg.learning_rate, cfg.momentum);

    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed));
    std::vector<std::size_t> order(dataset.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            ++step;
            const auto& sample = dataset[idx];
            const double theta = threshold_at(result.history.schedule, step);
            LossOutput out;
            try {
                const ForwardCache cache = forward_cached(sample.image, result.params);
                out = batch_loss(cache.logits, sample.labels, cfg.loss, theta);
                if (!std::isfinite(out.total)) throw Diverged(step, "non-finite loss");

                // Mean over the pixels that contribute to the loss.
                const std::size_t contributing = out.grad_logits.size() - out.excluded_count;
                const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(contributing, 1));
                for (double& g : out.grad_logits.values()) g *= scale;
                sgd_step(result.params, backward(sample.image, result.params, cache, out.grad_logits), state);
            } catch (const NonFinite& e) {
                throw Diverged(step, e.what());
            }
            result.history.steps.push_back({step, out.total, theta, out.included_count, out.excluded_count});
        }
    }
    return result;
}

double dataset_loss(const std::vector<TrainSample>& dataset, const ScorerParams& params, const LossParams& loss,
                    double theta) {
    std::vector<double> totals;
    totals.reserve(dataset.size());
    for (const auto& s : dataset) totals.push_back(batch_loss(forward(s.image, params), s.labels, loss, theta).total);
    return pairwise_sum(totals);
}

void WeakSupConfig::validate() const {
    if (rounds < 1) throw InvalidConfig("rounds must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidConfig("tau must lie in (0,1)");
    base.validate();
}

DenseLabelField promote_pseudo_labels(const DenseLabelField& labels, const ProbabilityField& prob, double tau) {
    require_same_shape(prob, labels.labels, "promote_pseudo_labels");
    DenseLabelField out = labels;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (out.membership[i] == Membership::BackgroundAssumed && prob[i] > tau) {
            out.labels[i] = 1;
            out.membership[i] = Membership::Foreground;
        }
    }
    return out;
}

std::uint64_t round_seed(std::uint64_t base_seed, std::size_t round) {
    return round <= 1 ? base_seed : derive_seed(base_seed, 0x7000 + round);
}

WeakSupResult weak_supervision_train(const std::vector<TrainSample>& dataset, const WeakSupConfig& cfg) {
    cfg.validate();
    check_dataset(dataset);

    TrainConfig round_cfg = cfg.base;
    round_cfg.loss.variant = LossVariant::CE;

    std::vector<TrainSample> current = dataset;
    WeakSupResult result;
    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        if (round > 1) {
            for (auto& sample : current)
                sample.labels =
                    promote_pseudo_labels(sample.labels, probabilities(forward(sample.image, result.params)), cfg.tau);
        }
        std::vector<DenseLabelField> labels;
        labels.reserve(current.size());
        for (const auto& s : current) labels.push_back(s.labels);
        result.round_labels.push_back(std::move(labels));

        round_cfg.seed = round_seed(cfg.base.seed, round);
        TrainResult trained = train(current, round_cfg);
        result.params = std::move(trained.params);
        result.history = std::move(trained.history);
    }
    return result;
}

void EvalConfig::validate() const {
    if (!(binarize_threshold >= 0.0 && binarize_threshold <= 1.0)) throw InvalidConfig("binarize threshold outside [0,1]");
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) throw InvalidConfig("score threshold outside [0,1]");
    if (!(min_distance > 0.0)) throw InvalidConfig("min_distance must be > 0");
    if (!(match_radius > 0.0)) throw InvalidConfig("match radius must be > 0");
}

MetricReport evaluate(const ScorerParams& params, const std::vector<EvalSample>& test_set, const EvalConfig& cfg) {
    if (test_set.empty()) throw EmptyDataset("test set is empty");
    std::vector<ProbabilityField> probs;
    probs.reserve(test_set.size());
    for (const auto& s : test_set) probs.push_back(probabilities(forward(s.image, params)));
    return evaluate_probabilities(probs, test_set, cfg);
}

MetricReport evaluate_probabilities(const std::vector<ProbabilityField>& probs, const std::vector<EvalSample>& test_set,
                                    const EvalConfig& cfg) {
    cfg.validate();
    if (test_set.empty()) throw EmptyDataset("test set is empty");
    if (probs.size() != test_set.size()) throw ShapeError("one probability field per test image required");

    MetricReport report;
    std::map<int, Counts> per_class;
    Counts other;
    std::vector<double> dices, f1s;

    for (std::size_t n = 0; n < test_set.size(); ++n) {
        const auto& sample = test_set[n];
        const auto& prob = probs[n];
        require_same_shape(prob, sample.image.pixels(), "evaluate");
        const std::size_t H = prob.height(), W = prob.width();

        Mask pred(H, W, 0);
        for (std::size_t i = 0; i < prob.size(); ++i) pred[i] = prob[i] >= cfg.binarize_threshold;
        dices.push_back(dice(pred, rasterize_mask(sample.truth, H, W, cfg.target_class)));

        const auto peaks = extract_peaks(prob, cfg.score_threshold, cfg.min_distance, cfg.target_class);
        const auto target = sample.truth.of_class(cfg.target_class);
        const MatchResult m = match_detections(peaks, target, cfg.match_radius);
        report.tp += m.tp;
        report.fp += m.fp;
        report.fn += m.fn;
        f1s.push_back(f1_score(ratio_or_zero(m.tp, m.tp + m.fp), ratio_or_zero(m.tp, m.tp + m.fn)));

        std::vector<Annotation> non_target;
        std::map<int, std::size_t> class_sizes;
        for (const auto& a : sample.truth.annotations()) {
            ++class_sizes[a.class_id];
            if (a.class_id != cfg.target_class) non_target.push_back(a);
        }
        class_sizes.try_emplace(cfg.target_class, 0);
        for (const auto& [cls, count] : class_sizes) {
            per_class[cls].total += count;
            per_class[cls].matched +=
                cls == cfg.target_class ? m.tp : match_detections(peaks, sample.truth.of_class(cls), cfg.match_radius).tp;
        }
        const MatchResult mo = match_detections(peaks, AnnotationSet(non_target), cfg.match_radius);
        other.matched += mo.tp;
        other.total += non_target.size();
    }

    report.dice = pairwise_sum(dices) / static_cast<double>(dices.size());
    report.f1_macro = pairwise_sum(f1s) / static_cast<double>(f1s.size());
    report.precision = ratio_or_zero(report.tp, report.tp + report.fp);
    report.recall = ratio_or_zero(report.tp, report.tp + report.fn);
    report.f1 = f1_score(report.precision, report.recall);
    for (const auto& [cls, c] : per_class) report.recall_per_class[cls] = ratio_or_zero(c.matched, c.total);
    report.exclusive_recall = exclusive_recall(report.recall, ratio_or_zero(other.matched, other.total));
    return report;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
    out << "step,loss,theta,included,excluded\n";
    char buf[128];
    for (const auto& s : history.steps) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu,%zu\n", s.step, s.loss, s.theta, s.included, s.excluded);
        out << buf;
    }
}

}  // namespace sparseshot
