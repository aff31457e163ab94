#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sparseshot/data.hpp"
#include "sparseshot/losses.hpp"
#include "sparseshot/metrics.hpp"
#include "sparseshot/model.hpp"
#include "sparseshot/schedules.hpp"

namespace sparseshot {

struct TrainSample {
    Image image;
    DenseLabelField labels;
};

struct TrainConfig {
    std::size_t epochs = 30;
    LossParams loss;
    /// total_steps is overwritten with epochs * dataset size.
    ScheduleSpec schedule;
    /// Applied to the gradient averaged over the pixels contributing to each image loss.
    double learning_rate = 0.03;
    double momentum = 0.0;
    std::uint64_t seed = 0;
    std::size_t hidden = 8;
    std::size_t kernel = 5;
    /// Initial foreground probability: the output bias starts at logit(prior).
    /// 0.5 keeps the zero bias of init_params.
    double output_prior = 0.01;

    void validate() const;
};

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double theta = 0.0;
    std::size_t included = 0;
    std::size_t excluded = 0;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrainHistory {
    ScheduleSpec schedule;  ///< as run, with total_steps filled in
    std::vector<StepRecord> steps;
};

struct TrainResult {
    ScorerParams params;
    TrainHistory history;
};

/// Batch-size-1 SGD over seed-shuffled epochs; step s (1-based) uses threshold_at(schedule, s).
/// Throws EmptyDataset, ShapeError, Diverged.
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg);

/// Sum of batch_loss totals over the dataset at threshold `theta`.
double dataset_loss(const std::vector<TrainSample>& dataset, const ScorerParams& params, const LossParams& loss,
                    double theta);

struct WeakSupConfig {
    std::size_t rounds = 3;
    double tau = 0.75;
    TrainConfig base;  ///< loss forced to CE

    void validate() const;
};

struct WeakSupResult {
    ScorerParams params;
    TrainHistory history;  ///< final round
    /// Label fields used for training in each round, round 1 first.
    std::vector<std::vector<DenseLabelField>> round_labels;
};

/// Promotes tentatively-negative pixels with p > tau to annotated positives.
DenseLabelField promote_pseudo_labels(const DenseLabelField& labels, const ProbabilityField& prob, double tau);

/// Round 1 trains CE on the given labels; each later round promotes confident
/// background pixels (cumulatively), re-initializes from a round seed and retrains.
WeakSupResult weak_supervision_train(const std::vector<TrainSample>& dataset, const WeakSupConfig& cfg);

/// Seed used for round `round` (1-based); round 1 uses the base seed.
std::uint64_t round_seed(std::uint64_t base_seed, std::size_t round);

struct EvalSample {
    Image image;
    AnnotationSet truth;  ///< exhaustive
};

struct EvalConfig {
    double binarize_threshold = 0.5;
    double score_threshold = 0.5;
    double min_distance = 4.0;
    double match_radius = 5.0;
    int target_class = 1;

    void validate() const;
};

/// Throws EmptyDataset.
MetricReport evaluate(const ScorerParams& params, const std::vector<EvalSample>& test_set, const EvalConfig& cfg);
/// Same scoring from precomputed probability fields (one per test sample).
MetricReport evaluate_probabilities(const std::vector<ProbabilityField>& probs, const std::vector<EvalSample>& test_set,
                                    const EvalConfig& cfg);

/// CSV with header `step,loss,theta,included,excluded`.
void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace sparseshot
