#pragma once

#include <map>
#include <utility>
#include <vector>

#include "sparseshot/data.hpp"
#include "sparseshot/grid.hpp"

namespace sparseshot {

struct Detection {
    double cx = 0.0;
    double cy = 0.0;
    double score = 0.0;
    int class_id = 1;
};

struct MatchResult {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< (prediction index, annotation index)
};

struct MetricReport {
    double dice = 0.0;
    double precision = 0.0;  ///< micro, from summed counts
    double recall = 0.0;
    double f1 = 0.0;
    double f1_macro = 0.0;  ///< mean of per-image F1
    std::map<int, double> recall_per_class;
    double exclusive_recall = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// 2|A & B| / (|A| + |B|); 1 when both are empty. Throws ShapeError.
double dice(const Mask& pred, const Mask& truth);

/// 2PR/(P+R), or 0 when P+R == 0.
double f1_score(double precision, double recall);
double ratio_or_zero(std::size_t num, std::size_t den);

/// 8-neighbourhood local maxima with p >= score_threshold, suppressed greedily in
/// descending score order (ties by row, then column) so that survivors are at least
/// `min_distance` apart. Throws RangeError.
std::vector<Detection> extract_peaks(const Grid<double>& prob, double score_threshold, double min_distance,
                                     int class_id = 1);

/// Greedy one-to-one matching on pairs within `radius`, closest first (ties by
/// prediction index, then annotation index). Throws RangeError for radius <= 0.
MatchResult match_detections(const std::vector<Detection>& preds, const AnnotationSet& truth, double radius);

/// Rec(y) * (1 - Rec(not y)). Throws RangeError outside [0,1].
double exclusive_recall(double rec_target, double rec_other);

}  // namespace sparseshot
