#include "sparseshot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace sparseshot {

double dice(const Mask& pred, const Mask& truth) {
    require_same_shape(pred, truth, "dice");
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        a += p;
        b += t;
        both += p && t;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double f1_score(double precision, double recall) {
    const double den = precision + recall;
    return den > 0.0 ? 2.0 * precision * recall / den : 0.0;
}

double ratio_or_zero(std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

std::vector<Detection> extract_peaks(const Grid<double>& prob, double score_threshold, double min_distance,
                                     int class_id) {
    if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) throw RangeError("score threshold outside [0,1]");
    if (!(min_distance > 0.0)) throw RangeError("min_distance must be > 0");

    const long H = static_cast<long>(prob.height()), W = static_cast<long>(prob.width());
    struct Candidate {
        double score;
        long row, col;
    };
    std::vector<Candidate> candidates;
    for (long r = 0; r < H; ++r) {
        for (long c = 0; c < W; ++c) {
            const double p = prob(r, c);
            if (p < score_threshold) continue;
            bool is_max = true;
            for (long dr = -1; dr <= 1 && is_max; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if ((dr || dc) && rr >= 0 && rr < H && cc >= 0 && cc < W && prob(rr, cc) > p) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidates.push_back({p, r, c});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.score, a.row, a.col) < std::tie(a.score, b.row, b.col);
    });

    std::vector<Detection> kept;
    const double min_d2 = min_distance * min_distance;
    for (const auto& cand : candidates) {
        const double x = static_cast<double>(cand.col), y = static_cast<double>(cand.row);
        const bool clear = std::all_of(kept.begin(), kept.end(), [&](const Detection& d) {
            return (d.cx - x) * (d.cx - x) + (d.cy - y) * (d.cy - y) >= min_d2;
        });
        if (clear) kept.push_back({x, y, cand.score, class_id});
    }
    return kept;
}

MatchResult match_detections(const std::vector<Detection>& preds, const AnnotationSet& truth, double radius) {
    if (!(radius > 0.0)) throw RangeError("match radius must be > 0");
    const auto& gts = truth.annotations();

    struct Pair {
        double dist;
        std::size_t pred, gt;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = 0; j < gts.size(); ++j) {
            const double d = std::hypot(preds[i].cx - gts[j].cx, preds[i].cy - gts[j].cy);
            if (d <= radius) pairs.push_back({d, i, j});
        }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return std::tie(a.dist, a.pred, a.gt) < std::tie(b.dist, b.pred, b.gt); });

    MatchResult res;
    std::vector<bool> pred_used(preds.size(), false), gt_used(gts.size(), false);
    for (const auto& p : pairs) {
        if (pred_used[p.pred] || gt_used[p.gt]) continue;
        pred_used[p.pred] = gt_used[p.gt] = true;
        res.pairs.emplace_back(p.pred, p.gt);
    }
    res.tp = res.pairs.size();
    res.fp = preds.size() - res.tp;
    res.fn = gts.size() - res.tp;
    return res;
}

double exclusive_recall(double rec_target, double rec_other) {
    if (!(rec_target >= 0.0 && rec_target <= 1.0) || !(rec_other >= 0.0 && rec_other <= 1.0))
        throw RangeError("recall outside [0,1]");
    return rec_target * (1.0 - rec_other);
}

}  // namespace sparseshot
