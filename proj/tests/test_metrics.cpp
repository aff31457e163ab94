#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sparseshot/metrics.hpp"

using namespace sparseshot;

namespace {

// Largest number of disjoint (pred, gt) pairs within radius, by trying every assignment.
std::size_t optimal_tp(const std::vector<Detection>& preds, const std::vector<Annotation>& gts, double radius) {
    std::vector<std::size_t> idx(std::max(preds.size(), gts.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::size_t best = 0;
    do {
        std::size_t tp = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const std::size_t j = idx[i];
            if (j < gts.size() && std::hypot(preds[i].cx - gts[j].cx, preds[i].cy - gts[j].cy) <= radius) ++tp;
        }
        best = std::max(best, tp);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

bool precedes(double sa, long ra, long ca, double sb, long rb, long cb) {
    if (sa != sb) return sa > sb;
    if (ra != rb) return ra < rb;
    return ca < cb;
}

}  // namespace

TEST_CASE("dice examples") {
    Mask a(4, 4, 0), b(4, 4, 0);
    CHECK(dice(a, b) == 1.0);
    a(0, 0) = a(0, 1) = 1;
    CHECK(dice(a, a) == 1.0);
    b(3, 3) = 1;
    CHECK(dice(a, b) == 0.0);
    Mask c(4, 4, 0), d(4, 4, 0);
    for (int i = 0; i < 4; ++i) c(0, i) = 1;
    d(0, 0) = d(0, 1) = d(1, 0) = d(1, 1) = 1;
    CHECK(dice(c, d) == 0.5);
    CHECK_THROWS_AS(dice(a, Mask(3, 4)), ShapeError);
}

TEST_CASE("dice equals a set-count oracle") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution b(0.3);
    for (int t = 0; t < 200; ++t) {
        Mask x(9, 7), y(9, 7);
        std::size_t nx = 0, ny = 0, both = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = b(rng);
            y[i] = b(rng);
            nx += x[i];
            ny += y[i];
            both += x[i] && y[i];
        }
        const double expected = nx + ny == 0 ? 1.0 : 2.0 * both / static_cast<double>(nx + ny);
        CHECK(dice(x, y) == expected);
    }
}

TEST_CASE("f1 helpers") {
    CHECK(f1_score(0.0, 0.0) == 0.0);
    CHECK(f1_score(1.0, 1.0) == 1.0);
    CHECK(f1_score(0.5, 0.5) == 0.5);
    CHECK(ratio_or_zero(3, 0) == 0.0);
    CHECK(ratio_or_zero(1, 4) == 0.25);
}

TEST_CASE("peaks below threshold yield nothing") {
    CHECK(extract_peaks(Grid<double>(8, 8, 0.3), 0.5, 3.0).empty());
}

TEST_CASE("single isolated peak") {
    Grid<double> g(9, 9, 0.1);
    g(2, 6) = 0.9;
    auto d = extract_peaks(g, 0.5, 3.0, 2);
    REQUIRE(d.size() == 1);
    CHECK(d[0].cx == 6.0);
    CHECK(d[0].cy == 2.0);
    CHECK(d[0].score == 0.9);
    CHECK(d[0].class_id == 2);
}

TEST_CASE("close peaks keep the higher") {
    Grid<double> g(9, 9, 0.0);
    g(4, 1) = 0.8;
    g(4, 4) = 0.95;
    auto d = extract_peaks(g, 0.5, 5.0);
    REQUIRE(d.size() == 1);
    CHECK(d[0].cx == 4.0);
    auto both = extract_peaks(g, 0.5, 2.0);
    CHECK(both.size() == 2);
}

TEST_CASE("peak suppression satisfies the greedy characterisation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 60; ++t) {
        const long H = 14, W = 17;
        Grid<double> g(H, W);
        // quantised scores create plateaus and ties
        for (double& v : g.values()) v = std::floor(u(rng) * 6.0) / 5.0;
        const double thr = 0.4, md = 1.0 + 4.0 * u(rng);

        struct Cand {
            double s;
            long r, c;
        };
        std::vector<Cand> cands;
        for (long r = 0; r < H; ++r)
            for (long c = 0; c < W; ++c) {
                if (g(r, c) < thr) continue;
                bool m = true;
                for (long dr = -1; dr <= 1; ++dr)
                    for (long dc = -1; dc <= 1; ++dc) {
                        const long rr = r + dr, cc = c + dc;
                        if (rr >= 0 && rr < H && cc >= 0 && cc < W && g(rr, cc) > g(r, c)) m = false;
                    }
                if (m) cands.push_back({g(r, c), r, c});
            }

        const auto kept = extract_peaks(g, thr, md);
        auto survives = [&](long r, long c) {
            return std::any_of(kept.begin(), kept.end(), [&](const Detection& d) { return d.cy == r && d.cx == c; });
        };
        for (const auto& d : kept) {
            CHECK(std::any_of(cands.begin(), cands.end(), [&](const Cand& c) { return c.r == d.cy && c.c == d.cx; }));
            for (const auto& e : kept)
                if (&d != &e) CHECK(std::hypot(d.cx - e.cx, d.cy - e.cy) >= md);
        }
        // every candidate is kept unless an earlier survivor lies within md
        for (const auto& c : cands) {
            bool blocked = false;
            for (const auto& d : kept)
                if (precedes(d.score, static_cast<long>(d.cy), static_cast<long>(d.cx), c.s, c.r, c.c) &&
                    std::hypot(d.cx - c.c, d.cy - c.r) < md)
                    blocked = true;
            CHECK(survives(c.r, c.c) == !blocked);
        }
        for (std::size_t i = 1; i < kept.size(); ++i)
            CHECK(precedes(kept[i - 1].score, static_cast<long>(kept[i - 1].cy), static_cast<long>(kept[i - 1].cx),
                           kept[i].score, static_cast<long>(kept[i].cy), static_cast<long>(kept[i].cx)));
    }
}

TEST_CASE("peak argument errors") {
    CHECK_THROWS_AS(extract_peaks(Grid<double>(2, 2), 1.5, 3.0), RangeError);
    CHECK_THROWS_AS(extract_peaks(Grid<double>(2, 2), 0.5, 0.0), RangeError);
}

TEST_CASE("matching examples") {
    AnnotationSet gt({{2, 2, 3, 1}, {20, 20, 3, 1}});
    auto exact = match_detections({{2, 2, 0.9, 1}, {20, 20, 0.9, 1}}, gt, 5.0);
    CHECK(exact.tp == 2);
    CHECK(exact.fp == 0);
    CHECK(exact.fn == 0);
    CHECK(f1_score(ratio_or_zero(exact.tp, exact.tp + exact.fp), ratio_or_zero(exact.tp, exact.tp + exact.fn)) == 1.0);

    auto half = match_detections({{3, 2, 0.9, 1}, {40, 40, 0.9, 1}}, gt, 5.0);
    CHECK(half.tp == 1);
    CHECK(half.fp == 1);
    CHECK(half.fn == 1);
    CHECK(f1_score(0.5, 0.5) == 0.5);
    REQUIRE(half.pairs.size() == 1);
    CHECK(half.pairs[0] == std::pair<std::size_t, std::size_t>{0, 0});

    CHECK(match_detections({}, gt, 5.0).fn == 2);
    CHECK(match_detections({{1, 1, 1, 1}}, AnnotationSet{}, 5.0).fp == 1);
    CHECK_THROWS_AS(match_detections({}, gt, 0.0), RangeError);
}

TEST_CASE("greedy matching is optimal on well separated truth") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 30.0), jitter(-5.0, 5.0);
    std::uniform_int_distribution<int> count(0, 6);
    const double radius = 3.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<Annotation> gts;
        const int ng = count(rng);
        for (int tries = 0; static_cast<int>(gts.size()) < ng && tries < 1000; ++tries) {
            Annotation a{u(rng), u(rng), 2.0, 1};
            if (std::all_of(gts.begin(), gts.end(),
                            [&](const Annotation& b) { return std::hypot(a.cx - b.cx, a.cy - b.cy) > 2 * radius; }))
                gts.push_back(a);
        }
        std::vector<Detection> preds;
        const int np = count(rng);
        for (int i = 0; i < np; ++i) {
            if (!gts.empty() && i % 2 == 0) {
                const auto& g = gts[static_cast<std::size_t>(i) % gts.size()];
                preds.push_back({g.cx + jitter(rng), g.cy + jitter(rng), 1.0, 1});
            } else {
                preds.push_back({u(rng), u(rng), 1.0, 1});
            }
        }
        auto m = match_detections(preds, AnnotationSet(gts), radius);
        CHECK(m.tp == optimal_tp(preds, gts, radius));
        CHECK(m.tp + m.fp == preds.size());
        CHECK(m.tp + m.fn == gts.size());
    }
}

TEST_CASE("exclusive recall") {
    CHECK(exclusive_recall(1.0, 0.0) == 1.0);
    CHECK(exclusive_recall(1.0, 1.0) == 0.0);
    CHECK(exclusive_recall(0.9, 0.2) == doctest::Approx(0.72).epsilon(1e-15));
    CHECK_THROWS_AS(exclusive_recall(1.2, 0.0), RangeError);
    CHECK_THROWS_AS(exclusive_recall(0.5, -0.1), RangeError);
}
