#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sparseshot/synth.hpp"
#include "sparseshot/trainer.hpp"

using namespace sparseshot;

namespace {

std::vector<TrainSample> small_dataset(std::size_t n, double keep = 1.0, std::uint64_t seed = 1) {
    std::vector<TrainSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        SceneConfig sc;
        sc.height = sc.width = 32;
        sc.n_cells_class1 = 4;
        sc.seed = derive_seed(seed, i);
        Scene s = generate_scene(sc);
        auto plan = SparsificationPlan::make(s.truth.size(), {keep}, derive_seed(seed, 100 + i));
        out.push_back({s.image, rasterize(sparsify(s.truth, plan)[0], 32, 32, 1)});
    }
    return out;
}

TrainConfig quick_config(LossVariant v = LossVariant::CE) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.loss.variant = v;
    cfg.seed = 5;
    cfg.hidden = 4;
    cfg.kernel = 3;
    return cfg;
}

}  // namespace

TEST_CASE("one epoch on one image is one step") {
    auto data = small_dataset(1);
    auto cfg = quick_config(LossVariant::ECE);
    cfg.epochs = 1;
    auto r = train(data, cfg);
    REQUIRE(r.history.steps.size() == 1);
    CHECK(r.history.schedule.total_steps == 1);
    CHECK(r.history.steps[0].step == 1);
    CHECK(r.history.steps[0].theta == threshold_at(r.history.schedule, 1));
}

TEST_CASE("history follows the schedule step by step") {
    auto data = small_dataset(3, 0.5);
    auto cfg = quick_config(LossVariant::ECE);
    cfg.epochs = 4;
    cfg.schedule.kind = ScheduleKind::Linear;
    auto r = train(data, cfg);
    REQUIRE(r.history.steps.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        const auto& s = r.history.steps[i];
        CHECK(s.step == i + 1);
        CHECK(s.theta == threshold_at(r.history.schedule, i + 1));
        CHECK(s.included + s.excluded <= 32 * 32);
    }
}

TEST_CASE("zero learning rate leaves the initial parameters") {
    auto data = small_dataset(2);
    auto cfg = quick_config();
    cfg.learning_rate = 0.0;
    cfg.output_prior = 0.5;
    CHECK(train(data, cfg).params == init_params(cfg.seed, cfg.hidden, cfg.kernel));
    cfg.output_prior = 0.2;
    auto p = train(data, cfg).params;
    CHECK(p.conv2_bias() == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("training is deterministic per seed") {
    auto data = small_dataset(3, 0.5);
    auto cfg = quick_config(LossVariant::FocalECE);
    auto a = train(data, cfg), b = train(data, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history.steps == b.history.steps);
    cfg.seed = 6;
    CHECK_FALSE(train(data, cfg).params == a.params);
}

TEST_CASE("thirty epochs of CE lower the training loss") {
    auto data = small_dataset(8);
    auto cfg = quick_config();
    cfg.epochs = 30;
    cfg.hidden = 8;
    cfg.kernel = 5;
    auto start = cfg;
    start.learning_rate = 0.0;
    const double before = dataset_loss(data, train(data, start).params, cfg.loss, 1.0);
    const double after = dataset_loss(data, train(data, cfg).params, cfg.loss, 1.0);
    CHECK(after < before);
    CHECK(after < 0.5 * before);
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(train({}, quick_config()), EmptyDataset);
    auto data = small_dataset(1);
    data[0].labels = DenseLabelField(8, 8);
    CHECK_THROWS_AS(train(data, quick_config()), ShapeError);
    auto cfg = quick_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(small_dataset(1), cfg), InvalidConfig);
    cfg = quick_config();
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(train(small_dataset(1), cfg), InvalidConfig);
    cfg = quick_config();
    cfg.output_prior = 1.0;
    CHECK_THROWS_AS(train(small_dataset(1), cfg), InvalidConfig);
}

TEST_CASE("divergence reports the step") {
    auto cfg = quick_config();
    cfg.learning_rate = 1e305;
    cfg.output_prior = 0.5;
    try {
        train(small_dataset(2), cfg);
        FAIL("expected divergence");
    } catch (const Diverged& e) {
        CHECK(e.step() >= 1);
        CHECK(e.step() <= 4);
    }
}

TEST_CASE("pseudo labels promote confident background only") {
    DenseLabelField labels(4, 4);
    labels.set_foreground(0, 0);
    ProbabilityField prob(4, 4, 0.2);
    prob(0, 0) = 0.1;
    prob(2, 3) = 1.0;
    prob(1, 1) = 0.75;
    prob(3, 3) = 0.76;
    auto out = promote_pseudo_labels(labels, prob, 0.75);
    CHECK(out.membership(0, 0) == Membership::Foreground);
    CHECK(out.labels(0, 0) == 1);
    CHECK(out.membership(2, 3) == Membership::Foreground);
    CHECK(out.labels(2, 3) == 1);
    CHECK(out.membership(3, 3) == Membership::Foreground);
    CHECK(out.membership(1, 1) == Membership::BackgroundAssumed);
    CHECK(out.foreground_count() == 3);
    CHECK_THROWS_AS(promote_pseudo_labels(labels, ProbabilityField(2, 2), 0.5), ShapeError);
}

TEST_CASE("a single weak supervision round is plain CE training") {
    auto data = small_dataset(3, 0.5);
    WeakSupConfig ws;
    ws.rounds = 1;
    ws.base = quick_config(LossVariant::ECE);
    auto w = weak_supervision_train(data, ws);
    auto plain = ws.base;
    plain.loss.variant = LossVariant::CE;
    auto p = train(data, plain);
    CHECK(w.params == p.params);
    CHECK(w.history.steps == p.history.steps);
    REQUIRE(w.round_labels.size() == 1);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(w.round_labels[0][i] == data[i].labels);
}

TEST_CASE("weak supervision labels only grow") {
    auto data = small_dataset(3, 0.5);
    WeakSupConfig ws;
    ws.rounds = 3;
    ws.tau = 0.5;
    ws.base = quick_config();
    ws.base.epochs = 6;
    ws.base.output_prior = 0.5;
    auto w = weak_supervision_train(data, ws);
    REQUIRE(w.round_labels.size() == 3);
    std::size_t grown = 0;
    for (std::size_t round = 1; round < 3; ++round) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& prev = w.round_labels[round - 1][i];
            const auto& cur = w.round_labels[round][i];
            for (std::size_t px = 0; px < cur.labels.size(); ++px) {
                if (prev.membership[px] == Membership::Foreground) {
                    CHECK(cur.membership[px] == Membership::Foreground);
                    CHECK(cur.labels[px] == 1);
                }
            }
            grown += cur.foreground_count() - prev.foreground_count();
        }
    }
    CHECK(grown > 0);
    CHECK(round_seed(9, 1) == 9);
    CHECK(round_seed(9, 2) != round_seed(9, 3));
}

TEST_CASE("evaluation with perfect and null predictors") {
    AnnotationSet truth({{6, 6, 1.5, 1}, {20, 8, 1.5, 1}, {12, 22, 1.5, 1}});
    EvalSample sample{Image(32, 32), truth};
    auto mask = rasterize_mask(truth, 32, 32, 1);
    ProbabilityField perfect(32, 32, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) perfect[i] = mask[i] ? 1.0 : 0.0;
    auto rep = evaluate_probabilities({perfect}, {sample}, EvalConfig{});
    CHECK(rep.dice == 1.0);
    CHECK(rep.f1 == 1.0);
    CHECK(rep.f1_macro == 1.0);

    ScorerParams null(2, 3);
    null.conv2_bias() = -1000.0;
    auto zero = evaluate(null, {sample}, EvalConfig{});
    CHECK(zero.dice == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.fn == 3);
    CHECK_THROWS_AS(evaluate(null, {}, EvalConfig{}), EmptyDataset);
}

TEST_CASE("evaluation of a hand-built field") {
    AnnotationSet truth({{5, 5, 2, 1}, {20, 5, 2, 1}, {5, 20, 2, 1}, {25, 25, 2, 2}});
    EvalSample sample{Image(32, 32), truth};
    ProbabilityField prob(32, 32, 0.0);
    prob(5, 5) = 0.9;
    prob(6, 21) = 0.8;
    prob(25, 25) = 0.7;
    auto rep = evaluate_probabilities({prob}, {sample}, EvalConfig{});
    CHECK(rep.tp == 2);
    CHECK(rep.fp == 1);
    CHECK(rep.fn == 1);
    CHECK(rep.precision == doctest::Approx(2.0 / 3.0));
    CHECK(rep.recall == doctest::Approx(2.0 / 3.0));
    CHECK(rep.f1 == doctest::Approx(2.0 / 3.0));
    // 3 predicted pixels, 3 disks of 13 pixels, 2 overlapping
    CHECK(rep.dice == doctest::Approx(4.0 / 42.0));
    CHECK(rep.recall_per_class.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(rep.recall_per_class.at(2) == 1.0);
    CHECK(rep.exclusive_recall == 0.0);
}

TEST_CASE("dice and macro F1 are averaged over images") {
    AnnotationSet a({{5, 5, 1, 1}}), b({{10, 10, 1, 1}});
    std::vector<EvalSample> set{{Image(16, 16), a}, {Image(16, 16), b}};
    ProbabilityField hit(16, 16, 0.0), miss(16, 16, 0.0);
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
            if (dr * dr + dc * dc <= 1) hit(5 + dr, 5 + dc) = dr == 0 && dc == 0 ? 0.9 : 0.8;
    auto rep = evaluate_probabilities({hit, miss}, set, EvalConfig{});
    CHECK(rep.dice == doctest::Approx(0.5));
    CHECK(rep.f1_macro == doctest::Approx(0.5));
    CHECK(rep.f1 == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(evaluate_probabilities({hit}, set, EvalConfig{}), ShapeError);
}

TEST_CASE("history csv") {
    TrainHistory h;
    h.steps = {{1, 0.5, 0.25, 10, 2}};
    std::ostringstream out;
    write_history_csv(out, h);
    CHECK(out.str() == "step,loss,theta,included,excluded\n1,0.5,0.25,10,2\n");
}
