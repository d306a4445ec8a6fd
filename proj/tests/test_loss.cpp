#include <chrono>
#include <cmath>

#include "doctest.h"
#include "fusedet/loss.hpp"
#include "fusedet/rng.hpp"
#include "test_util.hpp"

using namespace fusedet;
using fusion::FusedBox;
using geometry::Box;
using loss::AnchorTarget;
using loss::AnchorTargets;
using loss::LossConfig;
using loss::Prediction;
using loss::Variant;

namespace {

struct Instance {
    LossConfig cfg;
    AnchorTargets targets;
    Prediction pred;
};

Instance random_instance(rng::SplitMix64& gen) {
    Instance inst;
    inst.cfg.num_classes = 1 + int(gen.uniform_int(0, 3));
    inst.cfg.beta = gen.uniform(0.25, 2.0);
    int anchors = 1 + int(gen.uniform_int(0, 15));
    inst.pred.num_anchors = anchors;
    inst.pred.num_classes = inst.cfg.num_classes;
    for (int a = 0; a < anchors; ++a) {
        AnchorTarget t;
        t.anchor = Box{0, 0, 8, 8};
        t.matched = gen.uniform() < 0.5;
        t.class_target = t.matched ? int(gen.uniform_int(0, inst.cfg.num_classes - 1))
                                   : inst.cfg.num_classes;
        if (t.matched)
            for (auto& v : t.box_target) v = gen.uniform(-1.5, 1.5);
        t.weight = gen.uniform();
        inst.targets.push_back(t);
        for (int r = 0; r <= inst.cfg.num_classes; ++r)
            inst.pred.class_logits.push_back(gen.uniform(-3.0, 3.0));
        for (int r = 0; r < 4; ++r)
            inst.pred.box_offsets.push_back(gen.uniform(-2.0, 2.0));
    }
    return inst;
}

double loss_value(const Instance& inst, Variant variant) {
    return variant == Variant::eq2
               ? loss::loss_eq2(inst.pred, inst.targets, inst.cfg).value
               : loss::loss_eq1(inst.pred, inst.targets, inst.cfg).value;
}

}  // namespace

TEST_CASE("encode_targets: identical anchor and fused box") {
    LossConfig cfg;
    cfg.num_classes = 2;
    std::vector<Box> anchors{Box{0, 0, 8, 8}};
    std::vector<FusedBox> fused{FusedBox{Box{0, 0, 8, 8}, 1, 0.667, 2, {}}};
    auto targets = loss::encode_targets(anchors, fused, cfg);
    REQUIRE(targets.size() == 1);
    CHECK(targets[0].matched);
    CHECK(targets[0].class_target == 1);
    for (double v : targets[0].box_target) CHECK(v == 0.0);
    CHECK(targets[0].weight == 0.667);
}

TEST_CASE("encode_targets: gate stays closed below eta") {
    LossConfig cfg;
    cfg.num_classes = 2;
    std::vector<Box> anchors{Box{0, 0, 8, 8}};
    // IoU = 24/104 < 0.5
    std::vector<FusedBox> fused{FusedBox{Box{5, 0, 13, 8}, 0, 0.9, 1, {}}};
    auto targets = loss::encode_targets(anchors, fused, cfg);
    CHECK_FALSE(targets[0].matched);
    CHECK(targets[0].class_target == 2);  // background
    CHECK(targets[0].weight == 1.0);      // unit mode
}

TEST_CASE("encode_targets: empty fused list means all background") {
    LossConfig cfg;
    cfg.num_classes = 3;
    std::vector<Box> anchors{Box{0, 0, 8, 8}, Box{8, 0, 16, 8}};
    auto targets = loss::encode_targets(anchors, {}, cfg);
    for (const auto& t : targets) {
        CHECK_FALSE(t.matched);
        CHECK(t.class_target == 3);
    }
}

TEST_CASE("encode_targets: offsets for a shifted, scaled box") {
    LossConfig cfg;
    cfg.num_classes = 1;
    cfg.eta = 0.3;
    std::vector<Box> anchors{Box{0, 0, 8, 8}};
    std::vector<FusedBox> fused{FusedBox{Box{2, 0, 10, 8}, 0, 1.0, 1, {}}};
    auto targets = loss::encode_targets(anchors, fused, cfg);
    REQUIRE(targets[0].matched);
    CHECK(targets[0].box_target[0] == doctest::Approx(0.25));  // (6-4)/8
    CHECK(targets[0].box_target[1] == doctest::Approx(0.0));
    CHECK(targets[0].box_target[2] == doctest::Approx(0.0));
    CHECK(targets[0].box_target[3] == doctest::Approx(0.0));
    // decode inverts encode
    CHECK(loss::apply_offsets(anchors[0], targets[0].box_target).x_min ==
          doctest::Approx(2.0));
}

TEST_CASE("encode_targets: zero-size fused box is invalid") {
    LossConfig cfg;
    cfg.num_classes = 1;
    std::vector<Box> anchors{Box{0, 0, 8, 8}};
    std::vector<FusedBox> fused{FusedBox{Box{3, 3, 3, 9}, 0, 1.0, 1, {}}};
    CHECK_THROWS_AS(loss::encode_targets(anchors, fused, cfg),
                    std::invalid_argument);
}

TEST_CASE("encode_targets: mean_c background weight") {
    LossConfig cfg;
    cfg.num_classes = 1;
    cfg.background_weight_mode = loss::BackgroundWeight::mean_c;
    std::vector<Box> anchors{Box{0, 0, 4, 4}, Box{40, 40, 44, 44}};
    std::vector<FusedBox> fused{FusedBox{Box{0, 0, 4, 4}, 0, 0.5, 1, {}},
                                FusedBox{Box{20, 20, 24, 24}, 0, 0.9, 1, {}}};
    auto targets = loss::encode_targets(anchors, fused, cfg);
    CHECK(targets[0].matched);
    CHECK_FALSE(targets[1].matched);
    CHECK(targets[1].weight == doctest::Approx(0.7));  // mean of 0.5 and 0.9
}

TEST_CASE("uniform logits on a single background anchor give ln 3") {
    LossConfig cfg;
    cfg.num_classes = 2;
    AnchorTargets targets{AnchorTarget{Box{0, 0, 8, 8}, false, 2, {}, 1.0}};
    Prediction pred;
    pred.num_anchors = 1;
    pred.num_classes = 2;
    pred.class_logits = {0.0, 0.0, 0.0};
    pred.box_offsets = {5.0, 5.0, 5.0, 5.0};  // irrelevant: gate closed
    auto lb = loss::loss_eq1(pred, targets, cfg);
    CHECK(lb.value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(lb.loc == 0.0);
}

TEST_CASE("matched anchor with offset error 0.5 adds 0.125") {
    LossConfig cfg;
    cfg.num_classes = 2;
    cfg.beta = 1.0;
    AnchorTargets targets{
        AnchorTarget{Box{0, 0, 8, 8}, true, 1, {0, 0, 0, 0}, 1.0}};
    Prediction pred;
    pred.num_anchors = 1;
    pred.num_classes = 2;
    pred.class_logits = {0.0, 20.0, 0.0};  // large margin on the true class
    pred.box_offsets = {0.5, 0.0, 0.0, 0.0};
    auto lb = loss::loss_eq1(pred, targets, cfg);
    CHECK(lb.value == doctest::Approx(0.125).epsilon(1e-4));
}

TEST_CASE("perfect prediction drives the loss below 1e-3") {
    LossConfig cfg;
    cfg.num_classes = 2;
    AnchorTargets targets{
        AnchorTarget{Box{0, 0, 8, 8}, true, 0, {0.1, -0.2, 0.0, 0.3}, 1.0}};
    Prediction pred;
    pred.num_anchors = 1;
    pred.num_classes = 2;
    pred.class_logits = {20.0, 0.0, 0.0};
    pred.box_offsets = {0.1, -0.2, 0.0, 0.3};
    CHECK(loss::loss_eq1(pred, targets, cfg).value < 1e-3);

    auto g = loss::loss_gradient(pred, targets, cfg, Variant::eq1);
    double norm = 0.0;
    for (double v : g.d_class_logits) norm += v * v;
    for (double v : g.d_box_offsets) norm += v * v;
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("eq2 equals eq1 bit for bit when all weights are 1") {
    rng::SplitMix64 gen(404);
    for (int i = 0; i < 100; ++i) {
        Instance inst = random_instance(gen);
        for (auto& t : inst.targets) t.weight = 1.0;
        auto a = loss::loss_eq1(inst.pred, inst.targets, inst.cfg);
        auto b = loss::loss_eq2(inst.pred, inst.targets, inst.cfg);
        CHECK(a.value == b.value);
        CHECK(a.per_anchor == b.per_anchor);
        auto ga = loss::loss_gradient(inst.pred, inst.targets, inst.cfg, Variant::eq1);
        auto gb = loss::loss_gradient(inst.pred, inst.targets, inst.cfg, Variant::eq2);
        CHECK(ga.d_class_logits == gb.d_class_logits);
        CHECK(ga.d_box_offsets == gb.d_box_offsets);
    }
}

TEST_CASE("zero weights kill the loss; half weights halve it") {
    rng::SplitMix64 gen(505);
    for (int i = 0; i < 50; ++i) {
        Instance inst = random_instance(gen);
        double base = loss_value(inst, Variant::eq1);

        Instance zero = inst;
        for (auto& t : zero.targets) t.weight = 0.0;
        CHECK(loss_value(zero, Variant::eq2) == 0.0);

        Instance half = inst;
        for (auto& t : half.targets) t.weight = 0.5;
        CHECK(loss_value(half, Variant::eq2) ==
              doctest::Approx(0.5 * base).epsilon(1e-12));
    }
}

TEST_CASE("per-anchor homogeneity in the weights") {
    rng::SplitMix64 gen(606);
    for (int i = 0; i < 50; ++i) {
        Instance inst = random_instance(gen);
        double before = loss_value(inst, Variant::eq2);
        double lambda = gen.uniform();
        Instance scaled = inst;
        for (auto& t : scaled.targets) t.weight *= lambda;
        CHECK(loss_value(scaled, Variant::eq2) ==
              doctest::Approx(lambda * before).epsilon(1e-12));
    }
}

TEST_CASE("gate property: offsets of unmatched anchors are inert") {
    rng::SplitMix64 gen(707);
    for (int i = 0; i < 50; ++i) {
        Instance inst = random_instance(gen);
        double e1 = loss_value(inst, Variant::eq1);
        double e2 = loss_value(inst, Variant::eq2);
        Instance perturbed = inst;
        bool any = false;
        for (std::size_t a = 0; a < perturbed.targets.size(); ++a) {
            if (perturbed.targets[a].matched) continue;
            any = true;
            for (int j = 0; j < 4; ++j)
                perturbed.pred.box_offsets[a * 4 + std::size_t(j)] =
                    gen.uniform(-100.0, 100.0);
        }
        if (!any) continue;
        CHECK(loss_value(perturbed, Variant::eq1) == e1);
        CHECK(loss_value(perturbed, Variant::eq2) == e2);
    }
}

TEST_CASE("losses are nonnegative") {
    rng::SplitMix64 gen(808);
    for (int i = 0; i < 100; ++i) {
        Instance inst = random_instance(gen);
        CHECK(loss_value(inst, Variant::eq1) >= 0.0);
        CHECK(loss_value(inst, Variant::eq2) >= 0.0);
    }
}

TEST_CASE("monotone emphasis: larger c, larger per-anchor term") {
    LossConfig cfg;
    cfg.num_classes = 1;
    AnchorTargets targets{
        AnchorTarget{Box{0, 0, 8, 8}, true, 0, {0, 0, 0, 0}, 0.3},
        AnchorTarget{Box{8, 0, 16, 8}, true, 0, {0, 0, 0, 0}, 0.9}};
    Prediction pred;
    pred.num_anchors = 2;
    pred.num_classes = 1;
    pred.class_logits = {0.5, -0.5, 0.5, -0.5};  // identical per anchor
    pred.box_offsets = {0.4, 0, 0, 0, 0.4, 0, 0, 0};
    auto lb = loss::loss_eq2(pred, targets, cfg);
    CHECK(lb.per_anchor[1] > lb.per_anchor[0]);
}

TEST_CASE("analytic gradient matches central finite differences") {
    rng::SplitMix64 gen(909);
    auto start = std::chrono::steady_clock::now();
    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        Instance inst = random_instance(gen);
        for (Variant variant : {Variant::eq1, Variant::eq2}) {
            auto g = loss::loss_gradient(inst.pred, inst.targets, inst.cfg, variant);
            auto fd_check = [&](std::vector<double>& param, std::size_t j,
                                double analytic) {
                double keep = param[j];
                param[j] = keep + h;
                double up = loss_value(inst, variant);
                param[j] = keep - h;
                double down = loss_value(inst, variant);
                param[j] = keep;
                double fd = (up - down) / (2.0 * h);
                double err = std::fabs(analytic - fd) /
                             std::max({1.0, std::fabs(analytic), std::fabs(fd)});
                worst = std::max(worst, err);
            };
            for (std::size_t j = 0; j < inst.pred.class_logits.size(); ++j)
                fd_check(inst.pred.class_logits, j, g.d_class_logits[j]);
            for (std::size_t j = 0; j < inst.pred.box_offsets.size(); ++j)
                fd_check(inst.pred.box_offsets, j, g.d_box_offsets[j]);
        }
    }
    CHECK(worst <= 1e-5);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                 start)
                       .count();
    CHECK(elapsed < 10.0);
}

TEST_CASE("zero-weight anchors contribute exactly zero gradient") {
    rng::SplitMix64 gen(111);
    Instance inst = random_instance(gen);
    inst.targets[0].weight = 0.0;
    auto g = loss::loss_gradient(inst.pred, inst.targets, inst.cfg, Variant::eq2);
    int k1 = inst.cfg.num_classes + 1;
    for (int j = 0; j < k1; ++j) CHECK(g.d_class_logits[std::size_t(j)] == 0.0);
    for (int j = 0; j < 4; ++j) CHECK(g.d_box_offsets[std::size_t(j)] == 0.0);
}

TEST_CASE("shape and finiteness violations are rejected") {
    LossConfig cfg;
    cfg.num_classes = 1;
    AnchorTargets targets{AnchorTarget{Box{0, 0, 8, 8}, false, 1, {}, 1.0}};
    Prediction pred;
    pred.num_anchors = 1;
    pred.num_classes = 1;
    pred.class_logits = {0.0, 0.0};
    pred.box_offsets = {0, 0, 0, 0};

    Prediction bad_shape = pred;
    bad_shape.class_logits.push_back(0.0);
    CHECK_THROWS_AS(loss::loss_eq1(bad_shape, targets, cfg), std::invalid_argument);

    Prediction bad_value = pred;
    bad_value.class_logits[0] = std::nan("");
    CHECK_THROWS_AS(loss::loss_eq1(bad_value, targets, cfg), std::invalid_argument);

    CHECK_THROWS_AS(loss::loss_eq1(pred, {}, cfg), std::invalid_argument);
}
