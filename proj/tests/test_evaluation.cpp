#include <cmath>

#include "doctest.h"
#include "fusedet/evaluation.hpp"
#include "fusedet/rng.hpp"
#include "test_util.hpp"

using namespace fusedet;
using annotations::LabeledBox;
using geometry::Box;

TEST_CASE("match examples") {
    Box gt{0, 0, 10, 10};
    SUBCASE("perfect overlap is a TP") {
        auto mr = evaluation::match_predictions({LabeledBox{gt, 0, 0.9}},
                                                {LabeledBox{gt, 0, 1.0}}, 0.4, 1);
        REQUIRE(mr.preds.size() == 1);
        CHECK(mr.preds[0].tp);
        CHECK(mr.preds[0].matched_gt == 0);
        CHECK(mr.n_gt_per_class[0] == 1);
    }
    SUBCASE("overlap below the threshold is an FP") {
        // IoU = 2*10 / (100 + 100 - 20) = 1/9 < 0.4
        auto mr = evaluation::match_predictions(
            {LabeledBox{Box{8, 0, 18, 10}, 0, 0.9}}, {LabeledBox{gt, 0, 1.0}}, 0.4,
            1);
        CHECK_FALSE(mr.preds[0].tp);
        CHECK(mr.preds[0].matched_gt == -1);
    }
    SUBCASE("a consumed GT cannot match twice") {
        auto mr = evaluation::match_predictions(
            {LabeledBox{Box{0, 0, 10, 8}, 0, 0.9},    // IoU 0.8
             LabeledBox{Box{0, 0, 10, 6}, 0, 0.8}},   // IoU 0.6, GT consumed
            {LabeledBox{gt, 0, 1.0}}, 0.4, 1);
        REQUIRE(mr.preds.size() == 2);
        CHECK(mr.preds[0].tp);
        CHECK_FALSE(mr.preds[1].tp);
    }
    SUBCASE("classes never cross-match") {
        auto mr = evaluation::match_predictions({LabeledBox{gt, 1, 0.9}},
                                                {LabeledBox{gt, 0, 1.0}}, 0.4, 2);
        CHECK_FALSE(mr.preds[0].tp);
    }
}

TEST_CASE("average precision examples") {
    SUBCASE("one GT, one TP") {
        CHECK(evaluation::average_precision({{0.9, true}}, 1) == 1.0);
    }
    SUBCASE("FP ranked above the TP halves the AP") {
        CHECK(evaluation::average_precision({{0.9, false}, {0.8, true}}, 1) == 0.5);
    }
    SUBCASE("no predictions, no AP") {
        CHECK(evaluation::average_precision({}, 1) == 0.0);
    }
    SUBCASE("zero ground truth yields zero") {
        CHECK(evaluation::average_precision({{0.9, false}}, 0) == 0.0);
    }
}

TEST_CASE("map_at examples") {
    Box b0{0, 0, 10, 10};
    Box b1{20, 20, 30, 30};
    SUBCASE("perfect predictions reach mAP 1") {
        std::vector<std::vector<LabeledBox>> gts{
            {LabeledBox{b0, 0, 1.0}, LabeledBox{b1, 1, 1.0}}};
        auto report = evaluation::map_at(gts, gts, 2, 0.4);
        CHECK(report.map == 1.0);
        CHECK(report.ap_per_class[0] == 1.0);
        CHECK(report.ap_per_class[1] == 1.0);
    }
    SUBCASE("one perfect class and one missed class average to 0.5") {
        std::vector<std::vector<LabeledBox>> gts{
            {LabeledBox{b0, 0, 1.0}, LabeledBox{b1, 1, 1.0}}};
        std::vector<std::vector<LabeledBox>> preds{{LabeledBox{b0, 0, 1.0}}};
        auto report = evaluation::map_at(preds, gts, 2, 0.4);
        CHECK(report.map == 0.5);
    }
    SUBCASE("classes without ground truth are excluded from the mean") {
        std::vector<std::vector<LabeledBox>> gts{{LabeledBox{b0, 0, 1.0}}};
        std::vector<std::vector<LabeledBox>> preds{{LabeledBox{b0, 0, 1.0}}};
        auto report = evaluation::map_at(preds, gts, 3, 0.4);
        CHECK(report.map == 1.0);  // classes 1 and 2 have no GT
    }
    SUBCASE("image count mismatch is an error") {
        std::vector<std::vector<LabeledBox>> gts{{}};
        CHECK_THROWS_AS(evaluation::map_at({}, gts, 1, 0.4),
                        std::invalid_argument);
    }
}

TEST_CASE("map_at equals the brute-force oracle on random small instances") {
    rng::SplitMix64 gen(4242);
    for (int instance = 0; instance < 200; ++instance) {
        int num_classes = 1 + int(gen.uniform_int(0, 2));
        int num_images = 1 + int(gen.uniform_int(0, 4));
        std::vector<std::vector<LabeledBox>> preds, gts;
        preds.resize(std::size_t(num_images));
        gts.resize(std::size_t(num_images));
        for (int i = 0; i < num_images; ++i) {
            for (int c = 0; c < num_classes; ++c) {
                int n_gt = int(gen.uniform_int(0, 4));
                for (int g = 0; g < n_gt; ++g)
                    gts[std::size_t(i)].push_back(
                        LabeledBox{testutil::random_box(gen, 40.0), c, 1.0});
                int n_pred = int(gen.uniform_int(0, 4));
                for (int p = 0; p < n_pred; ++p) {
                    // half the predictions hug an existing GT box
                    Box box;
                    if (!gts[std::size_t(i)].empty() && gen.uniform() < 0.5) {
                        const Box& base =
                            gts[std::size_t(i)]
                                [gen.next_below(gts[std::size_t(i)].size())]
                                    .box;
                        double dx = gen.uniform(-2.0, 2.0);
                        double dy = gen.uniform(-2.0, 2.0);
                        box = Box{base.x_min + dx, base.y_min + dy,
                                  base.x_max + dx, base.y_max + dy};
                    } else {
                        box = testutil::random_box(gen, 40.0);
                    }
                    preds[std::size_t(i)].push_back(
                        LabeledBox{box, c, gen.uniform()});
                }
            }
        }
        auto report = evaluation::map_at(preds, gts, num_classes, 0.4);

        // oracle: same pooled ranking, AP by exhaustive cutoff enumeration
        double oracle_sum = 0.0;
        int counted = 0;
        for (int c = 0; c < num_classes; ++c) {
            struct Entry {
                double score;
                bool tp;
                int image;
                Box box;
            };
            std::vector<Entry> entries;
            int n_gt = 0;
            for (int i = 0; i < num_images; ++i) {
                auto mr = evaluation::match_predictions(
                    preds[std::size_t(i)], gts[std::size_t(i)], 0.4, num_classes);
                n_gt += mr.n_gt_per_class[std::size_t(c)];
                for (const auto& p : mr.preds)
                    if (p.class_id == c)
                        entries.push_back(Entry{p.score, p.tp, i, p.box});
            }
            std::sort(entries.begin(), entries.end(),
                      [](const Entry& a, const Entry& b) {
                          if (a.score != b.score) return a.score > b.score;
                          if (a.image != b.image) return a.image < b.image;
                          return geometry::lex_less(a.box, b.box);
                      });
            std::vector<std::pair<double, bool>> ranked;
            for (const auto& e : entries) ranked.emplace_back(e.score, e.tp);
            double ap = testutil::brute_force_ap(ranked, n_gt);
            CHECK(report.ap_per_class[std::size_t(c)] ==
                  doctest::Approx(ap).epsilon(1e-12));
            if (n_gt > 0) {
                oracle_sum += ap;
                ++counted;
            }
        }
        double oracle_map = counted ? oracle_sum / counted : 0.0;
        CHECK(report.map == doctest::Approx(oracle_map).epsilon(1e-12));
    }
}

TEST_CASE("AP depends only on the ranking, not the score values") {
    rng::SplitMix64 gen(51);
    for (int i = 0; i < 50; ++i) {
        std::vector<std::vector<LabeledBox>> preds(1), gts(1);
        for (int g = 0; g < 3; ++g)
            gts[0].push_back(LabeledBox{testutil::random_box(gen, 30.0), 0, 1.0});
        for (int p = 0; p < 5; ++p)
            preds[0].push_back(
                LabeledBox{testutil::random_box(gen, 30.0), 0, gen.uniform()});
        auto before = evaluation::map_at(preds, gts, 1, 0.4);
        // strictly monotone rescale preserves the ranking
        for (auto& lb : preds[0]) lb.score = 0.2 + 0.6 * lb.score;
        auto after = evaluation::map_at(preds, gts, 1, 0.4);
        CHECK(before.map == after.map);
    }
}

TEST_CASE("appending a bottom-ranked FP never increases AP") {
    rng::SplitMix64 gen(52);
    for (int i = 0; i < 50; ++i) {
        int n = 1 + int(gen.uniform_int(0, 6));
        std::vector<std::pair<double, bool>> ranked;
        for (int j = 0; j < n; ++j)
            ranked.emplace_back(1.0 - 0.1 * j, gen.uniform() < 0.5);
        int n_gt = 1 + int(gen.uniform_int(0, 4));
        double before = evaluation::average_precision(ranked, n_gt);
        ranked.emplace_back(0.0, false);
        CHECK(evaluation::average_precision(ranked, n_gt) <= before);
    }
}

TEST_CASE("reports serialize deterministically") {
    std::vector<std::vector<LabeledBox>> gts{{LabeledBox{Box{0, 0, 8, 8}, 0, 1.0}}};
    auto r1 = evaluation::map_at(gts, gts, 1, 0.4, "m");
    auto r2 = evaluation::map_at(gts, gts, 1, 0.4, "m");
    CHECK(evaluation::report_tsv_row(r1, "1") == evaluation::report_tsv_row(r2, "1"));
    CHECK(evaluation::report_tsv_header(2) == "method\tseed\tmAP\tAP_class_0\tAP_class_1\n");
}

TEST_CASE("reference scores carry the published method matrix") {
    const auto& refs = evaluation::reference_scores();
    REQUIRE(refs.size() == 6);
    CHECK(refs[0] == std::pair<std::string, double>{"Baseline", 0.148});
    CHECK(refs[5] == std::pair<std::string, double>{"Ours", 0.158});
}
