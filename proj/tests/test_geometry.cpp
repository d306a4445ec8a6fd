#include <cmath>
#include <limits>

#include "doctest.h"
#include "fusedet/geometry.hpp"
#include "fusedet/rng.hpp"
#include "test_util.hpp"

using fusedet::geometry::Box;
using fusedet::geometry::clip_to_image;
using fusedet::geometry::intersection_area;
using fusedet::geometry::iou;

TEST_CASE("iou of a box with itself is 1") {
    Box b{3.5, 1.0, 9.25, 4.0};
    CHECK(iou(b, b) == 1.0);
}

TEST_CASE("disjoint boxes have iou 0") {
    CHECK(iou(Box{0, 0, 1, 1}, Box{5, 5, 6, 6}) == 0.0);
}

TEST_CASE("partial overlap worked example") {
    // intersection 2, union 6
    CHECK(iou(Box{0, 0, 2, 2}, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("zero-area union gives iou 0") {
    Box degenerate{2, 2, 2, 2};
    CHECK(iou(degenerate, degenerate) == 0.0);
}

TEST_CASE("non-finite coordinates are rejected") {
    Box bad{0, 0, std::numeric_limits<double>::quiet_NaN(), 1};
    Box good{0, 0, 1, 1};
    CHECK_THROWS_AS(iou(bad, good), std::invalid_argument);
    CHECK_THROWS_AS(iou(good, bad), std::invalid_argument);
    Box inf{0, 0, std::numeric_limits<double>::infinity(), 1};
    CHECK_THROWS_AS(iou(inf, good), std::invalid_argument);
}

TEST_CASE("iou properties on random boxes") {
    fusedet::rng::SplitMix64 gen(2024);
    for (int i = 0; i < 500; ++i) {
        Box a = testutil::random_box(gen);
        Box b = testutil::random_box(gen);

        double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == iou(b, a));  // symmetric, bit for bit
        if (v == 1.0) CHECK(a == b);

        // translation invariance
        double dx = gen.uniform(-50.0, 50.0), dy = gen.uniform(-50.0, 50.0);
        Box at{a.x_min + dx, a.y_min + dy, a.x_max + dx, a.y_max + dy};
        Box bt{b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy};
        CHECK(iou(at, bt) == doctest::Approx(v).epsilon(1e-12));

        // scale invariance
        double s = gen.uniform(0.1, 10.0);
        Box as{a.x_min * s, a.y_min * s, a.x_max * s, a.y_max * s};
        Box bs{b.x_min * s, b.y_min * s, b.x_max * s, b.y_max * s};
        CHECK(iou(as, bs) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("clip examples") {
    CHECK(clip_to_image(Box{2, 2, 5, 5}, 10, 10) == Box{2, 2, 5, 5});
    CHECK(clip_to_image(Box{-3, 1, 12, 4}, 10, 10) == Box{0, 1, 10, 4});
    // fully outside collapses to a zero-area box on the border
    CHECK(clip_to_image(Box{12, 12, 15, 15}, 10, 10) == Box{10, 10, 10, 10});
}

TEST_CASE("clip is idempotent") {
    fusedet::rng::SplitMix64 gen(7);
    for (int i = 0; i < 500; ++i) {
        Box b = testutil::random_box(gen, 200.0);
        Box shifted{b.x_min - 60.0, b.y_min - 60.0, b.x_max - 60.0, b.y_max - 60.0};
        Box once = clip_to_image(shifted, 80, 80);
        CHECK(once.ordered());
        CHECK(clip_to_image(once, 80, 80) == once);
    }
}

TEST_CASE("intersection area basics") {
    CHECK(intersection_area(Box{0, 0, 2, 2}, Box{1, 0, 3, 2}) == 2.0);
    CHECK(intersection_area(Box{0, 0, 1, 1}, Box{1, 0, 2, 1}) == 0.0);  // touch
}
