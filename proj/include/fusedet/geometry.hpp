#pragma once

#include <cmath>

namespace fusedet::geometry {

// Axis-aligned box in continuous pixel coordinates, origin top-left,
// corner-encoded: width = x_max - x_min (no +1 pixel convention).
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x_min + x_max); }
    double cy() const { return 0.5 * (y_min + y_max); }

    bool finite() const {
        return std::isfinite(x_min) && std::isfinite(y_min) &&
               std::isfinite(x_max) && std::isfinite(y_max);
    }
    // min <= max on both axes; zero-area boxes are ordered.
    bool ordered() const { return x_min <= x_max && y_min <= y_max; }

    bool operator==(const Box&) const = default;
};

// Lexicographic (x_min, y_min, x_max, y_max); total order used by the
// deterministic sorts in fusion, NMS and evaluation.
bool lex_less(const Box& a, const Box& b);

double intersection_area(const Box& a, const Box& b);

// IoU in [0, 1]; 0 when the union has zero area. Throws std::invalid_argument
// on non-finite coordinates.
double iou(const Box& a, const Box& b);

// Clamp every coordinate into [0,width] x [0,height]; total, idempotent, may
// return a zero-area box when the input lies fully outside.
Box clip_to_image(const Box& b, double width, double height);

}  // namespace fusedet::geometry
