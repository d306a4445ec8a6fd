#include "fusedet/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace fusedet::geometry {

bool lex_less(const Box& a, const Box& b) {
    return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <
           std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

double intersection_area(const Box& a, const Box& b) {
    double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const Box& a, const Box& b) {
    if (!a.finite() || !b.finite())
        throw std::invalid_argument("iou: non-finite box coordinates");
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

Box clip_to_image(const Box& b, double width, double height) {
    auto clampx = [&](double v) { return std::clamp(v, 0.0, width); };
    auto clampy = [&](double v) { return std::clamp(v, 0.0, height); };
    return Box{clampx(b.x_min), clampy(b.y_min), clampx(b.x_max),
               clampy(b.y_max)};
}

}  // namespace fusedet::geometry
