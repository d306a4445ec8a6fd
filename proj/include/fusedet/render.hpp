#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusedet/annotations.hpp"

namespace fusedet::render {

// One named box set drawn in its own stroke color with a legend entry.
struct BoxSet {
    std::string name;
    std::vector<annotations::LabeledBox> boxes;
};

// SVG overlay: the grayscale image embedded as a base64 BMP raster layer,
// each set's boxes stroked in a distinct color and labeled
// "<class> c=<confidence>" with two decimals.
std::string render_svg(const annotations::PixelGrid& pixels,
                       const std::vector<BoxSet>& sets,
                       const std::vector<std::string>& class_names);

// Exposed for tests.
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_bmp_gray8(const annotations::PixelGrid& pixels);

}  // namespace fusedet::render
