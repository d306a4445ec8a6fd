#include "fusedet/render.hpp"

#include <cstdio>
#include <sstream>

namespace fusedet::render {

namespace {

const char* kPalette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                          "#ff7f00", "#a65628", "#f781bf", "#999999"};
constexpr int kPaletteSize = 8;

void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(std::uint8_t(x & 0xFF));
    v.push_back(std::uint8_t(x >> 8));
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(std::uint8_t((x >> (8 * i)) & 0xFF));
}

std::string format2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
        int have = 1;
        if (i + 1 < bytes.size()) {
            chunk |= std::uint32_t(bytes[i + 1]) << 8;
            have = 2;
        }
        if (i + 2 < bytes.size()) {
            chunk |= std::uint32_t(bytes[i + 2]);
            have = 3;
        }
        out.push_back(alphabet[(chunk >> 18) & 63]);
        out.push_back(alphabet[(chunk >> 12) & 63]);
        out.push_back(have >= 2 ? alphabet[(chunk >> 6) & 63] : '=');
        out.push_back(have >= 3 ? alphabet[chunk & 63] : '=');
    }
    return out;
}

// 8-bit palette BMP; rows padded to 4 bytes, bottom-up.
std::vector<std::uint8_t> encode_bmp_gray8(const annotations::PixelGrid& pixels) {
    const int w = pixels.width, h = pixels.height;
    const int row_bytes = (w + 3) & ~3;
    const std::uint32_t palette_bytes = 256 * 4;
    const std::uint32_t data_offset = 14 + 40 + palette_bytes;
    const std::uint32_t data_bytes = std::uint32_t(row_bytes) * std::uint32_t(h);

    std::vector<std::uint8_t> out;
    out.reserve(data_offset + data_bytes);
    // file header
    out.push_back('B');
    out.push_back('M');
    push_u32(out, data_offset + data_bytes);
    push_u32(out, 0);
    push_u32(out, data_offset);
    // info header
    push_u32(out, 40);
    push_u32(out, std::uint32_t(w));
    push_u32(out, std::uint32_t(h));
    push_u16(out, 1);   // planes
    push_u16(out, 8);   // bits per pixel
    push_u32(out, 0);   // no compression
    push_u32(out, data_bytes);
    push_u32(out, 2835);  // 72 dpi
    push_u32(out, 2835);
    push_u32(out, 256);  // palette entries
    push_u32(out, 0);
    for (int i = 0; i < 256; ++i) {
        out.push_back(std::uint8_t(i));  // blue
        out.push_back(std::uint8_t(i));  // green
        out.push_back(std::uint8_t(i));  // red
        out.push_back(0);
    }
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) out.push_back(pixels.at(x, y));
        for (int x = w; x < row_bytes; ++x) out.push_back(0);
    }
    return out;
}

std::string render_svg(const annotations::PixelGrid& pixels,
                       const std::vector<BoxSet>& sets,
                       const std::vector<std::string>& class_names) {
    const int w = pixels.width, h = pixels.height;
    const int display_scale = 8;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" "
        << "xmlns:xlink=\"http://www.w3.org/1999/xlink\" "
        << "width=\"" << w * display_scale << "\" height=\"" << h * display_scale
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    svg << "  <image x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
        << "\" style=\"image-rendering:pixelated\" "
        << "xlink:href=\"data:image/bmp;base64,"
        << base64_encode(encode_bmp_gray8(pixels)) << "\"/>\n";

    for (std::size_t s = 0; s < sets.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        svg << "  <g stroke=\"" << color << "\" fill=\"none\" stroke-width=\"0.4\">\n";
        for (const annotations::LabeledBox& lb : sets[s].boxes) {
            svg << "    <rect x=\"" << lb.box.x_min << "\" y=\"" << lb.box.y_min
                << "\" width=\"" << lb.box.width() << "\" height=\""
                << lb.box.height() << "\"/>\n";
            std::string cls = lb.class_id >= 0 &&
                                      lb.class_id < int(class_names.size())
                                  ? class_names[std::size_t(lb.class_id)]
                                  : "class_" + std::to_string(lb.class_id);
            svg << "    <text x=\"" << lb.box.x_min + 0.5 << "\" y=\""
                << lb.box.y_min + 2.5 << "\" font-size=\"2.2\" fill=\"" << color
                << "\" stroke=\"none\">" << cls << " c=" << format2(lb.score)
                << "</text>\n";
        }
        svg << "  </g>\n";
    }
    // legend
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        svg << "  <text class=\"legend\" x=\"1\" y=\"" << (s + 1) * 3
            << "\" font-size=\"2.5\" fill=\"" << color << "\">" << sets[s].name
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace fusedet::render
