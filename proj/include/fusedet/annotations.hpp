#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fusedet/geometry.hpp"

namespace fusedet::annotations {

// File could not be read or does not conform to its format; the message
// carries the file and, where possible, the offending record or line.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One annotator's box: class index into the dataset's class list plus an
// optional confidence (1.0 when the annotator gives none).
struct LabeledBox {
    geometry::Box box;
    int class_id = 0;
    double score = 1.0;

    bool operator==(const LabeledBox&) const = default;
};

struct ImageRecord {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::string pixel_path;  // empty = no pixels on disk

    bool operator==(const ImageRecord&) const = default;
};

// Row-major 8-bit grayscale grid.
struct PixelGrid {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    std::uint8_t at(int x, int y) const { return values[std::size_t(y) * width + x]; }

    bool operator==(const PixelGrid&) const = default;
};

// Images plus per-annotator box sets. boxes[i][t] is the list annotator
// `annotators[t]` drew on image `images[i]`; the grid is total, so an empty
// list means "no finding" for that pair.
struct MultiAnnotatorDataset {
    std::vector<std::string> classes;
    std::vector<std::string> annotators;
    std::vector<ImageRecord> images;
    std::vector<std::vector<std::vector<LabeledBox>>> boxes;

    int image_index(std::string_view id) const;
    int annotator_index(std::string_view id) const;

    bool operator==(const MultiAnnotatorDataset&) const = default;
};

enum class DatasetFormat { annjson, vindr_csv };

// Load and validate. Boxes are clipped to their image; any invariant
// violation (unknown class, unordered box, out-of-range score, reference to
// a missing image) raises ParseError naming the offender. For vindr_csv the
// image dimensions come from an `images.csv` sidecar next to the input file,
// and rows with class "No finding" and empty coordinates denote an empty set.
MultiAnnotatorDataset load_dataset(const std::filesystem::path& path,
                                   DatasetFormat format);

// Write annjson. `config_echo`, when non-empty, is embedded as a top-level
// "config" object (ignored on load) so artifacts carry their provenance.
void save_dataset(const MultiAnnotatorDataset& ds,
                  const std::filesystem::path& path,
                  const std::string& config_echo_json = "");

// Subset restricted to the given image ids (order taken from `ids`).
MultiAnnotatorDataset subset_by_images(const MultiAnnotatorDataset& ds,
                                       const std::vector<std::string>& ids);

// Binary PGM (P5), maxval 255 only.
PixelGrid load_pgm(const std::filesystem::path& path);
void save_pgm(const PixelGrid& grid, const std::filesystem::path& path);

// Resolve record.pixel_path against base_dir, load, and check the header
// dimensions against the record.
PixelGrid load_image_pixels(const ImageRecord& record,
                            const std::filesystem::path& base_dir);

}  // namespace fusedet::annotations
