#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusedet/annotations.hpp"
#include "fusedet/geometry.hpp"

namespace fusedet::fusion {

enum class ConfMode { avg, max };
enum class RescaleMode { min_over_t, n_over_t, none };

const char* to_string(ConfMode m);
const char* to_string(RescaleMode m);
ConfMode conf_mode_from_string(const std::string& s);
RescaleMode rescale_mode_from_string(const std::string& s);

struct WbfConfig {
    double iou_threshold = 0.55;            // cluster match threshold, in (0,1)
    ConfMode conf_mode = ConfMode::avg;
    RescaleMode rescale_mode = RescaleMode::min_over_t;
    std::optional<int> t_override;          // annotator count override

    bool operator==(const WbfConfig&) const = default;
};

// One consensus box: confidence is the rescaled cluster score (the agreement
// signal consumed by the re-weighted training loss), support the cluster
// size, contributors the sorted distinct annotator ids that provided members.
struct FusedBox {
    geometry::Box box;
    int class_id = 0;
    double confidence = 0.0;
    int support = 0;
    std::vector<std::string> contributors;

    bool operator==(const FusedBox&) const = default;
};

struct FusedDataset {
    std::vector<std::string> classes;
    std::vector<annotations::ImageRecord> images;
    std::map<std::string, std::vector<FusedBox>> fused;  // by image id
    WbfConfig config;                                     // with resolved t
    int t = 0;                                            // annotator count used

    bool operator==(const FusedDataset&) const = default;
};

// Weighted boxes fusion over one image. Per class: pool boxes across
// annotators, sort by (score desc, annotator asc, coordinates asc), scan in
// order matching each box against the first cluster whose current fused box
// exceeds the IoU threshold, re-average after every insertion, then rescale
// cluster confidences by the agreement factor. Output sorted by (class,
// confidence desc, coordinates). Deterministic and invariant to input order.
std::vector<FusedBox> fuse_image(
    const std::map<std::string, std::vector<annotations::LabeledBox>>&
        boxes_by_annotator,
    int t, const WbfConfig& cfg);

// fuse_image per image with t = |annotators| (or the override); fused boxes
// clipped to their image as a final step.
FusedDataset fuse_dataset(const annotations::MultiAnnotatorDataset& ds,
                          const WbfConfig& cfg);

// annjson-style serialization with per-box confidence/support/contributors.
// Round-trips exactly (bit-identical values, fixed key order).
void save_fused(const FusedDataset& ds, const std::filesystem::path& path);
FusedDataset load_fused(const std::filesystem::path& path);

}  // namespace fusedet::fusion
