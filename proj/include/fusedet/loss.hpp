#pragma once

#include <array>
#include <vector>

#include "fusedet/fusion.hpp"
#include "fusedet/geometry.hpp"

namespace fusedet::loss {

enum class Variant { eq1, eq2 };
enum class BackgroundWeight { unit, mean_c };

const char* to_string(Variant v);
const char* to_string(BackgroundWeight m);
Variant variant_from_string(const std::string& s);
BackgroundWeight background_weight_from_string(const std::string& s);

struct LossConfig {
    double eta = 0.5;    // IoU gate threshold for the localization term
    double beta = 1.0;   // balance between classification and localization
    int num_classes = 1; // K; class index K is background
    BackgroundWeight background_weight_mode = BackgroundWeight::unit;
};

// Per-anchor training target. class_target is in [0, K] with K = background;
// box_target holds (tx, ty, tw, th) center/log-size offsets and is only
// meaningful when matched; weight carries the consensus confidence of the
// matched fused box (background anchors get the configured background weight).
struct AnchorTarget {
    geometry::Box anchor;
    bool matched = false;
    int class_target = 0;
    std::array<double, 4> box_target{0.0, 0.0, 0.0, 0.0};
    double weight = 1.0;
};

using AnchorTargets = std::vector<AnchorTarget>;

// Flat per-anchor model outputs: class_logits has num_anchors*(K+1) entries,
// box_offsets num_anchors*4.
struct Prediction {
    int num_anchors = 0;
    int num_classes = 0;  // K
    std::vector<double> class_logits;
    std::vector<double> box_offsets;
};

struct LossBreakdown {
    double value = 0.0;              // mean over anchors of the weighted terms
    double cls = 0.0;                // mean weighted classification part
    double loc = 0.0;                // mean weighted localization part
    std::vector<double> per_anchor;  // weighted per-anchor terms
};

struct LossGradient {
    std::vector<double> d_class_logits;
    std::vector<double> d_box_offsets;
};

// Assign each anchor its maximum-IoU fused box; the anchor is matched when
// that IoU strictly exceeds eta. Throws std::invalid_argument if a fused box
// has zero width or height (log-size offset undefined).
AnchorTargets encode_targets(const std::vector<geometry::Box>& anchors,
                             const std::vector<fusion::FusedBox>& fused,
                             const LossConfig& cfg);

// Mean over anchors of CE(class) + beta * I * SmoothL1(box); the gate I is
// the matched flag. loss_eq2 scales each anchor's term by its weight, so the
// two are bit-identical whenever every weight is exactly 1.
LossBreakdown loss_eq1(const Prediction& pred, const AnchorTargets& targets,
                       const LossConfig& cfg);
LossBreakdown loss_eq2(const Prediction& pred, const AnchorTargets& targets,
                       const LossConfig& cfg);

// Exact analytic gradient of the chosen variant w.r.t. logits and offsets.
LossGradient loss_gradient(const Prediction& pred, const AnchorTargets& targets,
                           const LossConfig& cfg, Variant variant);

// (tx, ty, tw, th) of `box` relative to `anchor`; anchor must have positive
// width and height, box positive too (log undefined otherwise).
std::array<double, 4> box_offsets(const geometry::Box& anchor,
                                  const geometry::Box& box);
// Inverse of box_offsets.
geometry::Box apply_offsets(const geometry::Box& anchor,
                            const std::array<double, 4>& t);

}  // namespace fusedet::loss
