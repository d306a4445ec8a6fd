#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusedet/annotations.hpp"
#include "fusedet/fusion.hpp"
#include "fusedet/loss.hpp"

namespace fusedet::detector {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AnchorGridConfig {
    int stride = 8;
    std::vector<int> sizes = {12, 20, 28};  // square anchor side lengths

    bool operator==(const AnchorGridConfig&) const = default;
};

// One square anchor per (cell, size), centered on the cell center and
// clipped to the image. Anchor order: cell-major (row, then column), size
// index innermost.
struct AnchorGrid {
    AnchorGridConfig cfg;
    int image_width = 0;
    int image_height = 0;
    std::vector<geometry::Box> anchors;
    std::vector<int> size_index;  // per anchor

    static AnchorGrid build(int image_width, int image_height,
                            const AnchorGridConfig& cfg);
};

inline constexpr int kPatch = 8;                       // resampled patch side
inline constexpr int kFeatureDim = kPatch * kPatch + 1;  // 64 pixels + bias

// Bilinear 8x8 resample of the anchor region, affinely normalized
// ((v - mean)/scale), bias term appended. Returns kFeatureDim doubles.
std::vector<double> anchor_features(const annotations::PixelGrid& pixels,
                                    const geometry::Box& anchor,
                                    double norm_mean, double norm_scale);

// Linear per-anchor-size model: weights[s] maps a feature vector to K+1
// class logits followed by 4 box offsets, row-major (K+5) x kFeatureDim.
struct DetectorModel {
    AnchorGridConfig grid;
    int image_width = 0;
    int image_height = 0;
    int num_classes = 0;
    double norm_mean = 128.0;
    double norm_scale = 64.0;
    std::vector<std::vector<double>> weights;
    std::string train_config_echo;  // JSON text, provenance only

    int rows() const { return num_classes + 1 + 4; }

    bool operator==(const DetectorModel&) const = default;
};

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    loss::Variant loss_variant = loss::Variant::eq1;
    loss::LossConfig loss;
    int batch = 4;  // images per gradient step
    AnchorGridConfig grid;
};

// One training image: pixels plus its labels. Raw annotator boxes are
// wrapped as confidence-1.0 fused boxes (`as_unit_confidence`), which makes
// eq1 and eq2 coincide for those baselines.
struct TrainImage {
    std::string image_id;
    annotations::PixelGrid pixels;
    std::vector<fusion::FusedBox> labels;
};

struct TrainResult {
    DetectorModel model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

std::vector<fusion::FusedBox> as_unit_confidence(
    const std::vector<annotations::LabeledBox>& boxes);

// Deterministic gradient descent: images are visited in dataset order in
// batches of cfg.batch, weights start from a small seeded uniform init.
// Throws TrainingError on an empty set or when the loss turns non-finite
// (the message names the epoch).
TrainResult train(const std::vector<TrainImage>& images, const TrainConfig& cfg);

// Greedy per-class NMS: keep by (score desc, coords), suppress IoU > iou_thr.
std::vector<annotations::LabeledBox> nms(
    std::vector<annotations::LabeledBox> boxes, double iou_thr);

// Decode, clip, drop background/argmax-background anchors and scores below
// threshold, then per-class NMS; output sorted by score descending. Scores
// are max-class softmax probabilities.
std::vector<annotations::LabeledBox> predict(const DetectorModel& model,
                                             const annotations::PixelGrid& pixels,
                                             double score_threshold = 0.3,
                                             double nms_iou = 0.45);

// WBF over per-model prediction lists with t = number of models; fused
// confidences become the returned scores.
std::vector<annotations::LabeledBox> fuse_ensemble(
    const std::vector<std::vector<annotations::LabeledBox>>& per_model,
    fusion::WbfConfig cfg);

// Versioned JSON serialization; round-trips exactly.
void save_model(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_model(const std::filesystem::path& path);

}  // namespace fusedet::detector
