#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fusedet/annotations.hpp"
#include "fusedet/detector.hpp"
#include "fusedet/fusion.hpp"
#include "fusedet/simulator.hpp"

namespace fusedet::evaluation {

// One scored prediction after greedy matching.
struct PredMatch {
    double score = 0.0;
    int class_id = 0;
    bool tp = false;
    int matched_gt = -1;  // index into the image's ground truth, -1 for FP
    geometry::Box box;
};

struct MatchResult {
    std::vector<PredMatch> preds;     // sorted by (score desc, coords)
    std::vector<int> n_gt_per_class;  // size num_classes
};

// Greedy per-class matching within one image: predictions scanned by score
// descending (ties by coordinates); each takes the unmatched same-class GT of
// maximal IoU when that IoU >= iou_threshold, else counts as a false positive.
MatchResult match_predictions(const std::vector<annotations::LabeledBox>& preds,
                              const std::vector<annotations::LabeledBox>& gts,
                              double iou_threshold, int num_classes);

// All-point interpolated AP from a ranked TP/FP sequence. `ranked` must
// already be in evaluation order; n_gt == 0 yields 0.
double average_precision(const std::vector<std::pair<double, bool>>& ranked,
                         int n_gt);

struct EvalReport {
    std::string method;
    double iou_threshold = 0.4;
    std::vector<double> ap_per_class;
    std::vector<int> n_gt_per_class;
    double map = 0.0;  // mean AP over classes with n_gt > 0
    int n_images = 0;
    int n_gts = 0;
    int n_preds = 0;
};

// Pool matches per class across images (rank ties broken by image order,
// then coordinates), AP per class, mAP over classes with ground truth.
EvalReport map_at(
    const std::vector<std::vector<annotations::LabeledBox>>& preds_by_image,
    const std::vector<std::vector<annotations::LabeledBox>>& gts_by_image,
    int num_classes, double iou_threshold = 0.4, const std::string& method = "");

// TSV rows: method, seed, mAP, AP_class_0..AP_class_{K-1}.
std::string report_tsv_header(int num_classes);
std::string report_tsv_row(const EvalReport& report, const std::string& seed_label);

// ---- comparison experiment -------------------------------------------------

struct CompareConfig {
    simulator::SceneConfig scene;
    std::vector<simulator::AnnotatorProfile> profiles;  // default standard 3
    int n_train = 200;
    int n_test = 50;
    double train_fraction = 0.8;
    fusion::WbfConfig wbf;
    detector::TrainConfig train;  // loss_variant is fixed per method
    double map_iou = 0.4;
    double score_threshold = 0.3;
    double nms_iou = 0.45;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

// The corpus and method matrix used by default everywhere: 64x64 scenes,
// two classes, 200 train / 50 test images, three annotators with jitter
// sigmas 1.5/2.5/3.5, miss rate 0.1, spurious rate 0.1.
CompareConfig standard_compare_config();

struct CompareRow {
    std::string method;
    std::string seed_label;  // seed number, "mean" or "sd"
    double map = 0.0;
    std::vector<double> ap_per_class;
};

struct CompareResult {
    std::vector<std::string> method_order;
    std::vector<CompareRow> rows;                 // ordered by (method, seed)
    std::map<std::string, double> mean_map;
    std::map<std::string, double> sd_map;
    int num_classes = 0;
};

// Full method matrix per seed: pooled Baseline (eq1), one model per
// annotator (eq1), their WBF ensemble, and the fused-label model trained
// with the confidence-weighted loss (Ours); all evaluated against the
// held-out truth at mAP@map_iou.
CompareResult run_comparison(const CompareConfig& cfg);

std::string comparison_tsv(const CompareResult& result,
                           const std::string& config_echo_json);

// Published VinDr-CXR mAP@0.4 reference scores for this method matrix,
// kept as metadata alongside the synthetic results.
const std::vector<std::pair<std::string, double>>& reference_scores();

}  // namespace fusedet::evaluation
