#include "fusedet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "fusedet/kernels.hpp"
#include "fusedet/rng.hpp"
#include "json.hpp"

namespace fusedet::detector {

namespace {

using annotations::LabeledBox;
using annotations::PixelGrid;
using geometry::Box;
using nlohmann::json;

// Offsets are clamped before decoding so an untrained or diverging model
// cannot produce non-finite boxes. log(1000/16), the usual transform clip.
constexpr double kOffsetClamp = 4.135166556742356;

double bilinear(const PixelGrid& pixels, double sx, double sy) {
    // pixel centers sit at (i + 0.5, j + 0.5)
    double u = sx - 0.5, v = sy - 0.5;
    double fu = std::floor(u), fv = std::floor(v);
    double ax = u - fu, ay = v - fv;
    int x0 = std::clamp(int(fu), 0, pixels.width - 1);
    int x1 = std::clamp(int(fu) + 1, 0, pixels.width - 1);
    int y0 = std::clamp(int(fv), 0, pixels.height - 1);
    int y1 = std::clamp(int(fv) + 1, 0, pixels.height - 1);
    double p00 = pixels.at(x0, y0), p10 = pixels.at(x1, y0);
    double p01 = pixels.at(x0, y1), p11 = pixels.at(x1, y1);
    return (1.0 - ay) * ((1.0 - ax) * p00 + ax * p10) +
           ay * ((1.0 - ax) * p01 + ax * p11);
}

}  // namespace

AnchorGrid AnchorGrid::build(int image_width, int image_height,
                             const AnchorGridConfig& cfg) {
    if (image_width <= 0 || image_height <= 0)
        throw std::invalid_argument("anchor grid: non-positive image size");
    if (cfg.stride <= 0) throw std::invalid_argument("anchor grid: stride <= 0");
    if (cfg.sizes.empty()) throw std::invalid_argument("anchor grid: no sizes");
    AnchorGrid grid;
    grid.cfg = cfg;
    grid.image_width = image_width;
    grid.image_height = image_height;
    int cells_x = (image_width + cfg.stride - 1) / cfg.stride;
    int cells_y = (image_height + cfg.stride - 1) / cfg.stride;
    for (int gy = 0; gy < cells_y; ++gy) {
        for (int gx = 0; gx < cells_x; ++gx) {
            double cx = (gx + 0.5) * cfg.stride;
            double cy = (gy + 0.5) * cfg.stride;
            for (std::size_t s = 0; s < cfg.sizes.size(); ++s) {
                double half = 0.5 * cfg.sizes[s];
                Box b = geometry::clip_to_image(
                    Box{cx - half, cy - half, cx + half, cy + half},
                    image_width, image_height);
                grid.anchors.push_back(b);
                grid.size_index.push_back(int(s));
            }
        }
    }
    return grid;
}

std::vector<double> anchor_features(const PixelGrid& pixels, const Box& anchor,
                                    double norm_mean, double norm_scale) {
    std::vector<double> f(std::size_t(kFeatureDim), 0.0);
    double w = anchor.width(), h = anchor.height();
    for (int gy = 0; gy < kPatch; ++gy) {
        double sy = anchor.y_min + (gy + 0.5) * h / kPatch;
        for (int gx = 0; gx < kPatch; ++gx) {
            double sx = anchor.x_min + (gx + 0.5) * w / kPatch;
            f[std::size_t(gy) * kPatch + gx] =
                (bilinear(pixels, sx, sy) - norm_mean) / norm_scale;
        }
    }
    f[std::size_t(kPatch) * kPatch] = 1.0;  // bias
    return f;
}

std::vector<fusion::FusedBox> as_unit_confidence(
    const std::vector<LabeledBox>& boxes) {
    std::vector<fusion::FusedBox> out;
    out.reserve(boxes.size());
    for (const LabeledBox& lb : boxes)
        out.push_back(fusion::FusedBox{lb.box, lb.class_id, 1.0, 1, {}});
    return out;
}

namespace {

// Forward pass for one image: per-anchor logits and offsets via the kernel
// dot products.
loss::Prediction forward(const DetectorModel& model, const AnchorGrid& grid,
                         const std::vector<double>& features) {
    int k1 = model.num_classes + 1;
    std::size_t a_count = grid.anchors.size();
    loss::Prediction pred;
    pred.num_anchors = int(a_count);
    pred.num_classes = model.num_classes;
    pred.class_logits.resize(a_count * std::size_t(k1));
    pred.box_offsets.resize(a_count * 4);
    for (std::size_t a = 0; a < a_count; ++a) {
        const double* x = features.data() + a * std::size_t(kFeatureDim);
        const double* w = model.weights[std::size_t(grid.size_index[a])].data();
        for (int r = 0; r < k1; ++r)
            pred.class_logits[a * std::size_t(k1) + std::size_t(r)] =
                kernels::dot(w + std::size_t(r) * kFeatureDim, x, kFeatureDim);
        for (int j = 0; j < 4; ++j)
            pred.box_offsets[a * 4 + std::size_t(j)] = kernels::dot(
                w + std::size_t(k1 + j) * kFeatureDim, x, kFeatureDim);
    }
    return pred;
}

std::string train_config_json(const TrainConfig& cfg) {
    json j;
    j["epochs"] = cfg.epochs;
    j["learning_rate"] = cfg.learning_rate;
    j["seed"] = cfg.seed;
    j["loss_variant"] = loss::to_string(cfg.loss_variant);
    j["batch"] = cfg.batch;
    j["eta"] = cfg.loss.eta;
    j["beta"] = cfg.loss.beta;
    j["num_classes"] = cfg.loss.num_classes;
    j["background_weight_mode"] = loss::to_string(cfg.loss.background_weight_mode);
    j["stride"] = cfg.grid.stride;
    j["sizes"] = cfg.grid.sizes;
    return j.dump();
}

}  // namespace

TrainResult train(const std::vector<TrainImage>& images, const TrainConfig& cfg) {
    if (images.empty()) throw TrainingError("train: empty training set");
    if (cfg.epochs <= 0 || cfg.learning_rate <= 0.0 || cfg.batch < 1)
        throw std::invalid_argument("train: bad epochs/learning_rate/batch");
    if (cfg.loss.num_classes < 1)
        throw std::invalid_argument("train: num_classes < 1");
    int width = images[0].pixels.width;
    int height = images[0].pixels.height;
    for (const TrainImage& img : images) {
        if (img.pixels.width != width || img.pixels.height != height)
            throw std::invalid_argument("train: images must share dimensions");
        for (const fusion::FusedBox& fb : img.labels)
            if (fb.class_id < 0 || fb.class_id >= cfg.loss.num_classes)
                throw std::invalid_argument("train: label class out of range");
    }

    AnchorGrid grid = AnchorGrid::build(width, height, cfg.grid);
    std::size_t a_count = grid.anchors.size();

    DetectorModel model;
    model.grid = cfg.grid;
    model.image_width = width;
    model.image_height = height;
    model.num_classes = cfg.loss.num_classes;
    model.train_config_echo = train_config_json(cfg);
    std::size_t row_len = std::size_t(model.rows()) * kFeatureDim;
    rng::SplitMix64 init(cfg.seed);
    model.weights.assign(cfg.grid.sizes.size(), std::vector<double>(row_len));
    for (auto& w : model.weights)
        for (double& v : w) v = init.uniform(-0.01, 0.01);

    // Features and targets are invariant across epochs.
    std::vector<std::vector<double>> features(images.size());
    std::vector<loss::AnchorTargets> targets(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto& f = features[i];
        f.resize(a_count * std::size_t(kFeatureDim));
        for (std::size_t a = 0; a < a_count; ++a) {
            std::vector<double> fa = anchor_features(
                images[i].pixels, grid.anchors[a], model.norm_mean, model.norm_scale);
            std::copy(fa.begin(), fa.end(),
                      f.begin() + long(a * std::size_t(kFeatureDim)));
        }
        targets[i] = loss::encode_targets(grid.anchors, images[i].labels, cfg.loss);
    }

    int k1 = model.num_classes + 1;
    std::vector<std::vector<double>> grad(model.weights.size(),
                                          std::vector<double>(row_len));
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_sum = 0.0;
        int n_batches = 0;
        for (std::size_t start = 0; start < images.size();
             start += std::size_t(cfg.batch)) {
            std::size_t stop = std::min(images.size(), start + std::size_t(cfg.batch));
            for (auto& gacc : grad) std::fill(gacc.begin(), gacc.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                loss::Prediction pred = forward(model, grid, features[i]);
                loss::LossBreakdown lb =
                    cfg.loss_variant == loss::Variant::eq2
                        ? loss::loss_eq2(pred, targets[i], cfg.loss)
                        : loss::loss_eq1(pred, targets[i], cfg.loss);
                if (!std::isfinite(lb.value))
                    throw TrainingError("train: non-finite loss at epoch " +
                                        std::to_string(epoch + 1) + " (image '" +
                                        images[i].image_id + "')");
                batch_loss += lb.value;
                loss::LossGradient g =
                    loss::loss_gradient(pred, targets[i], cfg.loss, cfg.loss_variant);
                for (std::size_t a = 0; a < a_count; ++a) {
                    const double* x =
                        features[i].data() + a * std::size_t(kFeatureDim);
                    double* gw = grad[std::size_t(grid.size_index[a])].data();
                    for (int r = 0; r < k1; ++r) {
                        double coeff =
                            g.d_class_logits[a * std::size_t(k1) + std::size_t(r)];
                        if (coeff != 0.0)
                            kernels::axpy(coeff, x,
                                          gw + std::size_t(r) * kFeatureDim,
                                          kFeatureDim);
                    }
                    if (targets[i][a].matched) {
                        for (int j = 0; j < 4; ++j) {
                            double coeff = g.d_box_offsets[a * 4 + std::size_t(j)];
                            if (coeff != 0.0)
                                kernels::axpy(coeff, x,
                                              gw + std::size_t(k1 + j) * kFeatureDim,
                                              kFeatureDim);
                        }
                    }
                }
            }
            double inv_images = 1.0 / double(stop - start);
            batch_loss *= inv_images;
            epoch_sum += batch_loss;
            ++n_batches;
            for (std::size_t s = 0; s < model.weights.size(); ++s)
                kernels::axpy(-cfg.learning_rate * inv_images, grad[s].data(),
                              model.weights[s].data(), row_len);
        }
        result.epoch_loss.push_back(epoch_sum / double(n_batches));
    }
    result.model = std::move(model);
    return result;
}

std::vector<LabeledBox> nms(std::vector<LabeledBox> boxes, double iou_thr) {
    std::sort(boxes.begin(), boxes.end(), [](const LabeledBox& a, const LabeledBox& b) {
        if (a.score != b.score) return a.score > b.score;
        return geometry::lex_less(a.box, b.box);
    });
    std::vector<LabeledBox> kept;
    for (const LabeledBox& cand : boxes) {
        bool suppressed = false;
        for (const LabeledBox& k : kept) {
            if (k.class_id == cand.class_id &&
                geometry::iou(k.box, cand.box) > iou_thr) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

std::vector<LabeledBox> predict(const DetectorModel& model,
                                const PixelGrid& pixels, double score_threshold,
                                double nms_iou) {
    if (pixels.width != model.image_width || pixels.height != model.image_height)
        throw std::invalid_argument("predict: image dimensions do not match model");
    AnchorGrid grid = AnchorGrid::build(model.image_width, model.image_height,
                                        model.grid);
    int k1 = model.num_classes + 1;
    std::vector<LabeledBox> raw;
    std::vector<double> logits(std::size_t(k1), 0.0);
    for (std::size_t a = 0; a < grid.anchors.size(); ++a) {
        std::vector<double> x = anchor_features(pixels, grid.anchors[a],
                                                model.norm_mean, model.norm_scale);
        const double* w = model.weights[std::size_t(grid.size_index[a])].data();
        for (int r = 0; r < k1; ++r)
            logits[std::size_t(r)] =
                kernels::dot(w + std::size_t(r) * kFeatureDim, x.data(), kFeatureDim);
        double m = logits[0];
        for (int r = 1; r < k1; ++r) m = std::max(m, logits[std::size_t(r)]);
        double denom = 0.0;
        for (int r = 0; r < k1; ++r) denom += std::exp(logits[std::size_t(r)] - m);
        // argmax with >= so exact ties resolve to the highest index, which is
        // the background class
        int arg = 0;
        double best = logits[0];
        for (int r = 1; r < k1; ++r)
            if (logits[std::size_t(r)] >= best) {
                best = logits[std::size_t(r)];
                arg = r;
            }
        if (arg == model.num_classes) continue;  // background
        double score = std::exp(logits[std::size_t(arg)] - m) / denom;
        if (score < score_threshold) continue;
        std::array<double, 4> t;
        for (int j = 0; j < 4; ++j)
            t[std::size_t(j)] = std::clamp(
                kernels::dot(w + std::size_t(k1 + j) * kFeatureDim, x.data(),
                             kFeatureDim),
                -kOffsetClamp, kOffsetClamp);
        Box b = geometry::clip_to_image(loss::apply_offsets(grid.anchors[a], t),
                                        model.image_width, model.image_height);
        if (b.width() <= 0.0 || b.height() <= 0.0) continue;
        raw.push_back(LabeledBox{b, arg, score});
    }
    std::vector<LabeledBox> kept = nms(std::move(raw), nms_iou);
    std::sort(kept.begin(), kept.end(), [](const LabeledBox& a, const LabeledBox& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        return geometry::lex_less(a.box, b.box);
    });
    return kept;
}

std::vector<LabeledBox> fuse_ensemble(
    const std::vector<std::vector<LabeledBox>>& per_model,
    fusion::WbfConfig cfg) {
    if (per_model.empty())
        throw std::invalid_argument("fuse_ensemble: no model predictions");
    std::map<std::string, std::vector<LabeledBox>> by_model;
    for (std::size_t m = 0; m < per_model.size(); ++m)
        by_model["m" + std::to_string(m + 1)] = per_model[m];
    cfg.t_override = int(per_model.size());
    std::vector<fusion::FusedBox> fused =
        fusion::fuse_image(by_model, int(per_model.size()), cfg);
    std::vector<LabeledBox> out;
    out.reserve(fused.size());
    for (const fusion::FusedBox& fb : fused)
        out.push_back(LabeledBox{fb.box, fb.class_id, fb.confidence});
    return out;
}

void save_model(const DetectorModel& model, const std::filesystem::path& path) {
    json j;
    j["format"] = "fusedet-model";
    j["version"] = 1;
    j["image_width"] = model.image_width;
    j["image_height"] = model.image_height;
    j["num_classes"] = model.num_classes;
    j["stride"] = model.grid.stride;
    j["sizes"] = model.grid.sizes;
    j["patch"] = kPatch;
    j["norm_mean"] = model.norm_mean;
    j["norm_scale"] = model.norm_scale;
    if (model.train_config_echo.empty())
        j["train_config"] = nullptr;
    else
        j["train_config"] = json::parse(model.train_config_echo);
    j["weights"] = model.weights;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(1) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

DetectorModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw annotations::ParseError("cannot open file: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw annotations::ParseError(path.string() + ": invalid JSON: " + e.what());
    }
    auto bad = [&](const std::string& what) {
        return annotations::ParseError(path.string() + ": " + what);
    };
    DetectorModel model;
    try {
        if (!j.is_object() || j.value("format", "") != "fusedet-model")
            throw bad("not a fusedet model file");
        if (j.value("version", 0) != 1) throw bad("unsupported model version");
        if (j.value("patch", 0) != kPatch) throw bad("unsupported patch size");
        model.image_width = j.at("image_width").get<int>();
        model.image_height = j.at("image_height").get<int>();
        model.num_classes = j.at("num_classes").get<int>();
        model.grid.stride = j.at("stride").get<int>();
        model.grid.sizes = j.at("sizes").get<std::vector<int>>();
        model.norm_mean = j.at("norm_mean").get<double>();
        model.norm_scale = j.at("norm_scale").get<double>();
        if (j.contains("train_config") && !j["train_config"].is_null())
            model.train_config_echo = j["train_config"].dump();
        model.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw bad(e.what());
    }
    if (model.weights.size() != model.grid.sizes.size()) throw bad("weight shape");
    for (const auto& w : model.weights) {
        if (w.size() != std::size_t(model.rows()) * kFeatureDim)
            throw bad("weight shape");
        for (double v : w)
            if (!std::isfinite(v)) throw bad("non-finite weight");
    }
    if (model.num_classes < 1 || model.image_width <= 0 || model.image_height <= 0)
        throw bad("invalid model parameters");
    return model;
}

}  // namespace fusedet::detector
