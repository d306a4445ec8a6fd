// fusedet: aggregate multi-annotator bounding boxes with weighted boxes
// fusion, train a small anchor detector with a consensus-weighted loss, and
// evaluate the method matrix on synthetic corpora.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fusedet/annotations.hpp"
#include "fusedet/detector.hpp"
#include "fusedet/evaluation.hpp"
#include "fusedet/fusion.hpp"
#include "fusedet/loss.hpp"
#include "fusedet/render.hpp"
#include "fusedet/rng.hpp"
#include "fusedet/simulator.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fusedet;

namespace {

std::string check_open_unit(const std::string& value) {
    try {
        double v = std::stod(value);
        if (v > 0.0 && v < 1.0) return {};
    } catch (const std::exception&) {
    }
    return "value " + value + " must be in (0,1)";
}

std::string check_closed_unit(const std::string& value) {
    try {
        double v = std::stod(value);
        if (v >= 0.0 && v <= 1.0) return {};
    } catch (const std::exception&) {
    }
    return "value " + value + " must be in [0,1]";
}

std::string check_positive(const std::string& value) {
    try {
        if (std::stod(value) > 0.0) return {};
    } catch (const std::exception&) {
    }
    return "value " + value + " must be > 0";
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_double_list(text)) out.push_back(int(v));
    return out;
}

// Broadcast a per-annotator list: a single value applies to every annotator.
double list_at(const std::vector<double>& values, std::size_t i, double fallback) {
    if (values.empty()) return fallback;
    if (values.size() == 1) return values[0];
    if (i < values.size()) return values[i];
    throw std::invalid_argument("per-annotator list shorter than annotator count");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Pixel paths are stored relative to their dataset file; when an output file
// lands in a different directory the paths must be rewritten against it.
void rebase_pixel_paths(std::vector<annotations::ImageRecord>& images,
                        const fs::path& in_file, const fs::path& out_file) {
    fs::path in_base = fs::absolute(in_file).parent_path();
    fs::path out_base = fs::absolute(out_file).parent_path();
    if (in_base == out_base) return;
    for (auto& img : images) {
        if (img.pixel_path.empty()) continue;
        fs::path absolute = fs::weakly_canonical(in_base / img.pixel_path);
        img.pixel_path = fs::relative(absolute, out_base).generic_string();
    }
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    int images = 100;
    int train = -1;
    int test = -1;
    double train_frac = 0.8;
    simulator::SceneConfig scene;
    int annotators = 3;
    std::string jitter = "1.5,2.5,3.5";
    std::string miss_rate = "0.1";
    std::string spurious_rate = "0.1";
    std::string class_confusion = "0";
};

simulator::CorpusConfig corpus_config_from(const SimulateArgs& a) {
    simulator::CorpusConfig cc;
    cc.scene = a.scene;
    cc.n_images = a.images;
    cc.train_fraction = a.train_frac;
    if (a.train >= 0 || a.test >= 0) {
        if (a.train < 0 || a.test < 0)
            throw std::invalid_argument("--train and --test must be given together");
        cc.quota = std::make_pair(a.train, a.test);
    }
    auto jitter = parse_double_list(a.jitter);
    auto miss = parse_double_list(a.miss_rate);
    auto spurious = parse_double_list(a.spurious_rate);
    auto confusion = parse_double_list(a.class_confusion);
    std::size_t t_count = std::max<std::size_t>(
        std::size_t(a.annotators),
        std::max(std::max(jitter.size(), miss.size()),
                 std::max(spurious.size(), confusion.size())));
    for (std::size_t t = 0; t < t_count; ++t)
        cc.profiles.push_back(simulator::AnnotatorProfile{
            list_at(jitter, t, 0.0), list_at(miss, t, 0.0),
            list_at(spurious, t, 0.0), list_at(confusion, t, 0.0)});
    return cc;
}

json corpus_config_echo(const simulator::CorpusConfig& cc, std::uint64_t seed) {
    json j;
    j["command"] = "simulate";
    j["seed"] = seed;
    j["width"] = cc.scene.width;
    j["height"] = cc.scene.height;
    j["classes"] = cc.scene.num_classes;
    j["objects_min"] = cc.scene.objects_min;
    j["objects_max"] = cc.scene.objects_max;
    j["size_min"] = cc.scene.object_size_min;
    j["size_max"] = cc.scene.object_size_max;
    j["bg_intensity"] = cc.scene.background_intensity;
    j["noise_sigma"] = cc.scene.background_noise_sigma;
    j["intensity_per_class"] = cc.scene.intensity_per_class;
    j["train_fraction"] = cc.train_fraction;
    if (cc.quota) {
        j["train"] = cc.quota->first;
        j["test"] = cc.quota->second;
    } else {
        j["images"] = cc.n_images;
    }
    json profiles = json::array();
    for (const auto& p : cc.profiles) {
        json pj;
        pj["jitter_sigma"] = p.jitter_sigma;
        pj["miss_rate"] = p.miss_rate;
        pj["spurious_rate"] = p.spurious_rate;
        pj["class_confusion"] = p.class_confusion;
        profiles.push_back(pj);
    }
    j["profiles"] = profiles;
    return j;
}

int run_simulate(const SimulateArgs& a) {
    simulator::CorpusConfig cc = corpus_config_from(a);
    simulator::Corpus corpus = simulator::build_corpus(cc, a.seed);
    simulator::write_corpus(corpus, a.out_dir,
                            corpus_config_echo(cc, a.seed).dump());
    std::cout << "wrote " << corpus.train_ids.size() << " train + "
              << corpus.test_ids.size() << " test images to " << a.out_dir << "\n";
    return 0;
}

// ---- fuse -------------------------------------------------------------------

struct FuseArgs {
    std::string in_path;
    std::string format = "annjson";
    std::string out_path;
    fusion::WbfConfig wbf;
    std::string conf_mode = "avg";
    std::string rescale_mode = "min_over_t";
    int t_override = 0;
};

int run_fuse(const FuseArgs& a) {
    annotations::DatasetFormat format;
    if (a.format == "annjson")
        format = annotations::DatasetFormat::annjson;
    else if (a.format == "vindr-csv")
        format = annotations::DatasetFormat::vindr_csv;
    else
        throw std::invalid_argument("unknown --format '" + a.format +
                                    "' (annjson|vindr-csv)");
    fusion::WbfConfig cfg = a.wbf;
    cfg.conf_mode = fusion::conf_mode_from_string(a.conf_mode);
    cfg.rescale_mode = fusion::rescale_mode_from_string(a.rescale_mode);
    if (a.t_override > 0) cfg.t_override = a.t_override;
    annotations::MultiAnnotatorDataset ds = annotations::load_dataset(a.in_path, format);
    fusion::FusedDataset fused = fusion::fuse_dataset(ds, cfg);
    rebase_pixel_paths(fused.images, a.in_path, a.out_path);
    fusion::save_fused(fused, a.out_path);
    std::size_t n = 0;
    for (const auto& [id, boxes] : fused.fused) n += boxes.size();
    std::cout << "fused " << n << " boxes over " << fused.images.size()
              << " images (t=" << fused.t << ") -> " << a.out_path << "\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string fused_path;
    std::string dataset_path;
    std::string annotator;
    bool pooled = false;
    std::string out_path;
    std::string weighting = "eq1";
    detector::TrainConfig cfg;
    std::string bg_weight_mode = "unit";
    std::string anchor_sizes = "12,20,28";
};

std::vector<detector::TrainImage> training_images_from_args(const TrainArgs& a,
                                                            int& num_classes) {
    std::vector<detector::TrainImage> images;
    if (!a.fused_path.empty()) {
        if (!a.dataset_path.empty() || a.pooled || !a.annotator.empty())
            throw std::invalid_argument(
                "--fused cannot be combined with --dataset/--annotator/--pooled");
        fusion::FusedDataset fused = fusion::load_fused(a.fused_path);
        num_classes = int(fused.classes.size());
        fs::path base = fs::path(a.fused_path).parent_path();
        for (const auto& img : fused.images)
            images.push_back(detector::TrainImage{
                img.image_id, annotations::load_image_pixels(img, base),
                fused.fused.at(img.image_id)});
        return images;
    }
    if (a.dataset_path.empty())
        throw std::invalid_argument("one of --fused or --dataset is required");
    if (a.pooled != a.annotator.empty())
        throw std::invalid_argument(
            "--dataset needs exactly one of --annotator or --pooled");
    annotations::MultiAnnotatorDataset ds =
        annotations::load_dataset(a.dataset_path, annotations::DatasetFormat::annjson);
    num_classes = int(ds.classes.size());
    int annotator_idx = -1;
    if (!a.annotator.empty()) {
        annotator_idx = ds.annotator_index(a.annotator);
        if (annotator_idx < 0)
            throw std::invalid_argument("unknown annotator '" + a.annotator + "'");
    }
    fs::path base = fs::path(a.dataset_path).parent_path();
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::vector<annotations::LabeledBox> labels;
        if (a.pooled) {
            for (const auto& per_annotator : ds.boxes[i])
                labels.insert(labels.end(), per_annotator.begin(),
                              per_annotator.end());
        } else {
            labels = ds.boxes[i][std::size_t(annotator_idx)];
        }
        images.push_back(detector::TrainImage{
            ds.images[i].image_id,
            annotations::load_image_pixels(ds.images[i], base),
            detector::as_unit_confidence(labels)});
    }
    return images;
}

int run_train(const TrainArgs& a) {
    detector::TrainConfig cfg = a.cfg;
    cfg.loss_variant = loss::variant_from_string(a.weighting);
    cfg.loss.background_weight_mode =
        loss::background_weight_from_string(a.bg_weight_mode);
    cfg.grid.sizes = parse_int_list(a.anchor_sizes);
    int num_classes = 0;
    std::vector<detector::TrainImage> images = training_images_from_args(a, num_classes);
    cfg.loss.num_classes = num_classes;
    detector::TrainResult result = detector::train(images, cfg);
    detector::save_model(result.model, a.out_path);
    std::cout << "trained " << images.size() << " images, " << cfg.epochs
              << " epochs; loss " << result.epoch_loss.front() << " -> "
              << result.epoch_loss.back() << "; model -> " << a.out_path << "\n";
    return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictArgs {
    std::string model_path;
    std::string data_path;
    std::string out_path;
    double score_thr = 0.3;
    double nms_iou = 0.45;
};

int run_predict(const PredictArgs& a) {
    detector::DetectorModel model = detector::load_model(a.model_path);
    annotations::MultiAnnotatorDataset ds =
        annotations::load_dataset(a.data_path, annotations::DatasetFormat::annjson);
    if (int(ds.classes.size()) != model.num_classes)
        throw std::invalid_argument("dataset has " +
                                    std::to_string(ds.classes.size()) +
                                    " classes but the model expects " +
                                    std::to_string(model.num_classes));
    fs::path base = fs::path(a.data_path).parent_path();
    annotations::MultiAnnotatorDataset preds;
    preds.classes = ds.classes;
    preds.annotators = {"model"};
    preds.images = ds.images;
    std::size_t n = 0;
    for (const auto& img : ds.images) {
        annotations::PixelGrid pixels = annotations::load_image_pixels(img, base);
        auto boxes = detector::predict(model, pixels, a.score_thr, a.nms_iou);
        n += boxes.size();
        preds.boxes.push_back({std::move(boxes)});
    }
    json echo;
    echo["command"] = "predict";
    echo["model"] = a.model_path;
    echo["score_threshold"] = a.score_thr;
    echo["nms_iou"] = a.nms_iou;
    rebase_pixel_paths(preds.images, a.data_path, a.out_path);
    annotations::save_dataset(preds, a.out_path, echo.dump());
    std::cout << "predicted " << n << " boxes over " << preds.images.size()
              << " images -> " << a.out_path << "\n";
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string preds_path;
    std::string truth_path;
    double map_iou = 0.4;
    std::string label = "model";
    std::string out_path;
};

std::vector<annotations::LabeledBox> pooled_boxes(
    const annotations::MultiAnnotatorDataset& ds, int image_idx) {
    std::vector<annotations::LabeledBox> out;
    for (const auto& per_annotator : ds.boxes[std::size_t(image_idx)])
        out.insert(out.end(), per_annotator.begin(), per_annotator.end());
    return out;
}

int run_eval(const EvalArgs& a) {
    annotations::MultiAnnotatorDataset preds =
        annotations::load_dataset(a.preds_path, annotations::DatasetFormat::annjson);
    annotations::MultiAnnotatorDataset truth =
        annotations::load_dataset(a.truth_path, annotations::DatasetFormat::annjson);
    if (preds.classes != truth.classes)
        throw std::invalid_argument("class lists of --preds and --truth differ");
    std::vector<std::vector<annotations::LabeledBox>> preds_by_image, gts_by_image;
    for (std::size_t i = 0; i < preds.images.size(); ++i) {
        int t = truth.image_index(preds.images[i].image_id);
        if (t < 0)
            throw std::invalid_argument("image '" + preds.images[i].image_id +
                                        "' missing from --truth");
        preds_by_image.push_back(pooled_boxes(preds, int(i)));
        gts_by_image.push_back(pooled_boxes(truth, t));
    }
    evaluation::EvalReport report =
        evaluation::map_at(preds_by_image, gts_by_image, int(preds.classes.size()),
                           a.map_iou, a.label);
    json echo;
    echo["command"] = "eval";
    echo["map_iou"] = a.map_iou;
    echo["label"] = a.label;
    std::string tsv = "# config\t" + echo.dump() + "\n" +
                      evaluation::report_tsv_header(int(preds.classes.size())) +
                      evaluation::report_tsv_row(report, "-");
    if (!a.out_path.empty()) write_text(a.out_path, tsv);
    std::cout << tsv;
    return 0;
}

// ---- compare ----------------------------------------------------------------

struct CompareArgs {
    SimulateArgs sim;  // reuses scene/profile flags, train/test default 200/50
    int seeds = 5;
    std::uint64_t first_seed = 1;
    std::string out_path;
    detector::TrainConfig train;
    std::string bg_weight_mode = "unit";
    std::string anchor_sizes = "12,20,28";
    fusion::WbfConfig wbf;
    std::string conf_mode = "avg";
    std::string rescale_mode = "min_over_t";
    double map_iou = 0.4;
    double score_thr = 0.3;
    double nms_iou = 0.45;
};

int run_compare(const CompareArgs& a) {
    simulator::CorpusConfig cc = corpus_config_from(a.sim);
    evaluation::CompareConfig cfg;
    cfg.scene = cc.scene;
    cfg.profiles = cc.profiles;
    cfg.n_train = cc.quota ? cc.quota->first : 200;
    cfg.n_test = cc.quota ? cc.quota->second : 50;
    cfg.train_fraction = cc.train_fraction;
    cfg.wbf = a.wbf;
    cfg.wbf.conf_mode = fusion::conf_mode_from_string(a.conf_mode);
    cfg.wbf.rescale_mode = fusion::rescale_mode_from_string(a.rescale_mode);
    cfg.train = a.train;
    cfg.train.loss.background_weight_mode =
        loss::background_weight_from_string(a.bg_weight_mode);
    cfg.train.grid.sizes = parse_int_list(a.anchor_sizes);
    cfg.map_iou = a.map_iou;
    cfg.score_threshold = a.score_thr;
    cfg.nms_iou = a.nms_iou;
    cfg.seeds.clear();
    for (int s = 0; s < a.seeds; ++s)
        cfg.seeds.push_back(a.first_seed + std::uint64_t(s));

    json echo = corpus_config_echo(cc, 0);
    echo["command"] = "compare";
    echo.erase("seed");
    echo["train"] = cfg.n_train;
    echo["test"] = cfg.n_test;
    echo.erase("images");
    json seeds = json::array();
    for (auto s : cfg.seeds) seeds.push_back(s);
    echo["seeds"] = seeds;
    echo["epochs"] = cfg.train.epochs;
    echo["learning_rate"] = cfg.train.learning_rate;
    echo["batch"] = cfg.train.batch;
    echo["eta"] = cfg.train.loss.eta;
    echo["beta"] = cfg.train.loss.beta;
    echo["bg_weight_mode"] = loss::to_string(cfg.train.loss.background_weight_mode);
    echo["stride"] = cfg.train.grid.stride;
    echo["anchor_sizes"] = cfg.train.grid.sizes;
    echo["wbf_iou_threshold"] = cfg.wbf.iou_threshold;
    echo["wbf_conf_mode"] = fusion::to_string(cfg.wbf.conf_mode);
    echo["wbf_rescale_mode"] = fusion::to_string(cfg.wbf.rescale_mode);
    echo["map_iou"] = cfg.map_iou;
    echo["score_threshold"] = cfg.score_threshold;
    echo["nms_iou"] = cfg.nms_iou;

    evaluation::CompareResult result = evaluation::run_comparison(cfg);
    std::string tsv = evaluation::comparison_tsv(result, echo.dump());
    if (!a.out_path.empty()) write_text(a.out_path, tsv);
    std::cout << evaluation::report_tsv_header(result.num_classes);
    for (const auto& row : result.rows)
        if (row.seed_label == "mean" || row.seed_label == "sd") {
            evaluation::EvalReport r;
            r.method = row.method;
            r.map = row.map;
            r.ap_per_class = row.ap_per_class;
            std::cout << evaluation::report_tsv_row(r, row.seed_label);
        }
    if (!a.out_path.empty()) std::cout << "report -> " << a.out_path << "\n";
    return 0;
}

// ---- render -----------------------------------------------------------------

struct RenderArgs {
    std::string image_path;
    std::vector<std::string> box_paths;
    std::string out_path;
    std::string image_id;
};

int run_render(const RenderArgs& a) {
    annotations::PixelGrid pixels = annotations::load_pgm(a.image_path);

    struct Source {
        std::string stem;
        bool fused = false;
        annotations::MultiAnnotatorDataset ds;
        fusion::FusedDataset fd;
    };
    std::vector<Source> sources;
    for (const std::string& p : a.box_paths) {
        std::ifstream probe(p);
        if (!probe) throw annotations::ParseError("cannot open file: " + p);
        json j;
        try {
            j = json::parse(probe);
        } catch (const json::parse_error& e) {
            throw annotations::ParseError(p + ": invalid JSON: " + e.what());
        }
        Source src;
        src.stem = fs::path(p).stem().string();
        if (j.contains("annotators")) {
            src.ds = annotations::load_dataset(p, annotations::DatasetFormat::annjson);
        } else {
            src.fused = true;
            src.fd = fusion::load_fused(p);
        }
        sources.push_back(std::move(src));
    }

    std::string image_id = a.image_id;
    if (image_id.empty()) {
        for (const Source& src : sources) {
            const auto& images = src.fused ? src.fd.images : src.ds.images;
            if (images.size() != 1)
                throw std::invalid_argument(
                    "--image-id required when a box file has several images");
            if (image_id.empty())
                image_id = images[0].image_id;
            else if (image_id != images[0].image_id)
                throw std::invalid_argument(
                    "--image-id required: box files disagree on the image");
        }
    }

    std::vector<render::BoxSet> sets;
    std::vector<std::string> class_names;
    for (const Source& src : sources) {
        if (src.fused) {
            if (class_names.empty()) class_names = src.fd.classes;
            auto it = src.fd.fused.find(image_id);
            if (it == src.fd.fused.end())
                throw std::invalid_argument("image '" + image_id + "' not in " +
                                            src.stem);
            render::BoxSet set;
            set.name = src.stem;
            for (const auto& fb : it->second)
                set.boxes.push_back(
                    annotations::LabeledBox{fb.box, fb.class_id, fb.confidence});
            sets.push_back(std::move(set));
        } else {
            if (class_names.empty()) class_names = src.ds.classes;
            int idx = src.ds.image_index(image_id);
            if (idx < 0)
                throw std::invalid_argument("image '" + image_id + "' not in " +
                                            src.stem);
            for (std::size_t t = 0; t < src.ds.annotators.size(); ++t) {
                render::BoxSet set;
                set.name = src.ds.annotators[t];
                set.boxes = src.ds.boxes[std::size_t(idx)][t];
                sets.push_back(std::move(set));
            }
        }
    }
    write_text(a.out_path, render::render_svg(pixels, sets, class_names));
    std::cout << "overlay with " << sets.size() << " box sets -> " << a.out_path
              << "\n";
    return 0;
}

// ---- loss-check -------------------------------------------------------------

struct LossCheckArgs {
    int instances = 100;
    std::uint64_t seed = 42;
    double tol = 1e-5;
};

int run_loss_check(const LossCheckArgs& a) {
    double worst = 0.0;
    rng::SplitMix64 gen(a.seed);
    for (int i = 0; i < a.instances; ++i) {
        loss::LossConfig cfg;
        cfg.num_classes = 1 + int(gen.uniform_int(0, 3));
        cfg.eta = 0.5;
        cfg.beta = gen.uniform(0.25, 2.0);
        int anchors = 1 + int(gen.uniform_int(0, 11));
        loss::AnchorTargets targets;
        loss::Prediction pred;
        pred.num_anchors = anchors;
        pred.num_classes = cfg.num_classes;
        for (int q = 0; q < anchors; ++q) {
            loss::AnchorTarget t;
            t.anchor = geometry::Box{0, 0, 8, 8};
            t.matched = gen.uniform() < 0.5;
            t.class_target = t.matched ? int(gen.uniform_int(0, cfg.num_classes - 1))
                                       : cfg.num_classes;
            if (t.matched)
                for (auto& v : t.box_target) v = gen.uniform(-1.5, 1.5);
            t.weight = gen.uniform();
            targets.push_back(t);
            for (int r = 0; r <= cfg.num_classes; ++r)
                pred.class_logits.push_back(gen.uniform(-3.0, 3.0));
            for (int r = 0; r < 4; ++r)
                pred.box_offsets.push_back(gen.uniform(-2.0, 2.0));
        }
        for (loss::Variant variant : {loss::Variant::eq1, loss::Variant::eq2}) {
            loss::LossGradient g = loss::loss_gradient(pred, targets, cfg, variant);
            auto value = [&](const loss::Prediction& p) {
                return variant == loss::Variant::eq2
                           ? loss::loss_eq2(p, targets, cfg).value
                           : loss::loss_eq1(p, targets, cfg).value;
            };
            const double h = 1e-5;
            auto check = [&](std::vector<double>& param, std::size_t j,
                             double analytic) {
                double keep = param[j];
                param[j] = keep + h;
                double up = value(pred);
                param[j] = keep - h;
                double down = value(pred);
                param[j] = keep;
                double fd = (up - down) / (2.0 * h);
                double err = std::fabs(analytic - fd) /
                             std::max({1.0, std::fabs(analytic), std::fabs(fd)});
                worst = std::max(worst, err);
            };
            for (std::size_t j = 0; j < pred.class_logits.size(); ++j)
                check(pred.class_logits, j, g.d_class_logits[j]);
            for (std::size_t j = 0; j < pred.box_offsets.size(); ++j)
                check(pred.box_offsets, j, g.d_box_offsets[j]);
        }
    }
    std::cout << "gradient audit: " << a.instances
              << " instances, max relative error " << worst << " (tolerance "
              << a.tol << ")\n";
    if (worst > a.tol) {
        std::cerr << "gradient audit FAILED\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-annotator box fusion, consensus-weighted detector "
                 "training, and evaluation"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate",
                                            "generate a synthetic corpus");
    simulate->add_option("--out", sim.out_dir, "output directory")->required();
    simulate->add_option("--seed", sim.seed, "corpus seed");
    simulate->add_option("--images", sim.images, "number of images (hash split)");
    simulate->add_option("--train", sim.train, "exact train image count");
    simulate->add_option("--test", sim.test, "exact test image count");
    simulate->add_option("--train-frac", sim.train_frac, "train fraction")
        ->check(check_closed_unit);
    simulate->add_option("--width", sim.scene.width, "image width")
        ->check(check_positive);
    simulate->add_option("--height", sim.scene.height, "image height")
        ->check(check_positive);
    simulate->add_option("--classes", sim.scene.num_classes, "class count")
        ->check(check_positive);
    simulate->add_option("--objects-min", sim.scene.objects_min, "min objects");
    simulate->add_option("--objects-max", sim.scene.objects_max, "max objects");
    simulate->add_option("--size-min", sim.scene.object_size_min, "min object side")
        ->check(check_positive);
    simulate->add_option("--size-max", sim.scene.object_size_max, "max object side")
        ->check(check_positive);
    simulate->add_option("--noise-sigma", sim.scene.background_noise_sigma,
                         "background noise sigma");
    simulate->add_option("--bg-intensity", sim.scene.background_intensity,
                         "background intensity");
    simulate->add_option("--annotators", sim.annotators, "annotator count")
        ->check(check_positive);
    simulate->add_option("--jitter", sim.jitter,
                         "per-annotator jitter sigmas (comma list)");
    simulate->add_option("--miss-rate", sim.miss_rate,
                         "per-annotator miss rates (comma list)");
    simulate->add_option("--spurious-rate", sim.spurious_rate,
                         "per-annotator spurious rates (comma list)");
    simulate->add_option("--class-confusion", sim.class_confusion,
                         "per-annotator confusion rates (comma list)");

    FuseArgs fuse;
    CLI::App* fuse_cmd = app.add_subcommand("fuse",
                                            "fuse annotator boxes per image");
    fuse_cmd->add_option("--in", fuse.in_path, "input dataset")->required();
    fuse_cmd->add_option("--format", fuse.format, "annjson|vindr-csv");
    fuse_cmd->add_option("--out", fuse.out_path, "output fused annjson")->required();
    fuse_cmd->add_option("--iou-thr", fuse.wbf.iou_threshold,
                         "cluster match IoU threshold")
        ->check(check_open_unit);
    fuse_cmd->add_option("--conf-mode", fuse.conf_mode, "avg|max");
    fuse_cmd->add_option("--rescale-mode", fuse.rescale_mode,
                         "min_over_t|n_over_t|none");
    fuse_cmd->add_option("--t-override", fuse.t_override,
                         "annotator count override");

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train a detector");
    train_cmd->add_option("--fused", train.fused_path, "fused annjson labels");
    train_cmd->add_option("--dataset", train.dataset_path, "raw dataset annjson");
    train_cmd->add_option("--annotator", train.annotator,
                          "train on one annotator's boxes");
    train_cmd->add_flag("--pooled", train.pooled,
                        "train on the union of all annotators' boxes");
    train_cmd->add_option("--out", train.out_path, "output model json")->required();
    train_cmd->add_option("--weighting", train.weighting, "eq1|eq2");
    train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs")
        ->check(check_positive);
    train_cmd->add_option("--lr", train.cfg.learning_rate, "learning rate")
        ->check(check_positive);
    train_cmd->add_option("--batch", train.cfg.batch, "images per step")
        ->check(check_positive);
    train_cmd->add_option("--seed", train.cfg.seed, "weight init seed");
    train_cmd->add_option("--eta", train.cfg.loss.eta, "IoU gate threshold")
        ->check(check_open_unit);
    train_cmd->add_option("--beta", train.cfg.loss.beta, "loss balance constant")
        ->check(check_positive);
    train_cmd->add_option("--bg-weight-mode", train.bg_weight_mode, "unit|mean_c");
    train_cmd->add_option("--stride", train.cfg.grid.stride, "anchor grid stride")
        ->check(check_positive);
    train_cmd->add_option("--anchor-sizes", train.anchor_sizes,
                          "anchor side lengths (comma list)");

    PredictArgs predict;
    CLI::App* predict_cmd = app.add_subcommand("predict", "run a model");
    predict_cmd->add_option("--model", predict.model_path, "model json")->required();
    predict_cmd->add_option("--data", predict.data_path,
                            "annjson with images + pixel paths")
        ->required();
    predict_cmd->add_option("--out", predict.out_path, "output predictions annjson")
        ->required();
    predict_cmd->add_option("--score-thr", predict.score_thr, "score threshold")
        ->check(check_closed_unit);
    predict_cmd->add_option("--nms-iou", predict.nms_iou, "NMS IoU threshold")
        ->check(check_open_unit);

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions");
    eval_cmd->add_option("--preds", eval.preds_path, "predictions annjson")
        ->required();
    eval_cmd->add_option("--truth", eval.truth_path, "ground truth annjson")
        ->required();
    eval_cmd->add_option("--map-iou", eval.map_iou, "matching IoU threshold")
        ->check(check_open_unit);
    eval_cmd->add_option("--label", eval.label, "method label for the report");
    eval_cmd->add_option("--out", eval.out_path, "output TSV");

    CompareArgs compare;
    compare.sim.train = 200;
    compare.sim.test = 50;
    CLI::App* compare_cmd = app.add_subcommand(
        "compare", "run the full method comparison on synthetic corpora");
    compare_cmd->add_option("--out", compare.out_path, "output TSV")->required();
    compare_cmd->add_option("--seeds", compare.seeds, "number of seeds")
        ->check(check_positive);
    compare_cmd->add_option("--first-seed", compare.first_seed, "first seed");
    compare_cmd->add_option("--train", compare.sim.train, "train images per seed");
    compare_cmd->add_option("--test", compare.sim.test, "test images per seed");
    compare_cmd->add_option("--train-frac", compare.sim.train_frac,
                            "train hash fraction")
        ->check(check_closed_unit);
    compare_cmd->add_option("--width", compare.sim.scene.width, "image width")
        ->check(check_positive);
    compare_cmd->add_option("--height", compare.sim.scene.height, "image height")
        ->check(check_positive);
    compare_cmd->add_option("--classes", compare.sim.scene.num_classes,
                            "class count")
        ->check(check_positive);
    compare_cmd->add_option("--objects-min", compare.sim.scene.objects_min,
                            "min objects");
    compare_cmd->add_option("--objects-max", compare.sim.scene.objects_max,
                            "max objects");
    compare_cmd->add_option("--size-min", compare.sim.scene.object_size_min,
                            "min object side");
    compare_cmd->add_option("--size-max", compare.sim.scene.object_size_max,
                            "max object side");
    compare_cmd->add_option("--noise-sigma",
                            compare.sim.scene.background_noise_sigma,
                            "background noise sigma");
    compare_cmd->add_option("--annotators", compare.sim.annotators,
                            "annotator count");
    compare_cmd->add_option("--jitter", compare.sim.jitter,
                            "per-annotator jitter sigmas");
    compare_cmd->add_option("--miss-rate", compare.sim.miss_rate,
                            "per-annotator miss rates");
    compare_cmd->add_option("--spurious-rate", compare.sim.spurious_rate,
                            "per-annotator spurious rates");
    compare_cmd->add_option("--class-confusion", compare.sim.class_confusion,
                            "per-annotator confusion rates");
    compare_cmd->add_option("--epochs", compare.train.epochs, "training epochs")
        ->check(check_positive);
    compare_cmd->add_option("--lr", compare.train.learning_rate, "learning rate")
        ->check(check_positive);
    compare_cmd->add_option("--batch", compare.train.batch, "images per step")
        ->check(check_positive);
    compare_cmd->add_option("--train-seed", compare.train.seed,
                            "weight init base seed");
    compare_cmd->add_option("--eta", compare.train.loss.eta, "IoU gate threshold")
        ->check(check_open_unit);
    compare_cmd->add_option("--beta", compare.train.loss.beta,
                            "loss balance constant")
        ->check(check_positive);
    compare_cmd->add_option("--bg-weight-mode", compare.bg_weight_mode,
                            "unit|mean_c");
    compare_cmd->add_option("--stride", compare.train.grid.stride,
                            "anchor grid stride")
        ->check(check_positive);
    compare_cmd->add_option("--anchor-sizes", compare.anchor_sizes,
                            "anchor side lengths");
    compare_cmd->add_option("--iou-thr", compare.wbf.iou_threshold,
                            "WBF cluster IoU threshold")
        ->check(check_open_unit);
    compare_cmd->add_option("--conf-mode", compare.conf_mode, "avg|max");
    compare_cmd->add_option("--rescale-mode", compare.rescale_mode,
                            "min_over_t|n_over_t|none");
    compare_cmd->add_option("--map-iou", compare.map_iou, "evaluation IoU")
        ->check(check_open_unit);
    compare_cmd->add_option("--score-thr", compare.score_thr, "score threshold")
        ->check(check_closed_unit);
    compare_cmd->add_option("--nms-iou", compare.nms_iou, "NMS IoU threshold")
        ->check(check_open_unit);

    RenderArgs render_args;
    CLI::App* render_cmd = app.add_subcommand("render", "SVG overlay of box sets");
    render_cmd->add_option("--image", render_args.image_path, "PGM image")
        ->required();
    render_cmd->add_option("--boxes", render_args.box_paths,
                           "annjson or fused annjson (repeatable)")
        ->required();
    render_cmd->add_option("--out", render_args.out_path, "output SVG")->required();
    render_cmd->add_option("--image-id", render_args.image_id,
                           "image id within the box files");

    LossCheckArgs loss_check;
    CLI::App* loss_check_cmd = app.add_subcommand(
        "loss-check", "finite-difference audit of the loss gradients");
    loss_check_cmd->add_option("--instances", loss_check.instances,
                               "random instances")
        ->check(check_positive);
    loss_check_cmd->add_option("--seed", loss_check.seed, "instance seed");
    loss_check_cmd->add_option("--tol", loss_check.tol, "relative tolerance")
        ->check(check_positive);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(simulate)) return run_simulate(sim);
        if (app.got_subcommand(fuse_cmd)) return run_fuse(fuse);
        if (app.got_subcommand(train_cmd)) return run_train(train);
        if (app.got_subcommand(predict_cmd)) return run_predict(predict);
        if (app.got_subcommand(eval_cmd)) return run_eval(eval);
        if (app.got_subcommand(compare_cmd)) return run_compare(compare);
        if (app.got_subcommand(render_cmd)) return run_render(render_args);
        if (app.got_subcommand(loss_check_cmd)) return run_loss_check(loss_check);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
