#include "fusedet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace fusedet::fusion {

namespace {

using annotations::LabeledBox;
using annotations::ParseError;
using geometry::Box;

struct Member {
    Box box;
    double score;
    std::string annotator;
};

// Mean of values[i] weighted by weights[i], computed relative to the first
// value and clamped into the members' envelope. Identical inputs therefore
// fuse to exactly that input, and the result can never leave [min, max].
double weighted_mean(const std::vector<double>& values,
                     const std::vector<double>& weights) {
    double ref = values[0];
    double wsum = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += weights[i] * (values[i] - ref);
        wsum += weights[i];
    }
    double mean;
    if (wsum > 0.0) {
        mean = ref + acc / wsum;
    } else {
        // all-zero scores: fall back to the unweighted mean
        double s = 0.0;
        for (double v : values) s += v - ref;
        mean = ref + s / double(values.size());
    }
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    return std::clamp(mean, lo, hi);
}

struct Cluster {
    std::vector<Member> members;
    Box fused{};
    double confidence = 0.0;

    void recompute(ConfMode mode) {
        std::vector<double> w;
        w.reserve(members.size());
        for (const Member& m : members) w.push_back(m.score);
        std::vector<double> coord(members.size());
        auto mean_of = [&](double Box::*field) {
            for (std::size_t i = 0; i < members.size(); ++i)
                coord[i] = members[i].box.*field;
            return weighted_mean(coord, w);
        };
        fused.x_min = mean_of(&Box::x_min);
        fused.y_min = mean_of(&Box::y_min);
        fused.x_max = mean_of(&Box::x_max);
        fused.y_max = mean_of(&Box::y_max);

        if (mode == ConfMode::max) {
            double best = members[0].score;
            for (const Member& m : members) best = std::max(best, m.score);
            confidence = best;
        } else {
            // offset form, exact for identical scores
            double ref = members[0].score;
            double acc = 0.0;
            for (const Member& m : members) acc += m.score - ref;
            double lo = ref, hi = ref;
            for (const Member& m : members) {
                lo = std::min(lo, m.score);
                hi = std::max(hi, m.score);
            }
            confidence = std::clamp(ref + acc / double(members.size()), lo, hi);
        }
    }
};

double rescale(double c, int n, int t, RescaleMode mode) {
    switch (mode) {
        case RescaleMode::min_over_t:
            return c * (double(std::min(t, n)) / double(t));
        case RescaleMode::n_over_t:
            return std::min(1.0, c * (double(n) / double(t)));
        case RescaleMode::none:
            return c;
    }
    return c;
}

}  // namespace

const char* to_string(ConfMode m) {
    return m == ConfMode::avg ? "avg" : "max";
}

const char* to_string(RescaleMode m) {
    switch (m) {
        case RescaleMode::min_over_t: return "min_over_t";
        case RescaleMode::n_over_t: return "n_over_t";
        case RescaleMode::none: return "none";
    }
    return "?";
}

ConfMode conf_mode_from_string(const std::string& s) {
    if (s == "avg") return ConfMode::avg;
    if (s == "max") return ConfMode::max;
    throw std::invalid_argument("unknown conf mode '" + s + "' (avg|max)");
}

RescaleMode rescale_mode_from_string(const std::string& s) {
    if (s == "min_over_t") return RescaleMode::min_over_t;
    if (s == "n_over_t") return RescaleMode::n_over_t;
    if (s == "none") return RescaleMode::none;
    throw std::invalid_argument("unknown rescale mode '" + s +
                                "' (min_over_t|n_over_t|none)");
}

std::vector<FusedBox> fuse_image(
    const std::map<std::string, std::vector<LabeledBox>>& boxes_by_annotator,
    int t, const WbfConfig& cfg) {
    if (t < 1) throw std::invalid_argument("fuse_image: t must be >= 1");
    if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold < 1.0))
        throw std::invalid_argument("fuse_image: iou_threshold must be in (0,1)");

    std::map<int, std::vector<Member>> by_class;
    for (const auto& [annotator, boxes] : boxes_by_annotator)
        for (const LabeledBox& lb : boxes)
            by_class[lb.class_id].push_back(Member{lb.box, lb.score, annotator});

    std::vector<FusedBox> out;
    for (auto& [class_id, members] : by_class) {
        std::sort(members.begin(), members.end(),
                  [](const Member& a, const Member& b) {
                      if (a.score != b.score) return a.score > b.score;
                      if (a.annotator != b.annotator) return a.annotator < b.annotator;
                      return geometry::lex_less(a.box, b.box);
                  });
        std::vector<Cluster> clusters;
        for (const Member& m : members) {
            Cluster* match = nullptr;
            for (Cluster& c : clusters) {
                if (geometry::iou(c.fused, m.box) > cfg.iou_threshold) {
                    match = &c;
                    break;
                }
            }
            if (!match) {
                clusters.emplace_back();
                match = &clusters.back();
            }
            match->members.push_back(m);
            match->recompute(cfg.conf_mode);
        }
        for (const Cluster& c : clusters) {
            FusedBox fb;
            fb.box = c.fused;
            fb.class_id = class_id;
            fb.support = int(c.members.size());
            fb.confidence = std::clamp(
                rescale(c.confidence, fb.support, t, cfg.rescale_mode), 0.0, 1.0);
            std::set<std::string> ids;
            for (const Member& m : c.members) ids.insert(m.annotator);
            fb.contributors.assign(ids.begin(), ids.end());
            out.push_back(std::move(fb));
        }
    }
    std::sort(out.begin(), out.end(), [](const FusedBox& a, const FusedBox& b) {
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.box != b.box) return geometry::lex_less(a.box, b.box);
        if (a.support != b.support) return a.support > b.support;
        return a.contributors < b.contributors;
    });
    return out;
}

FusedDataset fuse_dataset(const annotations::MultiAnnotatorDataset& ds,
                          const WbfConfig& cfg) {
    int t = cfg.t_override.value_or(int(ds.annotators.size()));
    FusedDataset out;
    out.classes = ds.classes;
    out.images = ds.images;
    out.config = cfg;
    out.t = t;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::map<std::string, std::vector<LabeledBox>> by_annotator;
        for (std::size_t a = 0; a < ds.annotators.size(); ++a)
            if (!ds.boxes[i][a].empty()) by_annotator[ds.annotators[a]] = ds.boxes[i][a];
        std::vector<FusedBox> fused = fuse_image(by_annotator, t, cfg);
        for (FusedBox& fb : fused)
            fb.box = geometry::clip_to_image(fb.box, ds.images[i].width,
                                             ds.images[i].height);
        out.fused[ds.images[i].image_id] = std::move(fused);
    }
    return out;
}

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw ParseError(path.string() + ": " + what);
}

FusedDataset load_fused_checked(const json& root,
                                const std::filesystem::path& path);

}  // namespace

void save_fused(const FusedDataset& ds, const std::filesystem::path& path) {
    ordered_json root;
    root["classes"] = ds.classes;
    ordered_json images = ordered_json::array();
    for (const annotations::ImageRecord& img : ds.images) {
        ordered_json rec;
        rec["id"] = img.image_id;
        rec["width"] = img.width;
        rec["height"] = img.height;
        if (!img.pixel_path.empty()) rec["pixels"] = img.pixel_path;
        images.push_back(std::move(rec));
    }
    root["images"] = std::move(images);
    ordered_json anns = ordered_json::array();
    for (const annotations::ImageRecord& img : ds.images) {
        auto it = ds.fused.find(img.image_id);
        if (it == ds.fused.end()) continue;
        for (const FusedBox& fb : it->second) {
            ordered_json rec;
            rec["image_id"] = img.image_id;
            rec["class"] = ds.classes[std::size_t(fb.class_id)];
            rec["x_min"] = fb.box.x_min;
            rec["y_min"] = fb.box.y_min;
            rec["x_max"] = fb.box.x_max;
            rec["y_max"] = fb.box.y_max;
            rec["confidence"] = fb.confidence;
            rec["support"] = fb.support;
            rec["contributors"] = fb.contributors;
            anns.push_back(std::move(rec));
        }
    }
    root["annotations"] = std::move(anns);
    ordered_json cfg;
    cfg["iou_threshold"] = ds.config.iou_threshold;
    cfg["conf_mode"] = to_string(ds.config.conf_mode);
    cfg["rescale_mode"] = to_string(ds.config.rescale_mode);
    if (ds.config.t_override)
        cfg["t_override"] = *ds.config.t_override;
    else
        cfg["t_override"] = nullptr;
    cfg["t"] = ds.t;
    root["config"] = std::move(cfg);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << root.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

FusedDataset load_fused(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open file");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        fail(path, std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail(path, "top level must be an object");
    for (const char* key : {"classes", "images", "annotations", "config"})
        if (!root.contains(key)) fail(path, std::string("missing field '") + key + "'");

    try {
        return load_fused_checked(root, path);
    } catch (const ParseError&) {
        throw;
    } catch (const json::exception& e) {
        fail(path, e.what());
    }
}

namespace {

FusedDataset load_fused_checked(const json& root,
                                const std::filesystem::path& path) {
    FusedDataset ds;
    for (const auto& c : root["classes"]) {
        if (!c.is_string()) fail(path, "'classes' entries must be strings");
        ds.classes.push_back(c.get<std::string>());
    }
    for (const auto& rec : root["images"]) {
        annotations::ImageRecord img;
        if (!rec.contains("id") || !rec.contains("width") || !rec.contains("height"))
            fail(path, "image record missing id/width/height");
        img.image_id = rec["id"].get<std::string>();
        img.width = rec["width"].get<int>();
        img.height = rec["height"].get<int>();
        if (img.width <= 0 || img.height <= 0)
            fail(path, "image '" + img.image_id + "': non-positive dimensions");
        if (rec.contains("pixels")) img.pixel_path = rec["pixels"].get<std::string>();
        ds.images.push_back(std::move(img));
        ds.fused[ds.images.back().image_id] = {};
    }

    const json& cfg = root["config"];
    for (const char* key : {"iou_threshold", "conf_mode", "rescale_mode", "t"})
        if (!cfg.contains(key)) fail(path, std::string("config missing '") + key + "'");
    ds.config.iou_threshold = cfg["iou_threshold"].get<double>();
    ds.config.conf_mode = conf_mode_from_string(cfg["conf_mode"].get<std::string>());
    ds.config.rescale_mode =
        rescale_mode_from_string(cfg["rescale_mode"].get<std::string>());
    if (cfg.contains("t_override") && !cfg["t_override"].is_null())
        ds.config.t_override = cfg["t_override"].get<int>();
    ds.t = cfg["t"].get<int>();

    for (std::size_t i = 0; i < root["annotations"].size(); ++i) {
        const json& rec = root["annotations"][i];
        std::string where = "annotations[" + std::to_string(i) + "]";
        for (const char* key : {"image_id", "class", "x_min", "y_min", "x_max",
                                "y_max", "confidence", "support", "contributors"})
            if (!rec.contains(key)) fail(path, where + ": missing '" + key + "'");
        std::string image_id = rec["image_id"].get<std::string>();
        auto fit = ds.fused.find(image_id);
        if (fit == ds.fused.end())
            fail(path, where + ": unknown image '" + image_id + "'");
        std::string class_name = rec["class"].get<std::string>();
        auto cit = std::find(ds.classes.begin(), ds.classes.end(), class_name);
        if (cit == ds.classes.end())
            fail(path, where + ": unknown class '" + class_name + "'");
        FusedBox fb;
        fb.box = geometry::Box{rec["x_min"].get<double>(), rec["y_min"].get<double>(),
                               rec["x_max"].get<double>(), rec["y_max"].get<double>()};
        if (!fb.box.finite() || !fb.box.ordered())
            fail(path, where + ": invalid box");
        fb.class_id = int(cit - ds.classes.begin());
        fb.confidence = rec["confidence"].get<double>();
        if (!(fb.confidence >= 0.0 && fb.confidence <= 1.0))
            fail(path, where + ": confidence outside [0,1]");
        fb.support = rec["support"].get<int>();
        if (fb.support < 1) fail(path, where + ": support must be >= 1");
        for (const auto& c : rec["contributors"])
            fb.contributors.push_back(c.get<std::string>());
        fit->second.push_back(std::move(fb));
    }
    return ds;
}

}  // namespace

}  // namespace fusedet::fusion
