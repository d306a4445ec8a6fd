#include "fusedet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fusedet/geometry.hpp"
#include "fusedet/rng.hpp"

namespace fusedet::simulator {

namespace {

using annotations::LabeledBox;
using annotations::PixelGrid;
using geometry::Box;
using rng::SplitMix64;

// Seed stream ids: scenes use stream 0, annotator t uses stream t+1.
constexpr std::uint64_t kSceneStream = 0;

std::uint8_t clamp_intensity(double v) {
    return std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
}

void check_scene_config(const SceneConfig& cfg) {
    if (cfg.width <= 0 || cfg.height <= 0)
        throw std::invalid_argument("scene: non-positive image size");
    if (cfg.num_classes < 1) throw std::invalid_argument("scene: num_classes < 1");
    if (cfg.objects_min < 0 || cfg.objects_max < cfg.objects_min)
        throw std::invalid_argument("scene: empty objects range");
    if (cfg.object_size_min < 1 || cfg.object_size_max < cfg.object_size_min)
        throw std::invalid_argument("scene: empty size range");
    if (cfg.object_size_max > cfg.width || cfg.object_size_max > cfg.height)
        throw std::invalid_argument("scene: objects do not fit in the image");
}

// Keep min <= max, at least `min_size` wide, fully inside [0, limit].
void normalize_interval(double& lo, double& hi, double limit, double min_size) {
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < min_size) {
        double c = 0.5 * (lo + hi);
        lo = c - 0.5 * min_size;
        hi = c + 0.5 * min_size;
    }
    if (lo < 0.0) {
        hi -= lo;
        lo = 0.0;
    }
    if (hi > limit) {
        lo -= hi - limit;
        hi = limit;
    }
    lo = std::max(lo, 0.0);
}

}  // namespace

int class_intensity(const SceneConfig& cfg, int class_id) {
    if (class_id < int(cfg.intensity_per_class.size()))
        return cfg.intensity_per_class[std::size_t(class_id)];
    return std::max(0, 220 - 50 * class_id);
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    check_scene_config(cfg);
    SplitMix64 gen(seed);

    int n_objects = int(gen.uniform_int(cfg.objects_min, cfg.objects_max));
    struct Placed {
        Box box;
        int class_id;
    };
    std::vector<Placed> placed;
    for (int k = 0; k < n_objects; ++k) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            int w = int(gen.uniform_int(cfg.object_size_min, cfg.object_size_max));
            int h = int(gen.uniform_int(cfg.object_size_min, cfg.object_size_max));
            int x0 = int(gen.uniform_int(0, cfg.width - w));
            int y0 = int(gen.uniform_int(0, cfg.height - h));
            int cls = int(gen.uniform_int(0, cfg.num_classes - 1));
            Box b{double(x0), double(y0), double(x0 + w), double(y0 + h)};
            bool overlaps = false;
            for (const Placed& p : placed)
                if (geometry::intersection_area(p.box, b) > 0.0) {
                    overlaps = true;
                    break;
                }
            if (!overlaps) {
                placed.push_back(Placed{b, cls});
                ok = true;
            }
        }
        if (!ok)
            throw PlacementError("generate_scene: could not place object " +
                                 std::to_string(k + 1) + " of " +
                                 std::to_string(n_objects) +
                                 " without overlap after 100 attempts");
    }

    Scene scene;
    scene.pixels.width = cfg.width;
    scene.pixels.height = cfg.height;
    scene.pixels.values.resize(std::size_t(cfg.width) * std::size_t(cfg.height));
    for (auto& v : scene.pixels.values)
        v = clamp_intensity(cfg.background_intensity +
                            gen.gaussian(cfg.background_noise_sigma));
    for (const Placed& p : placed) {
        int x0 = int(p.box.x_min), x1 = int(p.box.x_max);
        int y0 = int(p.box.y_min), y1 = int(p.box.y_max);
        double base = class_intensity(cfg, p.class_id);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                scene.pixels.values[std::size_t(y) * cfg.width + x] =
                    clamp_intensity(base + gen.gaussian(cfg.background_noise_sigma));
        scene.truth.push_back(LabeledBox{p.box, p.class_id, 1.0});
    }
    return scene;
}

std::vector<LabeledBox> corrupt_annotations(const std::vector<LabeledBox>& truth,
                                            const AnnotatorProfile& profile,
                                            int width, int height, int num_classes,
                                            std::uint64_t seed) {
    if (profile.miss_rate < 0.0 || profile.miss_rate > 1.0 ||
        profile.class_confusion < 0.0 || profile.class_confusion > 1.0 ||
        profile.jitter_sigma < 0.0 || profile.spurious_rate < 0.0)
        throw std::invalid_argument("corrupt_annotations: invalid profile");
    SplitMix64 gen(seed);
    std::vector<LabeledBox> out;

    for (const LabeledBox& lb : truth) {
        if (gen.uniform() < profile.miss_rate) continue;
        Box b = lb.box;
        b.x_min += gen.gaussian(profile.jitter_sigma);
        b.y_min += gen.gaussian(profile.jitter_sigma);
        b.x_max += gen.gaussian(profile.jitter_sigma);
        b.y_max += gen.gaussian(profile.jitter_sigma);
        normalize_interval(b.x_min, b.x_max, double(width),
                           std::min(2.0, double(width)));
        normalize_interval(b.y_min, b.y_max, double(height),
                           std::min(2.0, double(height)));
        int cls = lb.class_id;
        if (num_classes > 1 && gen.uniform() < profile.class_confusion)
            cls = int((cls + 1 + gen.uniform_int(0, num_classes - 2)) % num_classes);
        out.push_back(LabeledBox{b, cls, lb.score});
    }

    int n_spurious = gen.poisson(profile.spurious_rate);
    int max_side = std::max(4, std::min(width, height) / 3);
    for (int k = 0; k < n_spurious; ++k) {
        int cls = int(gen.uniform_int(0, num_classes - 1));
        int w = int(gen.uniform_int(std::min(4, max_side), max_side));
        int h = int(gen.uniform_int(std::min(4, max_side), max_side));
        w = std::min(w, width);
        h = std::min(h, height);
        int x0 = int(gen.uniform_int(0, width - w));
        int y0 = int(gen.uniform_int(0, height - h));
        out.push_back(LabeledBox{
            Box{double(x0), double(y0), double(x0 + w), double(y0 + h)}, cls, 1.0});
    }
    return out;
}

Corpus build_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
    if (cfg.profiles.empty())
        throw std::invalid_argument("build_corpus: at least one profile required");
    check_scene_config(cfg.scene);

    Corpus corpus;
    auto& ds = corpus.dataset;
    ds.classes.reserve(std::size_t(cfg.scene.num_classes));
    for (int c = 0; c < cfg.scene.num_classes; ++c)
        ds.classes.push_back("class_" + std::to_string(c));
    for (std::size_t t = 0; t < cfg.profiles.size(); ++t)
        ds.annotators.push_back("a" + std::to_string(t + 1));

    const std::uint64_t frac_threshold =
        std::uint64_t(std::llround(cfg.train_fraction * 10000.0));
    auto is_train = [&](const std::string& id) {
        return rng::fnv1a(id) % 10000 < frac_threshold;
    };

    int want_train = -1, want_test = -1;
    if (cfg.quota) {
        want_train = cfg.quota->first;
        want_test = cfg.quota->second;
    }

    int made_train = 0, made_test = 0, made_total = 0;
    for (std::uint64_t index = 0;; ++index) {
        if (cfg.quota) {
            if (made_train == want_train && made_test == want_test) break;
            if (index > 1000000)
                throw std::invalid_argument(
                    "build_corpus: quota unreachable with train_fraction " +
                    std::to_string(cfg.train_fraction));
        } else if (made_total == cfg.n_images) {
            break;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%05llu",
                      static_cast<unsigned long long>(index));
        std::string id(buf);
        bool train_side = is_train(id);
        if (cfg.quota) {
            // skip before generating anything so extras cost nothing
            if (train_side && made_train == want_train) continue;
            if (!train_side && made_test == want_test) continue;
        }
        Scene scene = generate_scene(rng::derive(seed, kSceneStream, index),
                                     cfg.scene);
        annotations::ImageRecord img;
        img.image_id = id;
        img.width = cfg.scene.width;
        img.height = cfg.scene.height;
        img.pixel_path = "images/" + id + ".pgm";
        ds.images.push_back(img);
        std::vector<std::vector<LabeledBox>> per_annotator;
        for (std::size_t t = 0; t < cfg.profiles.size(); ++t)
            per_annotator.push_back(corrupt_annotations(
                scene.truth, cfg.profiles[t], cfg.scene.width, cfg.scene.height,
                cfg.scene.num_classes, rng::derive(seed, t + 1, index)));
        ds.boxes.push_back(std::move(per_annotator));
        corpus.pixels[id] = std::move(scene.pixels);
        corpus.truth[id] = std::move(scene.truth);
        if (train_side) {
            corpus.train_ids.push_back(id);
            ++made_train;
        } else {
            corpus.test_ids.push_back(id);
            ++made_test;
        }
        ++made_total;
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir,
                  const std::string& config_echo_json) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    for (const auto& [id, grid] : corpus.pixels)
        annotations::save_pgm(grid, out_dir / "images" / (id + ".pgm"));

    annotations::save_dataset(
        annotations::subset_by_images(corpus.dataset, corpus.train_ids),
        out_dir / "train.annjson", config_echo_json);
    annotations::save_dataset(
        annotations::subset_by_images(corpus.dataset, corpus.test_ids),
        out_dir / "test.annjson", config_echo_json);

    annotations::MultiAnnotatorDataset truth;
    truth.classes = corpus.dataset.classes;
    truth.annotators = {"truth"};
    truth.images = corpus.dataset.images;
    for (const auto& img : truth.images) {
        auto it = corpus.truth.find(img.image_id);
        truth.boxes.push_back(
            {it == corpus.truth.end() ? std::vector<LabeledBox>{} : it->second});
    }
    annotations::save_dataset(truth, out_dir / "truth.annjson", config_echo_json);
}

}  // namespace fusedet::simulator
