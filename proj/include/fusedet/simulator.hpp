#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusedet/annotations.hpp"

namespace fusedet::simulator {

// Rectangles-on-noise scenes: each object is an axis-aligned rectangle of
// class-specific intensity on a noisy background.
struct SceneConfig {
    int width = 64;
    int height = 64;
    int num_classes = 2;
    int objects_min = 1;
    int objects_max = 3;
    int object_size_min = 10;
    int object_size_max = 24;
    std::vector<int> intensity_per_class;  // empty -> 220 - 50*class
    int background_intensity = 60;
    double background_noise_sigma = 8.0;
};

// Per-annotator corruption of the true boxes.
struct AnnotatorProfile {
    double jitter_sigma = 0.0;   // gaussian noise added to each coordinate
    double miss_rate = 0.0;      // probability of dropping a true box
    double spurious_rate = 0.0;  // Poisson mean of extra random boxes
    double class_confusion = 0.0;  // probability of relabeling to another class
};

struct Scene {
    annotations::PixelGrid pixels;
    std::vector<annotations::LabeledBox> truth;
};

struct PlacementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int class_intensity(const SceneConfig& cfg, int class_id);

// Deterministic in (seed, cfg). Objects never overlap; throws PlacementError
// when an object cannot be placed within 100 attempts.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Apply one annotator's noise model to the true boxes. Jittered boxes are
// re-ordered, re-expanded to at least 2 px per axis around their center, and
// kept inside the image. Deterministic in seed.
std::vector<annotations::LabeledBox> corrupt_annotations(
    const std::vector<annotations::LabeledBox>& truth,
    const AnnotatorProfile& profile, int width, int height, int num_classes,
    std::uint64_t seed);

struct CorpusConfig {
    SceneConfig scene;
    std::vector<AnnotatorProfile> profiles;
    int n_images = 100;        // used when quota is not set
    double train_fraction = 0.8;
    // When set, keep generating images until exactly (n_train, n_test) are
    // collected on their hash-assigned sides.
    std::optional<std::pair<int, int>> quota;
};

struct Corpus {
    annotations::MultiAnnotatorDataset dataset;  // annotator views, all images
    std::map<std::string, annotations::PixelGrid> pixels;
    // Exact generating boxes, for evaluation only; never serialized into the
    // annotator dataset.
    std::map<std::string, std::vector<annotations::LabeledBox>> truth;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

// T = |profiles| annotators named a1..aT. The train/test side of each image
// is a pure function of its id (FNV-1a hash vs train_fraction); scene and
// corruption draws use independent per-(stream, image-index) substreams, so
// the corpus is a pure function of (seed, config).
Corpus build_corpus(const CorpusConfig& cfg, std::uint64_t seed);

// Write train.annjson / test.annjson / truth.annjson plus images/<id>.pgm.
// config_echo_json is embedded into each annjson for provenance.
void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir,
                  const std::string& config_echo_json);

}  // namespace fusedet::simulator
