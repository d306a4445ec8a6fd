#include "fusedet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "fusedet/rng.hpp"
#include "json.hpp"

namespace fusedet::evaluation {

namespace {

using annotations::LabeledBox;

std::string format_fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

MatchResult match_predictions(const std::vector<LabeledBox>& preds,
                              const std::vector<LabeledBox>& gts,
                              double iou_threshold, int num_classes) {
    MatchResult out;
    out.n_gt_per_class.assign(std::size_t(num_classes), 0);
    for (const LabeledBox& gt : gts) {
        if (gt.class_id < 0 || gt.class_id >= num_classes)
            throw std::invalid_argument("match_predictions: GT class out of range");
        ++out.n_gt_per_class[std::size_t(gt.class_id)];
    }
    std::vector<LabeledBox> ordered = preds;
    for (const LabeledBox& p : ordered)
        if (p.class_id < 0 || p.class_id >= num_classes)
            throw std::invalid_argument(
                "match_predictions: prediction class out of range");
    std::sort(ordered.begin(), ordered.end(),
              [](const LabeledBox& a, const LabeledBox& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.class_id != b.class_id) return a.class_id < b.class_id;
                  return geometry::lex_less(a.box, b.box);
              });
    std::vector<bool> taken(gts.size(), false);
    for (const LabeledBox& p : ordered) {
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].class_id != p.class_id) continue;
            double v = geometry::iou(p.box, gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best = int(g);
            }
        }
        PredMatch m;
        m.score = p.score;
        m.class_id = p.class_id;
        m.box = p.box;
        if (best >= 0 && best_iou >= iou_threshold) {
            m.tp = true;
            m.matched_gt = best;
            taken[std::size_t(best)] = true;
        }
        out.preds.push_back(m);
    }
    return out;
}

double average_precision(const std::vector<std::pair<double, bool>>& ranked,
                         int n_gt) {
    if (n_gt <= 0) return 0.0;
    std::size_t n = ranked.size();
    if (n == 0) return 0.0;
    std::vector<double> precision(n);
    int tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ranked[i].second) ++tp;
        precision[i] = double(tp) / double(i + 1);
    }
    // monotone envelope from the right
    for (std::size_t i = n - 1; i-- > 0;)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (ranked[i].second) ap += precision[i] / double(n_gt);
    return ap;
}

EvalReport map_at(const std::vector<std::vector<LabeledBox>>& preds_by_image,
                  const std::vector<std::vector<LabeledBox>>& gts_by_image,
                  int num_classes, double iou_threshold,
                  const std::string& method) {
    if (preds_by_image.size() != gts_by_image.size())
        throw std::invalid_argument("map_at: image count mismatch");
    if (num_classes < 1) throw std::invalid_argument("map_at: num_classes < 1");

    struct Entry {
        double score;
        bool tp;
        int image;
        geometry::Box box;
    };
    std::vector<std::vector<Entry>> per_class(std::size_t(num_classes),
                                              std::vector<Entry>{});
    EvalReport report;
    report.method = method;
    report.iou_threshold = iou_threshold;
    report.n_gt_per_class.assign(std::size_t(num_classes), 0);
    report.n_images = int(preds_by_image.size());

    for (std::size_t i = 0; i < preds_by_image.size(); ++i) {
        MatchResult mr = match_predictions(preds_by_image[i], gts_by_image[i],
                                           iou_threshold, num_classes);
        for (int c = 0; c < num_classes; ++c)
            report.n_gt_per_class[std::size_t(c)] +=
                mr.n_gt_per_class[std::size_t(c)];
        for (const PredMatch& m : mr.preds)
            per_class[std::size_t(m.class_id)].push_back(
                Entry{m.score, m.tp, int(i), m.box});
        report.n_preds += int(mr.preds.size());
        report.n_gts += int(gts_by_image[i].size());
    }

    report.ap_per_class.assign(std::size_t(num_classes), 0.0);
    double ap_sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        auto& entries = per_class[std::size_t(c)];
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.image != b.image) return a.image < b.image;
            return geometry::lex_less(a.box, b.box);
        });
        std::vector<std::pair<double, bool>> ranked;
        ranked.reserve(entries.size());
        for (const Entry& e : entries) ranked.emplace_back(e.score, e.tp);
        int n_gt = report.n_gt_per_class[std::size_t(c)];
        double ap = average_precision(ranked, n_gt);
        report.ap_per_class[std::size_t(c)] = ap;
        if (n_gt > 0) {
            ap_sum += ap;
            ++counted;
        }
    }
    report.map = counted > 0 ? ap_sum / double(counted) : 0.0;
    return report;
}

std::string report_tsv_header(int num_classes) {
    std::string s = "method\tseed\tmAP";
    for (int c = 0; c < num_classes; ++c)
        s += "\tAP_class_" + std::to_string(c);
    return s + "\n";
}

std::string report_tsv_row(const EvalReport& report, const std::string& seed_label) {
    std::string s = report.method + "\t" + seed_label + "\t" + format_fixed(report.map);
    for (double ap : report.ap_per_class) s += "\t" + format_fixed(ap);
    return s + "\n";
}

CompareConfig standard_compare_config() {
    CompareConfig cfg;
    cfg.profiles = {simulator::AnnotatorProfile{1.5, 0.1, 0.1, 0.0},
                    simulator::AnnotatorProfile{2.5, 0.1, 0.1, 0.0},
                    simulator::AnnotatorProfile{3.5, 0.1, 0.1, 0.0}};
    cfg.train.loss.num_classes = cfg.scene.num_classes;
    return cfg;
}

const std::vector<std::pair<std::string, double>>& reference_scores() {
    static const std::vector<std::pair<std::string, double>> scores = {
        {"Baseline", 0.148},  {"Annotator #1", 0.121}, {"Annotator #2", 0.132},
        {"Annotator #3", 0.124}, {"Ensemble", 0.154},  {"Ours", 0.158},
    };
    return scores;
}

CompareResult run_comparison(const CompareConfig& cfg) {
    if (cfg.profiles.empty())
        throw std::invalid_argument("run_comparison: no annotator profiles");
    if (cfg.seeds.empty())
        throw std::invalid_argument("run_comparison: no seeds");

    const int T = int(cfg.profiles.size());
    CompareResult result;
    result.num_classes = cfg.scene.num_classes;
    result.method_order.push_back("Baseline");
    for (int t = 0; t < T; ++t)
        result.method_order.push_back("Annotator #" + std::to_string(t + 1));
    result.method_order.push_back("Ensemble");
    result.method_order.push_back("Ours");

    // per method, per seed
    std::map<std::string, std::vector<EvalReport>> reports;

    for (std::uint64_t seed : cfg.seeds) {
        simulator::CorpusConfig cc;
        cc.scene = cfg.scene;
        cc.profiles = cfg.profiles;
        cc.train_fraction = cfg.train_fraction;
        cc.quota = std::make_pair(cfg.n_train, cfg.n_test);
        simulator::Corpus corpus = simulator::build_corpus(cc, seed);

        annotations::MultiAnnotatorDataset train_ds =
            annotations::subset_by_images(corpus.dataset, corpus.train_ids);
        fusion::FusedDataset fused = fusion::fuse_dataset(train_ds, cfg.wbf);

        auto make_train_images =
            [&](auto labels_for) -> std::vector<detector::TrainImage> {
            std::vector<detector::TrainImage> out;
            out.reserve(corpus.train_ids.size());
            for (std::size_t i = 0; i < train_ds.images.size(); ++i) {
                const std::string& id = train_ds.images[i].image_id;
                out.push_back(detector::TrainImage{id, corpus.pixels.at(id),
                                                   labels_for(i, id)});
            }
            return out;
        };

        detector::TrainConfig tc = cfg.train;
        tc.loss.num_classes = cfg.scene.num_classes;
        tc.seed = rng::derive(cfg.train.seed, 0xDE7EC70A, seed);

        auto train_with = [&](loss::Variant variant,
                              const std::vector<detector::TrainImage>& imgs) {
            detector::TrainConfig c = tc;
            c.loss_variant = variant;
            return detector::train(imgs, c).model;
        };

        // pooled union of every annotator's boxes, all at confidence 1
        detector::DetectorModel baseline = train_with(
            loss::Variant::eq1, make_train_images([&](std::size_t i, const std::string&) {
                std::vector<LabeledBox> pooled;
                for (const auto& per_annotator : train_ds.boxes[i])
                    pooled.insert(pooled.end(), per_annotator.begin(),
                                  per_annotator.end());
                return detector::as_unit_confidence(pooled);
            }));

        std::vector<detector::DetectorModel> annotator_models;
        for (int t = 0; t < T; ++t)
            annotator_models.push_back(train_with(
                loss::Variant::eq1,
                make_train_images([&](std::size_t i, const std::string&) {
                    return detector::as_unit_confidence(
                        train_ds.boxes[i][std::size_t(t)]);
                })));

        detector::DetectorModel ours = train_with(
            loss::Variant::eq2, make_train_images([&](std::size_t, const std::string& id) {
                return fused.fused.at(id);
            }));

        // predictions on the held-out images
        std::vector<std::vector<LabeledBox>> gts;
        std::vector<std::vector<LabeledBox>> baseline_preds, ours_preds,
            ensemble_preds;
        std::vector<std::vector<std::vector<LabeledBox>>> annotator_preds(
            std::size_t(T), std::vector<std::vector<LabeledBox>>{});
        for (const std::string& id : corpus.test_ids) {
            const annotations::PixelGrid& px = corpus.pixels.at(id);
            gts.push_back(corpus.truth.at(id));
            baseline_preds.push_back(
                detector::predict(baseline, px, cfg.score_threshold, cfg.nms_iou));
            ours_preds.push_back(
                detector::predict(ours, px, cfg.score_threshold, cfg.nms_iou));
            std::vector<std::vector<LabeledBox>> per_model;
            for (int t = 0; t < T; ++t) {
                per_model.push_back(detector::predict(
                    annotator_models[std::size_t(t)], px, cfg.score_threshold,
                    cfg.nms_iou));
                annotator_preds[std::size_t(t)].push_back(per_model.back());
            }
            ensemble_preds.push_back(detector::fuse_ensemble(per_model, cfg.wbf));
        }

        int k = cfg.scene.num_classes;
        reports["Baseline"].push_back(
            map_at(baseline_preds, gts, k, cfg.map_iou, "Baseline"));
        for (int t = 0; t < T; ++t) {
            std::string name = "Annotator #" + std::to_string(t + 1);
            reports[name].push_back(
                map_at(annotator_preds[std::size_t(t)], gts, k, cfg.map_iou, name));
        }
        reports["Ensemble"].push_back(
            map_at(ensemble_preds, gts, k, cfg.map_iou, "Ensemble"));
        reports["Ours"].push_back(map_at(ours_preds, gts, k, cfg.map_iou, "Ours"));
    }

    for (const std::string& method : result.method_order) {
        const auto& rs = reports.at(method);
        std::vector<double> ap_mean(std::size_t(result.num_classes), 0.0);
        double map_mean = 0.0;
        for (std::size_t s = 0; s < rs.size(); ++s) {
            CompareRow row;
            row.method = method;
            row.seed_label = std::to_string(cfg.seeds[s]);
            row.map = rs[s].map;
            row.ap_per_class = rs[s].ap_per_class;
            result.rows.push_back(row);
            map_mean += rs[s].map;
            for (int c = 0; c < result.num_classes; ++c)
                ap_mean[std::size_t(c)] += rs[s].ap_per_class[std::size_t(c)];
        }
        map_mean /= double(rs.size());
        for (double& v : ap_mean) v /= double(rs.size());
        double map_var = 0.0;
        std::vector<double> ap_var(std::size_t(result.num_classes), 0.0);
        if (rs.size() > 1) {
            for (const EvalReport& r : rs) {
                map_var += (r.map - map_mean) * (r.map - map_mean);
                for (int c = 0; c < result.num_classes; ++c) {
                    double d = r.ap_per_class[std::size_t(c)] - ap_mean[std::size_t(c)];
                    ap_var[std::size_t(c)] += d * d;
                }
            }
            map_var /= double(rs.size() - 1);
            for (double& v : ap_var) v /= double(rs.size() - 1);
        }
        CompareRow mean_row{method, "mean", map_mean, ap_mean};
        result.rows.push_back(mean_row);
        std::vector<double> ap_sd;
        for (double v : ap_var) ap_sd.push_back(std::sqrt(v));
        CompareRow sd_row{method, "sd", std::sqrt(map_var), ap_sd};
        result.rows.push_back(sd_row);
        result.mean_map[method] = map_mean;
        result.sd_map[method] = std::sqrt(map_var);
    }
    return result;
}

std::string comparison_tsv(const CompareResult& result,
                           const std::string& config_echo_json) {
    std::ostringstream out;
    if (!config_echo_json.empty()) out << "# config\t" << config_echo_json << "\n";
    for (const auto& [method, score] : reference_scores())
        out << "# reference_vindr_map@0.4\t" << method << "\t" << score << "\n";
    out << report_tsv_header(result.num_classes);
    for (const CompareRow& row : result.rows) {
        out << row.method << "\t" << row.seed_label << "\t" << format_fixed(row.map);
        for (double ap : row.ap_per_class) out << "\t" << format_fixed(ap);
        out << "\n";
    }
    return out.str();
}

}  // namespace fusedet::evaluation
