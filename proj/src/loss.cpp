#include "fusedet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fusedet::loss {

const char* to_string(Variant v) { return v == Variant::eq1 ? "eq1" : "eq2"; }

const char* to_string(BackgroundWeight m) {
    return m == BackgroundWeight::unit ? "unit" : "mean_c";
}

Variant variant_from_string(const std::string& s) {
    if (s == "eq1") return Variant::eq1;
    if (s == "eq2") return Variant::eq2;
    throw std::invalid_argument("unknown loss variant '" + s + "' (eq1|eq2)");
}

BackgroundWeight background_weight_from_string(const std::string& s) {
    if (s == "unit") return BackgroundWeight::unit;
    if (s == "mean_c") return BackgroundWeight::mean_c;
    throw std::invalid_argument("unknown background weight mode '" + s +
                                "' (unit|mean_c)");
}

std::array<double, 4> box_offsets(const geometry::Box& anchor,
                                  const geometry::Box& box) {
    double wa = anchor.width(), ha = anchor.height();
    double wb = box.width(), hb = box.height();
    if (wa <= 0.0 || ha <= 0.0)
        throw std::invalid_argument("box_offsets: degenerate anchor");
    if (wb <= 0.0 || hb <= 0.0)
        throw std::invalid_argument("box_offsets: zero-size box (log undefined)");
    return {(box.cx() - anchor.cx()) / wa, (box.cy() - anchor.cy()) / ha,
            std::log(wb / wa), std::log(hb / ha)};
}

geometry::Box apply_offsets(const geometry::Box& anchor,
                            const std::array<double, 4>& t) {
    double wa = anchor.width(), ha = anchor.height();
    double cx = anchor.cx() + t[0] * wa;
    double cy = anchor.cy() + t[1] * ha;
    double w = wa * std::exp(t[2]);
    double h = ha * std::exp(t[3]);
    return geometry::Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

AnchorTargets encode_targets(const std::vector<geometry::Box>& anchors,
                             const std::vector<fusion::FusedBox>& fused,
                             const LossConfig& cfg) {
    if (anchors.empty())
        throw std::invalid_argument("encode_targets: no anchors");
    for (const fusion::FusedBox& fb : fused)
        if (fb.box.width() <= 0.0 || fb.box.height() <= 0.0)
            throw std::invalid_argument(
                "encode_targets: fused box with zero width/height");

    double background_weight = 1.0;
    if (cfg.background_weight_mode == BackgroundWeight::mean_c && !fused.empty()) {
        double s = 0.0;
        for (const fusion::FusedBox& fb : fused) s += fb.confidence;
        background_weight = s / double(fused.size());
    }

    AnchorTargets targets;
    targets.reserve(anchors.size());
    for (const geometry::Box& anchor : anchors) {
        AnchorTarget t;
        t.anchor = anchor;
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t k = 0; k < fused.size(); ++k) {
            double v = geometry::iou(anchor, fused[k].box);
            if (v > best_iou) {
                best_iou = v;
                best = int(k);
            }
        }
        if (best >= 0 && best_iou > cfg.eta) {
            const fusion::FusedBox& fb = fused[std::size_t(best)];
            t.matched = true;
            t.class_target = fb.class_id;
            t.box_target = box_offsets(anchor, fb.box);
            t.weight = fb.confidence;
        } else {
            t.matched = false;
            t.class_target = cfg.num_classes;  // background
            t.weight = background_weight;
        }
        targets.push_back(t);
    }
    return targets;
}

namespace {

void check_shapes(const Prediction& pred, const AnchorTargets& targets,
                  const LossConfig& cfg) {
    if (pred.num_classes != cfg.num_classes)
        throw std::invalid_argument("loss: prediction/config class count mismatch");
    std::size_t a = targets.size();
    if (a == 0) throw std::invalid_argument("loss: no anchors");
    if (pred.num_anchors != int(a) ||
        pred.class_logits.size() != a * std::size_t(cfg.num_classes + 1) ||
        pred.box_offsets.size() != a * 4)
        throw std::invalid_argument("loss: prediction shape mismatch");
    for (double v : pred.class_logits)
        if (!std::isfinite(v)) throw std::invalid_argument("loss: non-finite logit");
    for (double v : pred.box_offsets)
        if (!std::isfinite(v)) throw std::invalid_argument("loss: non-finite offset");
}

double smooth_l1(double d) {
    double ad = std::fabs(d);
    return ad < 1.0 ? 0.5 * d * d : ad - 0.5;
}

double smooth_l1_grad(double d) {
    if (std::fabs(d) < 1.0) return d;
    return d > 0.0 ? 1.0 : -1.0;
}

// log-sum-exp of the anchor's logits; also fills softmax when given.
double log_sum_exp(const double* logits, int n, double* softmax = nullptr) {
    double m = logits[0];
    for (int j = 1; j < n; ++j) m = std::max(m, logits[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(logits[j] - m);
    double lse = m + std::log(s);
    if (softmax)
        for (int j = 0; j < n; ++j) softmax[j] = std::exp(logits[j] - lse);
    return lse;
}

LossBreakdown evaluate(const Prediction& pred, const AnchorTargets& targets,
                       const LossConfig& cfg, bool use_weights) {
    check_shapes(pred, targets, cfg);
    int nc = cfg.num_classes + 1;
    std::size_t a_count = targets.size();

    LossBreakdown out;
    out.per_anchor.reserve(a_count);
    double total = 0.0, cls_total = 0.0, loc_total = 0.0;
    for (std::size_t a = 0; a < a_count; ++a) {
        const AnchorTarget& t = targets[a];
        const double* logits = pred.class_logits.data() + a * std::size_t(nc);
        double ce = log_sum_exp(logits, nc) - logits[t.class_target];
        double loc = 0.0;
        if (t.matched) {
            const double* off = pred.box_offsets.data() + a * 4;
            double s = 0.0;
            for (int j = 0; j < 4; ++j) s += smooth_l1(off[j] - t.box_target[j]);
            loc = cfg.beta * s;
        }
        double w = use_weights ? t.weight : 1.0;
        double term = w * (ce + loc);
        out.per_anchor.push_back(term);
        total += term;
        cls_total += w * ce;
        loc_total += w * loc;
    }
    out.value = total / double(a_count);
    out.cls = cls_total / double(a_count);
    out.loc = loc_total / double(a_count);
    return out;
}

}  // namespace

LossBreakdown loss_eq1(const Prediction& pred, const AnchorTargets& targets,
                       const LossConfig& cfg) {
    return evaluate(pred, targets, cfg, false);
}

LossBreakdown loss_eq2(const Prediction& pred, const AnchorTargets& targets,
                       const LossConfig& cfg) {
    return evaluate(pred, targets, cfg, true);
}

LossGradient loss_gradient(const Prediction& pred, const AnchorTargets& targets,
                           const LossConfig& cfg, Variant variant) {
    check_shapes(pred, targets, cfg);
    int nc = cfg.num_classes + 1;
    std::size_t a_count = targets.size();
    double inv_a = 1.0 / double(a_count);

    LossGradient g;
    g.d_class_logits.assign(pred.class_logits.size(), 0.0);
    g.d_box_offsets.assign(pred.box_offsets.size(), 0.0);
    std::vector<double> softmax(std::size_t(nc), 0.0);
    for (std::size_t a = 0; a < a_count; ++a) {
        const AnchorTarget& t = targets[a];
        double w = variant == Variant::eq2 ? t.weight : 1.0;
        const double* logits = pred.class_logits.data() + a * std::size_t(nc);
        log_sum_exp(logits, nc, softmax.data());
        double* dl = g.d_class_logits.data() + a * std::size_t(nc);
        for (int j = 0; j < nc; ++j) {
            double one_hot = (j == t.class_target) ? 1.0 : 0.0;
            dl[j] = w * (softmax[std::size_t(j)] - one_hot) * inv_a;
        }
        if (t.matched) {
            const double* off = pred.box_offsets.data() + a * 4;
            double* doff = g.d_box_offsets.data() + a * 4;
            for (int j = 0; j < 4; ++j)
                doff[j] =
                    w * cfg.beta * smooth_l1_grad(off[j] - t.box_target[j]) * inv_a;
        }
    }
    return g;
}

}  // namespace fusedet::loss
