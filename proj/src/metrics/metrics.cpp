#include "fundus/metrics.hpp"

namespace fundus::metrics {

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_shape(truth)) throw MetricsError("confusion_counts: masks differ in size");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool t = truth.data[i] != 0;
        if (p && t) {
            ++c.tp;
        } else if (p) {
            ++c.fp;
        } else if (t) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

SegScores seg_scores(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    const bool both_empty = c.tp + c.fp == 0 && c.tp + c.fn == 0;
    const double degenerate = both_empty ? 1.0 : 0.0;
    auto ratio = [degenerate](double num, double den) { return den > 0.0 ? num / den : degenerate; };

    SegScores s;
    s.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    if (both_empty) {
        s.f1 = 1.0;
    } else {
        const double pr = s.precision + s.recall;
        s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
    }
    s.jaccard = ratio(tp, tp + fp + fn);
    return s;
}

SegScores mean_seg_scores(std::span<const SegScores> per_image) {
    if (per_image.empty()) throw MetricsError("mean_seg_scores: no scores to average");
    SegScores m;
    for (const SegScores& s : per_image) {
        m.accuracy += s.accuracy;
        m.precision += s.precision;
        m.recall += s.recall;
        m.f1 += s.f1;
        m.jaccard += s.jaccard;
    }
    const double n = static_cast<double>(per_image.size());
    m.accuracy /= n;
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.jaccard /= n;
    return m;
}

DiagScores diag_scores(const ConfusionCounts& c) {
    DiagScores d;
    auto ratio = [&d](std::uint64_t num, std::uint64_t den) {
        if (den == 0) {
            d.undefined = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    d.sensitivity = ratio(c.tp, c.tp + c.fn);
    d.specificity = ratio(c.tn, c.tn + c.fp);
    d.precision = ratio(c.tp, c.tp + c.fp);
    d.npv = ratio(c.tn, c.tn + c.fn);
    d.accuracy = ratio(c.tp + c.tn, c.total());
    return d;
}

BinaryMask structure_mask(const LabelMask& mask, Structure s) {
    const MaskPair p = split_label_mask(mask);
    return s == Structure::disc ? p.disc : p.cup;
}

}  // namespace fundus::metrics
