#include "fundus/segnet.hpp"

#include <algorithm>
#include <cmath>

namespace fundus::segnet {

std::string to_string(const Shape4& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + ")";
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor4::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    const Shape4& sa = a.shape();
    const Shape4& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw SegnetError(SegnetError::Kind::shape_mismatch,
                          "concat_channels: " + to_string(sa) + " vs " + to_string(sb));
    }
    Tensor4 out(sa.n, sa.c + sb.c, sa.h, sa.w);
    const std::size_t plane = sa.plane();
    for (int n = 0; n < sa.n; ++n) {
        if (sa.c > 0) std::copy_n(a.plane(n, 0), plane * sa.c, out.plane(n, 0));
        if (sb.c > 0) std::copy_n(b.plane(n, 0), plane * sb.c, out.plane(n, sa.c));
    }
    return out;
}

std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, int a_channels) {
    const Shape4& s = t.shape();
    if (a_channels < 0 || a_channels > s.c) {
        throw SegnetError(SegnetError::Kind::shape_mismatch, "split_channels: bad split point");
    }
    Tensor4 a(s.n, a_channels, s.h, s.w);
    Tensor4 b(s.n, s.c - a_channels, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        if (a_channels > 0) std::copy_n(t.plane(n, 0), plane * a_channels, a.plane(n, 0));
        if (s.c - a_channels > 0) std::copy_n(t.plane(n, a_channels), plane * (s.c - a_channels), b.plane(n, 0));
    }
    return {std::move(a), std::move(b)};
}

ProbMap softmax_channels(const Tensor4& logits) {
    const Shape4& s = logits.shape();
    ProbMap out(s);
    const std::size_t plane = s.plane();
    std::vector<double> row(s.c);
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            double mx = -INFINITY;
            for (int c = 0; c < s.c; ++c) {
                row[c] = logits.plane(n, c)[p];
                mx = std::max(mx, row[c]);
            }
            double sum = 0.0;
            for (int c = 0; c < s.c; ++c) {
                row[c] = std::exp(row[c] - mx);
                sum += row[c];
            }
            for (int c = 0; c < s.c; ++c) out.plane(n, c)[p] = row[c] / sum;
        }
    }
    return out;
}

LossResult cross_entropy_loss(const ProbMap& probs, const ProbMap& target) {
    if (!(probs.shape() == target.shape())) {
        throw SegnetError(SegnetError::Kind::shape_mismatch,
                          "cross_entropy_loss: " + to_string(probs.shape()) + " vs " + to_string(target.shape()));
    }
    const Shape4& s = probs.shape();
    const std::size_t plane = s.plane();
    const double pixels = static_cast<double>(s.n) * plane;
    LossResult r{0.0, Tensor4(s)};
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            int hot = -1;
            for (int c = 0; c < s.c; ++c) {
                const double y = target.plane(n, c)[p];
                if (y == 1.0 && hot < 0) {
                    hot = c;
                } else if (y != 0.0) {
                    throw SegnetError(SegnetError::Kind::invalid_target, "cross_entropy_loss: target is not one-hot");
                }
            }
            if (hot < 0) {
                throw SegnetError(SegnetError::Kind::invalid_target, "cross_entropy_loss: target is not one-hot");
            }
            total -= std::log(std::clamp(probs.plane(n, hot)[p], 1e-12, 1.0));
            for (int c = 0; c < s.c; ++c) {
                r.grad_logits.plane(n, c)[p] = (probs.plane(n, c)[p] - target.plane(n, c)[p]) / pixels;
            }
        }
    }
    r.loss = total / pixels;
    return r;
}

Tensor4 one_hot(std::span<const LabelMask> masks, int n_classes) {
    if (masks.empty()) return {};
    const int h = masks.front().height;
    const int w = masks.front().width;
    Tensor4 out(static_cast<int>(masks.size()), n_classes, h, w);
    for (std::size_t n = 0; n < masks.size(); ++n) {
        const LabelMask& m = masks[n];
        if (!m.same_shape(w, h)) {
            throw SegnetError(SegnetError::Kind::shape_mismatch, "one_hot: masks differ in size");
        }
        for (std::size_t p = 0; p < m.size(); ++p) {
            const int label = m.data[p];
            if (label >= n_classes) {
                throw SegnetError(SegnetError::Kind::invalid_target, "one_hot: label out of range");
            }
            out.plane(static_cast<int>(n), label)[p] = 1.0;
        }
    }
    return out;
}

Tensor4 to_input(std::span<const GrayImage> images) {
    if (images.empty()) return {};
    const int h = images.front().height;
    const int w = images.front().width;
    Tensor4 out(static_cast<int>(images.size()), 1, h, w);
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (!images[n].same_shape(w, h)) {
            throw SegnetError(SegnetError::Kind::shape_mismatch, "to_input: images differ in size");
        }
        double* dst = out.plane(static_cast<int>(n), 0);
        for (std::size_t p = 0; p < images[n].size(); ++p) dst[p] = images[n].data[p] / 255.0;
    }
    return out;
}

std::vector<LabelMask> argmax_labels(const ProbMap& probs) {
    const Shape4& s = probs.shape();
    std::vector<LabelMask> out;
    out.reserve(s.n);
    for (int n = 0; n < s.n; ++n) {
        LabelMask m(s.w, s.h);
        for (std::size_t p = 0; p < s.plane(); ++p) {
            int best = 0;
            double best_p = probs.plane(n, 0)[p];
            for (int c = 1; c < s.c; ++c) {
                const double v = probs.plane(n, c)[p];
                if (v > best_p) {
                    best_p = v;
                    best = c;
                }
            }
            m.data[p] = static_cast<std::uint8_t>(best);
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace fundus::segnet
