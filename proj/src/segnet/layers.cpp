#include "fundus/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fundus::segnet {
namespace {

void require(bool ok, SegnetError::Kind kind, const std::string& msg) {
    if (!ok) throw SegnetError(kind, msg);
}

// out[y, x] += w * in[y + dy, x + dx] over the rows/cols where the source is inside the plane.
inline void accumulate_shifted(double* out, const double* in, int h, int w, int dy, int dx, double k) {
    const int y_begin = std::max(0, -dy), y_end = std::min(h, h - dy);
    const int x_begin = std::max(0, -dx), x_end = std::min(w, w - dx);
    for (int y = y_begin; y < y_end; ++y) {
        double* o = out + static_cast<std::size_t>(y) * w;
        const double* s = in + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x_begin; x < x_end; ++x) o[x] += k * s[x];
    }
}

// sum over valid (y, x) of g[y, x] * in[y + dy, x + dx]
inline double correlate_shifted(const double* g, const double* in, int h, int w, int dy, int dx) {
    const int y_begin = std::max(0, -dy), y_end = std::min(h, h - dy);
    const int x_begin = std::max(0, -dx), x_end = std::min(w, w - dx);
    double acc = 0.0;
    for (int y = y_begin; y < y_end; ++y) {
        const double* gr = g + static_cast<std::size_t>(y) * w;
        const double* s = in + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x_begin; x < x_end; ++x) acc += gr[x] * s[x];
    }
    return acc;
}

// in_grad[y + dy, x + dx] += k * g[y, x]
inline void scatter_shifted(double* in_grad, const double* g, int h, int w, int dy, int dx, double k) {
    const int y_begin = std::max(0, -dy), y_end = std::min(h, h - dy);
    const int x_begin = std::max(0, -dx), x_end = std::min(w, w - dx);
    for (int y = y_begin; y < y_end; ++y) {
        const double* gr = g + static_cast<std::size_t>(y) * w;
        double* d = in_grad + static_cast<std::size_t>(y + dy) * w + dx;
        for (int x = x_begin; x < x_end; ++x) d[x] += k * gr[x];
    }
}

template <int K>
Tensor4 conv_forward_impl(const Tensor4& x, const Tensor4& weights, const std::vector<double>& bias) {
    const Shape4& s = x.shape();
    const int out_ch = weights.batch();
    const int in_ch = weights.channels();
    require(s.c == in_ch, SegnetError::Kind::shape_mismatch,
            "conv forward: input has " + std::to_string(s.c) + " channels, layer expects " + std::to_string(in_ch));
    constexpr int pad = K / 2;
    Tensor4 out(s.n, out_ch, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (int o = 0; o < out_ch; ++o) {
            double* dst = out.plane(n, o);
            std::fill(dst, dst + plane, bias[o]);
            for (int i = 0; i < in_ch; ++i) {
                const double* src = x.plane(n, i);
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const double k = weights.at(o, i, ky, kx);
                        if (k != 0.0) accumulate_shifted(dst, src, s.h, s.w, ky - pad, kx - pad, k);
                    }
                }
            }
        }
    }
    return out;
}

template <int K>
ConvGrads conv_backward_impl(const Tensor4& x, const Tensor4& weights, const Tensor4& grad_out) {
    const Shape4& s = x.shape();
    const int out_ch = weights.batch();
    const int in_ch = weights.channels();
    require(s.c == in_ch && grad_out.shape() == Shape4{s.n, out_ch, s.h, s.w}, SegnetError::Kind::shape_mismatch,
            "conv backward: inconsistent shapes " + to_string(s) + " / " + to_string(grad_out.shape()));
    constexpr int pad = K / 2;
    ConvGrads g{Tensor4(s), Tensor4(weights.shape()), std::vector<double>(out_ch, 0.0)};
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (int o = 0; o < out_ch; ++o) {
            const double* go = grad_out.plane(n, o);
            double bsum = 0.0;
            for (std::size_t p = 0; p < plane; ++p) bsum += go[p];
            g.grad_b[o] += bsum;
            for (int i = 0; i < in_ch; ++i) {
                const double* src = x.plane(n, i);
                double* gx = g.grad_x.plane(n, i);
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const int dy = ky - pad, dx = kx - pad;
                        g.grad_w.at(o, i, ky, kx) += correlate_shifted(go, src, s.h, s.w, dy, dx);
                        scatter_shifted(gx, go, s.h, s.w, dy, dx, weights.at(o, i, ky, kx));
                    }
                }
            }
        }
    }
    return g;
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& x, const ConvLayer& layer) {
    return conv_forward_impl<3>(x, layer.weights, layer.bias);
}

ConvGrads conv2d_backward(const Tensor4& x, const ConvLayer& layer, const Tensor4& grad_out) {
    return conv_backward_impl<3>(x, layer.weights, grad_out);
}

Tensor4 projection_forward(const Tensor4& x, const ProjectionLayer& layer) {
    return conv_forward_impl<1>(x, layer.weights, layer.bias);
}

ConvGrads projection_backward(const Tensor4& x, const ProjectionLayer& layer, const Tensor4& grad_out) {
    return conv_backward_impl<1>(x, layer.weights, grad_out);
}

Tensor4 upconv2_forward(const Tensor4& x, const UpConvLayer& layer) {
    const Shape4& s = x.shape();
    const int in_ch = layer.in_channels();
    const int out_ch = layer.out_channels();
    require(s.c == in_ch, SegnetError::Kind::shape_mismatch,
            "upconv forward: input has " + std::to_string(s.c) + " channels, layer expects " + std::to_string(in_ch));
    const int oh = s.h * 2, ow = s.w * 2;
    Tensor4 out(s.n, out_ch, oh, ow);
    for (int n = 0; n < s.n; ++n) {
        for (int o = 0; o < out_ch; ++o) {
            double* dst = out.plane(n, o);
            std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, layer.bias[o]);
            for (int i = 0; i < in_ch; ++i) {
                const double* src = x.plane(n, i);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double k = layer.weights.at(i, o, dy, dx);
                        for (int y = 0; y < s.h; ++y) {
                            double* row = dst + static_cast<std::size_t>(2 * y + dy) * ow + dx;
                            const double* in_row = src + static_cast<std::size_t>(y) * s.w;
                            for (int xx = 0; xx < s.w; ++xx) row[2 * xx] += k * in_row[xx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads upconv2_backward(const Tensor4& x, const UpConvLayer& layer, const Tensor4& grad_out) {
    const Shape4& s = x.shape();
    const int in_ch = layer.in_channels();
    const int out_ch = layer.out_channels();
    require(s.c == in_ch && grad_out.shape() == Shape4{s.n, out_ch, s.h * 2, s.w * 2},
            SegnetError::Kind::shape_mismatch,
            "upconv backward: inconsistent shapes " + to_string(s) + " / " + to_string(grad_out.shape()));
    const int ow = s.w * 2;
    ConvGrads g{Tensor4(s), Tensor4(layer.weights.shape()), std::vector<double>(out_ch, 0.0)};
    for (int n = 0; n < s.n; ++n) {
        for (int o = 0; o < out_ch; ++o) {
            const double* go = grad_out.plane(n, o);
            double bsum = 0.0;
            for (std::size_t p = 0; p < static_cast<std::size_t>(s.h) * 2 * ow; ++p) bsum += go[p];
            g.grad_b[o] += bsum;
            for (int i = 0; i < in_ch; ++i) {
                const double* src = x.plane(n, i);
                double* gx = g.grad_x.plane(n, i);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double k = layer.weights.at(i, o, dy, dx);
                        double acc = 0.0;
                        for (int y = 0; y < s.h; ++y) {
                            const double* grow = go + static_cast<std::size_t>(2 * y + dy) * ow + dx;
                            const double* in_row = src + static_cast<std::size_t>(y) * s.w;
                            double* gx_row = gx + static_cast<std::size_t>(y) * s.w;
                            for (int xx = 0; xx < s.w; ++xx) {
                                acc += grow[2 * xx] * in_row[xx];
                                gx_row[xx] += k * grow[2 * xx];
                            }
                        }
                        g.grad_w.at(i, o, dy, dx) += acc;
                    }
                }
            }
        }
    }
    return g;
}

Tensor4 relu_forward(const Tensor4& x) {
    Tensor4 out(x.shape());
    auto src = x.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
    require(x.shape() == grad_out.shape(), SegnetError::Kind::shape_mismatch, "relu backward: shape mismatch");
    Tensor4 out(x.shape());
    auto src = x.values();
    auto g = grad_out.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? g[i] : 0.0;
    return out;
}

PoolResult maxpool2_forward(const Tensor4& x) {
    const Shape4& s = x.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, SegnetError::Kind::indivisible_dims,
            "maxpool2: odd spatial dims " + to_string(s));
    const int oh = s.h / 2, ow = s.w / 2;
    PoolResult r{Tensor4(s.n, s.c, oh, ow), PoolIndices{s, {}}};
    r.indices.argmax.resize(r.out.size());
    std::size_t k = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = x.index(n, c, 0, 0);
            const double* src = x.plane(n, c);
            double* dst = r.out.plane(n, c);
            for (int y = 0; y < oh; ++y) {
                for (int xx = 0; xx < ow; ++xx, ++k) {
                    std::size_t best = static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
                    const std::size_t cells[3] = {best + 1, best + s.w, best + s.w + 1};
                    for (std::size_t cell : cells) {
                        if (src[cell] > src[best]) best = cell;
                    }
                    dst[static_cast<std::size_t>(y) * ow + xx] = src[best];
                    r.indices.argmax[k] = static_cast<std::uint32_t>(base + best);
                }
            }
        }
    }
    return r;
}

Tensor4 maxpool2_backward(const PoolIndices& indices, const Tensor4& grad_out) {
    const Shape4& in = indices.input;
    require(grad_out.shape() == Shape4{in.n, in.c, in.h / 2, in.w / 2} && indices.argmax.size() == grad_out.size(),
            SegnetError::Kind::shape_mismatch, "maxpool2 backward: shape mismatch");
    Tensor4 out(in);
    auto g = grad_out.values();
    auto dst = out.values();
    for (std::size_t k = 0; k < g.size(); ++k) dst[indices.argmax[k]] += g[k];
    return out;
}

BatchNormResult batchnorm_apply(const Tensor4& x, const BatchNormLayer& layer, Mode mode) {
    const Shape4& s = x.shape();
    require(s.c == layer.channels(), SegnetError::Kind::shape_mismatch, "batchnorm: channel mismatch");
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;
    BatchNormResult r{Tensor4(s), BatchNormCache{mode, Tensor4(s), std::vector<double>(s.c), {}, {}}};
    if (mode == Mode::train) {
        require(count >= 2.0, SegnetError::Kind::degenerate_statistics,
                "batchnorm: train mode needs at least two values per channel, got " + to_string(s));
        r.cache.batch_mean.assign(s.c, 0.0);
        r.cache.batch_var.assign(s.c, 0.0);
    }
    for (int c = 0; c < s.c; ++c) {
        double mean = 0.0, var = 0.0;
        if (mode == Mode::train) {
            for (int n = 0; n < s.n; ++n) {
                const double* src = x.plane(n, c);
                for (std::size_t p = 0; p < plane; ++p) mean += src[p];
            }
            mean /= count;
            for (int n = 0; n < s.n; ++n) {
                const double* src = x.plane(n, c);
                for (std::size_t p = 0; p < plane; ++p) var += (src[p] - mean) * (src[p] - mean);
            }
            var /= count;
            r.cache.batch_mean[c] = mean;
            r.cache.batch_var[c] = var;
        } else {
            mean = layer.running_mean[c];
            var = layer.running_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
        r.cache.inv_std[c] = inv_std;
        for (int n = 0; n < s.n; ++n) {
            const double* src = x.plane(n, c);
            double* xh = r.cache.x_hat.plane(n, c);
            double* dst = r.out.plane(n, c);
            for (std::size_t p = 0; p < plane; ++p) {
                xh[p] = (src[p] - mean) * inv_std;
                dst[p] = layer.gamma[c] * xh[p] + layer.beta[c];
            }
        }
    }
    return r;
}

void update_running_stats(BatchNormLayer& layer, const BatchNormCache& cache) {
    if (cache.mode != Mode::train) return;
    for (int c = 0; c < layer.channels(); ++c) {
        layer.running_mean[c] = layer.momentum * layer.running_mean[c] + (1.0 - layer.momentum) * cache.batch_mean[c];
        layer.running_var[c] = layer.momentum * layer.running_var[c] + (1.0 - layer.momentum) * cache.batch_var[c];
    }
}

BatchNormResult batchnorm_forward(const Tensor4& x, BatchNormLayer& layer, Mode mode) {
    BatchNormResult r = batchnorm_apply(x, layer, mode);
    update_running_stats(layer, r.cache);
    return r;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNormLayer& layer, const Tensor4& grad_out) {
    const Shape4& s = grad_out.shape();
    require(s == cache.x_hat.shape() && s.c == layer.channels(), SegnetError::Kind::shape_mismatch,
            "batchnorm backward: shape mismatch");
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;
    BatchNormGrads g{Tensor4(s), std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
    for (int c = 0; c < s.c; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* go = grad_out.plane(n, c);
            const double* xh = cache.x_hat.plane(n, c);
            for (std::size_t p = 0; p < plane; ++p) {
                sum_g += go[p];
                sum_gx += go[p] * xh[p];
            }
        }
        g.grad_beta[c] = sum_g;
        g.grad_gamma[c] = sum_gx;
        const double scale = layer.gamma[c] * cache.inv_std[c];
        for (int n = 0; n < s.n; ++n) {
            const double* go = grad_out.plane(n, c);
            const double* xh = cache.x_hat.plane(n, c);
            double* gx = g.grad_x.plane(n, c);
            if (cache.mode == Mode::train) {
                for (std::size_t p = 0; p < plane; ++p) {
                    gx[p] = scale * (go[p] - sum_g / count - xh[p] * sum_gx / count);
                }
            } else {
                for (std::size_t p = 0; p < plane; ++p) gx[p] = scale * go[p];
            }
        }
    }
    return g;
}

}  // namespace fundus::segnet
