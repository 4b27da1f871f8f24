#include "fundus/random.hpp"
#include "fundus/segnet.hpp"

#include <cmath>

namespace fundus::segnet {
namespace {

constexpr int kDepth = UNetModel::kDepth;

void he_normal(Tensor4& w, int fan_in, Rng& rng) {
    const double sd = std::sqrt(2.0 / fan_in);
    for (double& v : w.values()) v = sd * rng.normal();
}

void init_block(ConvBlock& b, Rng& rng) {
    he_normal(b.conv1.weights, b.conv1.in_channels() * 9, rng);
    he_normal(b.conv2.weights, b.conv2.in_channels() * 9, rng);
}

Tensor4 block_forward(const ConvBlock& b, const Tensor4& x, Mode mode, BlockCache* cache) {
    BatchNormResult bn1 = batchnorm_apply(conv2d_forward(x, b.conv1), b.bn1, mode);
    Tensor4 act1 = relu_forward(bn1.out);
    BatchNormResult bn2 = batchnorm_apply(conv2d_forward(act1, b.conv2), b.bn2, mode);
    Tensor4 out = relu_forward(bn2.out);
    if (cache) {
        cache->input = x;
        cache->bn1 = std::move(bn1.cache);
        cache->pre1 = std::move(bn1.out);
        cache->act1 = std::move(act1);
        cache->bn2 = std::move(bn2.cache);
        cache->pre2 = std::move(bn2.out);
    }
    return out;
}

Tensor4 block_backward(const ConvBlock& b, const BlockCache& cache, const Tensor4& grad_out, ConvBlock& grads) {
    BatchNormGrads bn2 = batchnorm_backward(cache.bn2, b.bn2, relu_backward(cache.pre2, grad_out));
    ConvGrads c2 = conv2d_backward(cache.act1, b.conv2, bn2.grad_x);
    BatchNormGrads bn1 = batchnorm_backward(cache.bn1, b.bn1, relu_backward(cache.pre1, c2.grad_x));
    ConvGrads c1 = conv2d_backward(cache.input, b.conv1, bn1.grad_x);

    grads.conv1.weights = std::move(c1.grad_w);
    grads.conv1.bias = std::move(c1.grad_b);
    grads.bn1.gamma = std::move(bn1.grad_gamma);
    grads.bn1.beta = std::move(bn1.grad_beta);
    grads.conv2.weights = std::move(c2.grad_w);
    grads.conv2.bias = std::move(c2.grad_b);
    grads.bn2.gamma = std::move(bn2.grad_gamma);
    grads.bn2.beta = std::move(bn2.grad_beta);
    return std::move(c1.grad_x);
}

/// Returns logits. `cache` may be null for inference.
Tensor4 forward_impl(const UNetModel& model, const Tensor4& x, Mode mode, UNetCache* cache) {
    check_input_shape(model, x.shape());
    if (cache) {
        cache->revision = model.revision;
        cache->input_shape = x.shape();
    }
    std::array<Tensor4, kDepth> skips;
    Tensor4 h = x;
    for (int i = 0; i < kDepth; ++i) {
        skips[i] = block_forward(model.encoder[i], h, mode, cache ? &cache->encoder[i] : nullptr);
        PoolResult pooled = maxpool2_forward(skips[i]);
        h = std::move(pooled.out);
        if (cache) cache->pools[i] = std::move(pooled.indices);
    }
    h = block_forward(model.bottleneck, h, mode, cache ? &cache->bottleneck : nullptr);
    for (int i = kDepth - 1; i >= 0; --i) {
        Tensor4 up = upconv2_forward(h, model.up[i]);
        if (cache) cache->up_inputs[i] = std::move(h);
        h = block_forward(model.decoder[i], concat_channels(up, skips[i]), mode,
                          cache ? &cache->decoder[i] : nullptr);
    }
    Tensor4 logits = projection_forward(h, model.head);
    if (cache) {
        cache->head_input = std::move(h);
        cache->skips = std::move(skips);
    }
    return logits;
}

template <typename Fn>
void for_each_bn(UNetModel& model, const UNetCache& cache, Fn&& fn) {
    for (int i = 0; i < kDepth; ++i) {
        fn(model.encoder[i].bn1, cache.encoder[i].bn1);
        fn(model.encoder[i].bn2, cache.encoder[i].bn2);
        fn(model.decoder[i].bn1, cache.decoder[i].bn1);
        fn(model.decoder[i].bn2, cache.decoder[i].bn2);
    }
    fn(model.bottleneck.bn1, cache.bottleneck.bn1);
    fn(model.bottleneck.bn2, cache.bottleneck.bn2);
}

std::vector<std::uint32_t> dims_of(const Tensor4& t) {
    const Shape4& s = t.shape();
    return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
            static_cast<std::uint32_t>(s.w)};
}

std::vector<std::uint32_t> dims_of(const std::vector<double>& v) { return {static_cast<std::uint32_t>(v.size())}; }

template <typename Block, typename Model>
std::vector<Block> collect_blocks(Model& model) {
    std::vector<Block> out;
    auto add = [&out](std::string name, auto& buffer, bool trainable) {
        Block b;
        b.name = std::move(name);
        b.dims = dims_of(buffer);
        if constexpr (requires { buffer.values(); }) {
            b.data = buffer.values();
        } else {
            b.data = buffer;
        }
        b.trainable = trainable;
        out.push_back(std::move(b));
    };
    auto add_conv = [&add](const std::string& prefix, auto& conv) {
        add(prefix + ".weight", conv.weights, true);
        add(prefix + ".bias", conv.bias, true);
    };
    auto add_bn = [&add](const std::string& prefix, auto& bn) {
        add(prefix + ".gamma", bn.gamma, true);
        add(prefix + ".beta", bn.beta, true);
        add(prefix + ".running_mean", bn.running_mean, false);
        add(prefix + ".running_var", bn.running_var, false);
    };
    auto add_block = [&](const std::string& prefix, auto& block) {
        add_conv(prefix + ".conv1", block.conv1);
        add_bn(prefix + ".bn1", block.bn1);
        add_conv(prefix + ".conv2", block.conv2);
        add_bn(prefix + ".bn2", block.bn2);
    };
    for (int i = 0; i < kDepth; ++i) add_block("enc" + std::to_string(i), model.encoder[i]);
    add_block("bottleneck", model.bottleneck);
    for (int i = kDepth - 1; i >= 0; --i) {
        add_conv("up" + std::to_string(i), model.up[i]);
        add_block("dec" + std::to_string(i), model.decoder[i]);
    }
    add_conv("head", model.head);
    return out;
}

}  // namespace

UNetModel make_unet_shape(int base_channels, int n_classes) {
    if (base_channels <= 0 || n_classes < 2) {
        throw SegnetError(SegnetError::Kind::invalid_config, "U-Net needs base_channels > 0 and n_classes >= 2");
    }
    UNetModel m;
    m.base_channels = base_channels;
    m.n_classes = n_classes;
    int in_ch = 1;
    for (int i = 0; i < kDepth; ++i) {
        m.encoder[i] = ConvBlock(in_ch, m.stage_channels(i));
        in_ch = m.stage_channels(i);
    }
    m.bottleneck = ConvBlock(in_ch, m.stage_channels(kDepth));
    for (int i = kDepth - 1; i >= 0; --i) {
        const int ch = m.stage_channels(i);
        m.up[i] = UpConvLayer(m.stage_channels(i + 1), ch);
        m.decoder[i] = ConvBlock(2 * ch, ch);
    }
    m.head = ProjectionLayer(m.stage_channels(0), n_classes);
    return m;
}

UNetModel make_unet(int base_channels, int n_classes, std::uint64_t seed) {
    UNetModel m = make_unet_shape(base_channels, n_classes);
    Rng rng(seed);
    for (int i = 0; i < kDepth; ++i) init_block(m.encoder[i], rng);
    init_block(m.bottleneck, rng);
    for (int i = kDepth - 1; i >= 0; --i) {
        he_normal(m.up[i].weights, m.up[i].in_channels(), rng);
        init_block(m.decoder[i], rng);
    }
    he_normal(m.head.weights, m.head.in_channels(), rng);
    return m;
}

std::vector<ParamBlock> param_blocks(UNetModel& model) { return collect_blocks<ParamBlock>(model); }

std::vector<ConstParamBlock> param_blocks(const UNetModel& model) {
    return collect_blocks<ConstParamBlock>(model);
}

std::size_t trainable_parameter_count(const UNetModel& model) {
    std::size_t n = 0;
    for (const auto& b : param_blocks(model)) {
        if (b.trainable) n += b.data.size();
    }
    return n;
}

void check_input_shape(const UNetModel& model, const Shape4& shape) {
    constexpr int kFactor = 1 << kDepth;
    if (shape.c != 1) {
        throw SegnetError(SegnetError::Kind::shape_mismatch,
                          "U-Net expects a single input channel, got " + to_string(shape));
    }
    if (shape.n <= 0 || shape.h <= 0 || shape.w <= 0 || shape.h % kFactor != 0 || shape.w % kFactor != 0) {
        throw SegnetError(SegnetError::Kind::indivisible_dims,
                          "U-Net input rows/cols must be positive multiples of " + std::to_string(kFactor) +
                              ", got " + to_string(shape));
    }
    (void)model;
}

ForwardResult unet_forward(UNetModel& model, const Tensor4& x, Mode mode) {
    ForwardResult r;
    r.probs = softmax_channels(forward_impl(model, x, mode, &r.cache));
    if (mode == Mode::train) {
        for_each_bn(model, r.cache, [](BatchNormLayer& bn, const BatchNormCache& c) { update_running_stats(bn, c); });
    }
    return r;
}

ProbMap unet_infer(const UNetModel& model, const Tensor4& x) {
    return softmax_channels(forward_impl(model, x, Mode::infer, nullptr));
}

UNetGradients unet_backward(const UNetModel& model, const UNetCache& cache, const Tensor4& grad_logits) {
    if (cache.revision != model.revision) {
        throw SegnetError(SegnetError::Kind::stale_cache, "unet_backward: cache was produced by an older model revision");
    }
    const Shape4 expected{cache.input_shape.n, model.n_classes, cache.input_shape.h, cache.input_shape.w};
    if (!(grad_logits.shape() == expected) || !(cache.head_input.shape().c == model.head.in_channels())) {
        throw SegnetError(SegnetError::Kind::stale_cache,
                          "unet_backward: gradient " + to_string(grad_logits.shape()) + " does not match cache");
    }
    UNetGradients g = make_unet_shape(model.base_channels, model.n_classes);

    ConvGrads head = projection_backward(cache.head_input, model.head, grad_logits);
    g.head.weights = std::move(head.grad_w);
    g.head.bias = std::move(head.grad_b);

    std::array<Tensor4, kDepth> skip_grads;
    Tensor4 grad = std::move(head.grad_x);
    for (int i = 0; i < kDepth; ++i) {
        Tensor4 grad_cat = block_backward(model.decoder[i], cache.decoder[i], grad, g.decoder[i]);
        auto [grad_up, grad_skip] = split_channels(grad_cat, model.up[i].out_channels());
        skip_grads[i] = std::move(grad_skip);
        ConvGrads up = upconv2_backward(cache.up_inputs[i], model.up[i], grad_up);
        g.up[i].weights = std::move(up.grad_w);
        g.up[i].bias = std::move(up.grad_b);
        grad = std::move(up.grad_x);
    }
    grad = block_backward(model.bottleneck, cache.bottleneck, grad, g.bottleneck);
    for (int i = kDepth - 1; i >= 0; --i) {
        Tensor4 pooled = maxpool2_backward(cache.pools[i], grad);
        auto dst = pooled.values();
        auto skip = skip_grads[i].values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += skip[k];
        grad = block_backward(model.encoder[i], cache.encoder[i], pooled, g.encoder[i]);
    }
    return g;
}

LabelMask predict_mask(const UNetModel& model, const GrayImage& img) {
    const GrayImage* one = &img;
    ProbMap probs = unet_infer(model, to_input(std::span<const GrayImage>(one, 1)));
    return std::move(argmax_labels(probs).front());
}

LabelMask predict_mask(const UNetModel& model, const GrayImage& img, int resolution) {
    if (img.width != resolution || img.height != resolution) {
        throw SegnetError(SegnetError::Kind::shape_mismatch,
                          "predict_mask: image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                              ", model resolution is " + std::to_string(resolution));
    }
    return predict_mask(model, img);
}

}  // namespace fundus::segnet
