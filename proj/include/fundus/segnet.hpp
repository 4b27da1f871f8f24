#pragma once

// Dense 4-D tensor engine and a multi-class U-Net with hand-written backward passes.

#include "fundus/imaging.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus::segnet {

class SegnetError : public std::runtime_error {
public:
    enum class Kind {
        shape_mismatch,
        indivisible_dims,
        degenerate_statistics,
        invalid_target,
        stale_cache,
        invalid_config,
        weight_version,
        weight_corrupt,
        io,
    };

    SegnetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t count() const noexcept { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

/// (batch, channel, row, col), contiguous, row-major.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape, double fill = 0.0) : shape_(shape), data_(shape.count(), fill) {}
    Tensor4(int n, int c, int h, int w, double fill = 0.0) : Tensor4(Shape4{n, c, h, w}, fill) {}

    const Shape4& shape() const noexcept { return shape_; }
    int batch() const noexcept { return shape_.n; }
    int channels() const noexcept { return shape_.c; }
    int rows() const noexcept { return shape_.h; }
    int cols() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t index(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    double& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
    double at(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

    double* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
    const double* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& raw() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    void fill(double v);
    bool all_finite() const noexcept;
    bool operator==(const Tensor4&) const = default;

private:
    Shape4 shape_{};
    std::vector<double> data_;
};

/// Per-pixel class probabilities, shape (batch, n_classes, rows, cols).
using ProbMap = Tensor4;

enum class Mode { train, infer };

// ---- layers -----------------------------------------------------------------

/// 3x3 convolution, stride 1, zero padding 1.
struct ConvLayer {
    Tensor4 weights;  // (out_ch, in_ch, 3, 3)
    std::vector<double> bias;

    ConvLayer() = default;
    ConvLayer(int in_ch, int out_ch) : weights(out_ch, in_ch, 3, 3), bias(out_ch, 0.0) {}
    int in_channels() const noexcept { return weights.channels(); }
    int out_channels() const noexcept { return weights.batch(); }
};

/// 1x1 convolution used as the final class projection.
struct ProjectionLayer {
    Tensor4 weights;  // (out_ch, in_ch, 1, 1)
    std::vector<double> bias;

    ProjectionLayer() = default;
    ProjectionLayer(int in_ch, int out_ch) : weights(out_ch, in_ch, 1, 1), bias(out_ch, 0.0) {}
    int in_channels() const noexcept { return weights.channels(); }
    int out_channels() const noexcept { return weights.batch(); }
};

/// 2x2 transpose convolution with stride 2.
struct UpConvLayer {
    Tensor4 weights;  // (in_ch, out_ch, 2, 2)
    std::vector<double> bias;

    UpConvLayer() = default;
    UpConvLayer(int in_ch, int out_ch) : weights(in_ch, out_ch, 2, 2), bias(out_ch, 0.0) {}
    int in_channels() const noexcept { return weights.batch(); }
    int out_channels() const noexcept { return weights.channels(); }
};

struct BatchNormLayer {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    double epsilon = 1e-5;

    BatchNormLayer() = default;
    explicit BatchNormLayer(int channels)
        : gamma(channels, 1.0), beta(channels, 0.0), running_mean(channels, 0.0), running_var(channels, 1.0) {}
    int channels() const noexcept { return static_cast<int>(gamma.size()); }
};

struct ConvGrads {
    Tensor4 grad_x;
    Tensor4 grad_w;
    std::vector<double> grad_b;
};

Tensor4 conv2d_forward(const Tensor4& x, const ConvLayer& layer);
ConvGrads conv2d_backward(const Tensor4& x, const ConvLayer& layer, const Tensor4& grad_out);

Tensor4 projection_forward(const Tensor4& x, const ProjectionLayer& layer);
ConvGrads projection_backward(const Tensor4& x, const ProjectionLayer& layer, const Tensor4& grad_out);

Tensor4 upconv2_forward(const Tensor4& x, const UpConvLayer& layer);
ConvGrads upconv2_backward(const Tensor4& x, const UpConvLayer& layer, const Tensor4& grad_out);

Tensor4 relu_forward(const Tensor4& x);
/// Gradient is passed where x > 0 and zeroed where x <= 0.
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

struct PoolIndices {
    Shape4 input;
    std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

struct PoolResult {
    Tensor4 out;
    PoolIndices indices;
};

/// 2x2 max pooling; ties go to the first cell in row-major scan order.
PoolResult maxpool2_forward(const Tensor4& x);
Tensor4 maxpool2_backward(const PoolIndices& indices, const Tensor4& grad_out);

struct BatchNormCache {
    Mode mode = Mode::infer;
    Tensor4 x_hat;
    std::vector<double> inv_std;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;
};

struct BatchNormResult {
    Tensor4 out;
    BatchNormCache cache;
};

struct BatchNormGrads {
    Tensor4 grad_x;
    std::vector<double> grad_gamma;
    std::vector<double> grad_beta;
};

/// Normalises without touching running statistics.
BatchNormResult batchnorm_apply(const Tensor4& x, const BatchNormLayer& layer, Mode mode);
/// As batchnorm_apply, and in train mode folds the batch statistics into the running ones.
BatchNormResult batchnorm_forward(const Tensor4& x, BatchNormLayer& layer, Mode mode);
void update_running_stats(BatchNormLayer& layer, const BatchNormCache& cache);
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNormLayer& layer, const Tensor4& grad_out);

/// Stacks channels of a then b.
Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
/// Inverse of concat_channels for gradients: first `a_channels` channels, then the rest.
std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, int a_channels);

ProbMap softmax_channels(const Tensor4& logits);

struct LossResult {
    double loss = 0.0;
    Tensor4 grad_logits;
};

/// Pixel-mean categorical cross-entropy of softmax probabilities against a one-hot target.
/// The gradient is with respect to the logits that produced `probs`.
LossResult cross_entropy_loss(const ProbMap& probs, const ProbMap& target);

Tensor4 one_hot(std::span<const LabelMask> masks, int n_classes);
Tensor4 to_input(std::span<const GrayImage> images);

/// Per-pixel argmax, ties toward the lower class index.
std::vector<LabelMask> argmax_labels(const ProbMap& probs);

// ---- U-Net ----------------------------------------------------------------------

struct ConvBlock {
    ConvLayer conv1;
    BatchNormLayer bn1;
    ConvLayer conv2;
    BatchNormLayer bn2;

    ConvBlock() = default;
    ConvBlock(int in_ch, int out_ch) : conv1(in_ch, out_ch), bn1(out_ch), conv2(out_ch, out_ch), bn2(out_ch) {}
};

struct UNetModel {
    static constexpr int kDepth = 4;

    int base_channels = 8;
    int n_classes = 3;
    /// Bumped by every optimiser step; backward refuses caches from older revisions.
    std::uint64_t revision = 0;

    std::array<ConvBlock, kDepth> encoder;
    ConvBlock bottleneck;
    std::array<UpConvLayer, kDepth> up;       // up[i]: stage i+1 -> stage i
    std::array<ConvBlock, kDepth> decoder;    // decoder[i] runs at encoder[i]'s resolution
    ProjectionLayer head;

    int stage_channels(int stage) const noexcept { return base_channels << stage; }
};

/// Gradients share the model's structure; running statistics in it are unused.
using UNetGradients = UNetModel;

/// Zero-initialised architecture with the given widths.
UNetModel make_unet_shape(int base_channels, int n_classes = 3);
/// He-normal (fan-in) weights, zero biases, gamma 1 / beta 0.
UNetModel make_unet(int base_channels, int n_classes, std::uint64_t seed);

struct ParamBlock {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::span<double> data;
    bool trainable = true;
};

struct ConstParamBlock {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::span<const double> data;
    bool trainable = true;
};

/// Every persisted block (weights, biases, BN affine and running statistics) in fixed architectural order.
std::vector<ParamBlock> param_blocks(UNetModel& model);
std::vector<ConstParamBlock> param_blocks(const UNetModel& model);
std::size_t trainable_parameter_count(const UNetModel& model);

struct BlockCache {
    Tensor4 input;
    BatchNormCache bn1;
    Tensor4 pre1;  // bn1 output
    Tensor4 act1;  // relu(pre1), conv2 input
    BatchNormCache bn2;
    Tensor4 pre2;
};

struct UNetCache {
    std::uint64_t revision = 0;
    Shape4 input_shape;
    std::array<BlockCache, UNetModel::kDepth> encoder;
    std::array<Tensor4, UNetModel::kDepth> skips;
    std::array<PoolIndices, UNetModel::kDepth> pools;
    BlockCache bottleneck;
    std::array<Tensor4, UNetModel::kDepth> up_inputs;
    std::array<BlockCache, UNetModel::kDepth> decoder;
    Tensor4 head_input;
};

struct ForwardResult {
    ProbMap probs;
    UNetCache cache;
};

/// Throws indivisible_dims unless rows and cols are multiples of 16.
void check_input_shape(const UNetModel& model, const Shape4& shape);

/// In train mode batch statistics are used and folded into the model's running statistics.
ForwardResult unet_forward(UNetModel& model, const Tensor4& x, Mode mode);
/// Read-only inference with running statistics.
ProbMap unet_infer(const UNetModel& model, const Tensor4& x);
UNetGradients unet_backward(const UNetModel& model, const UNetCache& cache, const Tensor4& grad_logits);

LabelMask predict_mask(const UNetModel& model, const GrayImage& img);
/// As predict_mask, also requiring a square image of the given resolution.
LabelMask predict_mask(const UNetModel& model, const GrayImage& img, int resolution);

// ---- optimisation ---------------------------------------------------------------

struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update over parallel lists of parameter and gradient buffers.
/// Moment buffers are allocated on the first call.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);
void adam_step(UNetModel& model, const UNetGradients& grads, AdamState& state);

struct SegTrainConfig {
    int base_channels = 64;
    int n_classes = 3;
    int epochs = 100;
    int batch_size = 2;
    double learning_rate = 0.001;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;  // from the train-mode passes of the epoch
    bool has_val = false;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    UNetModel model;  // best validation loss, or last epoch when there is no validation set
    std::vector<EpochRecord> log;
    int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train_segmenter(const SegTrainConfig& config, std::span<const Sample> train, std::span<const Sample> val,
                            std::uint64_t seed, const EpochCallback& on_epoch = {});

struct EvalResult {
    double loss = 0.0;
    double pixel_accuracy = 0.0;
};

/// Inference-mode loss and pixel accuracy, evaluated in chunks of `batch_size`.
EvalResult evaluate_segmenter(const UNetModel& model, std::span<const Sample> samples, int batch_size);

std::string to_json_line(const EpochRecord& r);

// ---- persistence --------------------------------------------------------------------

inline constexpr char kWeightMagic[8] = {'F', 'S', 'C', 'R', 'N', 'N', 'W', '1'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const UNetModel& model, const std::filesystem::path& path);
UNetModel load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const UNetModel& model);
UNetModel deserialize_weights(std::span<const std::uint8_t> bytes);

}  // namespace fundus::segnet
