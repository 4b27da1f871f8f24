#include "fundus/random.hpp"
#include "fundus/segnet.hpp"

#include <cstdio>
#include <limits>
#include <numeric>

namespace fundus::segnet {
namespace {

struct Batch {
    std::vector<GrayImage> images;
    std::vector<LabelMask> masks;
};

Batch gather(std::span<const Sample> samples, std::span<const std::size_t> order) {
    Batch b;
    b.images.reserve(order.size());
    b.masks.reserve(order.size());
    for (std::size_t i : order) {
        b.images.push_back(samples[i].image);
        b.masks.push_back(samples[i].mask);
    }
    return b;
}

std::size_t count_correct(const ProbMap& probs, std::span<const LabelMask> masks) {
    const std::vector<LabelMask> labels = argmax_labels(probs);
    std::size_t correct = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        for (std::size_t p = 0; p < labels[n].size(); ++p) correct += labels[n].data[p] == masks[n].data[p];
    }
    return correct;
}

void validate(const SegTrainConfig& config, std::span<const Sample> train) {
    if (train.empty()) throw SegnetError(SegnetError::Kind::invalid_config, "training set is empty");
    if (config.epochs <= 0) throw SegnetError(SegnetError::Kind::invalid_config, "epochs must be positive");
    if (config.batch_size <= 0 || static_cast<std::size_t>(config.batch_size) > train.size()) {
        throw SegnetError(SegnetError::Kind::invalid_config,
                          "batch size " + std::to_string(config.batch_size) + " is not in [1, " +
                              std::to_string(train.size()) + "]");
    }
    if (!(config.learning_rate > 0.0)) {
        throw SegnetError(SegnetError::Kind::invalid_config, "learning rate must be positive");
    }
}

}  // namespace

EvalResult evaluate_segmenter(const UNetModel& model, std::span<const Sample> samples, int batch_size) {
    EvalResult r;
    if (samples.empty()) return r;
    const std::size_t step = static_cast<std::size_t>(std::max(batch_size, 1));
    double loss_sum = 0.0;
    std::size_t correct = 0, pixels = 0;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t start = 0; start < samples.size(); start += step) {
        const std::size_t count = std::min(step, samples.size() - start);
        Batch b = gather(samples, std::span<const std::size_t>(order).subspan(start, count));
        ProbMap probs = unet_infer(model, to_input(b.images));
        const Tensor4 target = one_hot(b.masks, model.n_classes);
        const LossResult lr = cross_entropy_loss(probs, target);
        const std::size_t batch_pixels = static_cast<std::size_t>(probs.batch()) * probs.shape().plane();
        loss_sum += lr.loss * static_cast<double>(batch_pixels);
        correct += count_correct(probs, b.masks);
        pixels += batch_pixels;
    }
    r.loss = loss_sum / static_cast<double>(pixels);
    r.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(pixels);
    return r;
}

TrainResult train_segmenter(const SegTrainConfig& config, std::span<const Sample> train, std::span<const Sample> val,
                            std::uint64_t seed, const EpochCallback& on_epoch) {
    validate(config, train);

    TrainResult result;
    UNetModel model = make_unet(config.base_channels, config.n_classes, mix_seed(seed, 0));
    {
        const Shape4 probe{1, 1, train.front().image.height, train.front().image.width};
        try {
            check_input_shape(model, probe);
        } catch (const SegnetError& e) {
            throw SegnetError(SegnetError::Kind::invalid_config, e.what());
        }
    }
    AdamState adam;
    adam.lr = config.learning_rate;
    Rng shuffle_rng(mix_seed(seed, 1));

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t batches = train.size() / batch;  // incomplete final batch is dropped

    double best_val = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0, pixels = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            Batch mb = gather(train, std::span<const std::size_t>(order).subspan(b * batch, batch));
            ForwardResult fwd = unet_forward(model, to_input(mb.images), Mode::train);
            const LossResult loss = cross_entropy_loss(fwd.probs, one_hot(mb.masks, model.n_classes));
            loss_sum += loss.loss;
            correct += count_correct(fwd.probs, mb.masks);
            pixels += static_cast<std::size_t>(fwd.probs.batch()) * fwd.probs.shape().plane();
            const UNetGradients grads = unet_backward(model, fwd.cache, loss.grad_logits);
            adam_step(model, grads, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(pixels);
        if (!val.empty()) {
            const EvalResult ev = evaluate_segmenter(model, val, config.batch_size);
            rec.has_val = true;
            rec.val_loss = ev.loss;
            rec.val_accuracy = ev.pixel_accuracy;
            if (ev.loss < best_val) {
                best_val = ev.loss;
                result.model = model;
                result.best_epoch = epoch;
            }
        }
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    if (val.empty()) {
        result.model = std::move(model);
        result.best_epoch = config.epochs;
    }
    return result;
}

std::string to_json_line(const EpochRecord& r) {
    char buf[256];
    if (r.has_val) {
        std::snprintf(buf, sizeof buf,
                      "{\"epoch\":%d,\"train_loss\":%.17g,\"train_accuracy\":%.17g,\"val_loss\":%.17g,"
                      "\"val_accuracy\":%.17g}",
                      r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy);
    } else {
        std::snprintf(buf, sizeof buf,
                      "{\"epoch\":%d,\"train_loss\":%.17g,\"train_accuracy\":%.17g,\"val_loss\":null,"
                      "\"val_accuracy\":null}",
                      r.epoch, r.train_loss, r.train_accuracy);
    }
    return buf;
}

}  // namespace fundus::segnet
