// One line per acceptance criterion: PASS, FAIL or SKIP, followed by the measured numbers.
// Exit status is non-zero when any criterion fails.

#include "fundus/classifier.hpp"
#include "fundus/geometry.hpp"
#include "fundus/metrics.hpp"
#include "fundus/pipeline.hpp"
#include "fundus/random.hpp"
#include "fundus/segnet.hpp"

#include "dual_svm.hpp"
#include "finite_diff.hpp"
#include "raster.hpp"
#include "temp_dir.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace fundus;
using namespace fundus::segnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// collects the first few reasons a criterion failed
class Verdict {
public:
    void require(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 5) reasons_ += (reasons_.empty() ? "" : "; ") + what;
    }
    bool ok() const { return failures_ == 0; }
    const std::string& reasons() const { return reasons_; }

private:
    int failures_ = 0;
    std::string reasons_;
};

enum class Outcome { pass, fail, skip };

struct Line {
    Outcome outcome;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Line finish(const Verdict& v, const std::string& detail) {
    return {v.ok() ? Outcome::pass : Outcome::fail, v.ok() ? detail : detail + " | " + v.reasons()};
}

// ---- 1: gradients ---------------------------------------------------------------------

Tensor4 random_tensor(Shape4 s, Rng& rng, double scale = 1.0) {
    Tensor4 t(s);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

double dot(const Tensor4& a, const Tensor4& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

template <typename Loss>
double worst_error(std::span<double> param, std::span<const double> analytic, Loss&& loss) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double fd = oracle::central_difference(param, i, loss);
        worst = std::max(worst, oracle::relative_error(analytic[i], fd));
    }
    return worst;
}

Line gradient_fidelity() {
    const auto t0 = Clock::now();
    constexpr int kCases = 5;
    std::map<std::string, double> worst;
    auto note = [&](const std::string& layer, double e) { worst[layer] = std::max(worst[layer], e); };

    for (int k = 0; k < kCases; ++k) {
        Rng rng(1000 + k);
        ConvLayer conv(1 + k % 3, 2 + k % 2);
        for (double& w : conv.weights.values()) w = rng.normal();
        for (double& b : conv.bias) b = rng.normal();
        Tensor4 x = random_tensor({2, conv.in_channels(), 4 + k % 2, 3 + k}, rng);
        Tensor4 r = random_tensor({2, conv.out_channels(), x.rows(), x.cols()}, rng);
        auto loss = [&] { return dot(conv2d_forward(x, conv), r); };
        const ConvGrads g = conv2d_backward(x, conv, r);
        note("conv", worst_error(x.values(), g.grad_x.values(), loss));
        note("conv", worst_error(conv.weights.values(), g.grad_w.values(), loss));
        note("conv", worst_error(conv.bias, g.grad_b, loss));
    }
    for (int k = 0; k < kCases; ++k) {
        Rng rng(1100 + k);
        UpConvLayer up(2 + k % 2, 1 + k % 3);
        for (double& w : up.weights.values()) w = rng.normal();
        for (double& b : up.bias) b = rng.normal();
        Tensor4 x = random_tensor({2, up.in_channels(), 3, 2 + k % 2}, rng);
        Tensor4 r = random_tensor({2, up.out_channels(), 2 * x.rows(), 2 * x.cols()}, rng);
        auto loss = [&] { return dot(upconv2_forward(x, up), r); };
        const ConvGrads g = upconv2_backward(x, up, r);
        note("upconv", worst_error(x.values(), g.grad_x.values(), loss));
        note("upconv", worst_error(up.weights.values(), g.grad_w.values(), loss));
        note("upconv", worst_error(up.bias, g.grad_b, loss));
    }
    for (int k = 0; k < kCases; ++k) {
        Rng rng(1200 + k);
        BatchNormLayer bn(2 + k % 2);
        for (double& v : bn.gamma) v = rng.normal();
        for (double& v : bn.beta) v = rng.normal();
        Tensor4 x = random_tensor({2 + k % 2, bn.channels(), 3, 3}, rng, 2.0);
        Tensor4 r = random_tensor(x.shape(), rng);
        auto loss = [&] { return dot(batchnorm_apply(x, bn, Mode::train).out, r); };
        const BatchNormGrads g = batchnorm_backward(batchnorm_apply(x, bn, Mode::train).cache, bn, r);
        note("batchnorm", worst_error(x.values(), g.grad_x.values(), loss));
        note("batchnorm", worst_error(bn.gamma, g.grad_gamma, loss));
        note("batchnorm", worst_error(bn.beta, g.grad_beta, loss));
    }
    for (int k = 0; k < kCases; ++k) {
        Rng rng(1300 + k);
        Tensor4 x = random_tensor({2, 3, 4, 4}, rng);
        for (double& v : x.values()) {
            if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
        }
        Tensor4 r = random_tensor(x.shape(), rng);
        auto loss = [&] { return dot(relu_forward(x), r); };
        note("relu", worst_error(x.values(), relu_backward(x, r).values(), loss));
    }
    for (int k = 0; k < kCases; ++k) {
        Rng rng(1400 + k);
        Tensor4 x(2, 2, 4, 6);
        std::vector<std::size_t> perm(x.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] = 0.1 * static_cast<double>(perm[i]);
        Tensor4 r = random_tensor({2, 2, 2, 3}, rng);
        const PoolResult p = maxpool2_forward(x);
        auto loss = [&] { return dot(maxpool2_forward(x).out, r); };
        note("maxpool", worst_error(x.values(), maxpool2_backward(p.indices, r).values(), loss));
    }
    for (int k = 0; k < kCases; ++k) {
        Rng rng(1500 + k);
        Tensor4 logits = random_tensor({2, 3, 3, 2 + k}, rng, 2.0);
        std::vector<LabelMask> masks(2, LabelMask(logits.cols(), 3));
        for (auto& m : masks) {
            for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.index(3));
        }
        const Tensor4 target = one_hot(masks, 3);
        auto loss = [&] { return cross_entropy_loss(softmax_channels(logits), target).loss; };
        const LossResult lr = cross_entropy_loss(softmax_channels(logits), target);
        note("softmax+ce", worst_error(logits.values(), lr.grad_logits.values(), loss));
    }

    // tiny U-Net end to end, 20 sampled trainable parameters
    UNetModel model = make_unet(2, 3, 31);
    Rng rng(32);
    const Tensor4 x = random_tensor({2, 1, 16, 16}, rng);
    std::vector<LabelMask> masks(2, LabelMask(16, 16));
    for (auto& m : masks) {
        for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.index(3));
    }
    const Tensor4 target = one_hot(masks, 3);
    auto loss_of = [&] { return cross_entropy_loss(unet_forward(model, x, Mode::train).probs, target).loss; };
    const ForwardResult fwd = unet_forward(model, x, Mode::train);
    const UNetGradients grads = unet_backward(model, fwd.cache, cross_entropy_loss(fwd.probs, target).grad_logits);
    auto blocks = param_blocks(model);
    const auto gblocks = param_blocks(grads);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (!blocks[b].trainable) continue;
        for (std::size_t i = 0; i < blocks[b].data.size(); ++i) pool.emplace_back(b, i);
    }
    rng.shuffle(pool);
    double unet_worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto [b, i] = pool[k];
        const double fd = oracle::central_difference(blocks[b].data, i, loss_of);
        unet_worst = std::max(unet_worst, oracle::relative_error(gblocks[b].data[i], fd));
    }
    const double elapsed = seconds_since(t0);

    Verdict v;
    std::string detail;
    for (const auto& [layer, e] : worst) {
        v.require(e < 1e-4, layer + " error " + fmt("%.2e", e));
        detail += layer + " " + fmt("%.1e", e) + ", ";
    }
    v.require(unet_worst < 1e-3, "unet error " + fmt("%.2e", unet_worst));
    v.require(elapsed < 120.0, "runtime " + fmt("%.1fs", elapsed));
    return finish(v, detail + "unet " + fmt("%.1e", unet_worst) + ", " + fmt("%.1fs", elapsed));
}

// ---- 2: toy segmentation capacity ---------------------------------------------------------

Line toy_capacity() {
    const auto t0 = Clock::now();
    std::vector<Sample> samples;
    for (int i = 0; i < 4; ++i) {
        const auto spec = pipeline::random_phantom_spec(64, i % 2 == 0, 10 + i);
        const auto ph = pipeline::render_phantom(spec, 20 + i);
        Sample s;
        s.id = "toy" + std::to_string(i);
        s.image = to_grayscale(ph.image);
        s.mask = merge_masks(ph.disc, ph.cup).mask;
        samples.push_back(std::move(s));
    }
    SegTrainConfig config;
    config.base_channels = 8;
    config.epochs = 200;
    config.batch_size = 2;
    const TrainResult r = train_segmenter(config, samples, {}, 5);
    const EvalResult ev = evaluate_segmenter(r.model, samples, 2);
    const double elapsed = seconds_since(t0);

    Verdict v;
    v.require(r.log.size() == 200, "log has " + std::to_string(r.log.size()) + " epochs");
    v.require(ev.pixel_accuracy >= 0.99, "train pixel accuracy " + fmt("%.5f", ev.pixel_accuracy));
    v.require(r.log.back().train_loss < r.log.front().train_loss, "loss did not decrease");
    v.require(elapsed < 600.0, "runtime " + fmt("%.1fs", elapsed));
    return finish(v, "pixel accuracy " + fmt("%.5f", ev.pixel_accuracy) + ", loss " +
                         fmt("%.4f", r.log.front().train_loss) + " -> " + fmt("%.4f", r.log.back().train_loss) +
                         ", " + fmt("%.1fs", elapsed));
}

// ---- 3: geometry ------------------------------------------------------------------------

Line geometry_phantoms() {
    Verdict v;
    const BinaryMask disc = oracle::disk(192, 192, 96, 96, 64);
    const BinaryMask cup = oracle::disk(192, 192, 96, 96, 32);
    const geometry::FeatureResult f = geometry::extract_features(disc, cup);
    v.require(std::abs(f.features.acdr - 0.25) <= 0.02, "acdr " + fmt("%.4f", f.features.acdr));
    v.require(std::abs(f.features.dcdr - 0.5) <= 0.02, "dcdr " + fmt("%.4f", f.features.dcdr));
    v.require(std::abs(f.features.i_distance - 0.25) <= 0.01, "i " + fmt("%.4f", f.features.i_distance));
    v.require(std::abs(f.features.s_distance - 0.25) <= 0.01, "s " + fmt("%.4f", f.features.s_distance));
    double t_dev = 0.0;
    for (double t : f.profile.t) t_dev = std::max(t_dev, std::abs(t - 32.0));
    v.require(t_dev <= 1.0, "rim thickness off by " + fmt("%.3f", t_dev));

    double axis_err = 0.0;
    for (double angle : {0.0, 30.0, 75.0, 140.0}) {
        const BinaryMask e = oracle::ellipse(256, 256, 128.3, 127.6, 90, 40, angle);
        const double major = geometry::shape_stats(e).major_axis_len;
        axis_err = std::max(axis_err, std::abs(major - 180.0) / 180.0);
    }
    v.require(axis_err < 0.01, "major axis error " + fmt("%.4f", axis_err));

    // same eye drawn at twice the size
    auto eye = [](int scale) {
        const double s = scale;
        return geometry::compute_features(oracle::ellipse(160 * scale, 160 * scale, 80 * s, 78 * s, 50 * s, 44 * s, 20),
                                          oracle::ellipse(160 * scale, 160 * scale, 81 * s, 84 * s, 24 * s, 19 * s, 35));
    };
    const geometry::FeatureVector a = eye(1), b = eye(2);
    double ratio_change = 0.0;
    for (auto [x, y] : {std::pair{a.acdr, b.acdr}, {a.dcdr, b.dcdr}, {a.s_distance, b.s_distance},
                        {a.i_distance, b.i_distance}}) {
        ratio_change = std::max(ratio_change, std::abs(x - y) / std::abs(x));
    }
    v.require(ratio_change < 0.02, "scale doubling changed ratios by " + fmt("%.4f", ratio_change));

    return finish(v, "acdr " + fmt("%.4f", f.features.acdr) + ", dcdr " + fmt("%.4f", f.features.dcdr) + ", max |T-32| " +
                         fmt("%.3f", t_dev) + ", I " + fmt("%.4f", f.features.i_distance) + ", S " +
                         fmt("%.4f", f.features.s_distance) + ", axis err " + fmt("%.4f", axis_err) +
                         ", scale change " + fmt("%.4f", ratio_change));
}

// ---- 4: metric arithmetic -------------------------------------------------------------

Line table_arithmetic() {
    Verdict v;
    const metrics::DiagScores d = metrics::diag_scores({.tp = 10, .fp = 1, .tn = 18, .fn = 1});
    // reference percentages are cut at two decimals, not rounded
    auto shown = [](double ratio) { return std::floor(ratio * 10000.0) / 100.0; };
    const std::pair<double, double> rows[] = {{d.sensitivity, 90.90}, {d.specificity, 94.73}, {d.precision, 90.90},
                                              {d.npv, 94.73},         {d.accuracy, 93.33}};
    std::string detail;
    for (auto [ratio, expected] : rows) {
        v.require(std::abs(shown(ratio) - expected) < 1e-9,
                  fmt("%.4f", 100 * ratio) + " shows as " + fmt("%.2f", shown(ratio)) + " not " + fmt("%.2f", expected));
        detail += fmt("%.2f", shown(ratio)) + " ";
    }

    Rng rng(4);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        metrics::ConfusionCounts c{rng.index(1000), rng.index(1000), rng.index(1000), rng.index(1000)};
        if (c.tp + c.fp + c.fn == 0) c.tp = 1;
        const metrics::SegScores s = metrics::seg_scores(c);
        worst = std::max(worst, std::abs(s.f1 - 2 * s.jaccard / (1 + s.jaccard)));
    }
    v.require(worst < 1e-12, "f1/jaccard gap " + fmt("%.2e", worst));
    return finish(v, "table " + detail + "| f1/jaccard gap " + fmt("%.1e", worst));
}

// ---- 5: SVM -----------------------------------------------------------------------------

Line svm_correctness() {
    using namespace fundus::classifier;
    constexpr double kC = 10.0, kGamma = 1.0, kTol = 1e-3;
    Rng rng(2024);
    std::vector<Row> x;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
        const int label = i < 20 ? -1 : +1;
        x.push_back({label + rng.normal(), label + rng.normal()});
        y.push_back(label);
    }
    const SmoResult r = smo_train(x, y, {.c = kC, .gamma = kGamma, .tolerance = kTol, .max_passes = 500, .seed = 3});

    Verdict v;
    double kkt = 0.0, balance = 0.0;
    int correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double yf = y[i] * r.model.decision_value(x[i]);
        double violation = 0.0;
        if (r.alpha[i] <= 0.0) {
            violation = std::max(0.0, 1.0 - yf);
        } else if (r.alpha[i] >= kC) {
            violation = std::max(0.0, yf - 1.0);
        } else {
            violation = std::abs(yf - 1.0);
        }
        kkt = std::max(kkt, violation);
        balance += r.alpha[i] * y[i];
        correct += to_label(r.model.predict(x[i])) == y[i];
    }
    const double accuracy = correct / 40.0;
    const oracle::DualSolution o = oracle::solve_svm_dual(x, y, kC, kGamma);
    const double gap = std::abs(dual_objective(x, y, r.alpha, kGamma) - o.objective);

    SvmModel shuffled = r.model;
    std::vector<std::size_t> perm(shuffled.support_vectors.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng prng(77);
    prng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.support_vectors[i] = r.model.support_vectors[perm[i]];
        shuffled.coefficients[i] = r.model.coefficients[perm[i]];
    }
    int disagreements = 0;
    for (int t = 0; t < 200; ++t) {
        const Row at{3 * prng.normal(), 3 * prng.normal()};
        disagreements += shuffled.predict(at) != r.model.predict(at);
    }

    v.require(r.converged, "SMO did not converge");
    v.require(kkt <= kTol, "KKT violation " + fmt("%.2e", kkt));
    v.require(std::abs(balance) < 1e-9, "sum alpha*y " + fmt("%.2e", balance));
    v.require(gap < 1e-3, "objective gap " + fmt("%.2e", gap));
    v.require(accuracy >= 0.95, "training accuracy " + fmt("%.3f", accuracy));
    v.require(disagreements == 0, std::to_string(disagreements) + " predictions changed under permutation");
    return finish(v, "KKT " + fmt("%.1e", kkt) + ", sum alpha*y " + fmt("%.1e", balance) + ", objective gap " +
                         fmt("%.1e", gap) + ", accuracy " + fmt("%.3f", accuracy) + ", " +
                         std::to_string(r.model.support_vectors.size()) + " SVs");
}

// ---- 6: determinism ---------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "run_log.jsonl") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).generic_string()] = ss.str();
    }
    return out;
}

Line determinism() {
    const auto t0 = Clock::now();
    testutil::TempDir dir("acceptance_determinism");
    const fs::path manifest = pipeline::write_phantom_dataset(dir / "data", {.size = 128, .train_count = 12, .test_count = 6, .seed = 9});
    pipeline::RunConfig config;
    config.manifest = manifest;
    config.seed = 42;
    config.resolution = 64;
    config.augment_target = 24;
    config.base_channels = 4;
    config.epochs = 3;
    config.svm.c_grid = {1.0, 10.0};
    config.svm.gamma_grid = {0.1, 1.0};
    config.svm.cv_folds = 3;

    pipeline::RunConfig a = config, b = config;
    a.out_dir = dir / "run_a";
    b.out_dir = dir / "run_b";
    pipeline::run_all(a);
    pipeline::run_all(b);
    const auto x = snapshot(a.out_dir), y = snapshot(b.out_dir);

    Verdict v;
    v.require(x.size() == y.size(), "file counts differ");
    for (const auto& [name, bytes] : x) {
        const auto it = y.find(name);
        v.require(it != y.end() && it->second == bytes, name + " differs");
    }
    const pipeline::Layout layout{a.out_dir};
    for (const fs::path& p : {layout.weights(), layout.svm_model(), layout.evaluation_report(),
                              layout.feature_csv(pipeline::MaskSource::predicted, pipeline::Split::test)}) {
        v.require(x.count(fs::relative(p, a.out_dir).generic_string()) == 1, p.filename().string() + " missing");
    }
    return finish(v, std::to_string(x.size()) + " files compared, " + fmt("%.1fs", seconds_since(t0)));
}

// ---- 7: real dataset --------------------------------------------------------------------

Line dataset_accuracy() {
    const char* env = std::getenv("DRISHTI_GS_MANIFEST");
    if (!env || !*env) return {Outcome::skip, "DRISHTI_GS_MANIFEST not set"};
    const fs::path manifest_path = env;
    if (!fs::exists(manifest_path)) return {Outcome::skip, manifest_path.string() + " not found"};

    const auto t0 = Clock::now();
    testutil::TempDir dir("acceptance_drishti");
    pipeline::RunConfig config;
    config.manifest = manifest_path;
    config.out_dir = dir / "out";
    config.seed = 0;
    config.augment_target = pipeline::load_manifest(manifest_path).count(pipeline::Split::train);

    Verdict v;
    const pipeline::Manifest m = pipeline::load_manifest(manifest_path);
    v.require(m.count(pipeline::Split::train) == 71 && m.count(pipeline::Split::test) == 30,
              "split " + std::to_string(m.count(pipeline::Split::train)) + "/" +
                  std::to_string(m.count(pipeline::Split::test)));
    pipeline::cmd_prepare(config);
    const auto train = pipeline::cmd_features(config, pipeline::MaskSource::ground_truth, pipeline::Split::train);
    const auto test = pipeline::cmd_features(config, pipeline::MaskSource::ground_truth, pipeline::Split::test);
    pipeline::cmd_train_clf(config, train.csv);
    const auto eval = pipeline::cmd_evaluate(config, pipeline::Layout{config.out_dir}.svm_model(), test.csv);
    v.require(eval.scores.accuracy >= 0.85, "test accuracy " + fmt("%.4f", eval.scores.accuracy));
    return finish(v, "test accuracy " + fmt("%.4f", eval.scores.accuracy) + " on " + std::to_string(test.rows) +
                         " images, " + fmt("%.1fs", seconds_since(t0)));
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Line()>>> criteria{
        {"1 gradient fidelity", gradient_fidelity},   {"2 toy segmentation capacity", toy_capacity},
        {"3 geometry vs analytic phantoms", geometry_phantoms}, {"4 metric arithmetic", table_arithmetic},
        {"5 svm correctness", svm_correctness},       {"6 determinism", determinism},
        {"7 dataset accuracy", dataset_accuracy},
    };
    // optional filter: acceptance 3 5
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), std::string(1, name[0])) == only.end()) continue;
        Line line;
        try {
            line = run();
        } catch (const std::exception& e) {
            line = {Outcome::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = line.outcome == Outcome::pass ? "PASS" : line.outcome == Outcome::fail ? "FAIL" : "SKIP";
        failed += line.outcome == Outcome::fail;
        std::printf("%s  criterion %s: %s\n", tag, name, line.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
