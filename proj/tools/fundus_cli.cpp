// fundus: command-line driver for the screening pipeline.

#include "fundus/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace fp = fundus::pipeline;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string manifest;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Seed (overrides the config)");
    sub->add_option("--out", c.out, "Output directory (overrides the config)");
    sub->add_option("--manifest", c.manifest, "Dataset manifest CSV (overrides the config)");
}

fp::RunConfig resolve(const Common& c) {
    fp::RunConfig config = c.config.empty() ? fp::RunConfig{} : fp::load_config(c.config);
    if (c.seed) config.seed = *c.seed;
    if (!c.out.empty()) config.out_dir = c.out;
    if (!c.manifest.empty()) config.manifest = c.manifest;
    fp::validate_config(config);
    return config;
}

void print_progress(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

void print_scores(const char* name, const fundus::metrics::SegScores& s) {
    std::printf("%-5s acc %.4f  prec %.4f  rec %.4f  f1 %.4f  jaccard %.4f\n", name, s.accuracy, s.precision, s.recall,
                s.f1, s.jaccard);
}

void print_eval(const fp::EvaluateSummary& e) {
    const auto& c = e.counts;
    std::printf("tp %llu  fp %llu  fn %llu  tn %llu\n", static_cast<unsigned long long>(c.tp),
                static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn),
                static_cast<unsigned long long>(c.tn));
    std::printf("sensitivity %.2f%%  specificity %.2f%%  precision %.2f%%  npv %.2f%%  accuracy %.2f%%\n",
                100 * e.scores.sensitivity, 100 * e.scores.specificity, 100 * e.scores.precision, 100 * e.scores.npv,
                100 * e.scores.accuracy);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optic disc/cup segmentation and glaucoma screening"};
    app.require_subcommand(1);

    Common common;
    std::string split_name = "test";
    std::string source_name;
    std::string features_path;
    std::string model_path;
    fp::PhantomDatasetOptions synth;
    std::string synth_dir;

    auto* prepare = app.add_subcommand("prepare", "Grayscale, CLAHE, resize and augment the manifest images");
    auto* train_seg = app.add_subcommand("train-seg", "Train the U-Net on the prepared data");
    auto* segment = app.add_subcommand("segment", "Predict masks for a split and score them");
    auto* features = app.add_subcommand("features", "Extract the eight geometric features to CSV");
    auto* train_clf = app.add_subcommand("train-clf", "Grid-search and fit the SVM");
    auto* evaluate = app.add_subcommand("evaluate", "Score the SVM on a feature CSV");
    auto* run = app.add_subcommand("run", "All stages in order");
    auto* config_cmd = app.add_subcommand("config", "Print the effective configuration as JSON");
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic ellipse-phantom dataset");

    for (auto* sub : {prepare, train_seg, segment, features, train_clf, evaluate, run, config_cmd}) add_common(sub, common);

    segment->add_option("--split", split_name, "train or test")->check(CLI::IsMember({"train", "test"}));
    features->add_option("--split", split_name, "train or test")->check(CLI::IsMember({"train", "test"}));
    features->add_option("--source", source_name, "ground_truth or predicted (default per split from the config)")
        ->check(CLI::IsMember({"ground_truth", "predicted"}));
    train_clf->add_option("--features", features_path, "Feature CSV (default: training features)");
    evaluate->add_option("--features", features_path, "Feature CSV (default: test features)");
    evaluate->add_option("--model", model_path, "SVM model (default: <out>/model/svm.json)");

    synth_cmd->add_option("--out", synth_dir, "Dataset directory")->required();
    synth_cmd->add_option("--size", synth.size, "Image side in pixels");
    synth_cmd->add_option("--train", synth.train_count, "Training images");
    synth_cmd->add_option("--test", synth.test_count, "Test images");
    synth_cmd->add_option("--seed", synth.seed, "Seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            const auto manifest = fp::write_phantom_dataset(synth_dir, synth);
            std::printf("wrote %s\n", manifest.string().c_str());
            return 0;
        }

        const fp::RunConfig config = resolve(common);
        const fp::Layout layout{config.out_dir};
        const fp::Split split = fp::split_from_string(split_name);

        if (config_cmd->parsed()) {
            std::printf("%s\n", fp::config_to_json(config).dump(2).c_str());
        } else if (prepare->parsed()) {
            const auto s = fp::cmd_prepare(config, print_progress);
            std::printf("prepared %zu originals: %zu training samples, %zu test images\n", s.originals, s.train_samples,
                        s.test_samples);
        } else if (train_seg->parsed()) {
            const auto s = fp::cmd_train_seg(config, print_progress);
            std::printf("trained on %zu samples (%zu validation); best epoch %d; weights %s\n", s.train_samples,
                        s.val_samples, s.best_epoch, layout.weights().string().c_str());
        } else if (segment->parsed()) {
            const auto s = fp::cmd_segment(config, split, print_progress);
            std::printf("segmented %zu images at %dpx\n", s.images, config.resolution);
            print_scores("disc", s.mean_disc);
            print_scores("cup", s.mean_cup);
        } else if (features->parsed()) {
            fp::MaskSource source = split == fp::Split::train ? config.train_feature_source : config.eval_feature_source;
            if (!source_name.empty()) source = fp::mask_source_from_string(source_name);
            const auto s = fp::cmd_features(config, source, split);
            std::printf("wrote %zu rows to %s", s.rows, s.csv.string().c_str());
            if (s.skipped_empty_disc) std::printf(" (skipped %zu with an empty disc)", s.skipped_empty_disc);
            std::printf("\n");
        } else if (train_clf->parsed()) {
            const fp::fs::path csv = features_path.empty()
                                         ? layout.feature_csv(config.train_feature_source, fp::Split::train)
                                         : fp::fs::path(features_path);
            const auto s = fp::cmd_train_clf(config, csv);
            std::printf("best c %g gamma %g cv accuracy %.4f over %zu rows%s\n", s.grid.best_c, s.grid.best_gamma,
                        s.grid.best_accuracy, s.rows, s.converged ? "" : " (SMO hit max_passes)");
        } else if (evaluate->parsed()) {
            const fp::fs::path csv = features_path.empty()
                                         ? layout.feature_csv(config.eval_feature_source, fp::Split::test)
                                         : fp::fs::path(features_path);
            const fp::fs::path model = model_path.empty() ? layout.svm_model() : fp::fs::path(model_path);
            print_eval(fp::cmd_evaluate(config, model, csv));
        } else if (run->parsed()) {
            const auto r = fp::run_all(config, print_progress);
            print_scores("disc", r.segment_test.mean_disc);
            print_scores("cup", r.segment_test.mean_cup);
            print_eval(r.evaluate);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
