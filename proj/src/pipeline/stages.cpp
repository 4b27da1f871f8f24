#include "fundus/pipeline.hpp"
#include "fundus/random.hpp"

#include "csv.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <thread>

namespace fundus::pipeline {
namespace {

using ojson = nlohmann::ordered_json;
using K = PipelineError::Kind;

// Stream ids for mix_seed so each stage draws from its own sequence.
constexpr std::uint64_t kAugmentStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kFoldStream = 3;
constexpr std::uint64_t kInitStream = 4;
constexpr std::uint64_t kFinalFitStream = 5;

void note(const ProgressFn& progress, const std::string& msg) {
    if (progress) progress(msg);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError(K::stage, "cannot write " + path.string());
    out << text;
    if (!out) throw PipelineError(K::stage, "write failed: " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Wall-clock data lives only here so every other report stays byte-reproducible.
void log_run(const RunConfig& config, const std::string& stage, const ojson& extra = ojson::object()) {
    ojson j;
    j["time"] = utc_timestamp();
    j["stage"] = stage;
    j["seed"] = config.seed;
    j["config_hash"] = config_hash(config);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    const fs::path path = Layout{config.out_dir}.run_log();
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << j.dump() << '\n';
}

template <typename F>
auto parallel_map(std::size_t n, F&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    const std::size_t workers = std::min<std::size_t>(worker_count(), n);

    auto run_one = [&](std::size_t i) {
        try {
            slots[i].emplace(fn(i));
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    // report the first failure in index order so errors do not depend on scheduling
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// ---- prepared index ------------------------------------------------------------------------

constexpr const char* kIndexHeader = "id,split,label";
constexpr const char* kTrainIndexHeader = "id,source_id,provenance";

struct IndexEntry {
    std::string id;
    Split split = Split::train;
    CaseLabel label = CaseLabel::unknown;
};

std::vector<IndexEntry> read_index(const Layout& layout) {
    const fs::path path = layout.prepared_index();
    if (!fs::exists(path)) {
        throw PipelineError(K::missing_data, "prepared data not found (" + path.string() + "); run prepare first");
    }
    const auto rows = csv::lines(csv::read_file(path.string()));
    if (rows.empty() || rows.front().second != kIndexHeader) {
        throw PipelineError(K::missing_data, "malformed prepared index: " + path.string());
    }
    std::vector<IndexEntry> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto f = csv::split_line(rows[r].second);
        if (f.size() != 3) throw PipelineError(K::missing_data, "malformed prepared index line " + std::to_string(rows[r].first));
        out.push_back({f[0], split_from_string(f[1]), label_from_string(f[2])});
    }
    return out;
}

std::vector<IndexEntry> index_of_split(const Layout& layout, Split split) {
    std::vector<IndexEntry> all = read_index(layout);
    std::vector<IndexEntry> out;
    for (auto& e : all) {
        if (e.split == split) out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });
    return out;
}

void check_resolution(int width, int height, int resolution, const std::string& what) {
    if (width != resolution || height != resolution) {
        throw PipelineError(K::stage, "resolution mismatch: " + what + " is " + std::to_string(width) + "x" +
                                          std::to_string(height) + ", config expects " + std::to_string(resolution));
    }
}

ojson seg_json(const metrics::SegScores& s) {
    return ojson{{"accuracy", s.accuracy}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                 {"jaccard", s.jaccard}};
}

ojson diag_json(const metrics::DiagScores& d) {
    return ojson{{"sensitivity", d.sensitivity}, {"specificity", d.specificity}, {"precision", d.precision},
                 {"npv", d.npv},                 {"accuracy", d.accuracy},       {"undefined", d.undefined}};
}

std::vector<classifier::Row> feature_rows(const std::vector<FeatureRecord>& records) {
    std::vector<classifier::Row> rows;
    rows.reserve(records.size());
    for (const FeatureRecord& r : records) {
        const auto a = r.features.to_array();
        rows.emplace_back(a.begin(), a.end());
    }
    return rows;
}

void require_labels(const std::vector<FeatureRecord>& records, const fs::path& csv_path) {
    if (records.empty()) throw PipelineError(K::missing_data, "missing labels: no rows in " + csv_path.string());
    std::string ids;
    std::size_t n = 0;
    for (const FeatureRecord& r : records) {
        if (r.label != CaseLabel::unknown) continue;
        if (n++ < 10) ids += " " + r.id;
    }
    if (n) throw PipelineError(K::missing_data, "missing labels for " + std::to_string(n) + " row(s):" + ids);
}

}  // namespace

unsigned worker_count() {
    if (const char* env = std::getenv("FUNDUS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---- prepare -------------------------------------------------------------------------------

PrepareSummary cmd_prepare(const RunConfig& config, const ProgressFn& progress) {
    validate_config(config);
    const Manifest manifest = load_manifest(config.manifest);
    const std::size_t n_train = manifest.count(Split::train);
    if (n_train == 0) throw PipelineError(K::missing_data, "manifest has no training entries");
    if (config.augment_target < n_train) {
        throw PipelineError(K::config, "augment_target (" + std::to_string(config.augment_target) +
                                           ") is below the number of training images (" + std::to_string(n_train) + ")");
    }

    const Layout layout{config.out_dir};
    fs::remove_all(layout.prepared_dir());
    fs::create_directories(layout.prepared_dir() / "images");
    fs::create_directories(layout.prepared_dir() / "masks");
    fs::create_directories(layout.prepared_dir() / "augmented");

    std::vector<const ManifestEntry*> entries;
    for (Split s : {Split::train, Split::test}) {
        for (const ManifestEntry* e : manifest.of_split(s)) entries.push_back(e);
    }
    note(progress, "preparing " + std::to_string(entries.size()) + " images at " + std::to_string(config.resolution) + "px");

    struct Prepared {
        Sample sample;
        std::size_t cup_outside = 0;
    };
    const int res = config.resolution;
    std::vector<Prepared> prepared = parallel_map(entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = *entries[i];
        const RgbImage rgb = load_image(e.image);
        GrayImage gray = to_grayscale(rgb, config.gray_method);
        if (config.use_clahe) gray = clahe(gray, config.clahe);
        const BinaryMask disc = load_binary_mask(e.disc_mask);
        const BinaryMask cup = load_binary_mask(e.cup_mask);
        if (!disc.same_shape(gray) || !cup.same_shape(gray)) {
            throw ImageError(ImageError::Kind::dimension_mismatch, "masks of " + e.id + " differ in size from the image");
        }
        MergeResult merged = merge_masks(disc, cup);

        Prepared p;
        p.sample.id = e.id;
        p.sample.image = resize_image(gray, res, res);
        p.sample.mask = resize_mask(merged.mask, res, res);
        p.cup_outside = merged.cup_outside_disc;
        save_gray(layout.prepared_image(e.id), p.sample.image);
        save_label_mask(layout.prepared_mask(e.id), p.sample.mask);
        return p;
    });

    PrepareSummary summary;
    summary.originals = entries.size();
    ojson clipped = ojson::object();
    std::string index = std::string(kIndexHeader) + "\n";
    std::vector<Sample> train;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const ManifestEntry& e = *entries[i];
        index += csv::quote(e.id) + "," + to_string(e.split) + "," + to_string(e.label) + "\n";
        summary.cup_outside_disc += prepared[i].cup_outside;
        if (prepared[i].cup_outside) clipped[e.id] = prepared[i].cup_outside;
        if (e.split == Split::train) {
            train.push_back(std::move(prepared[i].sample));
        } else {
            ++summary.test_samples;
        }
    }
    write_text(layout.prepared_index(), index);

    const std::vector<Sample> expanded =
        expand_dataset(train, config.augment_target, mix_seed(config.seed, kAugmentStream), {config.noise_sigma});
    std::string train_index = std::string(kTrainIndexHeader) + "\n";
    for (std::size_t i = 0; i < expanded.size(); ++i) {
        const Sample& s = expanded[i];
        // augmented ids are <source>_<op>_<k>
        const std::string source = i < train.size() ? s.id : s.id.substr(0, s.id.rfind('_', s.id.rfind('_') - 1));
        train_index += csv::quote(s.id) + "," + csv::quote(source) + "," + std::string(to_string(s.provenance)) + "\n";
        if (s.provenance != Provenance::original) {
            save_gray(layout.augmented_image(s.id), s.image);
            save_label_mask(layout.augmented_mask(s.id), s.mask);
        }
    }
    write_text(layout.train_index(), train_index);
    summary.train_samples = expanded.size();

    ojson report;
    report["resolution"] = res;
    report["originals"] = summary.originals;
    report["train_originals"] = train.size();
    report["train_samples"] = summary.train_samples;
    report["test_samples"] = summary.test_samples;
    report["cup_outside_disc_pixels"] = summary.cup_outside_disc;
    report["cup_outside_disc_by_id"] = clipped;
    report["seed"] = config.seed;
    report["config_hash"] = config_hash(config);
    write_json(layout.prepare_report(), report);
    log_run(config, "prepare");
    note(progress, "prepared " + std::to_string(summary.train_samples) + " training and " +
                       std::to_string(summary.test_samples) + " test samples");
    return summary;
}

// ---- train-seg -----------------------------------------------------------------------------

TrainSegSummary cmd_train_seg(const RunConfig& config, const ProgressFn& progress) {
    validate_config(config);
    const Layout layout{config.out_dir};
    const fs::path index_path = layout.train_index();
    if (!fs::exists(index_path)) {
        throw PipelineError(K::missing_data, "prepared training data not found (" + index_path.string() + "); run prepare first");
    }
    const auto rows = csv::lines(csv::read_file(index_path.string()));
    if (rows.empty() || rows.front().second != kTrainIndexHeader) {
        throw PipelineError(K::missing_data, "malformed training index: " + index_path.string());
    }

    struct Row {
        std::string id, source;
        Provenance provenance;
    };
    std::vector<Row> listed;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto f = csv::split_line(rows[r].second);
        if (f.size() != 3) throw PipelineError(K::missing_data, "malformed training index line " + std::to_string(rows[r].first));
        listed.push_back({f[0], f[1], provenance_from_string(f[2])});
    }
    if (listed.empty()) throw PipelineError(K::missing_data, "training index is empty");

    std::vector<Sample> samples = parallel_map(listed.size(), [&](std::size_t i) {
        const Row& r = listed[i];
        const bool original = r.provenance == Provenance::original;
        Sample s;
        s.id = r.id;
        s.provenance = r.provenance;
        s.image = load_gray(original ? layout.prepared_image(r.id) : layout.augmented_image(r.id));
        s.mask = load_label_mask(original ? layout.prepared_mask(r.id) : layout.augmented_mask(r.id));
        check_resolution(s.image.width, s.image.height, config.resolution, "prepared image " + r.id);
        check_resolution(s.mask.width, s.mask.height, config.resolution, "prepared mask " + r.id);
        return s;
    });

    // Validation holds out whole source images, so augmented copies never straddle the split.
    std::vector<std::string> groups;
    for (const Row& r : listed) groups.push_back(r.source);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    Rng rng(mix_seed(config.seed, kSplitStream));
    rng.shuffle(groups);
    const auto n_val_groups = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(groups.size())));
    std::map<std::string, bool> is_val;
    for (std::size_t g = 0; g < groups.size(); ++g) is_val[groups[g]] = g < n_val_groups;

    std::vector<std::size_t> order(listed.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return listed[a].id < listed[b].id; });
    std::vector<Sample> train, val;
    for (std::size_t i : order) (is_val[listed[i].source] ? val : train).push_back(std::move(samples[i]));
    if (train.empty()) throw PipelineError(K::config, "val_fraction leaves no training samples");

    segnet::SegTrainConfig tc;
    tc.base_channels = config.base_channels;
    tc.n_classes = 3;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.learning_rate = config.learning_rate;
    note(progress, "training U-Net on " + std::to_string(train.size()) + " samples (" + std::to_string(val.size()) +
                       " validation), " + std::to_string(config.epochs) + " epochs");

    const segnet::TrainResult result =
        segnet::train_segmenter(tc, train, val, mix_seed(config.seed, kInitStream), [&](const segnet::EpochRecord& r) {
            note(progress, segnet::to_json_line(r));
        });

    fs::create_directories(layout.weights().parent_path());
    segnet::save_weights(result.model, layout.weights());
    std::string log;
    for (const auto& r : result.log) log += segnet::to_json_line(r) + "\n";
    write_text(layout.train_log(), log);
    log_run(config, "train-seg", {{"best_epoch", result.best_epoch}});

    TrainSegSummary summary;
    summary.train_samples = train.size();
    summary.val_samples = val.size();
    summary.best_epoch = result.best_epoch;
    summary.log = result.log;
    return summary;
}

// ---- segment -------------------------------------------------------------------------------

SegmentSummary cmd_segment(const RunConfig& config, Split split, const ProgressFn& progress) {
    validate_config(config);
    const Layout layout{config.out_dir};
    const std::vector<IndexEntry> entries = index_of_split(layout, split);
    if (entries.empty()) throw PipelineError(K::missing_data, "no prepared " + to_string(split) + " images to segment");
    if (!fs::exists(layout.weights())) {
        throw PipelineError(K::missing_data, "weights not found (" + layout.weights().string() + "); run train-seg first");
    }
    const segnet::UNetModel model = segnet::load_weights(layout.weights());
    fs::create_directories(layout.predicted_mask("x").parent_path());
    note(progress, "segmenting " + std::to_string(entries.size()) + " " + to_string(split) + " images");

    struct Scored {
        metrics::SegScores disc, cup;
    };
    const std::vector<Scored> scored = parallel_map(entries.size(), [&](std::size_t i) {
        const std::string& id = entries[i].id;
        const GrayImage img = load_gray(layout.prepared_image(id));
        check_resolution(img.width, img.height, config.resolution, "prepared image " + id);
        const LabelMask pred = segnet::predict_mask(model, img, config.resolution);
        save_label_mask(layout.predicted_mask(id), pred);
        const LabelMask truth = load_label_mask(layout.prepared_mask(id));
        Scored s;
        for (auto structure : {metrics::Structure::disc, metrics::Structure::cup}) {
            const auto counts = metrics::confusion_counts(metrics::structure_mask(pred, structure),
                                                          metrics::structure_mask(truth, structure));
            (structure == metrics::Structure::disc ? s.disc : s.cup) = metrics::seg_scores(counts);
        }
        return s;
    });

    std::vector<metrics::SegScores> disc, cup;
    ojson per_image = ojson::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        disc.push_back(scored[i].disc);
        cup.push_back(scored[i].cup);
        per_image.push_back({{"id", entries[i].id}, {"disc", seg_json(scored[i].disc)}, {"cup", seg_json(scored[i].cup)}});
    }
    SegmentSummary summary;
    summary.images = entries.size();
    summary.mean_disc = metrics::mean_seg_scores(disc);
    summary.mean_cup = metrics::mean_seg_scores(cup);

    ojson report;
    report["split"] = to_string(split);
    report["resolution"] = config.resolution;
    report["images"] = summary.images;
    report["mean"] = {{"disc", seg_json(summary.mean_disc)}, {"cup", seg_json(summary.mean_cup)}};
    report["per_image"] = per_image;
    report["seed"] = config.seed;
    report["config_hash"] = config_hash(config);
    write_json(layout.segmentation_report(split), report);
    log_run(config, "segment", {{"split", to_string(split)}});
    return summary;
}

// ---- features ------------------------------------------------------------------------------

FeaturesSummary cmd_features(const RunConfig& config, MaskSource source, Split split) {
    validate_config(config);
    const Layout layout{config.out_dir};
    const std::vector<IndexEntry> entries = index_of_split(layout, split);
    if (entries.empty()) throw PipelineError(K::missing_data, "no prepared " + to_string(split) + " entries");

    const std::vector<std::optional<FeatureRecord>> computed = parallel_map(entries.size(), [&](std::size_t i) {
        const IndexEntry& e = entries[i];
        const fs::path mask_path =
            source == MaskSource::ground_truth ? layout.prepared_mask(e.id) : layout.predicted_mask(e.id);
        if (!fs::exists(mask_path)) {
            throw PipelineError(K::missing_data, "no " + to_string(source) + " mask for " + e.id + " (" +
                                                     mask_path.string() + ")" +
                                                     (source == MaskSource::predicted ? "; run segment first" : ""));
        }
        const MaskPair masks = split_label_mask(load_label_mask(mask_path));
        std::optional<FeatureRecord> rec;
        if (std::none_of(masks.disc.data.begin(), masks.disc.data.end(), [](std::uint8_t v) { return v != 0; })) {
            return rec;
        }
        const geometry::FeatureVector f = geometry::compute_features(masks.disc, masks.cup);
        for (double v : f.to_array()) {
            if (!std::isfinite(v)) return rec;
        }
        rec = FeatureRecord{e.id, f, source, masks.disc.width, e.label};
        return rec;
    });

    FeaturesSummary summary;
    summary.csv = layout.feature_csv(source, split);
    std::vector<FeatureRecord> rows;
    for (const auto& r : computed) {
        if (r) {
            rows.push_back(*r);
        } else {
            ++summary.skipped_empty_disc;
        }
    }
    summary.rows = rows.size();
    write_feature_csv(summary.csv, rows);
    log_run(config, "features", {{"source", to_string(source)},
                                 {"split", to_string(split)},
                                 {"rows", summary.rows},
                                 {"skipped_empty_disc", summary.skipped_empty_disc}});
    return summary;
}

// ---- train-clf -----------------------------------------------------------------------------

TrainClfSummary cmd_train_clf(const RunConfig& config, const fs::path& feature_csv) {
    validate_config(config);
    const Layout layout{config.out_dir};
    const std::vector<FeatureRecord> records = read_feature_csv(feature_csv);
    require_labels(records, feature_csv);

    const std::vector<classifier::Row> x = feature_rows(records);
    std::vector<int> y;
    std::size_t n_pos = 0;
    for (const FeatureRecord& r : records) {
        y.push_back(r.label == CaseLabel::glaucoma ? +1 : -1);
        n_pos += r.label == CaseLabel::glaucoma;
    }
    if (n_pos == 0 || n_pos == records.size()) {
        throw classifier::ClassifierError(classifier::ClassifierError::Kind::single_class,
                                          "training features contain a single class");
    }

    classifier::TrainConfig tc = config.svm;
    tc.seed = mix_seed(config.seed, kFoldStream);
    TrainClfSummary summary;
    summary.rows = records.size();
    summary.grid = classifier::grid_search(x, y, tc);

    const classifier::SmoParams params{summary.grid.best_c, summary.grid.best_gamma, tc.tolerance, tc.max_passes,
                                       mix_seed(config.seed, kFinalFitStream)};
    const classifier::SmoResult fit = classifier::train_svm(x, y, params);
    summary.converged = fit.converged;
    fs::create_directories(layout.svm_model().parent_path());
    classifier::save_model(fit.model, layout.svm_model());

    std::string table = "c,gamma,cv_accuracy\n";
    for (const auto& e : summary.grid.table) {
        table += csv::format_double(e.c) + "," + csv::format_double(e.gamma) + "," + csv::format_double(e.accuracy) + "\n";
    }
    write_text(layout.cv_table(), table);

    ojson report;
    report["features"] = feature_csv.filename().string();
    report["rows"] = records.size();
    report["glaucoma"] = n_pos;
    report["normal"] = records.size() - n_pos;
    report["cv_folds"] = tc.cv_folds;
    report["best"] = {{"c", summary.grid.best_c},
                      {"gamma", summary.grid.best_gamma},
                      {"cv_accuracy", summary.grid.best_accuracy}};
    report["support_vectors"] = fit.model.support_vectors.size();
    report["converged"] = fit.converged;
    report["passes"] = fit.passes;
    report["seed"] = config.seed;
    report["config_hash"] = config_hash(config);
    write_json(layout.classifier_report(), report);
    log_run(config, "train-clf");
    return summary;
}

// ---- evaluate ------------------------------------------------------------------------------

EvaluateSummary cmd_evaluate(const RunConfig& config, const fs::path& model_path, const fs::path& feature_csv) {
    validate_config(config);
    const Layout layout{config.out_dir};
    const std::vector<FeatureRecord> records = read_feature_csv(feature_csv);
    require_labels(records, feature_csv);
    if (!fs::exists(model_path)) {
        throw PipelineError(K::missing_data, "SVM model not found (" + model_path.string() + "); run train-clf first");
    }
    const classifier::SvmModel model = classifier::load_model(model_path);

    EvaluateSummary summary;
    ojson predictions = ojson::array();
    for (const FeatureRecord& r : records) {
        const double f = model.decision_value(r.features);
        const bool predicted = model.predict(r.features) == classifier::Diagnosis::glaucoma;
        const bool actual = r.label == CaseLabel::glaucoma;
        if (predicted && actual) {
            ++summary.counts.tp;
        } else if (predicted) {
            ++summary.counts.fp;
        } else if (actual) {
            ++summary.counts.fn;
        } else {
            ++summary.counts.tn;
        }
        predictions.push_back({{"id", r.id},
                               {"label", to_string(r.label)},
                               {"predicted", predicted ? "glaucoma" : "normal"},
                               {"decision_value", f}});
    }
    summary.scores = metrics::diag_scores(summary.counts);

    const std::string hash = config_hash(config);
    ojson report;
    report["features"] = feature_csv.filename().string();
    report["model"] = model_path.filename().string();
    report["source"] = to_string(records.front().source);
    report["resolution"] = records.front().resolution;
    report["positive_class"] = "glaucoma";
    report["counts"] = {{"tp", summary.counts.tp}, {"fp", summary.counts.fp}, {"fn", summary.counts.fn}, {"tn", summary.counts.tn}};
    report["scores"] = diag_json(summary.scores);
    report["predictions"] = predictions;
    report["seed"] = config.seed;
    report["config_hash"] = hash;
    write_json(layout.evaluation_report(), report);

    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
        return std::string(buf);
    };
    const auto& c = summary.counts;
    const auto& s = summary.scores;
    std::string text;
    text += "glaucoma screening evaluation\n";
    text += "features:    " + feature_csv.filename().string() + " (" + to_string(records.front().source) + " masks, " +
            std::to_string(records.front().resolution) + "px)\n";
    text += "cases:       " + std::to_string(c.total()) + "\n";
    text += "tp fp fn tn: " + std::to_string(c.tp) + " " + std::to_string(c.fp) + " " + std::to_string(c.fn) + " " +
            std::to_string(c.tn) + "\n";
    text += "sensitivity: " + pct(s.sensitivity) + "\n";
    text += "specificity: " + pct(s.specificity) + "\n";
    text += "precision:   " + pct(s.precision) + "\n";
    text += "npv:         " + pct(s.npv) + "\n";
    text += "accuracy:    " + pct(s.accuracy) + "\n";
    if (s.undefined) text += "note: at least one score had a zero denominator and is reported as 0\n";
    text += "seed:        " + std::to_string(config.seed) + "\n";
    text += "config hash: " + hash + "\n";
    write_text(layout.summary(), text);
    log_run(config, "evaluate");
    return summary;
}

// ---- whole run -----------------------------------------------------------------------------

RunSummary run_all(const RunConfig& config, const ProgressFn& progress) {
    const Layout layout{config.out_dir};
    RunSummary r;
    r.prepare = cmd_prepare(config, progress);
    r.train_seg = cmd_train_seg(config, progress);
    r.segment_test = cmd_segment(config, Split::test, progress);
    if (config.train_feature_source == MaskSource::predicted) cmd_segment(config, Split::train, progress);
    r.train_features = cmd_features(config, config.train_feature_source, Split::train);
    r.test_features = cmd_features(config, config.eval_feature_source, Split::test);
    r.train_clf = cmd_train_clf(config, r.train_features.csv);
    r.evaluate = cmd_evaluate(config, layout.svm_model(), r.test_features.csv);
    return r;
}

}  // namespace fundus::pipeline
