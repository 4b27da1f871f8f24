#pragma once

// Stage orchestration: prepare -> train-seg -> segment -> features -> train-clf -> evaluate.
// Stages communicate only through files under RunConfig::out_dir.

#include "fundus/classifier.hpp"
#include "fundus/geometry.hpp"
#include "fundus/imaging.hpp"
#include "fundus/metrics.hpp"
#include "fundus/segnet.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus::pipeline {

namespace fs = std::filesystem;

class PipelineError : public std::runtime_error {
public:
    enum class Kind { config, manifest, missing_data, stage };

    PipelineError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

enum class Split { train, test };
enum class CaseLabel { glaucoma, normal, unknown };
enum class MaskSource { ground_truth, predicted };

std::string to_string(Split s);
std::string to_string(CaseLabel l);
std::string to_string(MaskSource s);
Split split_from_string(const std::string& s);
CaseLabel label_from_string(const std::string& s);
MaskSource mask_source_from_string(const std::string& s);

// ---- manifest -------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    fs::path image;
    fs::path disc_mask;
    fs::path cup_mask;
    Split split = Split::train;
    CaseLabel label = CaseLabel::unknown;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::size_t count(Split s) const;
    /// Entries of one split, sorted by id.
    std::vector<const ManifestEntry*> of_split(Split s) const;
};

inline constexpr const char* kManifestHeader = "id,image,disc_mask,cup_mask,split,label";

/// Relative paths resolve against `base_dir`. With `check_files`, missing files are
/// reported together, by id.
Manifest parse_manifest(const std::string& text, const fs::path& base_dir, bool check_files);
Manifest load_manifest(const fs::path& path);
/// Writes paths relative to the manifest's directory where possible.
void write_manifest(const fs::path& path, const Manifest& manifest);

// ---- configuration ----------------------------------------------------------------

struct RunConfig {
    fs::path manifest;
    fs::path out_dir = "out";
    std::uint64_t seed = 0;

    int resolution = 256;
    GrayMethod gray_method = GrayMethod::luma;
    bool use_clahe = true;
    ClaheParams clahe;
    double noise_sigma = 10.0;
    std::size_t augment_target = 200;

    int base_channels = 64;
    int epochs = 100;
    int batch_size = 2;
    double learning_rate = 0.001;
    double val_fraction = 0.10;

    classifier::TrainConfig svm;
    MaskSource train_feature_source = MaskSource::ground_truth;
    MaskSource eval_feature_source = MaskSource::predicted;
};

/// Throws PipelineError(config) on out-of-range fields.
void validate_config(const RunConfig& config);
nlohmann::json config_to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const fs::path& path);
/// FNV-1a 64 over the canonical JSON of every field except out_dir, as 16 hex digits.
std::string config_hash(const RunConfig& config);

// ---- synthetic phantoms -----------------------------------------------------------------

struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double rx = 1.0;
    double ry = 1.0;
    double angle_deg = 0.0;  // rotation of the x semi-axis, clockwise on screen
};

/// Pixel centres inside the ellipse are set.
BinaryMask rasterize_ellipse(int width, int height, const Ellipse& e);

struct PhantomSpec {
    int width = 128;
    int height = 128;
    Ellipse disc;
    Ellipse cup;
    double noise_sigma = 4.0;
};

struct Phantom {
    RgbImage image;
    BinaryMask disc;
    BinaryMask cup;
};

Phantom render_phantom(const PhantomSpec& spec, std::uint64_t seed);
/// Glaucomatous phantoms get a large cup displaced toward the inferior rim.
PhantomSpec random_phantom_spec(int size, bool glaucoma, std::uint64_t seed);

struct PhantomDatasetOptions {
    int size = 128;
    int train_count = 12;
    int test_count = 6;
    std::uint64_t seed = 0;
};

/// Writes images/, masks/ and manifest.csv under `dir`; returns the manifest path.
fs::path write_phantom_dataset(const fs::path& dir, const PhantomDatasetOptions& options);

// ---- feature table ---------------------------------------------------------------------

struct FeatureRecord {
    std::string id;
    geometry::FeatureVector features;
    MaskSource source = MaskSource::ground_truth;
    int resolution = 0;
    CaseLabel label = CaseLabel::unknown;
};

inline constexpr const char* kFeatureHeader =
    "id,acdr,dcdr,cup_diameter,disc_diameter,cup_area,disc_area,s_distance,i_distance,source,resolution,label";

std::string features_to_csv(const std::vector<FeatureRecord>& rows);
std::vector<FeatureRecord> features_from_csv(const std::string& text);
void write_feature_csv(const fs::path& path, const std::vector<FeatureRecord>& rows);
std::vector<FeatureRecord> read_feature_csv(const fs::path& path);

// ---- stages ----------------------------------------------------------------------------

/// Fixed on-disk layout below out_dir.
struct Layout {
    fs::path root;

    fs::path prepared_dir() const { return root / "prepared"; }
    fs::path prepared_index() const { return prepared_dir() / "index.csv"; }
    fs::path train_index() const { return prepared_dir() / "train_index.csv"; }
    fs::path prepared_image(const std::string& id) const { return prepared_dir() / "images" / (id + ".png"); }
    fs::path prepared_mask(const std::string& id) const { return prepared_dir() / "masks" / (id + ".png"); }
    fs::path augmented_image(const std::string& id) const { return prepared_dir() / "augmented" / (id + ".png"); }
    fs::path augmented_mask(const std::string& id) const {
        return prepared_dir() / "augmented" / (id + "_mask.png");
    }
    fs::path weights() const { return root / "model" / "unet.weights"; }
    fs::path train_log() const { return root / "model" / "train_log.jsonl"; }
    fs::path predicted_mask(const std::string& id) const { return root / "predicted" / (id + ".png"); }
    fs::path feature_csv(MaskSource source, Split split) const {
        return root / "features" / (to_string(source) + "_" + to_string(split) + ".csv");
    }
    fs::path svm_model() const { return root / "model" / "svm.json"; }
    fs::path cv_table() const { return root / "reports" / "cv_table.csv"; }
    fs::path prepare_report() const { return root / "reports" / "prepare.json"; }
    fs::path classifier_report() const { return root / "reports" / "classifier.json"; }
    fs::path segmentation_report(Split split) const {
        return root / "reports" / ("segmentation_" + to_string(split) + ".json");
    }
    fs::path evaluation_report() const { return root / "reports" / "evaluation.json"; }
    fs::path summary() const { return root / "reports" / "summary.txt"; }
    fs::path run_log() const { return root / "reports" / "run_log.jsonl"; }
};

struct PrepareSummary {
    std::size_t originals = 0;
    std::size_t train_samples = 0;  // after augmentation
    std::size_t test_samples = 0;
    std::size_t cup_outside_disc = 0;
};

struct TrainSegSummary {
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    int best_epoch = 0;
    std::vector<segnet::EpochRecord> log;
};

struct SegmentSummary {
    std::size_t images = 0;
    metrics::SegScores mean_disc;
    metrics::SegScores mean_cup;
};

struct FeaturesSummary {
    fs::path csv;
    std::size_t rows = 0;
    std::size_t skipped_empty_disc = 0;
};

struct TrainClfSummary {
    classifier::GridSearchResult grid;
    std::size_t rows = 0;
    bool converged = true;
};

struct EvaluateSummary {
    metrics::ConfusionCounts counts;  // glaucoma is the positive class
    metrics::DiagScores scores;
};

/// Everything a full run produces, stage by stage.
struct RunSummary {
    PrepareSummary prepare;
    TrainSegSummary train_seg;
    SegmentSummary segment_test;
    FeaturesSummary train_features;
    FeaturesSummary test_features;
    TrainClfSummary train_clf;
    EvaluateSummary evaluate;
};

using ProgressFn = std::function<void(const std::string&)>;

PrepareSummary cmd_prepare(const RunConfig& config, const ProgressFn& progress = {});
TrainSegSummary cmd_train_seg(const RunConfig& config, const ProgressFn& progress = {});
SegmentSummary cmd_segment(const RunConfig& config, Split split, const ProgressFn& progress = {});
FeaturesSummary cmd_features(const RunConfig& config, MaskSource source, Split split);
TrainClfSummary cmd_train_clf(const RunConfig& config, const fs::path& feature_csv);
EvaluateSummary cmd_evaluate(const RunConfig& config, const fs::path& model_path, const fs::path& feature_csv);

/// prepare, train-seg, segment (test, and train when training features come from predictions),
/// features for both splits, train-clf, evaluate.
RunSummary run_all(const RunConfig& config, const ProgressFn& progress = {});

/// Worker count for per-image fan-out: FUNDUS_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

}  // namespace fundus::pipeline
