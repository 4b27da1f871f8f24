#pragma once

// Soft-margin RBF support vector machine trained with sequential minimal optimisation.
//
// Rows are plain vectors so the same machinery serves the eight-feature
// FeatureVector and low-dimensional test data. Labels: glaucoma = +1, normal = -1.

#include "fundus/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus::classifier {

class ClassifierError : public std::runtime_error {
public:
    enum class Kind { invalid_input, single_class, insufficient_samples, model_version, model_corrupt, io };

    ClassifierError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

using Row = std::vector<double>;

enum class Diagnosis { glaucoma, normal };

inline int to_label(Diagnosis d) { return d == Diagnosis::glaucoma ? +1 : -1; }
inline Diagnosis from_label(int y) { return y > 0 ? Diagnosis::glaucoma : Diagnosis::normal; }
std::string to_string(Diagnosis d);

struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dims() const noexcept { return mean.size(); }
    Row apply(std::span<const double> row) const;
    static Scaler identity(std::size_t dims);
};

/// Population z-score per column; constant columns map to mean 0 / std 1.
Scaler fit_scaler(std::span<const Row> rows);
Scaler fit_scaler(std::span<const geometry::FeatureVector> rows);
Row apply_scaler(const Scaler& scaler, const geometry::FeatureVector& row);

double rbf_kernel(std::span<const double> m, std::span<const double> n, double gamma);

struct SvmModel {
    std::vector<Row> support_vectors;  // scaled coordinates
    std::vector<double> coefficients;  // alpha_i * y_i
    double bias = 0.0;
    double gamma = 1.0;
    double c = 1.0;
    Scaler scaler;

    /// f(x) = sum_i coef_i k(s_i, scale(x)) + b
    double decision_value(std::span<const double> raw_row) const;
    double decision_value(const geometry::FeatureVector& row) const;
    /// Glaucoma iff f(x) >= 0.
    Diagnosis predict(std::span<const double> raw_row) const;
    Diagnosis predict(const geometry::FeatureVector& row) const;
};

struct SmoParams {
    double c = 1.0;
    double gamma = 1.0;
    double tolerance = 1e-3;
    int max_passes = 200;
    std::uint64_t seed = 0;
};

struct SmoResult {
    SvmModel model;
    std::vector<double> alpha;  // unsigned dual variables, one per training row
    bool converged = false;
    int passes = 0;
    double dual_objective = 0.0;
};

/// Trains on rows that are already scaled; the returned model carries an identity scaler.
/// Does not throw on non-convergence: `converged` is false and the last iterate is returned.
SmoResult smo_train(std::span<const Row> x, std::span<const int> y, const SmoParams& params);

/// Dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j k(x_i, x_j).
double dual_objective(std::span<const Row> x, std::span<const int> y, std::span<const double> alpha, double gamma);

/// Fits a scaler on raw rows, then trains on the scaled rows.
SmoResult train_svm(std::span<const Row> raw_rows, std::span<const int> y, const SmoParams& params);

struct TrainConfig {
    std::vector<double> c_grid{0.1, 1.0, 10.0, 100.0};
    std::vector<double> gamma_grid{0.01, 0.1, 0.5, 1.0, 2.0};
    double tolerance = 1e-3;
    int max_passes = 200;
    int cv_folds = 5;
    std::uint64_t seed = 0;
};

struct CvEntry {
    double c = 0.0;
    double gamma = 0.0;
    double accuracy = 0.0;
};

struct GridSearchResult {
    double best_c = 0.0;
    double best_gamma = 0.0;
    double best_accuracy = 0.0;
    std::vector<CvEntry> table;  // c-major, in grid order
};

/// Stratified k-fold cross-validation over the (c, gamma) grid. Ties prefer smaller c, then smaller gamma.
GridSearchResult grid_search(std::span<const Row> raw_rows, std::span<const int> y, const TrainConfig& config);

/// Fold index (0..k-1) per row; each class is shuffled by seed and dealt round-robin.
std::vector<int> stratified_folds(std::span<const int> y, int folds, std::uint64_t seed);

inline constexpr const char* kModelFormat = "FSCRSVM1";
inline constexpr int kModelVersion = 1;

std::string model_to_json(const SvmModel& model);
SvmModel model_from_json(const std::string& text);
void save_model(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace fundus::classifier
