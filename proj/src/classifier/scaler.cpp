#include "fundus/classifier.hpp"

#include <cmath>

namespace fundus::classifier {

std::string to_string(Diagnosis d) { return d == Diagnosis::glaucoma ? "glaucoma" : "normal"; }

Row Scaler::apply(std::span<const double> row) const {
    if (row.size() != dims()) {
        throw ClassifierError(ClassifierError::Kind::invalid_input,
                              "scaler expects " + std::to_string(dims()) + " features, got " +
                                  std::to_string(row.size()));
    }
    Row out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / stddev[j];
    return out;
}

Scaler Scaler::identity(std::size_t dims) { return {std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0)}; }

Scaler fit_scaler(std::span<const Row> rows) {
    if (rows.empty()) throw ClassifierError(ClassifierError::Kind::invalid_input, "fit_scaler: no rows");
    const std::size_t d = rows.front().size();
    Scaler s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const Row& r : rows) {
        if (r.size() != d) throw ClassifierError(ClassifierError::Kind::invalid_input, "fit_scaler: ragged rows");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    const double n = static_cast<double>(rows.size());
    for (double& m : s.mean) m /= n;
    for (const Row& r : rows) {
        for (std::size_t j = 0; j < d; ++j) s.stddev[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    }
    for (std::size_t j = 0; j < d; ++j) {
        s.stddev[j] = std::sqrt(s.stddev[j] / n);
        if (!(s.stddev[j] > 0.0)) {
            s.mean[j] = 0.0;
            s.stddev[j] = 1.0;
        }
    }
    return s;
}

Scaler fit_scaler(std::span<const geometry::FeatureVector> rows) {
    std::vector<Row> raw;
    raw.reserve(rows.size());
    for (const auto& f : rows) {
        const auto a = f.to_array();
        raw.emplace_back(a.begin(), a.end());
    }
    return fit_scaler(raw);
}

Row apply_scaler(const Scaler& scaler, const geometry::FeatureVector& row) {
    const auto a = row.to_array();
    return scaler.apply(a);
}

double rbf_kernel(std::span<const double> m, std::span<const double> n, double gamma) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        const double d = m[j] - n[j];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

}  // namespace fundus::classifier
