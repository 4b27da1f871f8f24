#include "fundus/classifier.hpp"
#include "fundus/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fundus::classifier {
namespace {

// Working state of one SMO run (Platt 1998 with a full-sweep / non-bound-sweep alternation).
class SmoSolver {
public:
    SmoSolver(std::span<const Row> x, std::span<const int> y, const SmoParams& p)
        : x_(x), y_(y), p_(p), n_(x.size()), kernel_(n_ * n_), alpha_(n_, 0.0), f_(n_, 0.0), rng_(p.seed) {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i; j < n_; ++j) {
                const double k = rbf_kernel(x_[i], x_[j], p_.gamma);
                kernel_[i * n_ + j] = k;
                kernel_[j * n_ + i] = k;
            }
        }
        // The final bias is re-estimated as an average, which can move margins by up to
        // the working tolerance; half the requested tolerance keeps the result inside it.
        tol_ = 0.5 * p_.tolerance;
    }

    void run() {
        bool examine_all = true;
        int changed = 0;
        while ((changed > 0 || examine_all) && passes_ < p_.max_passes) {
            changed = 0;
            if (examine_all) {
                for (std::size_t i = 0; i < n_; ++i) changed += examine(i);
            } else {
                for (std::size_t i = 0; i < n_; ++i) {
                    if (non_bound(i)) changed += examine(i);
                }
            }
            ++passes_;
            if (examine_all) {
                examine_all = false;
            } else if (changed == 0) {
                examine_all = true;
            }
        }
        converged_ = !(changed > 0 || examine_all);
    }

    SmoResult result() const {
        SmoResult r;
        r.alpha = alpha_;
        r.converged = converged_;
        r.passes = passes_;
        r.dual_objective = objective();
        SvmModel& m = r.model;
        m.c = p_.c;
        m.gamma = p_.gamma;
        m.scaler = Scaler::identity(x_.front().size());
        m.bias = final_bias();
        for (std::size_t i = 0; i < n_; ++i) {
            if (alpha_[i] > 0.0) {
                m.support_vectors.push_back(x_[i]);
                m.coefficients.push_back(alpha_[i] * y_[i]);
            }
        }
        return r;
    }

private:
    double k(std::size_t i, std::size_t j) const { return kernel_[i * n_ + j]; }
    double error(std::size_t i) const { return f_[i] + b_ - y_[i]; }
    bool non_bound(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < p_.c; }

    double objective() const {
        double lin = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            lin += alpha_[i];
            quad += alpha_[i] * y_[i] * f_[i];
        }
        return lin - 0.5 * quad;
    }

    int examine(std::size_t i2) {
        const double e2 = error(i2);
        const double r2 = e2 * y_[i2];
        const double a2 = alpha_[i2];
        if (!((r2 < -tol_ && a2 < p_.c) || (r2 > tol_ && a2 > 0.0))) return 0;

        // Second-choice heuristic: maximise |E1 - E2| over non-bound examples.
        std::size_t best = n_;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!non_bound(i)) continue;
            const double gap = std::abs(error(i) - e2);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best < n_ && take_step(best, i2)) return 1;

        const std::size_t start_nb = rng_.index(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t i1 = (start_nb + k) % n_;
            if (non_bound(i1) && take_step(i1, i2)) return 1;
        }
        const std::size_t start_all = rng_.index(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t i1 = (start_all + k) % n_;
            if (take_step(i1, i2)) return 1;
        }
        return 0;
    }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        const double c = p_.c;
        const double a1 = alpha_[i1], a2 = alpha_[i2];
        const int y1 = y_[i1], y2 = y_[i2];
        const double e1 = error(i1), e2 = error(i2);
        const double s = y1 * y2;
        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c, c + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - c);
            hi = std::min(c, a1 + a2);
        }
        if (lo >= hi) return false;

        const double eta = k(i1, i1) + k(i2, i2) - 2.0 * k(i1, i2);
        double a2n;
        if (eta > 0.0) {
            a2n = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
        } else {
            // Objective gain along the feasible line is delta*y2*(E1-E2) - eta*delta^2/2.
            auto gain = [&](double target) {
                const double d = target - a2;
                return d * y2 * (e1 - e2) - 0.5 * eta * d * d;
            };
            const double gl = gain(lo), gh = gain(hi);
            if (gl > gh + kEps) {
                a2n = lo;
            } else if (gh > gl + kEps) {
                a2n = hi;
            } else {
                a2n = a2;
            }
        }
        if (std::abs(a2n - a2) < kEps * (a2n + a2 + kEps)) return false;

        double a1n = a1 + s * (a2 - a2n);
        if (a1n < 0.0) {
            a2n += s * a1n;
            a1n = 0.0;
        } else if (a1n > c) {
            a2n += s * (a1n - c);
            a1n = c;
        }
        a2n = std::clamp(a2n, 0.0, c);

        const double d1 = y1 * (a1n - a1);
        const double d2 = y2 * (a2n - a2);
        const double b1 = b_ - e1 - d1 * k(i1, i1) - d2 * k(i1, i2);
        const double b2 = b_ - e2 - d1 * k(i1, i2) - d2 * k(i2, i2);
        if (a1n > 0.0 && a1n < c) {
            b_ = b1;
        } else if (a2n > 0.0 && a2n < c) {
            b_ = b2;
        } else {
            b_ = 0.5 * (b1 + b2);
        }
        for (std::size_t i = 0; i < n_; ++i) f_[i] += d1 * k(i1, i) + d2 * k(i2, i);
        alpha_[i1] = a1n;
        alpha_[i2] = a2n;
        return true;
    }

    // Average over unbounded support vectors, written so that symmetric problems give an exactly symmetric b:
    // b = (sum_U y_i - sum_j coef_j sum_U K_ij) / |U|.
    double final_bias() const {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n_; ++i) {
            if (non_bound(i)) free.push_back(i);
        }
        if (!free.empty()) {
            double sum_y = 0.0;
            for (std::size_t i : free) sum_y += y_[i];
            double sum_f = 0.0;
            for (std::size_t j = 0; j < n_; ++j) {
                if (alpha_[j] == 0.0) continue;
                double col = 0.0;
                for (std::size_t i : free) col += k(i, j);
                sum_f += alpha_[j] * y_[j] * col;
            }
            return (sum_y - sum_f) / static_cast<double>(free.size());
        }
        // No free vectors: midpoint of the interval allowed by the KKT conditions.
        double lower = -std::numeric_limits<double>::infinity();
        double upper = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_; ++i) {
            const double bound = y_[i] - f_[i];
            const bool at_zero = alpha_[i] <= 0.0;
            if ((y_[i] > 0) == at_zero) {
                lower = std::max(lower, bound);
            } else {
                upper = std::min(upper, bound);
            }
        }
        if (std::isfinite(lower) && std::isfinite(upper)) return 0.5 * (lower + upper);
        if (std::isfinite(lower)) return lower;
        if (std::isfinite(upper)) return upper;
        return 0.0;
    }

    static constexpr double kEps = 1e-12;

    std::span<const Row> x_;
    std::span<const int> y_;
    SmoParams p_;
    std::size_t n_;
    std::vector<double> kernel_;
    std::vector<double> alpha_;
    std::vector<double> f_;  // sum_j alpha_j y_j K_ij, without bias
    double b_ = 0.0;
    double tol_ = 1e-3;
    int passes_ = 0;
    bool converged_ = false;
    Rng rng_;
};

void validate_training_set(std::span<const Row> x, std::span<const int> y) {
    if (x.size() != y.size()) {
        throw ClassifierError(ClassifierError::Kind::invalid_input, "row and label counts differ");
    }
    if (x.size() < 2) throw ClassifierError(ClassifierError::Kind::invalid_input, "SVM needs at least two rows");
    const std::size_t d = x.front().size();
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].size() != d) throw ClassifierError(ClassifierError::Kind::invalid_input, "ragged rows");
        if (y[i] == 1) {
            pos = true;
        } else if (y[i] == -1) {
            neg = true;
        } else {
            throw ClassifierError(ClassifierError::Kind::invalid_input, "labels must be +1 or -1");
        }
    }
    if (!pos || !neg) throw ClassifierError(ClassifierError::Kind::single_class, "training data has a single class");
}

}  // namespace

double SvmModel::decision_value(std::span<const double> raw_row) const {
    const Row z = scaler.apply(raw_row);
    double f = bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) {
        f += coefficients[i] * rbf_kernel(support_vectors[i], z, gamma);
    }
    return f;
}

double SvmModel::decision_value(const geometry::FeatureVector& row) const {
    const auto a = row.to_array();
    return decision_value(std::span<const double>(a));
}

Diagnosis SvmModel::predict(std::span<const double> raw_row) const {
    return decision_value(raw_row) >= 0.0 ? Diagnosis::glaucoma : Diagnosis::normal;
}

Diagnosis SvmModel::predict(const geometry::FeatureVector& row) const {
    return decision_value(row) >= 0.0 ? Diagnosis::glaucoma : Diagnosis::normal;
}

SmoResult smo_train(std::span<const Row> x, std::span<const int> y, const SmoParams& params) {
    validate_training_set(x, y);
    if (!(params.gamma > 0.0) || !(params.c > 0.0) || !(params.tolerance > 0.0) || params.max_passes <= 0) {
        throw ClassifierError(ClassifierError::Kind::invalid_input, "SMO needs gamma, c, tolerance and max_passes > 0");
    }
    SmoSolver solver(x, y, params);
    solver.run();
    return solver.result();
}

double dual_objective(std::span<const Row> x, std::span<const int> y, std::span<const double> alpha, double gamma) {
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lin += alpha[i];
        if (alpha[i] == 0.0) continue;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (alpha[j] == 0.0) continue;
            quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf_kernel(x[i], x[j], gamma);
        }
    }
    return lin - 0.5 * quad;
}

SmoResult train_svm(std::span<const Row> raw_rows, std::span<const int> y, const SmoParams& params) {
    validate_training_set(raw_rows, y);
    Scaler scaler = fit_scaler(raw_rows);
    std::vector<Row> scaled;
    scaled.reserve(raw_rows.size());
    for (const Row& r : raw_rows) scaled.push_back(scaler.apply(r));
    SmoResult r = smo_train(scaled, y, params);
    r.model.scaler = std::move(scaler);
    return r;
}

}  // namespace fundus::classifier
