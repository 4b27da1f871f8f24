#include "fundus/classifier.hpp"
#include "fundus/random.hpp"

namespace fundus::classifier {

std::vector<int> stratified_folds(std::span<const int> y, int folds, std::uint64_t seed) {
    std::vector<int> fold(y.size(), 0);
    Rng rng(seed);
    for (int cls : {+1, -1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == cls) idx.push_back(i);
        }
        rng.shuffle(idx);
        for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % folds);
    }
    return fold;
}

GridSearchResult grid_search(std::span<const Row> raw_rows, std::span<const int> y, const TrainConfig& config) {
    if (config.c_grid.empty() || config.gamma_grid.empty()) {
        throw ClassifierError(ClassifierError::Kind::invalid_input, "grid search needs non-empty c and gamma grids");
    }
    if (config.cv_folds < 2) throw ClassifierError(ClassifierError::Kind::invalid_input, "cv_folds must be >= 2");
    if (raw_rows.size() != y.size()) {
        throw ClassifierError(ClassifierError::Kind::invalid_input, "row and label counts differ");
    }
    std::size_t pos = 0, neg = 0;
    for (int v : y) (v > 0 ? pos : neg) += 1;
    if (pos < static_cast<std::size_t>(config.cv_folds) || neg < static_cast<std::size_t>(config.cv_folds)) {
        throw ClassifierError(ClassifierError::Kind::insufficient_samples,
                              "grid search needs at least " + std::to_string(config.cv_folds) +
                                  " rows per class (have " + std::to_string(pos) + " glaucoma, " +
                                  std::to_string(neg) + " normal)");
    }

    const std::vector<int> fold = stratified_folds(y, config.cv_folds, config.seed);
    GridSearchResult out;
    bool have_best = false;
    for (double c : config.c_grid) {
        for (double gamma : config.gamma_grid) {
            std::size_t correct = 0;
            for (int f = 0; f < config.cv_folds; ++f) {
                std::vector<Row> train_x;
                std::vector<int> train_y;
                for (std::size_t i = 0; i < y.size(); ++i) {
                    if (fold[i] == f) continue;
                    train_x.push_back(raw_rows[i]);
                    train_y.push_back(y[i]);
                }
                SmoParams p{c, gamma, config.tolerance, config.max_passes, mix_seed(config.seed, f)};
                const SvmModel model = train_svm(train_x, train_y, p).model;
                for (std::size_t i = 0; i < y.size(); ++i) {
                    if (fold[i] != f) continue;
                    correct += to_label(model.predict(std::span<const double>(raw_rows[i]))) == y[i];
                }
            }
            const double acc = static_cast<double>(correct) / static_cast<double>(y.size());
            out.table.push_back({c, gamma, acc});
            const bool better = !have_best || acc > out.best_accuracy ||
                                (acc == out.best_accuracy &&
                                 (c < out.best_c || (c == out.best_c && gamma < out.best_gamma)));
            if (better) {
                out.best_c = c;
                out.best_gamma = gamma;
                out.best_accuracy = acc;
                have_best = true;
            }
        }
    }
    return out;
}

}  // namespace fundus::classifier
