#pragma once

#include "fundus/imaging.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>

namespace fundus::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Pixel-level scores. Where a denominator is zero the score is 1 if prediction and
/// truth are both empty for the class, otherwise 0.
struct SegScores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double jaccard = 0.0;
};

/// Case-level scores. A zero denominator yields 0 and sets `undefined`.
struct DiagScores {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double npv = 0.0;
    double accuracy = 0.0;
    bool undefined = false;
};

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& truth);

SegScores seg_scores(const ConfusionCounts& c);
SegScores mean_seg_scores(std::span<const SegScores> per_image);

DiagScores diag_scores(const ConfusionCounts& c);

enum class Structure { disc, cup };

/// Disc = labels {1,2}; cup = label 2.
BinaryMask structure_mask(const LabelMask& mask, Structure s);

}  // namespace fundus::metrics
