#pragma once

// Shape measurements on disc/cup masks: moments, the 360-degree rim-thickness
// profile and the eight classifier features.
//
// Angles: 0 degrees points to the top of the image (decreasing row) and angles
// increase clockwise, so 90 is image-right and 180 is image-bottom.

#include "fundus/imaging.hpp"

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

namespace fundus::geometry {

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;  // column
    double y = 0.0;  // row
};

struct ShapeStats {
    std::size_t area = 0;
    Point centroid;
    double major_axis_len = 0.0;  // 4 * sqrt(largest eigenvalue of the central second-moment matrix)
};

inline constexpr int kAngles = 360;
inline constexpr double kRayStep = 0.25;

struct RimProfile {
    std::array<double, kAngles> t{};  // disc distance minus cup distance, pixels
    std::array<double, kAngles> x{};  // t / k
    double k = 0.0;                   // disc major axis length
    Point center;                     // disc centroid
    int fallback_count = 0;           // angles whose cup ray found no cup pixel
    int disc_miss_count = 0;          // angles whose disc ray found no disc pixel
};

struct QuadrantMeans {
    double inferior = 0.0;
    double superior = 0.0;
    double nasal = 0.0;
    double temporal = 0.0;
};

enum class Quadrant { superior, temporal, inferior, nasal };

/// Superior {0..45, 316..359}, temporal {46..135}, inferior {136..225}, nasal {226..315}.
Quadrant quadrant_of(int degrees);

inline constexpr int kFeatureCount = 8;

struct FeatureVector {
    double acdr = 0.0;
    double dcdr = 0.0;
    double cup_diameter = 0.0;
    double disc_diameter = 0.0;
    double cup_area = 0.0;
    double disc_area = 0.0;
    double s_distance = 0.0;
    double i_distance = 0.0;

    /// Column order used by the feature CSV and the classifier.
    std::array<double, kFeatureCount> to_array() const {
        return {acdr, dcdr, cup_diameter, disc_diameter, cup_area, disc_area, s_distance, i_distance};
    }
    static FeatureVector from_array(const std::array<double, kFeatureCount>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
    }
    static const std::array<const char*, kFeatureCount>& names();
    bool operator==(const FeatureVector&) const = default;
};

/// Largest 4-connected foreground component; ties keep the one met first in scan order.
BinaryMask largest_component(const BinaryMask& mask);

ShapeStats shape_stats(const BinaryMask& mask);

/// Distance from `center` to the farthest foreground point on the ray at `degrees`.
/// The ray is sampled every kRayStep pixels until it leaves the image; a sample is
/// foreground when the bilinearly interpolated mask is >= 1/2, and the farthest
/// foreground sample is refined to the 1/2 crossing before the next sample.
std::optional<double> boundary_distance_at_angle(const BinaryMask& mask, Point center, double degrees);

RimProfile rim_profile(const BinaryMask& disc, const BinaryMask& cup);

QuadrantMeans quadrant_means(const RimProfile& profile);

struct FeatureResult {
    FeatureVector features;
    RimProfile profile;
};

/// Both masks go through largest_component first. An empty cup is allowed.
FeatureResult extract_features(const BinaryMask& disc, const BinaryMask& cup);
FeatureVector compute_features(const BinaryMask& disc, const BinaryMask& cup);

}  // namespace fundus::geometry
