#include "fundus/geometry.hpp"

#include <algorithm>

namespace fundus::geometry {

const std::array<const char*, kFeatureCount>& FeatureVector::names() {
    static constexpr std::array<const char*, kFeatureCount> kNames{
        "acdr", "dcdr", "cup_diameter", "disc_diameter", "cup_area", "disc_area", "s_distance", "i_distance"};
    return kNames;
}

FeatureResult extract_features(const BinaryMask& disc_in, const BinaryMask& cup_in) {
    if (!disc_in.same_shape(cup_in)) throw GeometryError("compute_features: disc and cup masks differ in size");
    const BinaryMask disc = largest_component(disc_in);
    const BinaryMask cup = largest_component(cup_in);
    if (std::none_of(disc.data.begin(), disc.data.end(), [](std::uint8_t v) { return v != 0; })) {
        throw GeometryError("compute_features: empty disc mask");
    }
    const bool has_cup = std::any_of(cup.data.begin(), cup.data.end(), [](std::uint8_t v) { return v != 0; });

    FeatureResult r;
    const ShapeStats ds = shape_stats(disc);
    r.features.disc_area = static_cast<double>(ds.area);
    r.features.disc_diameter = ds.major_axis_len;
    if (has_cup) {
        const ShapeStats cs = shape_stats(cup);
        r.features.cup_area = static_cast<double>(cs.area);
        r.features.cup_diameter = cs.major_axis_len;
        r.features.acdr = r.features.cup_area / r.features.disc_area;
        r.features.dcdr = ds.major_axis_len > 0.0 ? cs.major_axis_len / ds.major_axis_len : 0.0;
    }
    r.profile = rim_profile(disc, cup);
    const QuadrantMeans q = quadrant_means(r.profile);
    r.features.s_distance = q.superior;
    r.features.i_distance = q.inferior;
    return r;
}

FeatureVector compute_features(const BinaryMask& disc, const BinaryMask& cup) {
    return extract_features(disc, cup).features;
}

}  // namespace fundus::geometry
