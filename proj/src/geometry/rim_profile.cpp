#include "fundus/geometry.hpp"

#include <cmath>
#include <numbers>

namespace fundus::geometry {
namespace {

// Unit direction for a clockwise-from-up angle; exact on the axes.
Point direction(double degrees) {
    const double d = std::fmod(std::fmod(degrees, 360.0) + 360.0, 360.0);
    if (d == 0.0) return {0.0, -1.0};
    if (d == 90.0) return {1.0, 0.0};
    if (d == 180.0) return {0.0, 1.0};
    if (d == 270.0) return {-1.0, 0.0};
    const double r = d * std::numbers::pi / 180.0;
    return {std::sin(r), -std::cos(r)};
}

// Bilinear occupancy at a sub-pixel point; pixels outside the image count as empty.
double occupancy(const BinaryMask& m, double px, double py) {
    const double fx0 = std::floor(px), fy0 = std::floor(py);
    const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
    const double fx = px - fx0, fy = py - fy0;
    auto at = [&](int x, int y) -> double {
        return (x >= 0 && y >= 0 && x < m.width && y < m.height && m.at(x, y)) ? 1.0 : 0.0;
    };
    return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) + (1 - fx) * fy * at(x0, y0 + 1) +
           fx * fy * at(x0 + 1, y0 + 1);
}

}  // namespace

Quadrant quadrant_of(int degrees) {
    const int d = ((degrees % 360) + 360) % 360;
    if (d <= 45 || d >= 316) return Quadrant::superior;
    if (d <= 135) return Quadrant::temporal;
    if (d <= 225) return Quadrant::inferior;
    return Quadrant::nasal;
}

std::optional<double> boundary_distance_at_angle(const BinaryMask& mask, Point center, double degrees) {
    if (!(center.x >= -0.5 && center.y >= -0.5 && center.x < mask.width - 0.5 && center.y < mask.height - 0.5)) {
        throw GeometryError("boundary_distance_at_angle: center lies outside the image");
    }
    const Point dir = direction(degrees);
    // A sample is inside when the bilinear occupancy reaches 1/2; the last inside sample is
    // refined to the 1/2 crossing between it and the next sample.
    std::optional<double> farthest;
    double prev_t = 0.0, prev_v = 0.0;
    bool prev_inside = false;
    for (int step = 0;; ++step) {
        const double t = step * kRayStep;
        const double px = center.x + t * dir.x;
        const double py = center.y + t * dir.y;
        if (px < -0.5 || py < -0.5 || px > mask.width - 0.5 || py > mask.height - 0.5) break;
        const double v = occupancy(mask, px, py);
        if (prev_inside && v < 0.5) farthest = prev_t + kRayStep * (prev_v - 0.5) / (prev_v - v);
        prev_inside = v >= 0.5;
        if (prev_inside) farthest = t;
        prev_t = t;
        prev_v = v;
    }
    return farthest;
}

RimProfile rim_profile(const BinaryMask& disc, const BinaryMask& cup) {
    if (!disc.same_shape(cup)) throw GeometryError("rim_profile: disc and cup masks differ in size");
    const ShapeStats ds = shape_stats(disc);
    if (!(ds.major_axis_len > 0.0)) throw GeometryError("rim_profile: disc major axis length is zero");

    RimProfile p;
    p.k = ds.major_axis_len;
    p.center = ds.centroid;
    for (int deg = 0; deg < kAngles; ++deg) {
        const std::optional<double> d = boundary_distance_at_angle(disc, p.center, deg);
        const std::optional<double> c = boundary_distance_at_angle(cup, p.center, deg);
        if (!d) ++p.disc_miss_count;
        if (!c) ++p.fallback_count;
        p.t[deg] = d.value_or(0.0) - c.value_or(0.0);
        p.x[deg] = p.t[deg] / p.k;
    }
    return p;
}

QuadrantMeans quadrant_means(const RimProfile& profile) {
    double sum[4] = {0, 0, 0, 0};
    int count[4] = {0, 0, 0, 0};
    for (int deg = 0; deg < kAngles; ++deg) {
        const int q = static_cast<int>(quadrant_of(deg));
        sum[q] += profile.x[deg];
        ++count[q];
    }
    auto mean = [&](Quadrant q) {
        const int i = static_cast<int>(q);
        return sum[i] / count[i];
    };
    return {mean(Quadrant::inferior), mean(Quadrant::superior), mean(Quadrant::nasal), mean(Quadrant::temporal)};
}

}  // namespace fundus::geometry
