#include "fundus/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace fundus::geometry {

ShapeStats shape_stats(const BinaryMask& mask) {
    double sx = 0.0, sy = 0.0;
    std::size_t area = 0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            ++area;
            sx += x;
            sy += y;
        }
    }
    if (area == 0) throw GeometryError("shape_stats: empty mask");
    const double n = static_cast<double>(area);
    const Point c{sx / n, sy / n};

    double mxx = 0.0, myy = 0.0, mxy = 0.0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const double dx = x - c.x, dy = y - c.y;
            mxx += dx * dx;
            myy += dy * dy;
            mxy += dx * dy;
        }
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    const double half_diff = 0.5 * (mxx - myy);
    const double lambda_max = 0.5 * (mxx + myy) + std::sqrt(half_diff * half_diff + mxy * mxy);
    return {area, c, 4.0 * std::sqrt(std::max(lambda_max, 0.0))};
}

}  // namespace fundus::geometry
