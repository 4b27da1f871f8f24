#include "fundus/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace fundus {
namespace {

constexpr int kBins = 256;

// Tile i along an axis of length n split into t tiles covers [bound(i), bound(i+1)).
int tile_bound(int i, int n, int t) { return static_cast<int>(static_cast<long long>(i) * n / t); }

using Mapping = std::array<double, kBins>;

Mapping tile_mapping(const GrayImage& img, int x0, int x1, int y0, int y1, double clip_limit) {
    std::array<double, kBins> hist{};
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
    }
    const double npix = static_cast<double>(x1 - x0) * (y1 - y0);

    Mapping map{};
    const auto occupied = std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0.0; });
    if (occupied <= 1) {
        // A single-valued tile has nothing to equalize.
        for (int v = 0; v < kBins; ++v) map[v] = v;
        return map;
    }

    const double limit = std::max(1.0, clip_limit * npix / kBins);
    double excess = 0.0;
    for (double& h : hist) {
        if (h > limit) {
            excess += h - limit;
            h = limit;
        }
    }
    const double share = excess / kBins;
    double cdf = 0.0;
    for (int v = 0; v < kBins; ++v) {
        cdf += hist[v] + share;
        map[v] = 255.0 * cdf / npix;
    }
    return map;
}

// Index of the tile whose centre is at or left of p, and the interpolation weight
// towards the next tile. Outside the outermost centres the mapping is not blended.
struct AxisWeight {
    int lo;
    int hi;
    double w;
};

AxisWeight axis_weight(double p, const std::vector<double>& centers) {
    const int t = static_cast<int>(centers.size());
    if (p <= centers.front()) return {0, 0, 0.0};
    if (p >= centers.back()) return {t - 1, t - 1, 0.0};
    int lo = 0;
    while (lo + 1 < t && centers[lo + 1] <= p) ++lo;
    const int hi = std::min(lo + 1, t - 1);
    const double span = centers[hi] - centers[lo];
    return {lo, hi, span > 0.0 ? (p - centers[lo]) / span : 0.0};
}

}  // namespace

GrayImage clahe(const GrayImage& img, const ClaheParams& params) {
    if (params.tiles_x <= 0 || params.tiles_y <= 0) {
        throw ImageError(ImageError::Kind::invalid_argument, "CLAHE tile grid has zero area");
    }
    if (img.width <= 0 || img.height <= 0) {
        throw ImageError(ImageError::Kind::invalid_argument, "CLAHE on an empty image");
    }
    if (params.clip_limit < 1.0) {
        throw ImageError(ImageError::Kind::invalid_argument, "CLAHE clip limit must be >= 1");
    }
    const int tx = std::min(params.tiles_x, img.width);
    const int ty = std::min(params.tiles_y, img.height);

    std::vector<Mapping> maps(static_cast<std::size_t>(tx) * ty);
    std::vector<double> cx(tx), cy(ty);
    for (int j = 0; j < ty; ++j) {
        const int y0 = tile_bound(j, img.height, ty), y1 = tile_bound(j + 1, img.height, ty);
        cy[j] = 0.5 * (y0 + y1);
        for (int i = 0; i < tx; ++i) {
            const int x0 = tile_bound(i, img.width, tx), x1 = tile_bound(i + 1, img.width, tx);
            if (j == 0) cx[i] = 0.5 * (x0 + x1);
            maps[static_cast<std::size_t>(j) * tx + i] = tile_mapping(img, x0, x1, y0, y1, params.clip_limit);
        }
    }

    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        const AxisWeight wy = axis_weight(y + 0.5, cy);
        for (int x = 0; x < img.width; ++x) {
            const AxisWeight wx = axis_weight(x + 0.5, cx);
            const std::uint8_t v = img.at(x, y);
            const double m00 = maps[static_cast<std::size_t>(wy.lo) * tx + wx.lo][v];
            const double m01 = maps[static_cast<std::size_t>(wy.lo) * tx + wx.hi][v];
            const double m10 = maps[static_cast<std::size_t>(wy.hi) * tx + wx.lo][v];
            const double m11 = maps[static_cast<std::size_t>(wy.hi) * tx + wx.hi][v];
            const double top = (1.0 - wx.w) * m00 + wx.w * m01;
            const double bottom = (1.0 - wx.w) * m10 + wx.w * m11;
            const double r = (1.0 - wy.w) * top + wy.w * bottom;
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(r), 0L, 255L));
        }
    }
    return out;
}

}  // namespace fundus
