#include "fundus/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace fundus {

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::hflip: return "hflip";
        case Provenance::vflip: return "vflip";
        case Provenance::noise: return "noise";
    }
    return "original";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "original") return Provenance::original;
    if (s == "hflip") return Provenance::hflip;
    if (s == "vflip") return Provenance::vflip;
    if (s == "noise") return Provenance::noise;
    throw ImageError(ImageError::Kind::invalid_argument, "unknown provenance: " + std::string(s));
}

GrayImage to_grayscale(const RgbImage& img, GrayMethod method) {
    GrayImage out(img.width, img.height);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* px = &img.data[i * 3];
        if (method == GrayMethod::green) {
            out.data[i] = px[1];
            continue;
        }
        const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
    return out;
}

MergeResult merge_masks(const BinaryMask& disc, const BinaryMask& cup) {
    if (!disc.same_shape(cup)) {
        throw ImageError(ImageError::Kind::dimension_mismatch, "disc and cup masks differ in size");
    }
    MergeResult r{LabelMask(disc.width, disc.height), 0};
    for (std::size_t i = 0; i < disc.size(); ++i) {
        const bool d = disc.data[i] != 0;
        const bool c = cup.data[i] != 0;
        if (c && !d) ++r.cup_outside_disc;
        r.mask.data[i] = (c && d) ? kCup : (d ? kDiscRim : kBackground);
    }
    return r;
}

MaskPair split_label_mask(const LabelMask& mask) {
    MaskPair p{BinaryMask(mask.width, mask.height), BinaryMask(mask.width, mask.height)};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const std::uint8_t v = mask.data[i];
        p.disc.data[i] = (v == kDiscRim || v == kCup) ? 1 : 0;
        p.cup.data[i] = v == kCup ? 1 : 0;
    }
    return p;
}

GrayImage resize_image(const GrayImage& img, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ImageError(ImageError::Kind::invalid_argument, "resize target must be positive");
    }
    if (img.same_shape(width, height)) return img;
    GrayImage out(width, height);
    const double sx = width > 1 ? static_cast<double>(img.width - 1) / (width - 1) : 0.0;
    const double sy = height > 1 ? static_cast<double>(img.height - 1) / (height - 1) : 0.0;
    for (int y = 0; y < height; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
            const double bottom = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
            const double v = (1.0 - wy) * top + wy * bottom;
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

LabelMask resize_mask(const LabelMask& mask, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ImageError(ImageError::Kind::invalid_argument, "resize target must be positive");
    }
    if (mask.same_shape(width, height)) return mask;
    LabelMask out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / height), mask.height - 1);
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / width), mask.width - 1);
            out.at(x, y) = mask.at(sx, sy);
        }
    }
    return out;
}

namespace {

template <typename PlaneT>
PlaneT flip_horizontal(const PlaneT& in) {
    PlaneT out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) out.at(x, y) = in.at(in.width - 1 - x, y);
    }
    return out;
}

template <typename PlaneT>
PlaneT flip_vertical(const PlaneT& in) {
    PlaneT out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        std::copy_n(&in.data[static_cast<std::size_t>(in.height - 1 - y) * in.width], in.width,
                    &out.data[static_cast<std::size_t>(y) * in.width]);
    }
    return out;
}

}  // namespace

GrayImage hflip(const GrayImage& img) { return flip_horizontal(img); }
GrayImage vflip(const GrayImage& img) { return flip_vertical(img); }
LabelMask hflip(const LabelMask& m) { return flip_horizontal(m); }
LabelMask vflip(const LabelMask& m) { return flip_vertical(m); }
BinaryMask hflip(const BinaryMask& m) { return flip_horizontal(m); }
BinaryMask vflip(const BinaryMask& m) { return flip_vertical(m); }

}  // namespace fundus
