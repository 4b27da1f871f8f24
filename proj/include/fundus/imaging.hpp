#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

class ImageError : public std::runtime_error {
public:
    enum class Kind { unreadable, unsupported_format, truncated, invalid_argument, dimension_mismatch };

    ImageError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // r,g,b interleaved, row-major

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* pixel(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* pixel(int x, int y) const { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    bool operator==(const RgbImage&) const = default;
};

/// Single-plane 8-bit raster; also the storage idiom for BinaryMask and LabelMask.
template <typename Tag>
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Plane() = default;
    Plane(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool same_shape(int w, int h) const noexcept { return width == w && height == h; }
    template <typename Other>
    bool same_shape(const Plane<Other>& o) const noexcept { return width == o.width && height == o.height; }
    bool operator==(const Plane&) const = default;
};

struct GrayTag {};
struct BinaryTag {};
struct LabelTag {};

using GrayImage = Plane<GrayTag>;
/// Values are 0 or 1.
using BinaryMask = Plane<BinaryTag>;
/// Values are 0 (background), 1 (disc rim) or 2 (cup).
using LabelMask = Plane<LabelTag>;

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kDiscRim = 1;
inline constexpr std::uint8_t kCup = 2;

enum class Provenance { original, hflip, vflip, noise };
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Sample {
    std::string id;
    GrayImage image;
    LabelMask mask;
    Provenance provenance = Provenance::original;
};

// ---- I/O ------------------------------------------------------------------

/// Decodes PNG (any bit depth/colour type, expanded to 8-bit RGB) or binary PPM (P6).
RgbImage load_image(const std::filesystem::path& path);
/// Writes PNG unless the extension is .ppm.
void save_image(const std::filesystem::path& path, const RgbImage& img);

GrayImage load_gray(const std::filesystem::path& path);
void save_gray(const std::filesystem::path& path, const GrayImage& img);

/// Reads a single-channel label PNG. Values already in {0,1,2} are taken as-is;
/// otherwise {0,128,255}-style ground truth is remapped with thresholds 64 and 192.
LabelMask load_label_mask(const std::filesystem::path& path);
void save_label_mask(const std::filesystem::path& path, const LabelMask& mask);

/// Reads a binary mask image. {0,1} files are taken as-is, anything else is thresholded at 128.
BinaryMask load_binary_mask(const std::filesystem::path& path);
void save_binary_mask(const std::filesystem::path& path, const BinaryMask& mask);

// ---- pixel operations -----------------------------------------------------

enum class GrayMethod { luma, green };

GrayImage to_grayscale(const RgbImage& img, GrayMethod method = GrayMethod::luma);

struct ClaheParams {
    double clip_limit = 2.0;  // multiple of the uniform bin height
    int tiles_x = 8;
    int tiles_y = 8;
};

GrayImage clahe(const GrayImage& img, const ClaheParams& params = {});

struct MergeResult {
    LabelMask mask;
    std::size_t cup_outside_disc = 0;  // cup pixels dropped by cup := cup ∩ disc
};

MergeResult merge_masks(const BinaryMask& disc, const BinaryMask& cup);

struct MaskPair {
    BinaryMask disc;  // labels {1,2}
    BinaryMask cup;   // label 2
};

MaskPair split_label_mask(const LabelMask& mask);

/// Bilinear, corner-aligned.
GrayImage resize_image(const GrayImage& img, int width, int height);
/// Nearest neighbour; never introduces labels absent from the input.
LabelMask resize_mask(const LabelMask& mask, int width, int height);

// ---- augmentation ---------------------------------------------------------

struct AugmentParams {
    double noise_sigma = 10.0;
};

Sample augment(const Sample& s, Provenance op, std::uint64_t seed, const AugmentParams& params = {});

/// Keeps the originals and appends augmented copies until `target` samples exist.
std::vector<Sample> expand_dataset(const std::vector<Sample>& samples, std::size_t target, std::uint64_t seed,
                                   const AugmentParams& params = {});

GrayImage hflip(const GrayImage& img);
GrayImage vflip(const GrayImage& img);
LabelMask hflip(const LabelMask& m);
LabelMask vflip(const LabelMask& m);
BinaryMask hflip(const BinaryMask& m);
BinaryMask vflip(const BinaryMask& m);

}  // namespace fundus
