#include "fundus/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fundus {
namespace {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ImageError(ImageError::Kind::unreadable, "cannot open image file: " + path.string());
    }
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw ImageError(ImageError::Kind::unreadable, "read error: " + path.string());
    }
    return bytes;
}

bool is_png(const Bytes& b) {
    static constexpr std::array<std::uint8_t, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= sig.size() && std::equal(sig.begin(), sig.end(), b.begin());
}

bool is_ppm(const Bytes& b) { return b.size() >= 2 && b[0] == 'P' && b[1] == '6'; }

// ---- PNG ------------------------------------------------------------------

struct PngDecoded {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    Bytes pixels;
};

struct MemoryReader {
    const Bytes* bytes;
    std::size_t offset;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
    if (reader->offset + count > reader->bytes->size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, reader->bytes->data() + reader->offset, count);
    reader->offset += count;
}

void png_error_longjmp(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_warning_handler(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; only trivially destructible state may live
// between setjmp and the library calls, so buffers are owned by the caller.
bool decode_png_into(const Bytes& bytes, bool keep_gray, PngDecoded& out, std::vector<png_bytep>& rows) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_longjmp, png_warning_handler);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    MemoryReader reader{&bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &reader, png_read_from_memory);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if ((color & PNG_COLOR_MASK_COLOR) == 0 && !keep_gray) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out.pixels.resize(rowbytes * out.height);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

PngDecoded decode_png(const Bytes& bytes, const std::filesystem::path& path, bool keep_gray) {
    PngDecoded out;
    std::vector<png_bytep> rows;
    if (!decode_png_into(bytes, keep_gray, out, rows)) {
        throw ImageError(ImageError::Kind::truncated, "corrupt or truncated PNG: " + path.string());
    }
    return out;
}

bool encode_png_file(std::FILE* fp, int width, int height, int channels, const std::uint8_t* data) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_longjmp, png_warning_handler);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(data + stride * y));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

void encode_png(const std::filesystem::path& path, int width, int height, int channels, const std::uint8_t* data) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw ImageError(ImageError::Kind::unreadable, "cannot write image file: " + path.string());
    const bool ok = encode_png_file(fp, width, height, channels, data);
    const bool closed = std::fclose(fp) == 0;
    if (!ok || !closed) throw ImageError(ImageError::Kind::unreadable, "PNG encode failed: " + path.string());
}

// ---- PPM ------------------------------------------------------------------

RgbImage decode_ppm(const Bytes& b, const std::filesystem::path& path) {
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        for (;;) {
            while (pos < b.size() && std::isspace(b[pos])) ++pos;
            if (pos < b.size() && b[pos] == '#') {
                while (pos < b.size() && b[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= b.size() || !std::isdigit(b[pos])) {
            throw ImageError(ImageError::Kind::truncated, "malformed PPM header: " + path.string());
        }
        long v = 0;
        while (pos < b.size() && std::isdigit(b[pos])) {
            v = v * 10 + (b[pos] - '0');
            if (v > 1'000'000) throw ImageError(ImageError::Kind::unsupported_format, "PPM dimension too large");
            ++pos;
        }
        return v;
    };
    const long w = next_token();
    const long h = next_token();
    const long maxval = next_token();
    if (w <= 0 || h <= 0) throw ImageError(ImageError::Kind::unsupported_format, "empty PPM: " + path.string());
    if (maxval != 255) {
        throw ImageError(ImageError::Kind::unsupported_format, "only 8-bit PPM supported: " + path.string());
    }
    if (pos >= b.size() || !std::isspace(b[pos])) {
        throw ImageError(ImageError::Kind::truncated, "malformed PPM header: " + path.string());
    }
    ++pos;
    RgbImage img(static_cast<int>(w), static_cast<int>(h));
    if (b.size() - pos < img.data.size()) {
        throw ImageError(ImageError::Kind::truncated, "truncated PPM data: " + path.string());
    }
    std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(pos), img.data.size(), img.data.begin());
    return img;
}

void encode_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageError(ImageError::Kind::unreadable, "cannot write image file: " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

bool has_extension(const std::filesystem::path& p, std::string_view ext) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ext;
}

template <typename PlaneT>
PlaneT load_plane(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    PlaneT out;
    if (is_png(bytes)) {
        PngDecoded d = decode_png(bytes, path, true);
        out = PlaneT(d.width, d.height);
        if (d.channels == 1) {
            out.data = std::move(d.pixels);
        } else {
            // Colour file used as a mask/gray plane: take the luma.
            RgbImage rgb(d.width, d.height);
            rgb.data = std::move(d.pixels);
            out.data = to_grayscale(rgb).data;
        }
    } else if (is_ppm(bytes)) {
        const GrayImage gray = to_grayscale(decode_ppm(bytes, path));
        out = PlaneT(gray.width, gray.height);
        out.data = gray.data;
    } else {
        throw ImageError(ImageError::Kind::unsupported_format, "unsupported image format: " + path.string());
    }
    return out;
}

}  // namespace

RgbImage load_image(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    if (is_png(bytes)) {
        PngDecoded d = decode_png(bytes, path, false);
        RgbImage img(d.width, d.height);
        img.data = std::move(d.pixels);
        return img;
    }
    if (is_ppm(bytes)) return decode_ppm(bytes, path);
    throw ImageError(ImageError::Kind::unsupported_format, "unsupported image format: " + path.string());
}

void save_image(const std::filesystem::path& path, const RgbImage& img) {
    if (has_extension(path, ".ppm")) {
        encode_ppm(path, img);
    } else {
        encode_png(path, img.width, img.height, 3, img.data.data());
    }
}

GrayImage load_gray(const std::filesystem::path& path) { return load_plane<GrayImage>(path); }

void save_gray(const std::filesystem::path& path, const GrayImage& img) {
    encode_png(path, img.width, img.height, 1, img.data.data());
}

LabelMask load_label_mask(const std::filesystem::path& path) {
    LabelMask m = load_plane<LabelMask>(path);
    const bool already_labels = std::all_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v <= 2; });
    if (!already_labels) {
        for (auto& v : m.data) v = v < 64 ? kBackground : (v < 192 ? kDiscRim : kCup);
    }
    return m;
}

void save_label_mask(const std::filesystem::path& path, const LabelMask& mask) {
    encode_png(path, mask.width, mask.height, 1, mask.data.data());
}

BinaryMask load_binary_mask(const std::filesystem::path& path) {
    BinaryMask m = load_plane<BinaryMask>(path);
    const bool already_binary = std::all_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v <= 1; });
    if (!already_binary) {
        for (auto& v : m.data) v = v >= 128 ? 1 : 0;
    }
    return m;
}

void save_binary_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> scaled(mask.data.size());
    std::transform(mask.data.begin(), mask.data.end(), scaled.begin(), [](std::uint8_t v) { return v ? 255 : 0; });
    encode_png(path, mask.width, mask.height, 1, scaled.data());
}

}  // namespace fundus
