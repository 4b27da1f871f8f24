#include "fundus/segnet.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

// Layout (little-endian):
//   magic "FSCRNNW1" | u32 version | u32 base_channels | u32 n_classes
//   per block: u32 name_len | name | u32 ndims | u32 dims... | f64 values...
//   u32 CRC32 of everything before it

namespace fundus::segnet {
namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double d) {
        const auto v = std::bit_cast<std::uint64_t>(d);
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw SegnetError(SegnetError::Kind::weight_corrupt, "weight file is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large models.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const UNetModel& model) {
    Writer w;
    w.bytes(kWeightMagic, sizeof kWeightMagic);
    w.u32(kWeightFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.base_channels));
    w.u32(static_cast<std::uint32_t>(model.n_classes));
    for (const ConstParamBlock& b : param_blocks(model)) {
        w.u32(static_cast<std::uint32_t>(b.name.size()));
        w.bytes(b.name.data(), b.name.size());
        w.u32(static_cast<std::uint32_t>(b.dims.size()));
        for (std::uint32_t d : b.dims) w.u32(d);
        for (double v : b.data) w.f64(v);
    }
    const std::uint32_t crc = crc_of(w.buffer());
    w.u32(crc);
    return std::move(w.buffer());
}

UNetModel deserialize_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof kWeightMagic || !std::equal(std::begin(kWeightMagic), std::end(kWeightMagic),
                                                          reinterpret_cast<const char*>(bytes.data()))) {
        throw SegnetError(SegnetError::Kind::weight_version, "not a U-Net weight file (bad magic)");
    }
    constexpr std::size_t kHeader = sizeof kWeightMagic + 12;
    if (bytes.size() < kHeader + 4) throw SegnetError(SegnetError::Kind::weight_corrupt, "weight file is truncated");
    const std::span<const std::uint8_t> body = bytes.first(bytes.size() - 4);
    Reader tail(bytes.last(4));
    if (crc_of(body) != tail.u32()) {
        throw SegnetError(SegnetError::Kind::weight_corrupt, "weight file checksum mismatch (corrupt or truncated)");
    }

    Reader r(body);
    r.str(sizeof kWeightMagic);
    const std::uint32_t version = r.u32();
    if (version != kWeightFormatVersion) {
        throw SegnetError(SegnetError::Kind::weight_version,
                          "unsupported weight format version " + std::to_string(version));
    }
    const std::uint32_t base = r.u32();
    const std::uint32_t classes = r.u32();
    if (base == 0 || base > 4096 || classes < 2 || classes > 256) {
        throw SegnetError(SegnetError::Kind::weight_corrupt, "implausible architecture header");
    }
    UNetModel model = make_unet_shape(static_cast<int>(base), static_cast<int>(classes));
    for (ParamBlock& b : param_blocks(model)) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        if (name != b.name) {
            throw SegnetError(SegnetError::Kind::weight_corrupt, "expected block " + b.name + ", found " + name);
        }
        const std::uint32_t ndims = r.u32();
        std::vector<std::uint32_t> dims(ndims);
        for (auto& d : dims) d = r.u32();
        if (dims != b.dims) throw SegnetError(SegnetError::Kind::weight_corrupt, "shape mismatch in block " + name);
        for (double& v : b.data) v = r.f64();
    }
    if (r.pos() != body.size()) throw SegnetError(SegnetError::Kind::weight_corrupt, "trailing bytes in weight file");
    return model;
}

void save_weights(const UNetModel& model, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = serialize_weights(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SegnetError(SegnetError::Kind::io, "cannot write weight file: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw SegnetError(SegnetError::Kind::io, "write failed: " + path.string());
}

UNetModel load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SegnetError(SegnetError::Kind::io, "cannot open weight file: " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

}  // namespace fundus::segnet
