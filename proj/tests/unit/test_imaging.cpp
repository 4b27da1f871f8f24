#include "fundus/imaging.hpp"
#include "fundus/random.hpp"

#include "hist_eq.hpp"
#include "temp_dir.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace fundus;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

GrayImage random_gray(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    GrayImage g(w, h);
    for (auto& v : g.data) v = static_cast<std::uint8_t>(rng.index(256));
    return g;
}

BinaryMask random_mask(int w, int h, std::uint64_t seed, double p = 0.5) {
    Rng rng(seed);
    BinaryMask m(w, h);
    for (auto& v : m.data) v = rng.uniform() < p;
    return m;
}

Sample random_sample(int w, int h, std::uint64_t seed) {
    Sample s;
    s.id = "s" + std::to_string(seed);
    s.image = random_gray(w, h, seed);
    s.mask = LabelMask(w, h);
    Rng rng(seed + 1);
    for (auto& v : s.mask.data) v = static_cast<std::uint8_t>(rng.index(3));
    return s;
}

}  // namespace

// ---- decode / encode ----------------------------------------------------------------

TEST(ImageIo, DecodesTinyPpmPixelExact) {
    testutil::TempDir dir("io");
    const std::string ppm = std::string("P6\n# two pixels\n2 1\n255\n") + std::string("\xff\x00\x00\x00\x00\xff", 6);
    write_bytes(dir / "a.ppm", ppm);
    const RgbImage img = load_image(dir / "a.ppm");
    ASSERT_EQ(img.width, 2);
    ASSERT_EQ(img.height, 1);
    EXPECT_EQ(img.data, (std::vector<std::uint8_t>{255, 0, 0, 0, 0, 255}));
}

TEST(ImageIo, PngRoundTripIsIdentity) {
    testutil::TempDir dir("io");
    Rng rng(5);
    RgbImage img(13, 7);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.index(256));
    save_image(dir / "x.png", img);
    const RgbImage once = load_image(dir / "x.png");
    EXPECT_EQ(once, img);
    save_image(dir / "y.png", once);
    EXPECT_EQ(load_image(dir / "y.png"), img);
    save_image(dir / "z.ppm", img);
    EXPECT_EQ(load_image(dir / "z.ppm"), img);
}

TEST(ImageIo, TextFileIsUnsupported) {
    testutil::TempDir dir("io");
    write_bytes(dir / "notes.png", "this is plainly not an image\n");
    try {
        load_image(dir / "notes.png");
        FAIL() << "expected an error";
    } catch (const ImageError& e) {
        EXPECT_EQ(e.kind(), ImageError::Kind::unsupported_format);
    }
}

TEST(ImageIo, TruncatedDataIsReported) {
    testutil::TempDir dir("io");
    write_bytes(dir / "short.ppm", std::string("P6\n4 4\n255\n") + std::string(10, '\x01'));
    try {
        load_image(dir / "short.ppm");
        FAIL() << "expected an error";
    } catch (const ImageError& e) {
        EXPECT_EQ(e.kind(), ImageError::Kind::truncated);
    }

    RgbImage img(32, 32);
    save_image(dir / "full.png", img);
    std::ifstream in(dir / "full.png", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    write_bytes(dir / "cut.png", bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_image(dir / "cut.png"), ImageError);
}

TEST(ImageIo, MissingFileIsUnreadable) {
    try {
        load_image("/nonexistent/definitely/missing.png");
        FAIL();
    } catch (const ImageError& e) {
        EXPECT_EQ(e.kind(), ImageError::Kind::unreadable);
    }
}

TEST(ImageIo, LabelMaskImportRemapsGroundTruthLevels) {
    testutil::TempDir dir("io");
    GrayImage g(4, 1);
    g.data = {0, 128, 255, 200};
    save_gray(dir / "gt.png", g);
    const LabelMask m = load_label_mask(dir / "gt.png");
    EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 1, 2, 2}));

    LabelMask raw(3, 1);
    raw.data = {0, 1, 2};
    save_label_mask(dir / "raw.png", raw);
    EXPECT_EQ(load_label_mask(dir / "raw.png"), raw);
}

TEST(ImageIo, BinaryMaskRoundTrip) {
    testutil::TempDir dir("io");
    const BinaryMask m = random_mask(9, 5, 3);
    save_binary_mask(dir / "m.png", m);
    EXPECT_EQ(load_binary_mask(dir / "m.png"), m);
}

// ---- grayscale ------------------------------------------------------------------------

TEST(Grayscale, ConstantGreyStaysPut) {
    RgbImage img(3, 2);
    std::fill(img.data.begin(), img.data.end(), 50);
    const GrayImage g = to_grayscale(img);
    for (auto v : g.data) EXPECT_EQ(v, 50);
}

TEST(Grayscale, LumaWeightsOnPrimaries) {
    RgbImage img(3, 1);
    img.pixel(0, 0)[0] = 255;
    img.pixel(1, 0)[1] = 255;
    img.pixel(2, 0)[2] = 255;
    const GrayImage g = to_grayscale(img);
    EXPECT_EQ(g.at(0, 0), 76);   // round(0.299 * 255) = round(76.245)
    EXPECT_EQ(g.at(1, 0), 150);  // round(0.587 * 255) = round(149.685)
    EXPECT_EQ(g.at(2, 0), 29);   // round(0.114 * 255) = round(29.07)
}

TEST(Grayscale, GreenChannelAlternative) {
    RgbImage img(1, 1);
    img.pixel(0, 0)[0] = 10;
    img.pixel(0, 0)[1] = 77;
    img.pixel(0, 0)[2] = 200;
    EXPECT_EQ(to_grayscale(img, GrayMethod::green).at(0, 0), 77);
}

// ---- CLAHE ---------------------------------------------------------------------------

TEST(Clahe, ConstantImageIsUnchangedForAnyParameters) {
    for (int value : {0, 1, 50, 128, 254, 255}) {
        GrayImage g(37, 23, static_cast<std::uint8_t>(value));
        for (double clip : {1.0, 2.0, 40.0}) {
            for (int tiles : {1, 3, 8}) {
                EXPECT_EQ(clahe(g, {clip, tiles, tiles}), g) << "value " << value << " clip " << clip << " tiles " << tiles;
            }
        }
    }
}

TEST(Clahe, SingleTileWithLargeClipIsGlobalEqualization) {
    GrayImage g(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) g.at(x, y) = x < 8 ? 100 : 150;
    EXPECT_EQ(clahe(g, {1000.0, 1, 1}), oracle::global_histogram_equalization(g));

    const GrayImage r = random_gray(40, 30, 11);
    EXPECT_EQ(clahe(r, {1e6, 1, 1}), oracle::global_histogram_equalization(r));
}

TEST(Clahe, SingleTileMappingIsMonotone) {
    GrayImage ramp(64, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 64; ++x) ramp.at(x, y) = static_cast<std::uint8_t>(x * 3 + y);
    for (double clip : {1.0, 2.0, 4.0}) {
        const GrayImage out = clahe(ramp, {clip, 1, 1});
        // any pair ordered in the input stays ordered in the output
        for (std::size_t i = 0; i < ramp.size(); ++i)
            for (std::size_t j = 0; j < ramp.size(); ++j)
                if (ramp.data[i] <= ramp.data[j]) {
                    ASSERT_LE(out.data[i], out.data[j]);
                }
    }
}

TEST(Clahe, MultiTileRampIsMonotoneAlongTheRamp) {
    // constant columns: every tile sees the same value ordering, and interpolation
    // weights depend only on x, so the output must stay non-decreasing in x
    GrayImage ramp(128, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 128; ++x) ramp.at(x, y) = static_cast<std::uint8_t>(2 * x);
    const GrayImage out = clahe(ramp, {2.0, 1, 4});
    for (int y = 0; y < 32; ++y)
        for (int x = 1; x < 128; ++x) ASSERT_LE(out.at(x - 1, y), out.at(x, y));
}

TEST(Clahe, ClipLimitBoundsContrastGain) {
    // with the minimum clip every clipped bin is uniform, so the map is close to the identity
    const GrayImage r = random_gray(64, 64, 9);
    const GrayImage out = clahe(r, {1.0, 1, 1});
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(out.data[i], r.data[i], 3.0);
}

TEST(Clahe, ZeroAreaGridIsRejected) {
    const GrayImage g(8, 8, 3);
    EXPECT_THROW(clahe(g, {2.0, 0, 8}), ImageError);
    EXPECT_THROW(clahe(g, {2.0, 8, 0}), ImageError);
    EXPECT_THROW(clahe(g, {0.5, 8, 8}), ImageError);
}

TEST(Clahe, TilesLargerThanImageAreClamped) {
    const GrayImage r = random_gray(5, 3, 4);
    const GrayImage out = clahe(r, {2.0, 8, 8});
    EXPECT_EQ(out.width, 5);
    EXPECT_EQ(out.height, 3);
}

// ---- masks ---------------------------------------------------------------------------

TEST(MergeMasks, LabelsPerPixel) {
    BinaryMask disc(4, 1), cup(4, 1);
    disc.data = {1, 1, 0, 0};
    cup.data = {1, 0, 0, 1};
    const MergeResult r = merge_masks(disc, cup);
    EXPECT_EQ(r.mask.data, (std::vector<std::uint8_t>{kCup, kDiscRim, kBackground, kBackground}));
    EXPECT_EQ(r.cup_outside_disc, 1u);
}

TEST(MergeMasks, DimensionMismatch) {
    try {
        merge_masks(BinaryMask(3, 3), BinaryMask(3, 4));
        FAIL();
    } catch (const ImageError& e) {
        EXPECT_EQ(e.kind(), ImageError::Kind::dimension_mismatch);
    }
}

TEST(SplitLabelMask, Definitions) {
    const MaskPair empty = split_label_mask(LabelMask(5, 5));
    EXPECT_EQ(empty.disc, BinaryMask(5, 5));
    EXPECT_EQ(empty.cup, BinaryMask(5, 5));
    const MaskPair full = split_label_mask(LabelMask(5, 5, kCup));
    EXPECT_EQ(full.disc, BinaryMask(5, 5, 1));
    EXPECT_EQ(full.cup, BinaryMask(5, 5, 1));
}

TEST(SplitLabelMask, MergeSplitRoundTripProperty) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const BinaryMask d = random_mask(12, 9, 2 * seed, 0.6);
        const BinaryMask c = random_mask(12, 9, 2 * seed + 1, 0.3);
        const MergeResult merged = merge_masks(d, c);
        const MaskPair back = split_label_mask(merged.mask);
        std::size_t outside = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const bool cup_in = c.data[i] && d.data[i];
            ASSERT_EQ(back.disc.data[i], d.data[i]);
            ASSERT_EQ(back.cup.data[i], cup_in ? 1 : 0);
            outside += c.data[i] && !d.data[i];
            // label conservation: every label is in range and cup implies disc
            ASSERT_LE(merged.mask.data[i], 2);
        }
        EXPECT_EQ(merged.cup_outside_disc, outside);
    }
}

// ---- resize --------------------------------------------------------------------------

TEST(Resize, SameDimsIsIdentity) {
    const GrayImage g = random_gray(17, 11, 2);
    EXPECT_EQ(resize_image(g, 17, 11), g);
    LabelMask m(6, 4);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = static_cast<std::uint8_t>(i % 3);
    EXPECT_EQ(resize_mask(m, 6, 4), m);
}

TEST(Resize, ConstantsStayConstant) {
    const GrayImage g(9, 5, 77);
    for (auto [w, h] : {std::pair{1, 1}, {3, 17}, {40, 2}, {256, 256}}) {
        const GrayImage r = resize_image(g, w, h);
        ASSERT_EQ(r.width, w);
        for (auto v : r.data) ASSERT_EQ(v, 77);
        const LabelMask m = resize_mask(LabelMask(9, 5, kCup), w, h);
        for (auto v : m.data) ASSERT_EQ(v, kCup);
    }
}

TEST(Resize, CornerAlignedBilinearMidpoint) {
    GrayImage g(2, 1);
    g.data = {0, 255};
    EXPECT_EQ(resize_image(g, 3, 1).data, (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Resize, MaskNeverInventsLabels) {
    LabelMask m(20, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) m.at(x, y) = x < 10 ? 0 : 2;  // no label 1 anywhere
    for (auto [w, h] : {std::pair{7, 13}, {64, 64}, {3, 1}}) {
        const LabelMask r = resize_mask(m, w, h);
        for (auto v : r.data) ASSERT_TRUE(v == 0 || v == 2);
    }
}

TEST(Resize, NonPositiveTargetRejected) {
    EXPECT_THROW(resize_image(GrayImage(2, 2), 0, 3), ImageError);
    EXPECT_THROW(resize_mask(LabelMask(2, 2), 3, -1), ImageError);
}

// ---- augmentation --------------------------------------------------------------------

TEST(Augment, FlipsAreInvolutions) {
    const Sample s = random_sample(11, 6, 3);
    for (Provenance op : {Provenance::hflip, Provenance::vflip}) {
        const Sample twice = augment(augment(s, op, 1), op, 99);
        EXPECT_EQ(twice.image, s.image);
        EXPECT_EQ(twice.mask, s.mask);
    }
}

TEST(Augment, VflipSwapsRowsOfTheMask) {
    const Sample s = random_sample(5, 4, 8);
    const Sample v = augment(s, Provenance::vflip, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) {
            EXPECT_EQ(v.mask.at(x, y), s.mask.at(x, 3 - y));
            EXPECT_EQ(v.image.at(x, y), s.image.at(x, 3 - y));
        }
    const Sample h = augment(s, Provenance::hflip, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(h.mask.at(x, y), s.mask.at(4 - x, y));
}

TEST(Augment, NoiseIsSeededAndLeavesTheMaskAlone) {
    const Sample s = random_sample(32, 32, 4);
    const Sample a = augment(s, Provenance::noise, 7);
    const Sample b = augment(s, Provenance::noise, 7);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, s.mask);
    EXPECT_NE(a.image, s.image);
    EXPECT_NE(augment(s, Provenance::noise, 8).image, a.image);
    EXPECT_EQ(a.provenance, Provenance::noise);
}

TEST(Augment, NoiseHasRoughlyTheDeclaredSpread) {
    Sample s;
    s.image = GrayImage(128, 128, 128);
    s.mask = LabelMask(128, 128);
    const Sample a = augment(s, Provenance::noise, 1);
    double sum = 0.0, sq = 0.0;
    for (auto v : a.image.data) {
        sum += v - 128.0;
        sq += (v - 128.0) * (v - 128.0);
    }
    const double n = static_cast<double>(a.image.size());
    EXPECT_NEAR(sum / n, 0.0, 0.2);
    EXPECT_NEAR(std::sqrt(sq / n), 10.0, 0.3);
}

TEST(ExpandDataset, SeventyOneOriginalsToTwoHundred) {
    std::vector<Sample> originals;
    for (int i = 0; i < 71; ++i) originals.push_back(random_sample(8, 8, 100 + i));
    const std::vector<Sample> out = expand_dataset(originals, 200, 42);
    ASSERT_EQ(out.size(), 200u);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < out.size(); ++i) {
        ids.insert(out[i].id);
        if (i < 71) {
            EXPECT_EQ(out[i].id, originals[i].id);
            EXPECT_EQ(out[i].image, originals[i].image);
            EXPECT_EQ(out[i].provenance, Provenance::original);
        } else {
            EXPECT_NE(out[i].provenance, Provenance::original);
        }
    }
    EXPECT_EQ(ids.size(), 200u);
}

TEST(ExpandDataset, TargetEqualToCountIsNoOp) {
    std::vector<Sample> originals{random_sample(4, 4, 1), random_sample(4, 4, 2)};
    const auto out = expand_dataset(originals, 2, 3);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].image, originals[0].image);
    EXPECT_EQ(out[1].mask, originals[1].mask);
}

TEST(ExpandDataset, DeterministicUnderSeed) {
    std::vector<Sample> originals;
    for (int i = 0; i < 5; ++i) originals.push_back(random_sample(8, 8, i));
    const auto a = expand_dataset(originals, 40, 9);
    const auto b = expand_dataset(originals, 40, 9);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].image, b[i].image);
        EXPECT_EQ(a[i].mask, b[i].mask);
    }
    const auto c = expand_dataset(originals, 40, 10);
    bool differs = false;
    for (std::size_t i = 5; i < a.size(); ++i) differs = differs || a[i].id != c[i].id || a[i].image != c[i].image;
    EXPECT_TRUE(differs);
}

TEST(ExpandDataset, ErrorsOnEmptyOrShrinkingTarget) {
    EXPECT_THROW(expand_dataset({}, 10, 0), ImageError);
    std::vector<Sample> originals{random_sample(4, 4, 1), random_sample(4, 4, 2)};
    EXPECT_THROW(expand_dataset(originals, 1, 0), ImageError);
}

TEST(Provenance, StringRoundTrip) {
    for (Provenance p : {Provenance::original, Provenance::hflip, Provenance::vflip, Provenance::noise}) {
        EXPECT_EQ(provenance_from_string(to_string(p)), p);
    }
    EXPECT_THROW(provenance_from_string("rotate"), ImageError);
}
