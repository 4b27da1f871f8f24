#include "fundus/pipeline.hpp"
#include "fundus/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace fundus::pipeline {
namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

BinaryMask rasterize_ellipse(int width, int height, const Ellipse& e) {
    if (width <= 0 || height <= 0 || !(e.rx > 0.0) || !(e.ry > 0.0)) {
        throw PipelineError(PipelineError::Kind::config, "rasterize_ellipse: non-positive size or radius");
    }
    const double a = e.angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    BinaryMask m(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = x - e.cx, dy = y - e.cy;
            const double u = dx * ca + dy * sa;
            const double v = -dx * sa + dy * ca;
            if ((u / e.rx) * (u / e.rx) + (v / e.ry) * (v / e.ry) <= 1.0) m.at(x, y) = 1;
        }
    }
    return m;
}

Phantom render_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    Phantom p;
    p.disc = rasterize_ellipse(spec.width, spec.height, spec.disc);
    p.cup = rasterize_ellipse(spec.width, spec.height, spec.cup);
    p.image = RgbImage(spec.width, spec.height);

    Rng rng(seed);
    const double cx = 0.5 * (spec.width - 1), cy = 0.5 * (spec.height - 1);
    const double r2max = cx * cx + cy * cy + 1.0;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            // vignetted reddish fundus, a paler disc and a near-white cup
            const double fall = 1.0 - 0.35 * ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / r2max;
            double r = 150.0 * fall, g = 65.0 * fall, b = 35.0 * fall;
            if (p.disc.at(x, y)) {
                r = 225.0;
                g = 160.0;
                b = 105.0;
                if (p.cup.at(x, y)) {
                    r = 250.0;
                    g = 225.0;
                    b = 185.0;
                }
            }
            std::uint8_t* px = p.image.pixel(x, y);
            px[0] = to_byte(r + spec.noise_sigma * rng.normal());
            px[1] = to_byte(g + spec.noise_sigma * rng.normal());
            px[2] = to_byte(b + spec.noise_sigma * rng.normal());
        }
    }
    return p;
}

PhantomSpec random_phantom_spec(int size, bool glaucoma, std::uint64_t seed) {
    Rng rng(seed);
    PhantomSpec s;
    s.width = s.height = size;
    const double n = static_cast<double>(size);
    s.disc.cx = 0.5 * (n - 1) + uniform(rng, -0.05, 0.05) * n;
    s.disc.cy = 0.5 * (n - 1) + uniform(rng, -0.05, 0.05) * n;
    s.disc.rx = uniform(rng, 0.26, 0.32) * n;
    s.disc.ry = s.disc.rx * uniform(rng, 0.92, 1.08);
    s.disc.angle_deg = 0.0;

    const double ratio = glaucoma ? uniform(rng, 0.6, 0.8) : uniform(rng, 0.25, 0.45);
    s.cup.rx = ratio * s.disc.rx * (glaucoma ? 0.9 : 1.0);
    s.cup.ry = ratio * s.disc.ry;
    s.cup.angle_deg = 0.0;
    s.cup.cx = s.disc.cx;
    // glaucomatous cups sit low, thinning the inferior rim
    double shift = glaucoma ? uniform(rng, 0.05, 0.12) * s.disc.ry : 0.0;
    shift = std::min(shift, std::max(0.0, 0.93 * s.disc.ry - s.cup.ry));
    s.cup.cy = s.disc.cy + shift;
    return s;
}

fs::path write_phantom_dataset(const fs::path& dir, const PhantomDatasetOptions& options) {
    if (options.size < 16 || options.train_count < 0 || options.test_count < 0) {
        throw PipelineError(PipelineError::Kind::config, "phantom dataset: size must be >= 16 and counts non-negative");
    }
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    Manifest m;
    std::uint64_t k = 0;
    for (Split split : {Split::train, Split::test}) {
        const int count = split == Split::train ? options.train_count : options.test_count;
        for (int i = 0; i < count; ++i, ++k) {
            const bool glaucoma = i % 2 == 0;
            char id[32];
            std::snprintf(id, sizeof id, "%s_%03d", to_string(split).c_str(), i);
            const PhantomSpec spec = random_phantom_spec(options.size, glaucoma, mix_seed(options.seed, 2 * k));
            const Phantom p = render_phantom(spec, mix_seed(options.seed, 2 * k + 1));

            ManifestEntry e;
            e.id = id;
            e.image = dir / "images" / (e.id + ".png");
            e.disc_mask = dir / "masks" / (e.id + "_disc.png");
            e.cup_mask = dir / "masks" / (e.id + "_cup.png");
            e.split = split;
            e.label = glaucoma ? CaseLabel::glaucoma : CaseLabel::normal;
            save_image(e.image, p.image);
            save_binary_mask(e.disc_mask, p.disc);
            save_binary_mask(e.cup_mask, p.cup);
            m.entries.push_back(std::move(e));
        }
    }
    const fs::path manifest = dir / "manifest.csv";
    write_manifest(manifest, m);
    return manifest;
}

}  // namespace fundus::pipeline
