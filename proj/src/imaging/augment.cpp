#include "fundus/imaging.hpp"
#include "fundus/random.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace fundus {

Sample augment(const Sample& s, Provenance op, std::uint64_t seed, const AugmentParams& params) {
    Sample out;
    out.id = s.id;
    out.provenance = op;
    switch (op) {
        case Provenance::original:
            out.image = s.image;
            out.mask = s.mask;
            break;
        case Provenance::hflip:
            out.image = hflip(s.image);
            out.mask = hflip(s.mask);
            break;
        case Provenance::vflip:
            out.image = vflip(s.image);
            out.mask = vflip(s.mask);
            break;
        case Provenance::noise: {
            out.image = s.image;
            out.mask = s.mask;
            Rng rng(seed);
            for (auto& px : out.image.data) {
                const double v = px + params.noise_sigma * rng.normal();
                px = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
            break;
        }
    }
    return out;
}

std::vector<Sample> expand_dataset(const std::vector<Sample>& samples, std::size_t target, std::uint64_t seed,
                                   const AugmentParams& params) {
    if (samples.empty()) {
        throw ImageError(ImageError::Kind::invalid_argument, "cannot augment an empty dataset");
    }
    if (target < samples.size()) {
        throw ImageError(ImageError::Kind::invalid_argument, "augmentation target is below the original count");
    }
    std::vector<Sample> out = samples;
    out.reserve(target);

    static constexpr Provenance kOps[] = {Provenance::hflip, Provenance::vflip, Provenance::noise};
    std::vector<std::pair<std::size_t, Provenance>> schedule;
    schedule.reserve(samples.size() * 3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (Provenance op : kOps) schedule.emplace_back(i, op);
    }
    Rng rng(seed);
    rng.shuffle(schedule);

    for (std::size_t k = 0; out.size() < target; ++k) {
        const auto& [index, op] = schedule[k % schedule.size()];
        Sample aug = augment(samples[index], op, mix_seed(seed, k), params);
        aug.id = samples[index].id + "_" + std::string(to_string(op)) + "_" + std::to_string(k);
        out.push_back(std::move(aug));
    }
    return out;
}

}  // namespace fundus
