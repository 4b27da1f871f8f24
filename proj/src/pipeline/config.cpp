#include "fundus/pipeline.hpp"

#include "csv.hpp"

#include <cmath>
#include <cstdio>
#include <set>

namespace fundus::pipeline {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw PipelineError(PipelineError::Kind::config, what); }

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) bad("unknown config key '" + where + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const json::exception&) {
        bad(std::string("config key '") + key + "' has the wrong type");
    }
}

std::string gray_name(GrayMethod m) { return m == GrayMethod::luma ? "luma" : "green"; }

GrayMethod gray_from(const std::string& s) {
    if (s == "luma") return GrayMethod::luma;
    if (s == "green") return GrayMethod::green;
    bad("gray_method must be 'luma' or 'green'");
}

}  // namespace

void validate_config(const RunConfig& c) {
    if (c.resolution <= 0 || c.resolution % 16 != 0) bad("resolution must be a positive multiple of 16");
    if (c.base_channels <= 0) bad("base_channels must be positive");
    if (c.epochs <= 0) bad("epochs must be positive");
    if (c.batch_size <= 0) bad("batch_size must be positive");
    if (!(c.learning_rate > 0.0)) bad("learning_rate must be positive");
    if (c.augment_target == 0) bad("augment_target must be positive");
    if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) bad("val_fraction must lie in [0, 1)");
    if (!(c.noise_sigma >= 0.0)) bad("noise_sigma must be non-negative");
    if (!(c.clahe.clip_limit > 0.0) || c.clahe.tiles_x <= 0 || c.clahe.tiles_y <= 0) {
        bad("clahe clip_limit and tile counts must be positive");
    }
    if (c.svm.c_grid.empty() || c.svm.gamma_grid.empty()) bad("svm grids must not be empty");
    for (double v : c.svm.c_grid) {
        if (!(v > 0.0)) bad("svm c_grid values must be positive");
    }
    for (double v : c.svm.gamma_grid) {
        if (!(v > 0.0)) bad("svm gamma_grid values must be positive");
    }
    if (c.svm.cv_folds < 2) bad("svm cv_folds must be at least 2");
    if (!(c.svm.tolerance > 0.0) || c.svm.max_passes <= 0) bad("svm tolerance and max_passes must be positive");
}

json config_to_json(const RunConfig& c) {
    json j;
    j["manifest"] = c.manifest.generic_string();
    j["out_dir"] = c.out_dir.generic_string();
    j["seed"] = c.seed;
    j["resolution"] = c.resolution;
    j["gray_method"] = gray_name(c.gray_method);
    j["use_clahe"] = c.use_clahe;
    j["clahe"] = {{"clip_limit", c.clahe.clip_limit}, {"tiles_x", c.clahe.tiles_x}, {"tiles_y", c.clahe.tiles_y}};
    j["noise_sigma"] = c.noise_sigma;
    j["augment_target"] = c.augment_target;
    j["base_channels"] = c.base_channels;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["val_fraction"] = c.val_fraction;
    j["svm"] = {{"c_grid", c.svm.c_grid},
                {"gamma_grid", c.svm.gamma_grid},
                {"tolerance", c.svm.tolerance},
                {"max_passes", c.svm.max_passes},
                {"cv_folds", c.svm.cv_folds}};
    j["train_feature_source"] = to_string(c.train_feature_source);
    j["eval_feature_source"] = to_string(c.eval_feature_source);
    return j;
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) bad("config must be a JSON object");
    reject_unknown(j,
                   {"manifest", "out_dir", "seed", "resolution", "gray_method", "use_clahe", "clahe", "noise_sigma",
                    "augment_target", "base_channels", "epochs", "batch_size", "learning_rate", "val_fraction", "svm",
                    "train_feature_source", "eval_feature_source"},
                   "");
    RunConfig c;
    std::string s;
    if (j.contains("manifest")) {
        read(j, "manifest", s);
        c.manifest = s;
    }
    if (j.contains("out_dir")) {
        read(j, "out_dir", s);
        c.out_dir = s;
    }
    read(j, "seed", c.seed);
    read(j, "resolution", c.resolution);
    if (j.contains("gray_method")) {
        read(j, "gray_method", s);
        c.gray_method = gray_from(s);
    }
    read(j, "use_clahe", c.use_clahe);
    if (j.contains("clahe")) {
        const json& cl = j.at("clahe");
        if (!cl.is_object()) bad("clahe must be an object");
        reject_unknown(cl, {"clip_limit", "tiles_x", "tiles_y"}, "clahe.");
        read(cl, "clip_limit", c.clahe.clip_limit);
        read(cl, "tiles_x", c.clahe.tiles_x);
        read(cl, "tiles_y", c.clahe.tiles_y);
    }
    read(j, "noise_sigma", c.noise_sigma);
    read(j, "augment_target", c.augment_target);
    read(j, "base_channels", c.base_channels);
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "learning_rate", c.learning_rate);
    read(j, "val_fraction", c.val_fraction);
    if (j.contains("svm")) {
        const json& sv = j.at("svm");
        if (!sv.is_object()) bad("svm must be an object");
        reject_unknown(sv, {"c_grid", "gamma_grid", "tolerance", "max_passes", "cv_folds"}, "svm.");
        read(sv, "c_grid", c.svm.c_grid);
        read(sv, "gamma_grid", c.svm.gamma_grid);
        read(sv, "tolerance", c.svm.tolerance);
        read(sv, "max_passes", c.svm.max_passes);
        read(sv, "cv_folds", c.svm.cv_folds);
    }
    try {
        if (j.contains("train_feature_source")) {
            read(j, "train_feature_source", s);
            c.train_feature_source = mask_source_from_string(s);
        }
        if (j.contains("eval_feature_source")) {
            read(j, "eval_feature_source", s);
            c.eval_feature_source = mask_source_from_string(s);
        }
    } catch (const PipelineError& e) {
        bad(e.what());
    }
    validate_config(c);
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = csv::read_file(path.string());
    } catch (const std::exception&) {
        bad("cannot read config file: " + path.string());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        bad("config file is not valid JSON: " + std::string(e.what()));
    }
    RunConfig c = config_from_json(j);
    // a relative manifest path is taken relative to the config file
    if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = path.parent_path() / c.manifest;
    return c;
}

std::string config_hash(const RunConfig& config) {
    json j = config_to_json(config);
    j.erase("out_dir");
    const std::string canonical = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fundus::pipeline
