#include "fundus/classifier.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fundus::classifier {
namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string array(std::span<const double> values) {
    std::string s = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ", ";
        s += num(values[i]);
    }
    return s + "]";
}

std::vector<double> read_vector(const nlohmann::json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array()) throw ClassifierError(ClassifierError::Kind::model_corrupt, std::string(key) + " is not an array");
    std::vector<double> out;
    out.reserve(a.size());
    for (const auto& v : a) out.push_back(v.get<double>());
    return out;
}

}  // namespace

std::string model_to_json(const SvmModel& model) {
    std::ostringstream out;
    out << "{\n";
    out << "  \"format\": \"" << kModelFormat << "\",\n";
    out << "  \"version\": " << kModelVersion << ",\n";
    out << "  \"kernel\": \"rbf\",\n";
    out << "  \"gamma\": " << num(model.gamma) << ",\n";
    out << "  \"c\": " << num(model.c) << ",\n";
    out << "  \"bias\": " << num(model.bias) << ",\n";
    out << "  \"scaler\": {\n";
    out << "    \"mean\": " << array(model.scaler.mean) << ",\n";
    out << "    \"std\": " << array(model.scaler.stddev) << "\n";
    out << "  },\n";
    out << "  \"alphas\": " << array(model.coefficients) << ",\n";
    out << "  \"support_vectors\": [";
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
        out << (i ? ",\n    " : "\n    ") << array(model.support_vectors[i]);
    }
    out << (model.support_vectors.empty() ? "]\n" : "\n  ]\n");
    out << "}\n";
    return out.str();
}

SvmModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ClassifierError(ClassifierError::Kind::model_corrupt, std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("format") || j["format"] != kModelFormat) {
        throw ClassifierError(ClassifierError::Kind::model_version, "not an SVM model file (bad format tag)");
    }
    if (!j.contains("version") || j["version"] != kModelVersion) {
        throw ClassifierError(ClassifierError::Kind::model_version, "unsupported SVM model version");
    }
    SvmModel m;
    try {
        m.gamma = j.at("gamma").get<double>();
        m.c = j.at("c").get<double>();
        m.bias = j.at("bias").get<double>();
        m.scaler.mean = read_vector(j.at("scaler"), "mean");
        m.scaler.stddev = read_vector(j.at("scaler"), "std");
        m.coefficients = read_vector(j, "alphas");
        for (const auto& row : j.at("support_vectors")) m.support_vectors.push_back(row.get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ClassifierError(ClassifierError::Kind::model_corrupt, std::string("malformed SVM model: ") + e.what());
    }
    const std::size_t d = m.scaler.mean.size();
    bool ok = m.gamma > 0.0 && m.c > 0.0 && m.scaler.stddev.size() == d && !m.support_vectors.empty() &&
              m.coefficients.size() == m.support_vectors.size();
    for (const Row& sv : m.support_vectors) ok = ok && sv.size() == d;
    if (!ok) throw ClassifierError(ClassifierError::Kind::model_corrupt, "inconsistent SVM model fields");
    return m;
}

void save_model(const SvmModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ClassifierError(ClassifierError::Kind::io, "cannot write model file: " + path.string());
    out << model_to_json(model);
}

SvmModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ClassifierError(ClassifierError::Kind::io, "cannot open model file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace fundus::classifier
