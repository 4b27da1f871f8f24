#include "fundus/pipeline.hpp"

#include "csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace fundus::pipeline {
namespace {

[[noreturn]] void malformed(int line, const std::string& what) {
    throw PipelineError(PipelineError::Kind::missing_data,
                        "malformed feature CSV line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, int line) {
    // strtod accepts the %.17g output including inf/nan spellings, which we then reject
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) malformed(line, "'" + s + "' is not a number");
    if (!std::isfinite(v)) malformed(line, "non-finite feature value");
    return v;
}

}  // namespace

std::string features_to_csv(const std::vector<FeatureRecord>& rows) {
    std::vector<const FeatureRecord*> sorted;
    sorted.reserve(rows.size());
    for (const FeatureRecord& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    std::string out = kFeatureHeader;
    out += '\n';
    for (const FeatureRecord* r : sorted) {
        out += csv::quote(r->id);
        for (double v : r->features.to_array()) {
            out += ',';
            out += csv::format_double(v);
        }
        out += ',' + to_string(r->source) + ',' + std::to_string(r->resolution) + ',' + to_string(r->label) + '\n';
    }
    return out;
}

std::vector<FeatureRecord> features_from_csv(const std::string& text) {
    const auto rows = csv::lines(text);
    if (rows.empty() || rows.front().second != kFeatureHeader) {
        throw PipelineError(PipelineError::Kind::missing_data,
                            "feature CSV header must be '" + std::string(kFeatureHeader) + "'");
    }
    std::vector<FeatureRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line_no, line] = rows[r];
        std::vector<std::string> f;
        try {
            f = csv::split_line(line);
        } catch (const std::exception& e) {
            malformed(line_no, e.what());
        }
        if (f.size() != 12) malformed(line_no, "expected 12 fields, got " + std::to_string(f.size()));
        FeatureRecord rec;
        rec.id = f[0];
        std::array<double, geometry::kFeatureCount> a{};
        for (int i = 0; i < geometry::kFeatureCount; ++i) a[i] = parse_double(f[1 + i], line_no);
        rec.features = geometry::FeatureVector::from_array(a);
        try {
            rec.source = mask_source_from_string(f[9]);
            rec.label = label_from_string(f[11]);
        } catch (const PipelineError& e) {
            malformed(line_no, e.what());
        }
        const auto [ptr, ec] = std::from_chars(f[10].data(), f[10].data() + f[10].size(), rec.resolution);
        if (ec != std::errc() || ptr != f[10].data() + f[10].size()) malformed(line_no, "bad resolution");
        out.push_back(std::move(rec));
    }
    return out;
}

void write_feature_csv(const fs::path& path, const std::vector<FeatureRecord>& rows) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError(PipelineError::Kind::stage, "cannot write feature CSV: " + path.string());
    out << features_to_csv(rows);
}

std::vector<FeatureRecord> read_feature_csv(const fs::path& path) {
    if (!fs::exists(path)) throw PipelineError(PipelineError::Kind::missing_data, "feature CSV not found: " + path.string());
    return features_from_csv(csv::read_file(path.string()));
}

}  // namespace fundus::pipeline
