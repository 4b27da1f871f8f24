#include "fundus/pipeline.hpp"

#include "csv.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace fundus::pipeline {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string to_string(CaseLabel l) {
    switch (l) {
        case CaseLabel::glaucoma: return "glaucoma";
        case CaseLabel::normal: return "normal";
        case CaseLabel::unknown: break;
    }
    return "unknown";
}

std::string to_string(MaskSource s) { return s == MaskSource::ground_truth ? "ground_truth" : "predicted"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw PipelineError(PipelineError::Kind::manifest, "unknown split '" + s + "' (expected train or test)");
}

CaseLabel label_from_string(const std::string& s) {
    if (s == "glaucoma") return CaseLabel::glaucoma;
    if (s == "normal") return CaseLabel::normal;
    if (s == "unknown" || s.empty()) return CaseLabel::unknown;
    throw PipelineError(PipelineError::Kind::manifest, "unknown label '" + s + "'");
}

MaskSource mask_source_from_string(const std::string& s) {
    if (s == "ground_truth" || s == "gt") return MaskSource::ground_truth;
    if (s == "predicted") return MaskSource::predicted;
    throw PipelineError(PipelineError::Kind::config, "unknown mask source '" + s + "' (expected ground_truth or predicted)");
}

std::size_t Manifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::vector<const ManifestEntry*> Manifest::of_split(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const ManifestEntry& e : entries) {
        if (e.split == s) out.push_back(&e);
    }
    std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    return out;
}

Manifest parse_manifest(const std::string& text, const fs::path& base_dir, bool check_files) {
    using K = PipelineError::Kind;
    const auto rows = csv::lines(text);
    if (rows.empty()) throw PipelineError(K::manifest, "malformed manifest: file is empty");
    if (rows.front().second != kManifestHeader) {
        throw PipelineError(K::manifest, "malformed manifest: header must be '" + std::string(kManifestHeader) + "'");
    }

    auto resolve = [&base_dir](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    Manifest m;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line_no, line] = rows[r];
        std::vector<std::string> f;
        try {
            f = csv::split_line(line);
        } catch (const std::exception& e) {
            throw PipelineError(K::manifest, "malformed manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (f.size() != 6) {
            throw PipelineError(K::manifest, "malformed manifest line " + std::to_string(line_no) + ": expected 6 fields, got " +
                                                 std::to_string(f.size()));
        }
        if (f[0].empty() || f[1].empty() || f[2].empty() || f[3].empty()) {
            throw PipelineError(K::manifest, "malformed manifest line " + std::to_string(line_no) + ": empty id or path");
        }
        if (!seen.insert(f[0]).second) throw PipelineError(K::manifest, "duplicate id in manifest: " + f[0]);
        ManifestEntry e;
        e.id = f[0];
        e.image = resolve(f[1]);
        e.disc_mask = resolve(f[2]);
        e.cup_mask = resolve(f[3]);
        try {
            e.split = split_from_string(f[4]);
            e.label = label_from_string(f[5]);
        } catch (const PipelineError& err) {
            throw PipelineError(K::manifest, "manifest line " + std::to_string(line_no) + ": " + err.what());
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw PipelineError(K::manifest, "malformed manifest: no entries");

    if (check_files) {
        std::string missing;
        std::size_t n_missing = 0;
        for (const ManifestEntry& e : m.entries) {
            for (const fs::path* p : {&e.image, &e.disc_mask, &e.cup_mask}) {
                if (fs::exists(*p)) continue;
                ++n_missing;
                if (n_missing <= 20) missing += "\n  " + e.id + ": " + p->string();
            }
        }
        if (n_missing) {
            throw PipelineError(K::missing_data, std::to_string(n_missing) + " manifest file(s) missing:" + missing);
        }
    }
    return m;
}

Manifest load_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw PipelineError(PipelineError::Kind::manifest, "manifest not found: " + path.string());
    return parse_manifest(csv::read_file(path.string()), path.parent_path(), true);
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    const fs::path base = path.parent_path();
    auto rel = [&base](const fs::path& p) {
        if (base.empty()) return p.generic_string();
        const fs::path r = p.lexically_relative(base);
        return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError(PipelineError::Kind::manifest, "cannot write manifest: " + path.string());
    out << kManifestHeader << '\n';
    for (const ManifestEntry& e : manifest.entries) {
        out << csv::quote(e.id) << ',' << csv::quote(rel(e.image)) << ',' << csv::quote(rel(e.disc_mask)) << ','
            << csv::quote(rel(e.cup_mask)) << ',' << to_string(e.split) << ',' << to_string(e.label) << '\n';
    }
}

}  // namespace fundus::pipeline
