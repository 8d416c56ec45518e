#pragma once

// Metrics tables, JSON summaries and run manifests.

#include "gdiff/harness/io.hpp"
#include "gdiff/harness/svg.hpp"
#include "gdiff/metrics.hpp"
#include "gdiff/sweep.hpp"

#include <json.hpp>

#include <map>

namespace gdiff::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "gdiff 1.0.0";
inline constexpr int kCsvSchemaVersion = 1;

inline Json to_json(const MetricsReport& r) {
    Json j;
    j["frechet"] = r.frechet;
    j["frechet_degenerate"] = r.frechet_degenerate;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["class_fidelity"] = r.class_fidelity;
    j["mean_class_prob"] = r.mean_class_prob;
    j["sample_count"] = r.sample_count;
    j["reference_count"] = r.reference_count;
    return j;
}

inline std::vector<std::string> metrics_header() {
    return {"frechet", "precision", "recall", "class_fidelity", "mean_class_prob", "sample_count", "reference_count",
            "frechet_degenerate"};
}

inline std::vector<std::string> metrics_cells(const MetricsReport& r) {
    using io::format_double;
    return {format_double(r.frechet),         format_double(r.precision),     format_double(r.recall),
            format_double(r.class_fidelity),  format_double(r.mean_class_prob), std::to_string(r.sample_count),
            std::to_string(r.reference_count), r.frechet_degenerate ? "1" : "0"};
}

inline io::Table metrics_table(const MetricsReport& r) {
    io::Table t;
    t.header = metrics_header();
    t.add_row(metrics_cells(r));
    return t;
}

inline io::Table sweep_table(const std::vector<SweepRow>& rows) {
    io::Table t;
    t.header = metrics_header();
    t.header.insert(t.header.begin(), "scale");
    for (const auto& r : rows) {
        auto cells = metrics_cells(r.report);
        cells.insert(cells.begin(), io::format_double(r.scale));
        t.add_row(std::move(cells));
    }
    return t;
}

inline Json sweep_json(const std::vector<SweepRow>& rows) {
    Json j = Json::array();
    for (const auto& r : rows) {
        Json e;
        e["scale"] = r.scale;
        e["metrics"] = to_json(r.report);
        j.push_back(e);
    }
    return j;
}

/// One SVG per metric; keys are the file stems.
inline std::map<std::string, std::string> sweep_plots(const std::vector<SweepRow>& rows) {
    std::map<std::string, std::string> out;
    const std::pair<const char*, double MetricsReport::*> metrics[] = {{"frechet", &MetricsReport::frechet},
                                                                       {"precision", &MetricsReport::precision},
                                                                       {"recall", &MetricsReport::recall},
                                                                       {"class_fidelity", &MetricsReport::class_fidelity}};
    for (const auto& [name, field] : metrics) {
        svg::LinePlot p;
        p.title = std::string(name) + " vs guidance scale";
        p.x_label = "guidance scale";
        p.y_label = name;
        for (const auto& r : rows) {
            p.x.push_back(r.scale);
            p.y.push_back(r.report.*field);
        }
        out[name] = svg::render(p);
    }
    return out;
}

/// Everything needed to replay a CLI run: the command, every effective
/// option, hashes of inputs and outputs, and format versions.
class Manifest {
public:
    explicit Manifest(std::string command) {
        doc_["tool"] = kToolVersion;
        doc_["command"] = std::move(command);
        doc_["formats"] = {{"checkpoint", 1}, {"csv", kCsvSchemaVersion}};
        doc_["options"] = Json::object();
        doc_["inputs"] = Json::object();
        doc_["outputs"] = Json::object();
    }

    template <class T>
    void option(const std::string& key, const T& value) {
        doc_["options"][key] = value;
    }

    void config(const std::filesystem::path& path) {
        doc_["config"] = {{"path", path.generic_string()}, {"fnv1a64", io::file_hash(path)}};
    }

    void seed(std::uint64_t s) { doc_["seed"] = s; }
    void input(const std::string& role, const std::filesystem::path& path) {
        doc_["inputs"][role] = {{"path", path.generic_string()}, {"fnv1a64", io::file_hash(path)}};
    }
    void output(const std::string& role, const std::filesystem::path& path) {
        doc_["outputs"][role] = {{"path", path.generic_string()}, {"fnv1a64", io::file_hash(path)}};
    }
    void note(const std::string& key, const Json& value) { doc_["notes"][key] = value; }

    const Json& json() const { return doc_; }
    void write(const std::filesystem::path& path) const { io::write_file(path, doc_.dump(2) + "\n"); }

private:
    Json doc_;
};

}  // namespace gdiff::report
