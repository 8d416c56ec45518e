#pragma once

// Plain-text persistence: round-trip number formatting, CSV tables and
// content hashing for run manifests.

#include "gdiff/core.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gdiff::io {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest-safe round-trip representation (%.17g).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline std::string file_hash(const std::filesystem::path& path) { return hex64(fnv1a(read_file(path))); }

/// A header row plus numeric rows; every cell is written with format_double
/// except integer columns, which are written verbatim.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) {
        require(cells.size() == header.size(), "csv row width does not match header");
        rows.push_back(std::move(cells));
    }

    std::string to_string() const {
        std::string s;
        auto line = [&s](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) s += ',';
                s += cells[i];
            }
            s += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return s;
    }
};

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline Table parse_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = split(line, ',');
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size())
                throw IoError("csv line " + std::to_string(t.rows.size() + 2) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(t.header.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw IoError("csv input is empty");
    return t;
}

inline double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw IoError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw IoError("not a number: '" + s + "'");
    return v;
}

/// Points and optional labels read from a CSV whose coordinate columns are
/// named x0, x1, ...; an optional `class` column supplies labels.
struct PointSet {
    Batch points;
    std::vector<int> labels;
};

inline PointSet read_points(const std::filesystem::path& path) {
    const Table t = parse_csv(read_file(path));
    std::vector<std::size_t> coord;
    std::optional<std::size_t> cls;
    for (std::size_t j = 0;; ++j) {
        const auto it = std::find(t.header.begin(), t.header.end(), "x" + std::to_string(j));
        if (it == t.header.end()) break;
        coord.push_back(static_cast<std::size_t>(it - t.header.begin()));
    }
    if (coord.empty()) throw IoError("'" + path.string() + "' has no x0 column");
    if (auto it = std::find(t.header.begin(), t.header.end(), "class"); it != t.header.end())
        cls = static_cast<std::size_t>(it - t.header.begin());
    PointSet out{Batch(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(coord.size())), {}};
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t j = 0; j < coord.size(); ++j)
            out.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t.rows[i][coord[j]]);
        if (cls) out.labels.push_back(static_cast<int>(parse_double(t.rows[i][*cls])));
    }
    return out;
}

inline std::vector<std::string> coordinate_header(Eigen::Index dim) {
    std::vector<std::string> h;
    for (Eigen::Index j = 0; j < dim; ++j) h.push_back("x" + std::to_string(j));
    return h;
}

/// Sample CSV: x0..x{d-1}[,class],seed,chain.
inline Table samples_table(const Batch& x, std::span<const int> labels, std::uint64_t seed) {
    Table t;
    t.header = coordinate_header(x.cols());
    const bool with_class = !labels.empty();
    if (with_class) {
        require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "one label per sample required");
        t.header.push_back("class");
    }
    t.header.push_back("seed");
    t.header.push_back("chain");
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<std::string> r;
        for (Eigen::Index j = 0; j < x.cols(); ++j) r.push_back(format_double(x(i, j)));
        if (with_class) r.push_back(std::to_string(labels[static_cast<std::size_t>(i)]));
        r.push_back(std::to_string(seed));
        r.push_back(std::to_string(i));
        t.add_row(std::move(r));
    }
    return t;
}

/// Plain point table: x0..x{d-1}.
inline Table points_table(const Batch& x) {
    Table t;
    t.header = coordinate_header(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<std::string> r;
        for (Eigen::Index j = 0; j < x.cols(); ++j) r.push_back(format_double(x(i, j)));
        t.add_row(std::move(r));
    }
    return t;
}

}  // namespace gdiff::io
