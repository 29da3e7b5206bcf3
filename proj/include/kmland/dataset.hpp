#pragma once

#include "kmland/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kmland {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Ground-truth label carried by appended outlier rows.
inline constexpr int kOutlierLabel = -1;

struct Dataset {
    Matrix points;  // N x N_f, raw feature units
    std::vector<std::string> feature_names;
    std::optional<std::vector<int>> ground_truth;  // class index per row, kOutlierLabel for outliers
    std::vector<std::string> class_names;          // class index -> label text
    std::vector<bool> outlier_flags;

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index n_features() const { return points.cols(); }
    Eigen::Index n_outliers() const {
        return static_cast<Eigen::Index>(std::count(outlier_flags.begin(), outlier_flags.end(), true));
    }
    Eigen::Index n_original() const { return size() - n_outliers(); }
};

struct FeatureStats {
    Vector mean;
    Vector min;
    Vector max;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            cells.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return cells;
}

inline double parse_real(std::string_view cell, const std::string& where) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw InputError(where + ": non-numeric feature value '" + std::string(cell) + "'");
    }
    return value;
}

inline bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace detail

/// Reads a headed CSV. Every column except `label_column` must be numeric.
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open dataset '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ": empty file, header row expected");
    const auto header = detail::split_csv_line(line);

    std::optional<std::size_t> label_idx;
    if (label_column) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == *label_column) label_idx = c;
        }
        if (!label_idx) throw InputError(path + ": unknown label column '" + *label_column + "'");
    }

    Dataset d;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != label_idx) d.feature_names.emplace_back(header[c]);
    }
    if (d.feature_names.empty()) throw InputError(path + ": no feature columns");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        const auto cells = detail::split_csv_line(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) {
            throw InputError(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                             std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_idx) {
                const std::string name(cells[c]);
                auto it = std::find(d.class_names.begin(), d.class_names.end(), name);
                if (it == d.class_names.end()) {
                    d.class_names.push_back(name);
                    it = d.class_names.end() - 1;
                }
                labels.push_back(static_cast<int>(it - d.class_names.begin()));
            } else {
                values.push_back(detail::parse_real(cells[c], where));
            }
        }
        ++rows;
    }
    if (rows == 0) throw InputError(path + ": no data rows");

    const auto nf = static_cast<Eigen::Index>(d.feature_names.size());
    d.points = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows), nf);
    if (label_idx) d.ground_truth = std::move(labels);
    d.outlier_flags.assign(rows, false);
    return d;
}

/// Reads a headerless CSV of feature rows, each with `n_features` values.
inline std::vector<Vector> load_outlier_rows(const std::string& path, Eigen::Index n_features) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open outlier file '" + path + "'");
    std::vector<Vector> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        const auto cells = detail::split_csv_line(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (static_cast<Eigen::Index>(cells.size()) != n_features) {
            throw InputError(where + ": outlier row has " + std::to_string(cells.size()) + " values, dataset has " +
                             std::to_string(n_features) + " features");
        }
        Vector row(n_features);
        for (Eigen::Index f = 0; f < n_features; ++f) row[f] = detail::parse_real(cells[static_cast<std::size_t>(f)], where);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Dataset append_outliers(const Dataset& d, std::span<const Vector> rows) {
    for (const auto& r : rows) {
        if (r.size() != d.n_features()) {
            throw PreconditionError("append_outliers: row has " + std::to_string(r.size()) + " entries, expected " +
                                    std::to_string(d.n_features()));
        }
    }
    Dataset out = d;
    const Eigen::Index n0 = d.size();
    out.points.conservativeResize(n0 + static_cast<Eigen::Index>(rows.size()), Eigen::NoChange);
    for (std::size_t i = 0; i < rows.size(); ++i) out.points.row(n0 + static_cast<Eigen::Index>(i)) = rows[i].transpose();
    out.outlier_flags.insert(out.outlier_flags.end(), rows.size(), true);
    if (out.ground_truth) out.ground_truth->insert(out.ground_truth->end(), rows.size(), kOutlierLabel);
    return out;
}

inline FeatureStats feature_stats(const Dataset& d, bool original_only) {
    const Eigen::Index nf = d.n_features();
    FeatureStats s{Vector::Zero(nf), Vector::Constant(nf, std::numeric_limits<double>::infinity()),
                   Vector::Constant(nf, -std::numeric_limits<double>::infinity())};
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (original_only && d.outlier_flags[static_cast<std::size_t>(i)]) continue;
        const auto row = d.points.row(i).transpose();
        s.mean += row;
        s.min = s.min.cwiseMin(row);
        s.max = s.max.cwiseMax(row);
        ++used;
    }
    if (used == 0) throw PreconditionError("feature_stats: no rows to summarise");
    s.mean /= static_cast<double>(used);
    // Summation order can leave the mean an ulp outside [min, max] for constant features.
    s.mean = s.mean.cwiseMax(s.min).cwiseMin(s.max);
    return s;
}

/// FNV-1a over the shape and IEEE bytes of the points; stable across runs and platforms.
inline std::uint64_t dataset_hash(const Dataset& d) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const std::int64_t shape[2] = {d.size(), d.n_features()};
    mix(shape, sizeof(shape));
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        for (Eigen::Index f = 0; f < d.n_features(); ++f) {
            const double v = d.points(i, f);
            mix(&v, sizeof(v));
        }
        const unsigned char flag = d.outlier_flags[static_cast<std::size_t>(i)] ? 1 : 0;
        mix(&flag, 1);
    }
    return h;
}

}  // namespace kmland
