#pragma once

#include "kmland/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace kmland {

inline constexpr int kSchemaVersion = 1;

/// Minima and transition states of one landscape, with the provenance needed to replay it.
struct Database {
    std::uint64_t dataset_hash = 0;
    int k = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json config = nlohmann::json::object();
    StationaryPointNetwork net;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 16);
    if (used != s.size()) throw InputError("bad hash: " + s);
    return v;
}

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix json_matrix(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw InputError("ragged centre matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline nlohmann::json minimum_json(const MinimumRecord& r) {
    return {{"id", r.id},
            {"cost", r.cost},
            {"attempts", r.attempts},
            {"canonical_labels", r.labels},
            {"centres", matrix_json(r.centres)}};
}

inline MinimumRecord json_minimum(const nlohmann::json& j) {
    MinimumRecord r;
    r.id = j.at("id").get<int>();
    r.cost = j.at("cost").get<double>();
    r.attempts = j.at("attempts").get<int>();
    r.labels = j.at("canonical_labels").get<Assignment>();
    r.centres = json_matrix(j.at("centres"));
    return r;
}

inline nlohmann::json ts_json(const TransitionStateRecord& t) {
    return {{"id", t.id},
            {"cost", t.cost},
            {"centres", matrix_json(t.centres)},
            {"point_index_changed", t.point},
            {"clusters", {t.clusters.first, t.clusters.second}},
            {"connected", {t.connected.first, t.connected.second}},
            {"seam_gap", t.seam_gap},
            {"sigma", t.sigma},
            {"labels1", t.labels1},
            {"labels2", t.labels2}};
}

inline TransitionStateRecord json_ts(const nlohmann::json& j) {
    TransitionStateRecord t;
    t.id = j.at("id").get<int>();
    t.cost = j.at("cost").get<double>();
    t.centres = json_matrix(j.at("centres"));
    t.point = j.at("point_index_changed").get<int>();
    t.clusters = {j.at("clusters").at(0).get<int>(), j.at("clusters").at(1).get<int>()};
    t.connected = {j.at("connected").at(0).get<int>(), j.at("connected").at(1).get<int>()};
    t.seam_gap = j.at("seam_gap").get<double>();
    t.sigma = j.at("sigma").get<double>();
    t.labels1 = j.at("labels1").get<Assignment>();
    t.labels2 = j.at("labels2").get<Assignment>();
    return t;
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open database " + path);
    try {
        auto j = nlohmann::json::parse(in);
        if (!j.is_object() || j.value("schema_version", -1) != kSchemaVersion) {
            throw InputError(path + ": not a version " + std::to_string(kSchemaVersion) + " landscape database");
        }
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": corrupt database (" + e.what() + ")");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const Database& db) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["dataset_hash"] = detail::hex64(db.dataset_hash);
    j["K"] = db.k;
    j["seed"] = db.seed;
    j["config_hash"] = db.config_hash;
    j["config"] = db.config;
    auto& minima = j["minima"] = nlohmann::json::array();
    for (const auto& r : db.net.minima.records()) minima.push_back(detail::minimum_json(r));
    auto& ts = j["transition_states"] = nlohmann::json::array();
    for (const auto& t : db.net.transition_states.records()) ts.push_back(detail::ts_json(t));
    return j;
}

/// Writes via a temporary file and rename, so a reader never sees a half-written database.
inline void save_db(const std::string& path, const Database& db) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw InputError("cannot write " + tmp);
        out << to_json(db).dump(1) << '\n';
        if (!out) throw InputError("failed writing " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

/// Strict load: throws InputError on malformed files, id gaps or duplicate records.
inline Database load_db(const std::string& path) {
    const nlohmann::json j = detail::read_json(path);
    Database db;
    try {
        db.dataset_hash = detail::parse_hex64(j.at("dataset_hash").get<std::string>());
        db.k = j.at("K").get<int>();
        db.seed = j.at("seed").get<std::uint64_t>();
        db.config_hash = j.at("config_hash").get<std::string>();
        db.config = j.at("config");
        for (const auto& m : j.at("minima")) db.net.minima.restore(detail::json_minimum(m));
        for (const auto& t : j.at("transition_states")) db.net.transition_states.restore(detail::json_ts(t));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": corrupt database (" + e.what() + ")");
    } catch (const std::invalid_argument& e) {
        throw InputError(path + ": corrupt database (" + e.what() + ")");
    }
    return db;
}

struct ValidationReport {
    std::size_t minima = 0;
    std::size_t transition_states = 0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Re-checks every stored record against `d`: centroid condition and cost for minima, seam and
/// barrier conditions and references for transition states, plus id order and duplicates.
inline ValidationReport validate_db(const std::string& path, const Dataset& d, double fp_tol = 1e-8,
                                    double seam_tol = 1e-3) {
    const nlohmann::json j = detail::read_json(path);
    ValidationReport report;
    std::vector<MinimumRecord> minima;
    std::vector<TransitionStateRecord> ts;
    try {
        if (detail::parse_hex64(j.at("dataset_hash").get<std::string>()) != dataset_hash(d)) {
            report.violations.push_back("database was built from a different dataset");
        }
        for (const auto& m : j.at("minima")) minima.push_back(detail::json_minimum(m));
        for (const auto& t : j.at("transition_states")) ts.push_back(detail::json_ts(t));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": corrupt database (" + e.what() + ")");
    } catch (const std::invalid_argument& e) {
        throw InputError(path + ": corrupt database (" + e.what() + ")");
    }
    report.minima = minima.size();
    report.transition_states = ts.size();
    const int k = j.value("K", -1);
    std::set<Assignment> seen;
    for (std::size_t i = 0; i < minima.size(); ++i) {
        const auto& m = minima[i];
        const std::string tag = "minimum " + std::to_string(m.id) + ": ";
        if (m.id != static_cast<int>(i)) report.violations.push_back(tag + "id out of order at entry " + std::to_string(i));
        if (m.centres.rows() != k) report.violations.push_back(tag + "number of centres differs from K");
        if (!seen.insert(m.labels).second) report.violations.push_back(tag + "duplicate of an earlier minimum");
        for (auto& issue : check_minimum(d.points, m, fp_tol)) report.violations.push_back(std::move(issue));
    }
    std::set<std::pair<Assignment, Assignment>> seen_ts;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto& t = ts[i];
        const std::string tag = "transition state " + std::to_string(t.id) + ": ";
        if (t.id != static_cast<int>(i)) report.violations.push_back(tag + "id out of order at entry " + std::to_string(i));
        if (!seen_ts.insert({t.labels1, t.labels2}).second) report.violations.push_back(tag + "duplicate of an earlier transition state");
        for (auto& issue : check_transition_state(d.points, t, minima, seam_tol)) report.violations.push_back(std::move(issue));
    }
    return report;
}

}  // namespace kmland
