#pragma once

#include "kmland/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace kmland {

struct RunConfig {
    std::string data;
    std::string labels;              // ground-truth column name, empty for none
    std::string outliers;            // headerless CSV of extra rows, empty for none
    std::optional<int> n_outliers;   // rows taken from `outliers`; all when unset
    int k = 3;
    int starts = 10000;
    std::uint64_t seed = 1;
    double sigma = 30.0;
    double alpha = 0.02;
    double temperature = 1.0;
    int budget = 1000;               // connection attempts for `connect`
    std::string out = ".";
    int threads = 1;
};

inline void validate(const RunConfig& c) {
    if (c.k < 1) throw ConfigError("k must be at least 1");
    if (c.starts < 1) throw ConfigError("starts must be at least 1");
    if (!(c.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(c.sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (!(c.alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (c.budget < 0) throw ConfigError("budget must be non-negative");
    if (c.threads < 1) throw ConfigError("threads must be at least 1");
    if (c.n_outliers && *c.n_outliers < 0) throw ConfigError("n_outliers must be non-negative");
}

/// Result-affecting settings only (output directory and thread count do not change artifacts).
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{{"data", c.data},   {"labels", c.labels}, {"outliers", c.outliers}, {"k", c.k},
                     {"starts", c.starts}, {"seed", c.seed},   {"sigma", c.sigma},       {"alpha", c.alpha},
                     {"temp", c.temperature}, {"budget", c.budget}};
    j["n_outliers"] = c.n_outliers ? nlohmann::json(*c.n_outliers) : nlohmann::json(nullptr);
    return j;
}

/// FNV-1a of the canonical JSON text of to_json(c), as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    const std::string text = to_json(c).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        T out{};
        if constexpr (std::is_same_v<T, double>) out = std::stod(v, &used);
        else if constexpr (std::is_same_v<T, std::uint64_t>) out = std::stoull(v, &used);
        else out = static_cast<T>(std::stoi(v, &used));
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + v + "'");
    }
}

}  // namespace detail

/// Applies one `key = value` setting. Keys match the long command-line flags.
inline void set_option(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "data") c.data = value;
    else if (key == "labels") c.labels = value;
    else if (key == "outliers") c.outliers = value;
    else if (key == "n_outliers" || key == "n-outliers") c.n_outliers = parse_number<int>(key, value);
    else if (key == "k") c.k = parse_number<int>(key, value);
    else if (key == "starts") c.starts = parse_number<int>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "sigma") c.sigma = parse_number<double>(key, value);
    else if (key == "alpha") c.alpha = parse_number<double>(key, value);
    else if (key == "temp") c.temperature = parse_number<double>(key, value);
    else if (key == "budget") c.budget = parse_number<int>(key, value);
    else if (key == "out") c.out = value;
    else if (key == "threads") c.threads = parse_number<int>(key, value);
    else throw ConfigError("unknown config key: " + key);
}

/// Plain `key = value` lines; blank lines and lines starting with '#' are skipped.
inline void read_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::strip(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        set_option(c, detail::strip(t.substr(0, eq)), detail::strip(t.substr(eq + 1)));
    }
}

}  // namespace kmland
