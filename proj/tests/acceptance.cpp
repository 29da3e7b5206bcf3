// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include "kmland/analysis.hpp"
#include "kmland/database.hpp"
#include "kmland/explore.hpp"

#include "networks.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace kmland;

namespace {

using Clock = std::chrono::steady_clock;

const std::string kData = KMLAND_DATA_DIR;
constexpr int kStarts = 10000;
constexpr std::uint64_t kSeed = 1;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("criterion %2d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

template <class... A>
std::string fmt(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

Dataset iris_with_outliers(int n) {
    const Dataset d = load_csv(kData + "/iris.csv", "class");
    const auto rows = load_outlier_rows(kData + "/iris_outliers.csv", d.points.cols());
    return append_outliers(d, std::span<const Vector>(rows).first(static_cast<std::size_t>(n)));
}

struct Landscape {
    Dataset data;
    StationaryPointNetwork net;
    double explore_seconds = 0.0;
    GrowthReport growth;
};

Landscape build(Dataset d, int k, bool connect) {
    Landscape l{std::move(d), {}, 0.0, {}};
    const auto t0 = Clock::now();
    explore(l.data, k, kStarts, kSeed, l.net.minima);
    l.explore_seconds = seconds_since(t0);
    if (connect) l.growth = grow_connected(l.data.points, find_sites(l.data.points), l.net, 1000, {});
    return l;
}

// 1 -------------------------------------------------------------------------------

void iris_best_accuracy(const Landscape& l) {
    double best = -1.0;
    for (const auto& m : l.net.minima.records()) best = std::max(best, accuracy(m, l.data));
    report(1, std::abs(best - 0.730) <= 0.005 && l.explore_seconds < 300.0,
           fmt("Iris K=3: %zu minima, max ARI %.4f (0.730 +/- 0.005), sampling %.1f s (< 300 s)", l.net.minima.size(),
               best, l.explore_seconds));
}

// 2 -------------------------------------------------------------------------------

void glass_accuracy() {
    const Dataset d = load_csv(kData + "/glass.csv", "class");
    MinimaStore store;
    explore(d, 6, kStarts, kSeed, store);
    int best = 0;
    for (const auto& m : store.records()) {
        if (accuracy(m, d) > accuracy(store[best], d)) best = m.id;
    }
    const int gm = store.global_minimum();
    const double a_best = accuracy(store[best], d), a_gm = accuracy(store[gm], d);
    const bool exact = std::abs(a_best - 0.313) <= 0.02 && std::abs(a_gm - 0.255) <= 0.02;
    const bool fallback = a_best <= 0.313 + 0.02 && best != gm && a_best > a_gm;
    report(2, exact || fallback,
           fmt("Glass K=6: %zu minima, best ARI %.4f (0.313 +/- 0.02), GM ARI %.4f (0.255 +/- 0.02), best %s GM%s",
               store.size(), a_best, a_gm, best != gm ? "!=" : "==", exact ? "" : ", fallback rule"));
}

// 3 -------------------------------------------------------------------------------

void seam_quality(const Landscape& l) {
    std::vector<double> gaps;
    for (const auto& t : l.net.transition_states.records()) gaps.push_back(t.seam_gap);
    if (gaps.empty()) {
        report(3, false, "no transition states on the Iris K=3 network");
        return;
    }
    std::sort(gaps.begin(), gaps.end());
    const auto tight = std::count_if(gaps.begin(), gaps.end(), [](double g) { return g <= 1e-3; });
    const double frac = static_cast<double>(tight) / static_cast<double>(gaps.size());
    const std::size_t n = gaps.size();
    const double median = n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
    report(3, frac >= 0.95 && median <= 1e-4,
           fmt("Iris K=3: %zu transition states, %.1f%% with seam gap <= 1e-3 (>= 95%%), median %.2e (<= 1e-4)", n,
               100.0 * frac, median));
}

// 4 -------------------------------------------------------------------------------

void rate_oracle() {
    std::mt19937_64 rng(401);
    double worst = 0.0;
    int bad = 0, cases = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 7);
        const int m = n - 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(15 - n));
        const auto s = nets::random_network(rng, n, m);
        std::set<int> sink{static_cast<int>(rng() % static_cast<std::uint64_t>(n))}, sources;
        for (int i = 0; i < n; ++i) {
            if (!sink.count(i) && (sources.empty() || rng() % 3 == 0)) sources.insert(i);
        }
        for (double t : {0.5, 1.0, 3.0}) {
            const double e = rel(overall_rate(s.net, sources, sink, {t}), oracle::set_rate(s.cost, s.edges, sources, sink, t));
            worst = std::max(worst, e);
            bad += e > 1e-8;
            ++cases;
        }
    }
    report(4, bad == 0, fmt("%d cases on 200 networks: %d above 1e-8, worst relative error %.1e", cases, bad, worst));
}

// 5 -------------------------------------------------------------------------------

void path_oracle() {
    std::mt19937_64 rng(503);
    int mismatched = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 5);
        const int m = n - 1 + static_cast<int>(rng() % 6);
        const auto s = nets::random_network(rng, n, m);
        const int source = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
        const int sink = (source + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n - 1))) % n;
        const auto expected = oracle::best_path_exhaustive(oracle::rate_matrix(s.cost, s.edges, 1.0), source, sink, nullptr);
        std::vector<int> got;
        for (const auto& st : fastest_path(s.net, source, sink, {1.0}).steps) {
            if (st.is_minimum) got.push_back(st.id);
        }
        mismatched += got != expected;
    }
    report(5, mismatched == 0, fmt("100 networks of <= 6 minima: %d paths differ from exhaustive enumeration", mismatched));
}

// 6 -------------------------------------------------------------------------------

void rand_index_oracle() {
    std::mt19937_64 rng(607);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = static_cast<std::size_t>(2 + rng() % 11);
        const int ka = 1 + static_cast<int>(rng() % 4), kb = 1 + static_cast<int>(rng() % 4);
        std::vector<int> a(n), b(n);
        for (auto& v : a) v = static_cast<int>(rng() % static_cast<std::uint64_t>(ka));
        for (auto& v : b) v = static_cast<int>(rng() % static_cast<std::uint64_t>(kb));
        worst = std::max(worst, std::abs(rand_index(a, b) - oracle::rand_index(a, b)));
        worst = std::max(worst, std::abs(adjusted_rand_index(a, b) - oracle::adjusted_rand_index(a, b)));
    }
    report(6, worst <= 1e-12, fmt("500 label pairs (N <= 12, K <= 4): largest difference %.1e (<= 1e-12)", worst));
}

// 7 -------------------------------------------------------------------------------

void structure_enumeration() {
    const std::array<std::size_t, 5> expected{1, 2, 4, 7, 12};
    bool counts = true;
    std::string seen;
    for (int o = 0; o <= 4; ++o) {
        const auto n = structure_types(o).size();
        counts = counts && n == expected[static_cast<std::size_t>(o)];
        seen += (o ? "," : "") + std::to_string(n);
    }
    // Synthetic assignments built from a known composition: absorbed outliers share a cluster with
    // original rows, each group gets its own outlier-only cluster.
    std::mt19937_64 rng(709);
    int wrong = 0, cases = 0;
    for (int o = 0; o <= 4; ++o) {
        for (const auto& type : structure_types(o)) {
            for (int rep = 0; rep < 20; ++rep) {
                const int n_orig = 3 + static_cast<int>(rng() % 6);
                const int k_orig = 1 + static_cast<int>(rng() % 3);
                Assignment labels(static_cast<std::size_t>(n_orig));
                for (int i = 0; i < n_orig; ++i) labels[static_cast<std::size_t>(i)] = i < k_orig ? i : static_cast<int>(rng() % static_cast<std::uint64_t>(k_orig));
                Assignment outl;
                for (int a = 0; a < type.absorbed_count; ++a) outl.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k_orig)));
                int next = k_orig;
                for (int g : type.group_sizes) {
                    for (int j = 0; j < g; ++j) outl.push_back(next);
                    ++next;
                }
                std::shuffle(outl.begin(), outl.end(), rng);
                labels.insert(labels.end(), outl.begin(), outl.end());
                std::vector<bool> flags(static_cast<std::size_t>(n_orig), false);
                flags.resize(labels.size(), true);
                const StructureType got = structure_type(labels, flags);
                wrong += !(got == type) || got.canonical_id != type.canonical_id;
                ++cases;
            }
        }
    }
    report(7, counts && wrong == 0,
           fmt("type counts for O=0..4: %s (1,2,4,7,12); %d of %d synthetic assignments misclassified", seen.c_str(),
               wrong, cases));
}

// 8 -------------------------------------------------------------------------------

void landscape_invariants(const Landscape& l) {
    const auto path = std::filesystem::temp_directory_path() / "kmland_acceptance_db.json";
    Database db;
    db.dataset_hash = dataset_hash(l.data);
    db.k = 3;
    db.seed = kSeed;
    db.net = l.net;
    save_db(path.string(), db);
    const Database back = load_db(path.string());
    const ValidationReport v = validate_db(path.string(), l.data, 1e-8);
    std::filesystem::remove(path);

    int below = 0;
    for (const auto& t : back.net.transition_states.records()) {
        below += t.cost < back.net.minima[t.connected.first].cost || t.cost < back.net.minima[t.connected.second].cost;
    }
    const DisconnectivityTree tree = build_disconnectivity(back.net, 100);
    const int broken = check_refinement(tree);
    report(8, v.ok() && below == 0 && broken < 0 && tree.levels.size() == 100,
           fmt("Iris K=3 database: %zu minima, %zu transition states, %zu violations, %d TS below an endpoint, "
               "refinement %s over %zu levels",
               v.minima, v.transition_states, v.violations.size(), below, broken < 0 ? "holds" : "broken",
               tree.levels.size()));
}

// 9 -------------------------------------------------------------------------------

// Fourth-order central differences.
Eigen::VectorXd fd4(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        auto at = [&](double d) {
            x[i] = x0 + d;
            return f(x);
        };
        g[i] = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        x[i] = x0;
    }
    return g;
}

void gradient_checks() {
    std::mt19937_64 rng(911);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    const SurrogateParams p{30.0, 0.02};
    double worst_j = 0.0, worst_f = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 6 + static_cast<Eigen::Index>(rng() % 10), dim = 1 + static_cast<Eigen::Index>(rng() % 3);
        const int k = 2 + static_cast<int>(rng() % 3);
        Matrix x(n, dim), mu(k, dim);
        for (auto& v : x.reshaped()) v = u(rng);
        for (auto& v : mu.reshaped()) v = u(rng);
        const Assignment r1 = assign(x, mu);
        Assignment r2 = r1;
        const auto moved = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
        r2[moved] = (r1[moved] + 1) % k;
        auto as_matrix = [&](const Eigen::VectorXd& v) { return Matrix(Eigen::Map<const Matrix>(v.data(), k, dim)); };
        const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(mu.data(), mu.size());

        const Matrix gj = cost_gradient(x, mu, r1);
        const Eigen::VectorXd fj = fd4([&](const Eigen::VectorXd& y) { return oracle::sse(x, as_matrix(y), r1); }, v, 1e-3);
        worst_j = std::max(worst_j, (Eigen::Map<const Eigen::VectorXd>(gj.data(), gj.size()) - fj).cwiseAbs().maxCoeff());

        const Matrix gf = f_plus_gradient(x, mu, r1, r2, p);
        const Eigen::VectorXd ff = fd4([&](const Eigen::VectorXd& y) { return f_plus(x, as_matrix(y), r1, r2, p); }, v, 1e-4);
        worst_f = std::max(worst_f, (Eigen::Map<const Eigen::VectorXd>(gf.data(), gf.size()) - ff).cwiseAbs().maxCoeff());
    }
    report(9, worst_j <= 1e-5 && worst_f <= 1e-5,
           fmt("100 instances: largest |analytic - FD| %.1e for J, %.1e for F+ (<= 1e-5)", worst_j, worst_f));
}

// 10 ------------------------------------------------------------------------------

/// Rates that agree to this relative precision are the same number up to summation order.
constexpr double kRoundoff = 1e-9;

void escape_trend(const Landscape& o0) {
    std::vector<double> geo;
    std::string values;
    for (int o = 0; o <= 4; ++o) {
        Landscape built;
        const Landscape* l = &o0;
        if (o > 0) {
            built = build(iris_with_outliers(o), 3, true);
            l = &built;
        }
        const auto& net = l->net;
        if (!l->growth.connected) {
            report(10, false, fmt("Iris K=3 with %d outliers did not connect", o));
            return;
        }
        const int gm = net.minima.global_minimum();
        std::vector<int> ids(net.minima.size());
        std::iota(ids.begin(), ids.end(), 0);
        std::erase(ids, gm);
        std::sort(ids.begin(), ids.end(), [&](int a, int b) { return net.minima[a].cost < net.minima[b].cost; });
        const double a = overall_rate(net, {ids.at(0)}, {gm}, {1.0});
        const double b = overall_rate(net, {ids.at(1)}, {gm}, {1.0});
        geo.push_back(std::sqrt(a * b));
        values += fmt("%sO=%d %.6g", o ? ", " : "", o, geo.back());
    }
    int holding = 1;  // the first landscape has no predecessor
    for (std::size_t i = 1; i < geo.size(); ++i) holding += geo[i] <= geo[i - 1] * (1.0 + kRoundoff);
    report(10, holding >= 4, fmt("Iris K=3 escape rates at T=1: %s; non-increasing in %d of 5 landscapes (>= 4)",
                                 values.c_str(), holding));
}

// 11 ------------------------------------------------------------------------------

void frustration_sanity() {
    std::vector<double> grid;
    for (int i = 0; i <= 60; ++i) grid.push_back(std::pow(10.0, -6.0 + 0.2 * i));
    bool ok = true;
    std::string notes;
    for (int o = 0; o <= 4; ++o) {
        const Landscape l = build(iris_with_outliers(o), 6, false);
        const auto prof = frustration_profile(l.net, grid);
        const double cap = std::log(static_cast<double>(l.net.minima.size()));
        for (double s : prof.entropy) ok = ok && std::isfinite(s) && s >= 0.0 && s <= cap;
        const double j0 = l.net.minima[l.net.minima.global_minimum()].cost;
        int degenerate = 0;
        for (const auto& m : l.net.minima.records()) degenerate += m.cost - j0 <= 1e-9 * std::max(1.0, std::abs(j0));
        const double cold = prof.entropy.front();
        ok = ok && std::abs(cold - std::log(static_cast<double>(degenerate))) <= 1e-6;
        notes += fmt("%sO=%d M=%zu S(1e-6)=%.3g", o ? ", " : "", o, l.net.minima.size(), cold);
    }
    report(11, ok, "Iris K=6: " + notes + "; all finite and within [0, ln M], cold limit ln(degeneracy)");
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    const Landscape iris3 = build(iris_with_outliers(0), 3, true);
    iris_best_accuracy(iris3);
    glass_accuracy();
    seam_quality(iris3);
    rate_oracle();
    path_oracle();
    rand_index_oracle();
    structure_enumeration();
    landscape_invariants(iris3);
    gradient_checks();
    escape_trend(iris3);
    frustration_sanity();
    std::printf("%d of 11 criteria failed, %.1f s\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
