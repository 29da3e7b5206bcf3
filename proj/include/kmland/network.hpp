#pragma once

#include "kmland/transition_search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <vector>

namespace kmland {

struct StationaryPointNetwork {
    MinimaStore minima;
    TransitionStore transition_states;
};

struct NetworkEdge {
    int ts = -1;
    int neighbour = -1;
};

/// Per-minimum list of (transition state, neighbouring minimum); every TS appears at both ends.
inline std::vector<std::vector<NetworkEdge>> adjacency(const StationaryPointNetwork& net) {
    std::vector<std::vector<NetworkEdge>> adj(net.minima.size());
    for (const auto& t : net.transition_states.records()) {
        adj.at(static_cast<std::size_t>(t.connected.first)).push_back({t.id, t.connected.second});
        adj.at(static_cast<std::size_t>(t.connected.second)).push_back({t.id, t.connected.first});
    }
    return adj;
}

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int x) {
        while (parent_[static_cast<std::size_t>(x)] != x) {
            auto& p = parent_[static_cast<std::size_t>(x)];
            p = parent_[static_cast<std::size_t>(p)];
            x = p;
        }
        return x;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }

private:
    std::vector<int> parent_;
};

/// Component label per minimum: the smallest minimum id in its TS-connected component.
inline std::vector<int> components(const StationaryPointNetwork& net) {
    DisjointSet ds(net.minima.size());
    for (const auto& t : net.transition_states.records()) ds.unite(t.connected.first, t.connected.second);
    std::vector<int> out(net.minima.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ds.find(static_cast<int>(i));
    return out;
}

inline int component_count(const StationaryPointNetwork& net) {
    const auto c = components(net);
    return static_cast<int>(std::set<int>(c.begin(), c.end()).size());
}

// Rates -----------------------------------------------------------------------

struct RateParams {
    double temperature = 1.0;
};

/// exp(-(J_ts - J_min)/T) with unit prefactor. Barriers below zero by at most `tol` are treated as zero.
inline double elementary_rate(double j_min, double j_ts, const RateParams& p, double tol = 1e-3) {
    if (!(p.temperature > 0.0)) throw PreconditionError("temperature must be positive");
    if (j_ts < j_min - tol) throw PreconditionError("transition state lies below its minimum");
    return std::exp(-std::max(0.0, j_ts - j_min) / p.temperature);
}

/// Total rate from each minimum to each neighbour, parallel transition states summed.
inline std::vector<std::map<int, double>> rate_table(const StationaryPointNetwork& net, const RateParams& p) {
    std::vector<std::map<int, double>> k(net.minima.size());
    for (const auto& t : net.transition_states.records()) {
        const auto [a, b] = t.connected;
        k[static_cast<std::size_t>(a)][b] += elementary_rate(net.minima[a].cost, t.cost, p);
        k[static_cast<std::size_t>(b)][a] += elementary_rate(net.minima[b].cost, t.cost, p);
    }
    return k;
}

struct Branching {
    double waiting_time = 0.0;
    std::map<int, double> probability;  // neighbour -> P_ij
};

inline Branching branching(const StationaryPointNetwork& net, int i, const RateParams& p) {
    const auto k = rate_table(net, p);
    const auto& row = k.at(static_cast<std::size_t>(i));
    if (row.empty()) throw PreconditionError("minimum " + std::to_string(i) + " has no transition states");
    double total = 0.0;
    for (const auto& [j, r] : row) total += r;
    Branching b;
    b.waiting_time = 1.0 / total;
    for (const auto& [j, r] : row) b.probability[j] = r / total;
    return b;
}

enum class RemovalOrder { min_degree, random };

namespace detail {

// Branching probabilities and waiting times of a graph under node elimination.
struct GtGraph {
    std::vector<std::map<int, double>> p;  // p[i][j] = P_ij, symmetric sparsity
    std::vector<double> tau;
    std::vector<bool> alive;

    int degree(int x) const {
        const auto& row = p[static_cast<std::size_t>(x)];
        return static_cast<int>(row.size()) - static_cast<int>(row.count(x));
    }

    void remove(int x) {
        const auto ux = static_cast<std::size_t>(x);
        double escape = 0.0;  // 1 - P_xx, summed directly to avoid cancellation
        for (const auto& [j, pxj] : p[ux]) {
            if (j != x) escape += pxj;
        }
        if (!(escape > 0.0)) throw PreconditionError("graph transformation: node " + std::to_string(x) + " cannot escape");
        for (const auto& [i, unused] : p[ux]) {
            if (i == x) continue;
            auto& row = p[static_cast<std::size_t>(i)];
            const auto it = row.find(x);
            const double factor = it->second / escape;
            row.erase(it);
            tau[static_cast<std::size_t>(i)] += factor * tau[ux];
            for (const auto& [j, pxj] : p[ux]) {
                if (j != x) row[j] += factor * pxj;
            }
        }
        p[ux].clear();
        alive[ux] = false;
    }

    void remove_all(const std::vector<int>& nodes, RemovalOrder order, std::mt19937_64& rng) {
        std::vector<int> left = nodes;
        if (order == RemovalOrder::random) {
            std::shuffle(left.begin(), left.end(), rng);
            for (int x : left) remove(x);
            return;
        }
        while (!left.empty()) {
            auto best = left.begin();
            for (auto it = left.begin(); it != left.end(); ++it) {
                if (degree(*it) < degree(*best)) best = it;
            }
            const int x = *best;
            left.erase(best);
            remove(x);
        }
    }
};

// Eliminates, for each source in turn, every other source; writes P(source -> sink)/tau per source.
inline void per_source_rates(GtGraph g, const std::vector<int>& sources, const std::set<int>& sink,
                             RemovalOrder order, std::mt19937_64& rng, std::map<int, double>& out) {
    if (sources.size() == 1) {
        const int s = sources.front();
        double to_sink = 0.0;
        for (const auto& [j, psj] : g.p[static_cast<std::size_t>(s)]) {
            if (sink.count(j)) to_sink += psj;
        }
        out[s] = to_sink / g.tau[static_cast<std::size_t>(s)];
        return;
    }
    const auto half = static_cast<std::ptrdiff_t>(sources.size() / 2);
    const std::vector<int> left(sources.begin(), sources.begin() + half);
    const std::vector<int> right(sources.begin() + half, sources.end());
    GtGraph keep_left = g;
    keep_left.remove_all(right, order, rng);
    per_source_rates(std::move(keep_left), left, sink, order, rng, out);
    g.remove_all(left, order, rng);
    per_source_rates(std::move(g), right, sink, order, rng, out);
}

}  // namespace detail

/// Set-to-set rate by graph transformation: Boltzmann-weighted (within the source set) mean over
/// sources of P(source -> sink) / tau after eliminating every other node.
inline double overall_rate(const StationaryPointNetwork& net, const std::set<int>& sources, const std::set<int>& sink,
                           const RateParams& p, RemovalOrder order = RemovalOrder::min_degree,
                           std::uint64_t seed = 0) {
    if (sources.empty() || sink.empty()) throw PreconditionError("overall_rate: empty source or sink set");
    const auto n = static_cast<int>(net.minima.size());
    for (int s : sources) {
        if (s < 0 || s >= n || sink.count(s)) throw PreconditionError("overall_rate: invalid or overlapping source");
    }
    for (int s : sink) {
        if (s < 0 || s >= n) throw PreconditionError("overall_rate: invalid sink");
    }
    const auto comp = components(net);
    std::set<int> sink_components;
    for (int s : sink) sink_components.insert(comp[static_cast<std::size_t>(s)]);
    for (int s : sources) {
        if (!sink_components.count(comp[static_cast<std::size_t>(s)])) {
            throw PreconditionError("overall_rate: sink unreachable from minimum " + std::to_string(s));
        }
    }

    const auto k = rate_table(net, p);
    detail::GtGraph g;
    g.p.resize(static_cast<std::size_t>(n));
    g.tau.assign(static_cast<std::size_t>(n), 0.0);
    g.alive.assign(static_cast<std::size_t>(n), true);
    std::set<int> source_components;
    for (int s : sources) source_components.insert(comp[static_cast<std::size_t>(s)]);
    std::vector<int> intermediates;
    for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!source_components.count(comp[ui])) {
            g.alive[ui] = false;
            continue;
        }
        double total = 0.0;
        for (const auto& [j, r] : k[ui]) total += r;
        g.tau[ui] = 1.0 / total;
        for (const auto& [j, r] : k[ui]) g.p[ui][j] = r / total;
        if (!sources.count(i) && !sink.count(i)) intermediates.push_back(i);
    }
    std::mt19937_64 rng(seed);
    g.remove_all(intermediates, order, rng);

    std::map<int, double> per_source;
    detail::per_source_rates(std::move(g), std::vector<int>(sources.begin(), sources.end()), sink, order, rng,
                             per_source);

    double j_low = std::numeric_limits<double>::infinity();
    for (int s : sources) j_low = std::min(j_low, net.minima[s].cost);
    double z = 0.0, acc = 0.0;
    for (int s : sources) {
        const double w = std::exp(-(net.minima[s].cost - j_low) / p.temperature);
        z += w;
        acc += w * per_source[s];
    }
    return acc / z;
}

// Fastest path ----------------------------------------------------------------

struct PathStep {
    bool is_minimum = true;
    int id = -1;
    double cost = 0.0;
};

struct FastestPath {
    std::vector<PathStep> steps;  // minimum, ts, minimum, ..., minimum
    double weight = 0.0;          // sum of -ln P_ij
};

/// Dijkstra on edge weights -ln P_ij. Between consecutive minima the lowest transition state is reported.
inline FastestPath fastest_path(const StationaryPointNetwork& net, int source, int sink, const RateParams& p) {
    const auto n = static_cast<int>(net.minima.size());
    if (source < 0 || source >= n || sink < 0 || sink >= n) throw PreconditionError("fastest_path: unknown minimum");
    const auto k = rate_table(net, p);
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<int> prev(static_cast<std::size_t>(n), -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[static_cast<std::size_t>(source)] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == sink) break;
        const auto& row = k[static_cast<std::size_t>(u)];
        double total = 0.0;
        for (const auto& [v, r] : row) total += r;
        for (const auto& [v, r] : row) {
            const double nd = d - std::log(r / total);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                queue.emplace(nd, v);
            }
        }
    }
    if (!std::isfinite(dist[static_cast<std::size_t>(sink)])) {
        throw PreconditionError("fastest_path: sink unreachable from source");
    }
    std::vector<int> nodes;
    for (int v = sink; v != -1; v = prev[static_cast<std::size_t>(v)]) nodes.push_back(v);
    std::reverse(nodes.begin(), nodes.end());

    FastestPath path;
    path.weight = dist[static_cast<std::size_t>(sink)];
    const auto adj = adjacency(net);
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        const int m = nodes[s];
        if (s > 0) {
            int best = -1;
            for (const auto& e : adj[static_cast<std::size_t>(nodes[s - 1])]) {
                if (e.neighbour == m && (best < 0 || net.transition_states[e.ts].cost < net.transition_states[best].cost)) {
                    best = e.ts;
                }
            }
            path.steps.push_back({false, best, net.transition_states[best].cost});
        }
        path.steps.push_back({true, m, net.minima[m].cost});
    }
    return path;
}

// Network growth --------------------------------------------------------------

enum class PairStatus { pair, all_connected, exhausted };

struct NextPair {
    PairStatus status = PairStatus::all_connected;
    int unconnected = -1;  // lowest-cost minimum outside the global minimum's component
    int connected = -1;    // nearest (aligned centre distance) minimum inside it
};

/// Distance-based pair selection. Pairs in `tried` are skipped; when the nearest connected minimum
/// has already been tried the next nearest is used, then the next unconnected minimum.
inline NextPair select_next_pair(const StationaryPointNetwork& net, const std::set<std::pair<int, int>>& tried = {}) {
    NextPair out;
    if (net.minima.empty()) return out;
    const auto comp = components(net);
    const int gm = net.minima.global_minimum();
    const int gm_comp = comp[static_cast<std::size_t>(gm)];
    std::vector<int> outside, inside;
    for (const auto& r : net.minima.records()) {
        (comp[static_cast<std::size_t>(r.id)] == gm_comp ? inside : outside).push_back(r.id);
    }
    if (outside.empty()) return out;
    std::stable_sort(outside.begin(), outside.end(),
                     [&](int a, int b) { return net.minima[a].cost < net.minima[b].cost; });
    for (int u : outside) {
        std::vector<std::pair<double, int>> near;
        for (int v : inside) near.emplace_back(align_centres(net.minima[u].centres, net.minima[v].centres).sq_distance, v);
        std::sort(near.begin(), near.end());
        for (const auto& [dist, v] : near) {
            if (!tried.count({u, v})) return {PairStatus::pair, u, v};
        }
    }
    out.status = PairStatus::exhausted;
    return out;
}

struct GrowthReport {
    int attempts = 0;            // pairs passed to attempt_connection
    int successful = 0;          // attempts that added at least one transition state
    int searches = 0;            // MECP searches
    int failed_searches = 0;
    int unresolved_segments = 0;
    int ts_found = 0;
    int minima_found = 0;        // minima first reached while connecting
    int components = 0;
    bool connected = false;
    bool exhausted = false;      // every candidate pair was tried without connecting
};

/// Repeats select_next_pair / attempt_connection until one component remains or `budget` attempts are used.
inline GrowthReport grow_connected(const Matrix& points, const Sites& sites, StationaryPointNetwork& net, int budget,
                                   const SurrogateParams& p, const ConnectionOptions& opt = {},
                                   std::set<std::pair<int, int>>* tried_pairs = nullptr) {
    GrowthReport report;
    std::set<std::pair<int, int>> local;
    auto& tried = tried_pairs ? *tried_pairs : local;
    while (report.attempts < budget) {
        const NextPair next = select_next_pair(net, tried);
        if (next.status == PairStatus::all_connected) break;
        if (next.status == PairStatus::exhausted) {
            report.exhausted = true;
            break;
        }
        tried.insert({next.unconnected, next.connected});
        const std::size_t before = net.minima.size();
        const auto r = attempt_connection(points, sites, net.minima, net.transition_states, next.connected,
                                          next.unconnected, p, opt);
        ++report.attempts;
        report.searches += r.searches;
        report.failed_searches += static_cast<int>(r.failures.size());
        report.unresolved_segments += r.unresolved;
        report.ts_found += static_cast<int>(r.new_ts.size());
        report.minima_found += static_cast<int>(net.minima.size() - before);
        if (!r.new_ts.empty()) ++report.successful;
    }
    report.components = component_count(net);
    report.connected = report.components <= 1;
    return report;
}

/// Temperature at which the rate lands in [lo, hi]: geometric bracketing from `start`, then
/// bisection in log T. Rates grow with temperature when all barriers are positive.
inline std::optional<double> scan_temperature(const StationaryPointNetwork& net, const std::set<int>& sources,
                                              const std::set<int>& sink, double lo = 1e-6, double hi = 1e-3,
                                              double start = 1.0) {
    auto rate = [&](double t) { return overall_rate(net, sources, sink, {t}); };
    auto inside = [&](double r) { return r >= lo && r <= hi; };
    double t = start, r = rate(t);
    if (inside(r)) return t;
    double t_lo = t, t_hi = t;  // rate(t_lo) < lo, rate(t_hi) > hi
    const double factor = r > hi ? 0.5 : 2.0;
    for (int i = 0;; ++i) {
        if (i == 200) return std::nullopt;
        t *= factor;
        r = rate(t);
        if (inside(r)) return t;
        if (factor < 1.0 && r < lo) {
            t_lo = t;
            break;
        }
        if (factor > 1.0 && r > hi) {
            t_hi = t;
            break;
        }
        (factor < 1.0 ? t_hi : t_lo) = t;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = std::sqrt(t_lo * t_hi);
        r = rate(mid);
        if (inside(r)) return mid;
        (r < lo ? t_lo : t_hi) = mid;
    }
    return std::nullopt;
}

}  // namespace kmland
