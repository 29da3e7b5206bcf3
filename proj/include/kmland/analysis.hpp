#pragma once

#include "kmland/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kmland {

// Partition comparison --------------------------------------------------------

namespace detail {

inline void check_labelings(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw PreconditionError("labelings differ in length");
    if (a.size() < 2) throw PreconditionError("labelings need at least two points");
}

inline double choose2(double n) { return 0.5 * n * (n - 1.0); }

struct Contingency {
    std::map<std::pair<int, int>, long long> cells;
    std::map<int, long long> rows, cols;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
    Contingency c;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++c.cells[{a[i], b[i]}];
        ++c.rows[a[i]];
        ++c.cols[b[i]];
    }
    return c;
}

}  // namespace detail

/// Fraction of point pairs on which the two partitions agree (together in both or apart in both).
inline double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    detail::check_labelings(a, b);
    const auto c = detail::contingency(a, b);
    double both = 0.0, in_a = 0.0, in_b = 0.0;
    for (const auto& [key, n] : c.cells) both += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : c.rows) in_a += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : c.cols) in_b += detail::choose2(static_cast<double>(n));
    const double pairs = detail::choose2(static_cast<double>(a.size()));
    // together in both + apart in both
    return (both + (pairs - in_a - in_b + both)) / pairs;
}

/// Contingency-table ARI. Returns 1 when both partitions are trivial in the same way (0/0).
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    detail::check_labelings(a, b);
    const auto c = detail::contingency(a, b);
    double index = 0.0, in_a = 0.0, in_b = 0.0;
    for (const auto& [key, n] : c.cells) index += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : c.rows) in_a += detail::choose2(static_cast<double>(n));
    for (const auto& [key, n] : c.cols) in_b += detail::choose2(static_cast<double>(n));
    const double pairs = detail::choose2(static_cast<double>(a.size()));
    const double expected = in_a * in_b / pairs;
    const double maximum = 0.5 * (in_a + in_b);
    if (maximum == expected) return 1.0;
    return (index - expected) / (maximum - expected);
}

/// ARI between the ground truth and a minimum's labels, over original (non-outlier) rows only.
inline double accuracy(const Assignment& labels, const Dataset& d) {
    if (!d.ground_truth) throw PreconditionError("dataset has no ground-truth labels");
    if (static_cast<Eigen::Index>(labels.size()) != d.size()) throw PreconditionError("labels do not match the dataset");
    std::vector<int> truth, found;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (d.outlier_flags[i]) continue;
        truth.push_back((*d.ground_truth)[i]);
        found.push_back(labels[i]);
    }
    return adjusted_rand_index(truth, found);
}

inline double accuracy(const MinimumRecord& m, const Dataset& d) { return accuracy(m.labels, d); }

// Outlier structure types -----------------------------------------------------

struct StructureType {
    int absorbed_count = 0;        // outliers sharing a cluster with original points
    std::vector<int> group_sizes;  // ascending sizes of outlier-only clusters
    int canonical_id = 0;

    bool operator==(const StructureType&) const = default;
};

namespace detail {

// Colexicographic: compare from the largest (last) part down.
inline bool colex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(), b.rend());
}

inline void partitions(int remaining, int smallest, std::vector<int>& current, std::vector<std::vector<int>>& out) {
    if (remaining == 0) {
        out.push_back(current);
        return;
    }
    for (int part = smallest; part <= remaining; ++part) {
        current.push_back(part);
        partitions(remaining - part, part, current, out);
        current.pop_back();
    }
}

}  // namespace detail

/// Every (absorbed, groups) configuration for O outliers, in canonical-id order: by number of
/// outliers in outlier-only clusters, then group sizes colexicographically. Id 0 = all absorbed.
inline std::vector<StructureType> structure_types(int n_outliers) {
    if (n_outliers < 0) throw PreconditionError("negative outlier count");
    std::vector<StructureType> out;
    for (int m = 0; m <= n_outliers; ++m) {
        std::vector<std::vector<int>> parts;
        std::vector<int> current;
        detail::partitions(m, 1, current, parts);
        std::sort(parts.begin(), parts.end(), detail::colex_less);
        for (auto& p : parts) {
            out.push_back({n_outliers - m, std::move(p), static_cast<int>(out.size())});
        }
    }
    return out;
}

inline int canonical_structure_id(int n_outliers, int absorbed, const std::vector<int>& group_sizes) {
    for (const auto& t : structure_types(n_outliers)) {
        if (t.absorbed_count == absorbed && t.group_sizes == group_sizes) return t.canonical_id;
    }
    throw PreconditionError("structure does not account for every outlier");
}

inline StructureType structure_type(const Assignment& labels, const std::vector<bool>& outlier_flags) {
    if (labels.size() != outlier_flags.size()) throw PreconditionError("labels do not match the outlier flags");
    std::map<int, int> outliers, originals;
    for (std::size_t i = 0; i < labels.size(); ++i) ++(outlier_flags[i] ? outliers : originals)[labels[i]];
    StructureType t;
    int total = 0;
    for (const auto& [cluster, n] : outliers) {
        total += n;
        if (originals.contains(cluster)) t.absorbed_count += n;
        else t.group_sizes.push_back(n);
    }
    std::sort(t.group_sizes.begin(), t.group_sizes.end());
    t.canonical_id = canonical_structure_id(total, t.absorbed_count, t.group_sizes);
    return t;
}

inline StructureType structure_type(const MinimumRecord& m, const Dataset& d) {
    return structure_type(m.labels, d.outlier_flags);
}

/// Number of distinct clusters holding at least one point of the named class.
inline int partition_signature(const Assignment& labels, const Dataset& d, const std::string& class_label) {
    if (!d.ground_truth) throw PreconditionError("dataset has no ground-truth labels");
    const auto it = std::find(d.class_names.begin(), d.class_names.end(), class_label);
    if (it == d.class_names.end()) throw PreconditionError("unknown class: " + class_label);
    const int cls = static_cast<int>(it - d.class_names.begin());
    std::set<int> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((*d.ground_truth)[i] == cls) clusters.insert(labels[i]);
    }
    return static_cast<int>(clusters.size());
}

inline int partition_signature(const MinimumRecord& m, const Dataset& d, const std::string& class_label) {
    return partition_signature(m.labels, d, class_label);
}

// Superbasins and disconnectivity graphs ------------------------------------------

/// Minima joined by transition states with cost below `threshold`. Sets are sorted and ordered by
/// their smallest member.
inline std::vector<std::vector<int>> superbasins(const StationaryPointNetwork& net, double threshold) {
    DisjointSet ds(net.minima.size());
    for (const auto& t : net.transition_states.records()) {
        if (t.cost < threshold) ds.unite(t.connected.first, t.connected.second);
    }
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < static_cast<int>(net.minima.size()); ++i) groups[ds.find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [root, members] : groups) out.push_back(std::move(members));
    return out;
}

struct DisconnectivityNode {
    int level = 0;
    double threshold = 0.0;
    std::vector<int> members;  // minima ids, ascending
    int parent = -1;           // node at level - 1
};

struct DisconnectivityTree {
    std::vector<double> levels;                 // descending thresholds
    std::vector<DisconnectivityNode> nodes;
    std::vector<std::vector<int>> basin_of;     // [level][minimum] -> node id
    std::vector<double> leaves;                 // J per minimum id
};

inline DisconnectivityTree build_disconnectivity(const StationaryPointNetwork& net, int n_levels, double j_min,
                                                 double j_max) {
    if (n_levels < 2) throw PreconditionError("need at least two levels");
    if (!(j_max > j_min)) throw PreconditionError("threshold range is empty");
    if (net.minima.empty()) throw PreconditionError("network has no minima");
    DisconnectivityTree tree;
    for (const auto& m : net.minima.records()) tree.leaves.push_back(m.cost);
    if (*std::min_element(tree.leaves.begin(), tree.leaves.end()) >= j_max) {
        throw PreconditionError("thresholds lie below every minimum");
    }
    const double step = (j_max - j_min) / (n_levels - 1);
    for (int l = 0; l < n_levels; ++l) {
        const double t = l == n_levels - 1 ? j_min : j_max - l * step;
        tree.levels.push_back(t);
        std::vector<int> where(net.minima.size(), -1);
        for (auto& members : superbasins(net, t)) {
            DisconnectivityNode node{l, t, std::move(members), -1};
            if (l > 0) node.parent = tree.basin_of.back()[static_cast<std::size_t>(node.members.front())];
            for (int m : node.members) where[static_cast<std::size_t>(m)] = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(std::move(node));
        }
        tree.basin_of.push_back(std::move(where));
    }
    return tree;
}

/// Levels evenly spaced from the global minimum to 1.02 x the highest transition state.
inline DisconnectivityTree build_disconnectivity(const StationaryPointNetwork& net, int n_levels = 100) {
    if (net.minima.empty()) throw PreconditionError("network has no minima");
    const double lo = net.minima[net.minima.global_minimum()].cost;
    double hi = lo;
    for (const auto& m : net.minima.records()) hi = std::max(hi, m.cost);
    for (const auto& t : net.transition_states.records()) hi = std::max(hi, t.cost);
    hi = hi > 0.0 ? hi * 1.02 : hi + 1.0;
    if (!(hi > lo)) hi = lo + 1.0;
    return build_disconnectivity(net, n_levels, lo, hi);
}

/// Every basin at level l lies inside exactly one basin at level l - 1. Returns the first level
/// that breaks this, or -1.
inline int check_refinement(const DisconnectivityTree& tree) {
    for (std::size_t l = 1; l < tree.levels.size(); ++l) {
        for (std::size_t m = 0; m < tree.leaves.size(); ++m) {
            const auto& node = tree.nodes[static_cast<std::size_t>(tree.basin_of[l][m])];
            if (node.parent != tree.basin_of[l - 1][m]) return static_cast<int>(l);
        }
    }
    return -1;
}

struct Segment {
    double x1, y1, x2, y2;
};

struct DisconnectivityLayout {
    std::vector<double> leaf_x;  // per minimum id
    std::vector<double> node_x;  // per node, NaN when no member lies below the node's threshold
    std::vector<Segment> segments;
};

/// Children ordered by descending basin size (then lowest J), leaves evenly spaced; branches join
/// at the mean position of the minima lying below each threshold.
inline DisconnectivityLayout layout_disconnectivity(const DisconnectivityTree& tree) {
    const std::size_t n_min = tree.leaves.size();
    std::vector<std::vector<int>> children(tree.nodes.size());
    std::vector<int> top;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const int p = tree.nodes[i].parent;
        (p < 0 ? top : children[static_cast<std::size_t>(p)]).push_back(static_cast<int>(i));
    }
    auto lowest = [&](int node) {
        double j = std::numeric_limits<double>::infinity();
        for (int m : tree.nodes[static_cast<std::size_t>(node)].members) j = std::min(j, tree.leaves[static_cast<std::size_t>(m)]);
        return j;
    };
    auto order = [&](std::vector<int>& v) {
        std::sort(v.begin(), v.end(), [&](int a, int b) {
            const auto& na = tree.nodes[static_cast<std::size_t>(a)];
            const auto& nb = tree.nodes[static_cast<std::size_t>(b)];
            if (na.members.size() != nb.members.size()) return na.members.size() > nb.members.size();
            if (lowest(a) != lowest(b)) return lowest(a) < lowest(b);
            return na.members.front() < nb.members.front();
        });
    };
    std::vector<int> sequence;
    std::function<void(int)> visit = [&](int node) {
        auto& kids = children[static_cast<std::size_t>(node)];
        if (kids.empty()) {
            std::vector<int> m = tree.nodes[static_cast<std::size_t>(node)].members;
            std::sort(m.begin(), m.end(), [&](int a, int b) {
                const double ja = tree.leaves[static_cast<std::size_t>(a)], jb = tree.leaves[static_cast<std::size_t>(b)];
                return ja != jb ? ja < jb : a < b;
            });
            sequence.insert(sequence.end(), m.begin(), m.end());
            return;
        }
        order(kids);
        for (int c : kids) visit(c);
    };
    order(top);
    for (int t : top) visit(t);

    DisconnectivityLayout out;
    out.leaf_x.assign(n_min, 0.0);
    for (std::size_t r = 0; r < sequence.size(); ++r) out.leaf_x[static_cast<std::size_t>(sequence[r])] = static_cast<double>(r);
    out.node_x.assign(tree.nodes.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        double sum = 0.0;
        int n = 0;
        for (int m : tree.nodes[i].members) {
            if (tree.leaves[static_cast<std::size_t>(m)] < tree.nodes[i].threshold) {
                sum += out.leaf_x[static_cast<std::size_t>(m)];
                ++n;
            }
        }
        if (n > 0) out.node_x[i] = sum / n;
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& node = tree.nodes[i];
        if (std::isnan(out.node_x[i]) || node.parent < 0) continue;
        const auto p = static_cast<std::size_t>(node.parent);
        out.segments.push_back({out.node_x[i], node.threshold, out.node_x[p], tree.nodes[p].threshold});
    }
    for (std::size_t m = 0; m < n_min; ++m) {
        const double j = tree.leaves[m];
        int deepest = -1;
        for (std::size_t l = 0; l < tree.levels.size(); ++l) {
            if (j < tree.levels[l]) deepest = static_cast<int>(l);
        }
        if (deepest < 0) continue;  // above the top threshold: not drawn
        const auto node = static_cast<std::size_t>(tree.basin_of[static_cast<std::size_t>(deepest)][m]);
        out.segments.push_back({out.node_x[node], tree.levels[static_cast<std::size_t>(deepest)], out.leaf_x[m], j});
    }
    return out;
}

/// Leaf colours: a continuous value per minimum (blue to red) or a category index (fixed palette).
struct LeafColouring {
    std::vector<double> values;
    bool categorical = false;
};

namespace detail {

inline std::string hex_colour(int r, int g, int b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

inline std::vector<std::string> leaf_colours(const LeafColouring& c, std::size_t n) {
    static const std::array<const char*, 10> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                     "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::vector<std::string> out(n, "#000000");
    if (c.values.empty()) return out;
    if (c.values.size() != n) throw PreconditionError("colouring does not match the number of minima");
    if (c.categorical) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<long long>(std::llround(c.values[i]));
            out[i] = palette[static_cast<std::size_t>(((k % 10) + 10) % 10)];
        }
        return out;
    }
    const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
    for (std::size_t i = 0; i < n; ++i) {
        const double f = *hi > *lo ? (c.values[i] - *lo) / (*hi - *lo) : 0.5;
        out[i] = hex_colour(static_cast<int>(std::lround(40 + 200 * f)), 60, static_cast<int>(std::lround(240 - 200 * f)));
    }
    return out;
}

inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

// 1, 2 or 5 times a power of ten, close to span / 5.
inline double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double f : {1.0, 2.0, 5.0}) {
        if (f * mag >= raw) return f * mag;
    }
    return 10.0 * mag;
}

}  // namespace detail

/// Sidecar with the branch geometry in data coordinates (x = leaf rank, y = J).
inline nlohmann::json disconnectivity_json(const DisconnectivityTree& tree, const DisconnectivityLayout& layout,
                                           const LeafColouring& colouring) {
    nlohmann::json j;
    j["levels"] = tree.levels;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const auto& n = tree.nodes[i];
        nodes.push_back({{"id", i}, {"level", n.level}, {"threshold", n.threshold}, {"members", n.members},
                         {"parent", n.parent},
                         {"x", std::isnan(layout.node_x[i]) ? nlohmann::json(nullptr) : nlohmann::json(layout.node_x[i])}});
    }
    auto& leaves = j["leaves"] = nlohmann::json::array();
    const auto colours = detail::leaf_colours(colouring, tree.leaves.size());
    for (std::size_t m = 0; m < tree.leaves.size(); ++m) {
        nlohmann::json leaf{{"id", m}, {"cost", tree.leaves[m]}, {"x", layout.leaf_x[m]}, {"colour", colours[m]}};
        if (!colouring.values.empty()) leaf["value"] = colouring.values[m];
        leaves.push_back(std::move(leaf));
    }
    auto& segs = j["segments"] = nlohmann::json::array();
    for (const auto& s : layout.segments) segs.push_back({s.x1, s.y1, s.x2, s.y2});
    return j;
}

inline std::string disconnectivity_svg(const DisconnectivityTree& tree, const DisconnectivityLayout& layout,
                                       const LeafColouring& colouring) {
    const double width = 800.0, height = 600.0, left = 80.0, right = 20.0, top = 20.0, bottom = 30.0;
    const std::size_t n = tree.leaves.size();
    double y_lo = tree.levels.back(), y_hi = tree.levels.front();
    for (double j : tree.leaves) {
        if (j < y_hi) y_lo = std::min(y_lo, j);
    }
    if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;
    const double x_span = n > 1 ? static_cast<double>(n - 1) : 1.0;
    auto px = [&](double x) { return left + (n > 1 ? x / x_span : 0.5) * (width - left - right); };
    auto py = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * (height - top - bottom); };
    const auto colours = detail::leaf_colours(colouring, n);
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // J axis with ticks
    const double step = detail::nice_step(y_hi - y_lo);
    s << "<g stroke=\"black\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<line x1=\"" << left - 30 << "\" y1=\"" << py(y_hi) << "\" x2=\"" << left - 30 << "\" y2=\"" << py(y_lo)
      << "\"/>\n";
    for (double t = std::ceil(y_lo / step) * step; t <= y_hi + 1e-12 * std::abs(y_hi); t += step) {
        s << "<line x1=\"" << left - 34 << "\" y1=\"" << py(t) << "\" x2=\"" << left - 30 << "\" y2=\"" << py(t)
          << "\"/><text x=\"" << left - 38 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\" stroke=\"none\">"
          << detail::fmt(t) << "</text>\n";
    }
    s << "<text x=\"12\" y=\"" << 0.5 * height << "\" stroke=\"none\" transform=\"rotate(-90 12 " << 0.5 * height
      << ")\">J</text>\n";
    // scale bar of one tick step
    s << "<line x1=\"" << width - right - 10 << "\" y1=\"" << py(y_hi) << "\" x2=\"" << width - right - 10
      << "\" y2=\"" << py(y_hi - step) << "\" stroke-width=\"2\"/><text x=\"" << width - right - 14 << "\" y=\""
      << py(y_hi - 0.5 * step) << "\" text-anchor=\"end\" stroke=\"none\">" << detail::fmt(step) << "</text>\n";
    s << "</g>\n<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
    for (const auto& seg : layout.segments) {
        s << "<line x1=\"" << px(seg.x1) << "\" y1=\"" << py(seg.y1) << "\" x2=\"" << px(seg.x2) << "\" y2=\""
          << py(seg.y2) << "\"/>\n";
    }
    s << "</g>\n<g stroke=\"none\">\n";
    for (std::size_t m = 0; m < n; ++m) {
        if (!(tree.leaves[m] < tree.levels.front())) continue;
        s << "<circle class=\"leaf\" data-id=\"" << m << "\" cx=\"" << px(layout.leaf_x[m]) << "\" cy=\""
          << py(tree.leaves[m]) << "\" r=\"3\" fill=\"" << colours[m] << "\"/>\n";
    }
    s << "</g>\n</svg>\n";
    return s.str();
}

/// Writes `path` (SVG) and `path` + ".json" (branch geometry).
inline void emit_disconnectivity(const DisconnectivityTree& tree, const LeafColouring& colouring, const std::string& path) {
    const auto layout = layout_disconnectivity(tree);
    std::ofstream svg(path);
    if (!svg) throw InputError("cannot write " + path);
    svg << disconnectivity_svg(tree, layout, colouring);
    std::ofstream side(path + ".json");
    if (!side) throw InputError("cannot write " + path + ".json");
    side << disconnectivity_json(tree, layout, colouring).dump(1) << '\n';
    if (!svg || !side) throw InputError("failed writing " + path);
}

// Frustration -----------------------------------------------------------------

struct FrustrationProfile {
    std::vector<double> temperatures;
    std::vector<double> entropy;
};

/// Shannon entropy of the Boltzmann occupation of the minima, p_i ~ exp(-J_i/T), per temperature.
inline FrustrationProfile frustration_profile(const std::vector<double>& costs, const std::vector<double>& t_grid) {
    if (costs.empty()) throw PreconditionError("no minima");
    const double j0 = *std::min_element(costs.begin(), costs.end());
    const double cap = std::log(static_cast<double>(costs.size()));
    FrustrationProfile out;
    for (double t : t_grid) {
        if (!(t > 0.0)) throw PreconditionError("temperatures must be positive");
        // S = ln Z + <J - J0>/T with Z = sum exp(-(J - J0)/T); shifted so the largest term is 1.
        double z = 0.0, e = 0.0;
        for (double j : costs) {
            const double w = std::exp(-(j - j0) / t);
            z += w;
            e += w * (j - j0) / t;
        }
        out.temperatures.push_back(t);
        out.entropy.push_back(std::clamp(std::log(z) + e / z, 0.0, cap));
    }
    return out;
}

inline FrustrationProfile frustration_profile(const StationaryPointNetwork& net, const std::vector<double>& t_grid) {
    std::vector<double> costs;
    for (const auto& m : net.minima.records()) costs.push_back(m.cost);
    return frustration_profile(costs, t_grid);
}

}  // namespace kmland
