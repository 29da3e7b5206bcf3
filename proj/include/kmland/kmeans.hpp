#pragma once

#include "kmland/dataset.hpp"
#include "kmland/lbfgs.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace kmland {

/// Cluster index per data point (the one-hot assignment matrix in compact form).
using Assignment = std::vector<int>;

/// Nearest-centre assignment; ties go to the lowest cluster index.
inline Assignment assign(const Matrix& points, const Matrix& centres) {
    const Eigen::Index n = points.rows();
    const Eigen::Index k = centres.rows();
    Assignment a(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const double d2 = (points.row(i) - centres.row(c)).squaredNorm();
            if (d2 < best) {
                best = d2;
                best_k = static_cast<int>(c);
            }
        }
        a[static_cast<std::size_t>(i)] = best_k;
    }
    return a;
}

/// Sum-of-squares cost at fixed assignment.
inline double cost(const Matrix& points, const Matrix& centres, const Assignment& a) {
    double j = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        j += (points.row(i) - centres.row(a[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return j;
}

/// Gradient of the fixed-assignment cost with respect to the centres.
inline Matrix cost_gradient(const Matrix& points, const Matrix& centres, const Assignment& a) {
    Matrix g = Matrix::Zero(centres.rows(), centres.cols());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int c = a[static_cast<std::size_t>(i)];
        g.row(c) += 2.0 * (centres.row(c) - points.row(i));
    }
    return g;
}

inline std::vector<int> cluster_sizes(const Assignment& a, Eigen::Index k) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int label : a) ++sizes[static_cast<std::size_t>(label)];
    return sizes;
}

/// Member means; rows of empty clusters are copied from `fallback`.
inline Matrix cluster_means(const Matrix& points, const Assignment& a, const Matrix& fallback) {
    Matrix mean = Matrix::Zero(fallback.rows(), fallback.cols());
    std::vector<int> count(static_cast<std::size_t>(fallback.rows()), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int c = a[static_cast<std::size_t>(i)];
        mean.row(c) += points.row(i);
        ++count[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < fallback.rows(); ++c) {
        const int n = count[static_cast<std::size_t>(c)];
        if (n > 0) {
            mean.row(c) /= static_cast<double>(n);
        } else {
            mean.row(c) = fallback.row(c);
        }
    }
    return mean;
}

/// Relabels clusters in order of first occurrence.
inline Assignment canonical_key(const Assignment& a) {
    std::vector<int> remap;
    Assignment key(a.size());
    int next = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto label = static_cast<std::size_t>(a[i]);
        if (label >= remap.size()) remap.resize(label + 1, -1);
        if (remap[label] < 0) remap[label] = next++;
        key[i] = remap[label];
    }
    return key;
}

/// Scale used for the centroid-condition tolerance: the largest absolute coordinate, at least 1.
inline double feature_scale(const Matrix& points) {
    return std::max(1.0, points.cwiseAbs().maxCoeff());
}

struct MinimizeOptions {
    int max_iter = 10000;        // outer assignment updates
    double grad_tol_rel = 1e-8;  // ||grad J|| < grad_tol_rel * (1 + J)
    double fp_tol = 1e-8;        // centroid condition, relative to feature_scale
    int history = 10;
    bool record_trace = false;
};

enum class CandidateStatus { valid, empty_cluster, not_converged };

struct MinimumCandidate {
    CandidateStatus status = CandidateStatus::not_converged;
    Matrix centres;
    Assignment assignment;
    double cost = 0.0;
    int iterations = 0;
    std::vector<double> cost_trace;  // every cost value visited, when requested

    bool valid() const { return status == CandidateStatus::valid; }
};

/// Alternates nearest-centre assignment with L-BFGS descent on the fixed-assignment cost,
/// finishing with an exact centroid update once the assignment is stable.
inline MinimumCandidate local_minimize(const Matrix& points, const Matrix& start, const MinimizeOptions& opt = {}) {
    MinimumCandidate out;
    Matrix mu = start;
    const Eigen::Index k = mu.rows();
    const Eigen::Index dim = mu.size();
    std::vector<double>* trace = opt.record_trace ? &out.cost_trace : nullptr;

    LbfgsOptions lopt;
    lopt.history = opt.history;
    lopt.grad_tol_rel = opt.grad_tol_rel;
    lopt.max_iter = 200;

    Assignment a = assign(points, mu);
    for (int it = 0; it < opt.max_iter; ++it) {
        out.iterations = it + 1;
        if (trace) trace->push_back(cost(points, mu, a));

        Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(mu.data(), dim);
        auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
            const Eigen::Map<const Matrix> m(v.data(), k, mu.cols());
            const Matrix centres = m;
            const Matrix g = cost_gradient(points, centres, a);
            grad = Eigen::Map<const Eigen::VectorXd>(g.data(), dim);
            return cost(points, centres, a);
        };
        std::vector<double> inner;
        lbfgs_minimize(objective, x, lopt, trace ? &inner : nullptr);
        if (trace && inner.size() > 1) trace->insert(trace->end(), inner.begin() + 1, inner.end());
        mu = Eigen::Map<const Matrix>(x.data(), k, mu.cols());

        Assignment next = assign(points, mu);
        if (next != a) {
            a = std::move(next);
            continue;
        }
        // Stable assignment: the fixed-assignment minimiser is the member mean.
        mu = cluster_means(points, a, mu);
        if (trace) trace->push_back(cost(points, mu, a));
        next = assign(points, mu);
        if (next != a) {
            a = std::move(next);
            continue;
        }
        out.centres = std::move(mu);
        out.assignment = std::move(a);
        out.cost = cost(points, out.centres, out.assignment);
        const auto sizes = cluster_sizes(out.assignment, k);
        const bool empty = std::find(sizes.begin(), sizes.end(), 0) != sizes.end();
        out.status = empty ? CandidateStatus::empty_cluster : CandidateStatus::valid;
        return out;
    }
    out.status = CandidateStatus::not_converged;
    return out;
}

// Random starts -------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of the i-th start of a run seeded with `base`.
inline std::uint64_t start_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base ^ splitmix64(index));
}

/// Uniform double in [0, 1) from a 64-bit Mersenne Twister; bit-identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Centres drawn uniformly inside the per-feature range of the whole dataset (outliers included).
inline Matrix sample_uniform_start(const Dataset& d, int k, std::uint64_t seed) {
    if (k < 1) throw PreconditionError("sample_uniform_start: K must be at least 1");
    const FeatureStats stats = feature_stats(d, false);
    std::mt19937_64 rng(seed);
    Matrix mu(k, d.n_features());
    for (Eigen::Index c = 0; c < k; ++c) {
        for (Eigen::Index f = 0; f < d.n_features(); ++f) {
            const double lo = stats.min[f];
            const double hi = stats.max[f];
            mu(c, f) = lo == hi ? lo : lo + (hi - lo) * uniform01(rng);
        }
    }
    return mu;
}

// Minima store --------------------------------------------------------------

struct MinimumRecord {
    int id = 0;
    Matrix centres;       // rows ordered by canonical cluster label
    Assignment labels;    // canonical
    double cost = 0.0;
    int attempts = 1;
};

/// Canonicalised copy of a valid candidate (centres permuted to canonical label order).
inline MinimumRecord canonical_record(const MinimumCandidate& c) {
    MinimumRecord r;
    r.labels = canonical_key(c.assignment);
    r.centres.resize(c.centres.rows(), c.centres.cols());
    std::vector<bool> placed(static_cast<std::size_t>(c.centres.rows()), false);
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        const auto to = static_cast<std::size_t>(r.labels[i]);
        if (!placed[to]) {
            r.centres.row(static_cast<Eigen::Index>(to)) = c.centres.row(c.assignment[i]);
            placed[to] = true;
        }
    }
    r.cost = c.cost;
    return r;
}

enum class InsertKind { inserted, duplicate, rejected };

struct InsertOutcome {
    InsertKind kind = InsertKind::rejected;
    int id = -1;  // new or existing record id; -1 when rejected
};

/// Deduplicated set of minima keyed by canonical assignment. Single writer.
class MinimaStore {
public:
    InsertOutcome insert(const MinimumCandidate& c) {
        if (!c.valid()) return {InsertKind::rejected, -1};
        MinimumRecord r = canonical_record(c);
        if (auto it = index_.find(r.labels); it != index_.end()) {
            ++records_[static_cast<std::size_t>(it->second)].attempts;
            return {InsertKind::duplicate, it->second};
        }
        r.id = static_cast<int>(records_.size());
        index_.emplace(r.labels, r.id);
        records_.push_back(std::move(r));
        return {InsertKind::inserted, records_.back().id};
    }

    /// Adds a record read back from storage; ids must be dense and in order.
    void restore(MinimumRecord r) {
        if (r.id != static_cast<int>(records_.size())) throw InputError("minima ids must be 0..n-1 in order");
        if (!index_.emplace(r.labels, r.id).second) throw InputError("duplicate minimum in database, id " + std::to_string(r.id));
        records_.push_back(std::move(r));
    }

    std::optional<int> find(const Assignment& a) const {
        const auto it = index_.find(canonical_key(a));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<MinimumRecord>& records() const { return records_; }
    const MinimumRecord& operator[](int id) const { return records_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    int global_minimum() const {
        int best = -1;
        for (const auto& r : records_) {
            if (best < 0 || r.cost < records_[static_cast<std::size_t>(best)].cost) best = r.id;
        }
        return best;
    }

private:
    std::vector<MinimumRecord> records_;
    std::map<Assignment, int> index_;
};

inline InsertOutcome dedup_insert(MinimaStore& store, const MinimumCandidate& c) { return store.insert(c); }

/// Invariant violations of a stored minimum; empty when the record is sound.
inline std::vector<std::string> check_minimum(const Matrix& points, const MinimumRecord& r, double fp_tol = 1e-8) {
    std::vector<std::string> issues;
    const std::string tag = "minimum " + std::to_string(r.id) + ": ";
    if (static_cast<Eigen::Index>(r.labels.size()) != points.rows() || r.centres.cols() != points.cols()) {
        issues.push_back(tag + "dimension mismatch");
        return issues;
    }
    for (int label : r.labels) {
        if (label < 0 || label >= r.centres.rows()) {
            issues.push_back(tag + "label out of range");
            return issues;
        }
    }
    const auto sizes = cluster_sizes(r.labels, r.centres.rows());
    if (std::find(sizes.begin(), sizes.end(), 0) != sizes.end()) issues.push_back(tag + "empty cluster");
    if (assign(points, r.centres) != r.labels) issues.push_back(tag + "assignment is not nearest-centre");
    const double tol = fp_tol * feature_scale(points);
    const Matrix means = cluster_means(points, r.labels, r.centres);
    if ((means - r.centres).cwiseAbs().maxCoeff() > tol) issues.push_back(tag + "centres are not member means");
    const double j = cost(points, r.centres, r.labels);
    if (std::abs(j - r.cost) > fp_tol * (1.0 + std::abs(j))) issues.push_back(tag + "stored cost disagrees with centres");
    if (canonical_key(r.labels) != r.labels) issues.push_back(tag + "labels are not canonical");
    return issues;
}

}  // namespace kmland
