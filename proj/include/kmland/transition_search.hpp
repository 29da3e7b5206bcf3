#pragma once

#include "kmland/alignment.hpp"
#include "kmland/kmeans.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kmland {

struct SurrogateParams {
    double sigma = 30.0;
    double alpha = 0.02;
};

inline void check_params(const SurrogateParams& p) {
    if (!(p.sigma > 0.0) || !(p.alpha > 0.0)) throw PreconditionError("surrogate parameters must be positive");
}

// Surrogate functions ---------------------------------------------------------

namespace detail {

inline double penalty(double d, double alpha) { return d * d / (std::abs(d) + alpha); }

inline double penalty_slope(double d, double alpha) {
    const double s = std::abs(d) + alpha;
    return d * (std::abs(d) + 2.0 * alpha) / (s * s);
}

struct PairCost {
    double j1 = 0.0, j2 = 0.0;
    Matrix g1, g2;
};

// Both fixed-assignment costs (and optionally gradients) in one pass.
inline PairCost pair_cost(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                          bool gradients) {
    PairCost out;
    if (gradients) {
        out.g1 = Matrix::Zero(mu.rows(), mu.cols());
        out.g2 = Matrix::Zero(mu.rows(), mu.cols());
    }
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int a = r1[static_cast<std::size_t>(i)];
        const int b = r2[static_cast<std::size_t>(i)];
        const double da = (points.row(i) - mu.row(a)).squaredNorm();
        out.j1 += da;
        out.j2 += a == b ? da : (points.row(i) - mu.row(b)).squaredNorm();
        if (gradients) {
            out.g1.row(a) += 2.0 * (mu.row(a) - points.row(i));
            out.g2.row(b) += 2.0 * (mu.row(b) - points.row(i));
        }
    }
    return out;
}

// sign = +1 for F+, -1 for F-.
inline double surrogate(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                        const SurrogateParams& p, double sign, Matrix* grad) {
    const PairCost c = pair_cost(points, mu, r1, r2, grad != nullptr);
    const double d = c.j1 - c.j2;
    if (grad) *grad = 0.5 * (c.g1 + c.g2) + sign * p.sigma * penalty_slope(d, p.alpha) * (c.g1 - c.g2);
    return 0.5 * (c.j1 + c.j2) + sign * p.sigma * penalty(d, p.alpha);
}

}  // namespace detail

inline double f_plus(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                     const SurrogateParams& p) {
    return detail::surrogate(points, mu, r1, r2, p, 1.0, nullptr);
}

inline double f_minus(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                      const SurrogateParams& p) {
    return detail::surrogate(points, mu, r1, r2, p, -1.0, nullptr);
}

inline Matrix f_plus_gradient(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                              const SurrogateParams& p) {
    Matrix g;
    detail::surrogate(points, mu, r1, r2, p, 1.0, &g);
    return g;
}

inline Matrix f_minus_gradient(const Matrix& points, const Matrix& mu, const Assignment& r1, const Assignment& r2,
                               const SurrogateParams& p) {
    Matrix g;
    detail::surrogate(points, mu, r1, r2, p, -1.0, &g);
    return g;
}

// Sites -----------------------------------------------------------------------

/// Identical data rows always share a nearest centre, so a path can only move them together.
/// Each group of identical rows forms one site, represented by its first row.
struct Sites {
    std::vector<int> rep;  // rep[i] = index of the first row equal to row i
    int count = 0;
};

inline Sites find_sites(const Matrix& points) {
    const auto n = static_cast<std::size_t>(points.rows());
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    auto row_less = [&](int a, int b) {
        for (Eigen::Index f = 0; f < points.cols(); ++f) {
            if (points(a, f) != points(b, f)) return points(a, f) < points(b, f);
        }
        return a < b;
    };
    std::sort(order.begin(), order.end(), row_less);
    Sites s;
    s.rep.assign(n, -1);
    for (std::size_t k = 0; k < n; ++k) {
        const int i = order[k];
        if (k > 0 && points.row(order[k - 1]) == points.row(i)) {
            s.rep[static_cast<std::size_t>(i)] = s.rep[static_cast<std::size_t>(order[k - 1])];
        } else {
            s.rep[static_cast<std::size_t>(i)] = i;
            ++s.count;
        }
    }
    return s;
}

/// Number of sites whose cluster differs between two assignments.
inline int site_distance(const Sites& s, const Assignment& a, const Assignment& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (s.rep[i] == static_cast<int>(i) && a[i] != b[i]) ++d;
    }
    return d;
}

/// First point whose label changes between r1 and r2. Throws unless the changed points are
/// identical rows that all move between the same pair of clusters.
inline int changed_point(const Matrix& points, const Assignment& r1, const Assignment& r2) {
    if (r1.size() != r2.size() || static_cast<Eigen::Index>(r1.size()) != points.rows()) {
        throw PreconditionError("assignment pair does not match the data");
    }
    int first = -1;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        if (r1[i] == r2[i]) continue;
        if (first < 0) {
            first = static_cast<int>(i);
            continue;
        }
        const auto f = static_cast<std::size_t>(first);
        if (points.row(static_cast<Eigen::Index>(i)) != points.row(first) || r1[i] != r1[f] || r2[i] != r2[f]) {
            throw PreconditionError("assignments differ in more than one data point");
        }
    }
    if (first < 0) throw PreconditionError("assignments are identical");
    return first;
}

// MECP location ---------------------------------------------------------------

struct MecpOptions {
    double seam_tol = 1e-3;
    int sigma_retries = 3;  // sigma doubles on each retry after a seam-gap failure
    double sigma_factor = 2.0;
    // When the F+ minimum's nearest-centre assignment differs from both r1 and r2 away from the
    // seam point, adopt those labels for the pair and minimise again (0 disables).
    int max_reassign = 20;
    LbfgsOptions lbfgs{};
};

struct Mecp {
    bool ok = false;
    std::string failure;
    Matrix centres;
    double cost = 0.0;      // J at the crossing point, nearest-centre assignment
    double seam_gap = 0.0;  // |J1 - J2|
    double sigma = 0.0;     // penalty strength that produced the accepted point
    int point = -1;
    Assignment assignment;  // nearest-centre assignment at the crossing point (r1 or r2)
    Assignment labels1, labels2;  // the seam pair actually located (differs from the input after reassignment)
};

namespace detail {

inline Mecp minimise_on_seam(const Matrix& points, const Assignment& r1, const Assignment& r2, Eigen::VectorXd& x,
                             Eigen::Index k, Eigen::Index nf, const SurrogateParams& p, const MecpOptions& opt) {
    Mecp out;
    SurrogateParams q = p;
    for (int attempt = 0; attempt <= opt.sigma_retries; ++attempt) {
        auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
            const Matrix mu = Eigen::Map<const Matrix>(v.data(), k, nf);
            Matrix g;
            const double f = surrogate(points, mu, r1, r2, q, 1.0, &g);
            grad = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
            return f;
        };
        const LbfgsResult r = lbfgs_minimize(objective, x, opt.lbfgs);
        out.centres = Eigen::Map<const Matrix>(x.data(), k, nf);
        const auto c = pair_cost(points, out.centres, r1, r2, false);
        out.seam_gap = std::abs(c.j1 - c.j2);
        out.sigma = q.sigma;
        if (!r.converged()) {
            out.failure = "F+ minimisation did not converge";
            return out;
        }
        if (out.seam_gap <= opt.seam_tol) break;
        q.sigma *= opt.sigma_factor;
    }
    if (out.seam_gap > opt.seam_tol) out.failure = "seam gap above tolerance";
    return out;
}

}  // namespace detail

/// Minimises F+ from `start` and checks that the result lies on the r1/r2 seam. If the nearest-centre
/// assignment there disagrees with the pair away from the seam point, the pair is relabelled to match
/// and the search repeated (up to opt.max_reassign times).
inline Mecp locate_mecp(const Matrix& points, const Assignment& r1, const Assignment& r2, const Matrix& start,
                        const SurrogateParams& p, const MecpOptions& opt = {}) {
    check_params(p);
    const int point = changed_point(points, r1, r2);
    const Eigen::Index k = start.rows(), nf = start.cols();
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(Matrix(start).data(), start.size());
    Assignment a1 = r1, a2 = r2;
    std::vector<int> moving;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        if (r1[i] != r2[i]) moving.push_back(static_cast<int>(i));
    }
    for (int round = 0;; ++round) {
        Mecp out = detail::minimise_on_seam(points, a1, a2, x, k, nf, p, opt);
        out.point = point;
        out.labels1 = a1;
        out.labels2 = a2;
        if (!out.failure.empty()) return out;
        out.assignment = assign(points, out.centres);
        if (out.assignment == a1 || out.assignment == a2) {
            out.cost = cost(points, out.centres, out.assignment);
            out.ok = true;
            return out;
        }
        Assignment b1 = out.assignment, b2 = out.assignment;
        for (int i : moving) {
            b1[static_cast<std::size_t>(i)] = r1[static_cast<std::size_t>(i)];
            b2[static_cast<std::size_t>(i)] = r2[static_cast<std::size_t>(i)];
        }
        if (round >= opt.max_reassign || (b1 == a1 && b2 == a2)) {
            out.failure = "crossing point is not on the seam of the nearest-centre surface";
            return out;
        }
        a1 = std::move(b1);
        a2 = std::move(b2);
    }
}

struct Downhill {
    Eigen::VectorXd direction;  // unit vector over the flattened (row-major) centres
    double eigenvalue = 0.0;
};

/// Exact Hessian of F- over the flattened (row-major) centres. Each fixed-assignment cost has
/// Hessian 2 n_k I on the block of centre k; the penalty adds its curvature along grad(J1 - J2).
inline Eigen::MatrixXd f_minus_hessian(const Matrix& points, const Matrix& mu, const Assignment& r1,
                                       const Assignment& r2, const SurrogateParams& p) {
    const Eigen::Index k = mu.rows(), nf = mu.cols(), n = mu.size();
    const detail::PairCost c = detail::pair_cost(points, mu, r1, r2, true);
    const double d = c.j1 - c.j2;
    const double s = std::abs(d) + p.alpha;
    const double slope = detail::penalty_slope(d, p.alpha);
    const double curvature = 2.0 * p.alpha * p.alpha / (s * s * s);
    const auto n1 = cluster_sizes(r1, k), n2 = cluster_sizes(r2, k);
    const Matrix gd = c.g1 - c.g2;
    const Eigen::Map<const Eigen::VectorXd> v(gd.data(), n);
    Eigen::MatrixXd h = -p.sigma * curvature * v * v.transpose();
    for (Eigen::Index c_ = 0; c_ < k; ++c_) {
        const double h1 = 2.0 * n1[static_cast<std::size_t>(c_)], h2 = 2.0 * n2[static_cast<std::size_t>(c_)];
        const double diag = 0.5 * (h1 + h2) - p.sigma * slope * (h1 - h2);
        for (Eigen::Index f = 0; f < nf; ++f) h(c_ * nf + f, c_ * nf + f) += diag;
    }
    return h;
}

/// Eigenvector of the most negative F- Hessian eigenvalue at the crossing point; empty when
/// the Hessian has no negative eigenvalue.
inline std::optional<Downhill> downhill_eigenvector(const Matrix& points, const Matrix& mecp, const Assignment& r1,
                                                    const Assignment& r2, const SurrogateParams& p) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f_minus_hessian(points, mecp, r1, r2, p));
    if (es.info() != Eigen::Success || !(es.eigenvalues()[0] < 0.0)) return std::nullopt;
    Downhill out;
    out.eigenvalue = es.eigenvalues()[0];
    out.direction = es.eigenvectors().col(0).normalized();
    return out;
}

/// Displacement used to step off the seam: a fraction of the mean feature range.
inline double displacement(const Matrix& points, double fraction = 1e-2) {
    const Eigen::RowVectorXd range = points.colwise().maxCoeff() - points.colwise().minCoeff();
    return fraction * range.mean();
}

struct Connection {
    bool ok = false;
    std::string failure;
    int plus = -1, minus = -1;  // minima ids reached from +v and -v
};

/// Minimises from mecp +/- delta*v and records both minima in the store. delta is reduced tenfold (at
/// most max_shrink times) until each displaced point keeps the nearest-centre assignment of its side of
/// the seam, so that a long step cannot jump over a narrow neighbouring basin.
inline Connection connect_ts(const Matrix& points, const Matrix& mecp, const Eigen::VectorXd& v, double delta,
                             MinimaStore& store, const MinimizeOptions& opt = {}, int max_shrink = 4) {
    Connection out;
    const Eigen::Map<const Matrix> step(v.data(), mecp.rows(), mecp.cols());
    auto side = [&](double t) { return assign(points, mecp + t * step); };
    for (int i = 0; i < max_shrink; ++i) {
        const Assignment ap = side(delta), am = side(-delta);
        if (ap != am && ap == side(0.1 * delta) && am == side(-0.1 * delta)) break;
        delta *= 0.1;
    }
    const MinimumCandidate a = local_minimize(points, mecp + delta * step, opt);
    const MinimumCandidate b = local_minimize(points, mecp - delta * step, opt);
    if (!a.valid() || !b.valid()) {
        out.failure = "a descent from the crossing point did not reach a valid minimum";
        return out;
    }
    out.plus = store.insert(a).id;
    out.minus = store.insert(b).id;
    if (out.plus == out.minus) {
        out.failure = "both descents reached the same minimum";
        return out;
    }
    out.ok = true;
    return out;
}

// Adaptive interpolation ------------------------------------------------------

class RefinementError : public Error {
public:
    RefinementError(double t0, double t1)
        : Error("image refinement could not separate assignment changes between t=" + std::to_string(t0) +
                " and t=" + std::to_string(t1)),
          t0(t0), t1(t1) {}
    double t0, t1;
};

struct InterpolationOptions {
    int initial_segments = 10;
    double min_width = 1.0 / 16384.0;
    bool lenient = false;  // keep unresolved segments instead of throwing
};

struct Image {
    double t = 0.0;
    Matrix centres;
    Assignment assignment;
};

struct Interpolation {
    std::vector<Image> images;
    std::vector<std::pair<double, double>> unresolved;  // segments still changing more than one site
};

/// Linear images from muA to muB, bisected until neighbouring assignments differ in at most one site.
inline Interpolation interpolate_adaptive(const Matrix& points, const Sites& sites, const Matrix& mu_a,
                                          const Matrix& mu_b, const InterpolationOptions& opt = {}) {
    if (mu_a.rows() != mu_b.rows() || mu_a.cols() != mu_b.cols()) throw PreconditionError("centre shapes differ");
    Interpolation out;
    auto image = [&](double t) {
        Image im;
        im.t = t;
        im.centres = (1.0 - t) * mu_a + t * mu_b;
        im.assignment = assign(points, im.centres);
        return im;
    };
    out.images.push_back(image(0.0));
    if (mu_a == mu_b) return out;

    auto refine = [&](auto&& self, double t1) -> void {
        const Image& left = out.images.back();
        Image right = image(t1);
        if (site_distance(sites, left.assignment, right.assignment) > 1) {
            if (t1 - left.t > opt.min_width) {
                const double mid = 0.5 * (left.t + t1);
                self(self, mid);
                self(self, t1);
                return;
            }
            if (!opt.lenient) throw RefinementError(left.t, t1);
            out.unresolved.emplace_back(left.t, t1);
        }
        out.images.push_back(std::move(right));
    };
    const int n = std::max(1, opt.initial_segments);
    for (int s = 1; s <= n; ++s) refine(refine, static_cast<double>(s) / n);
    return out;
}

// Transition-state records ----------------------------------------------------

struct TransitionStateRecord {
    int id = 0;
    Matrix centres;
    double cost = 0.0;
    Assignment labels1, labels2;  // bracketing assignments, jointly canonical
    int point = -1;               // first data point whose label changes
    std::pair<int, int> clusters{-1, -1};  // its cluster under labels1 and labels2
    std::pair<int, int> connected{-1, -1};
    double seam_gap = 0.0;
    double sigma = 0.0;
};

/// Relabels clusters by first occurrence in `x`, continuing into `y`, and applies the same map to both.
inline std::vector<int> joint_relabel(const Assignment& x, const Assignment& y, int k) {
    std::vector<int> map(static_cast<std::size_t>(k), -1);
    int next = 0;
    for (const Assignment* a : {&x, &y}) {
        for (int label : *a) {
            if (map[static_cast<std::size_t>(label)] < 0) map[static_cast<std::size_t>(label)] = next++;
        }
    }
    for (auto& m : map) {
        if (m < 0) m = next++;
    }
    return map;
}

/// Key identifying an unordered assignment pair up to cluster relabelling.
using PairKey = std::pair<Assignment, Assignment>;

namespace detail {

inline PairKey relabelled(const Assignment& x, const Assignment& y, const std::vector<int>& map) {
    PairKey key{x, y};
    for (auto& l : key.first) l = map[static_cast<std::size_t>(l)];
    for (auto& l : key.second) l = map[static_cast<std::size_t>(l)];
    return key;
}

}  // namespace detail

inline PairKey pair_key(const Assignment& r1, const Assignment& r2, int k) {
    PairKey a = detail::relabelled(r1, r2, joint_relabel(r1, r2, k));
    PairKey b = detail::relabelled(r2, r1, joint_relabel(r2, r1, k));
    return std::min(a, b);
}

/// Builds a record in canonical form: labels1/labels2 are the key's assignments and the
/// centres are permuted to match.
inline TransitionStateRecord make_ts_record(const Mecp& m, const Assignment& r1, const Assignment& r2) {
    const int k = static_cast<int>(m.centres.rows());
    PairKey forward = detail::relabelled(r1, r2, joint_relabel(r1, r2, k));
    PairKey backward = detail::relabelled(r2, r1, joint_relabel(r2, r1, k));
    const bool swap = backward < forward;
    const std::vector<int> map = swap ? joint_relabel(r2, r1, k) : joint_relabel(r1, r2, k);
    TransitionStateRecord t;
    t.labels1 = swap ? std::move(backward.first) : std::move(forward.first);
    t.labels2 = swap ? std::move(backward.second) : std::move(forward.second);
    t.centres.resize(m.centres.rows(), m.centres.cols());
    for (int c = 0; c < k; ++c) t.centres.row(map[static_cast<std::size_t>(c)]) = m.centres.row(c);
    t.cost = m.cost;
    t.point = m.point;
    const auto p = static_cast<std::size_t>(m.point);
    t.clusters = {t.labels1[p], t.labels2[p]};
    t.seam_gap = m.seam_gap;
    t.sigma = m.sigma;
    return t;
}

/// Deduplicated transition states keyed by their canonical assignment pair. Single writer.
class TransitionStore {
public:
    InsertOutcome insert(TransitionStateRecord t) {
        PairKey key{t.labels1, t.labels2};
        if (auto it = index_.find(key); it != index_.end()) return {InsertKind::duplicate, it->second};
        t.id = static_cast<int>(records_.size());
        index_.emplace(std::move(key), t.id);
        records_.push_back(std::move(t));
        return {InsertKind::inserted, records_.back().id};
    }

    void restore(TransitionStateRecord t) {
        if (t.id != static_cast<int>(records_.size())) throw InputError("transition state ids must be 0..n-1 in order");
        if (!index_.emplace(PairKey{t.labels1, t.labels2}, t.id).second) {
            throw InputError("duplicate transition state in database, id " + std::to_string(t.id));
        }
        records_.push_back(std::move(t));
    }

    bool contains(const PairKey& key) const { return index_.count(key) > 0; }
    const std::vector<TransitionStateRecord>& records() const { return records_; }
    const TransitionStateRecord& operator[](int id) const { return records_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return records_.size(); }

private:
    std::vector<TransitionStateRecord> records_;
    std::map<PairKey, int> index_;
};

/// Invariant violations of a stored transition state; empty when sound.
inline std::vector<std::string> check_transition_state(const Matrix& points, const TransitionStateRecord& t,
                                                       const std::vector<MinimumRecord>& minima, double seam_tol = 1e-3) {
    std::vector<std::string> issues;
    const std::string tag = "transition state " + std::to_string(t.id) + ": ";
    const auto n = static_cast<std::size_t>(points.rows());
    if (t.labels1.size() != n || t.labels2.size() != n || t.centres.cols() != points.cols()) {
        issues.push_back(tag + "dimension mismatch");
        return issues;
    }
    for (const Assignment* a : {&t.labels1, &t.labels2}) {
        for (int l : *a) {
            if (l < 0 || l >= t.centres.rows()) {
                issues.push_back(tag + "label out of range");
                return issues;
            }
        }
    }
    try {
        changed_point(points, t.labels1, t.labels2);
    } catch (const PreconditionError& e) {
        issues.push_back(tag + e.what());
    }
    const auto c = detail::pair_cost(points, t.centres, t.labels1, t.labels2, false);
    if (std::abs(c.j1 - c.j2) > seam_tol) issues.push_back(tag + "seam gap above tolerance");
    if (std::abs(c.j1 - t.cost) > seam_tol && std::abs(c.j2 - t.cost) > seam_tol) {
        issues.push_back(tag + "stored cost disagrees with centres");
    }
    const auto [a, b] = t.connected;
    const auto m = static_cast<int>(minima.size());
    if (a < 0 || a >= m || b < 0 || b >= m) {
        issues.push_back(tag + "references a missing minimum");
    } else if (a == b) {
        issues.push_back(tag + "connects a minimum to itself");
    } else if (t.cost < std::max(minima[a].cost, minima[b].cost)) {
        issues.push_back(tag + "cost below a connected minimum");
    }
    return issues;
}

inline std::vector<std::string> check_transition_state(const Matrix& points, const TransitionStateRecord& t,
                                                       const MinimaStore& minima, double seam_tol = 1e-3) {
    return check_transition_state(points, t, minima.records(), seam_tol);
}

// Connection attempts ---------------------------------------------------------

struct ConnectionOptions {
    MecpOptions mecp{};
    InterpolationOptions images{.initial_segments = 10, .min_width = 1.0 / 16384.0, .lenient = true};
    MinimizeOptions minimize{};
    double displacement_fraction = 1e-2;
};

struct ConnectionReport {
    std::vector<int> new_ts;
    int crossings = 0;        // adjacent image pairs with differing assignments
    int searches = 0;         // MECP searches run
    int known = 0;            // crossings already in the store
    int unresolved = 0;       // segments the refinement could not split
    std::vector<std::string> failures;
};

/// Transition-state searches at every assignment change along the aligned linear path from minimum A
/// to minimum B. New minima reached on the way are added to `minima`.
inline ConnectionReport attempt_connection(const Matrix& points, const Sites& sites, MinimaStore& minima,
                                           TransitionStore& ts, int id_a, int id_b, const SurrogateParams& p,
                                           const ConnectionOptions& opt = {}) {
    if (id_a == id_b) throw PreconditionError("attempt_connection: endpoints must differ");
    ConnectionReport report;
    const Matrix mu_a = minima[id_a].centres;
    const Matrix mu_b = align_centres(mu_a, minima[id_b].centres).aligned;
    const Interpolation path = interpolate_adaptive(points, sites, mu_a, mu_b, opt.images);
    report.unresolved = static_cast<int>(path.unresolved.size());
    const double delta = displacement(points, opt.displacement_fraction);
    const int k = static_cast<int>(mu_a.rows());

    for (std::size_t i = 0; i + 1 < path.images.size(); ++i) {
        const Image& from = path.images[i];
        const Image& to = path.images[i + 1];
        if (site_distance(sites, from.assignment, to.assignment) != 1) continue;
        ++report.crossings;
        if (ts.contains(pair_key(from.assignment, to.assignment, k))) {
            ++report.known;
            continue;
        }
        ++report.searches;
        const Mecp m = locate_mecp(points, from.assignment, to.assignment, from.centres, p, opt.mecp);
        const std::string where = "crossing at t=" + std::to_string(to.t) + ": ";
        if (!m.ok) {
            report.failures.push_back(where + m.failure);
            continue;
        }
        const auto v = downhill_eigenvector(points, m.centres, m.labels1, m.labels2, p);
        if (!v) {
            report.failures.push_back(where + "no negative curvature on F-");
            continue;
        }
        const Connection c = connect_ts(points, m.centres, v->direction, delta, minima, opt.minimize);
        if (!c.ok) {
            report.failures.push_back(where + c.failure);
            continue;
        }
        TransitionStateRecord rec = make_ts_record(m, m.labels1, m.labels2);
        rec.connected = {c.plus, c.minus};
        const double top = std::max(minima[c.plus].cost, minima[c.minus].cost);
        if (rec.cost < top) {
            if (rec.cost < top - opt.mecp.seam_tol) {
                report.failures.push_back(where + "crossing point lies below a connected minimum");
                continue;
            }
            rec.cost = top;  // numerical noise at a zero barrier
        }
        if (const auto out = ts.insert(std::move(rec)); out.kind == InsertKind::inserted) {
            report.new_ts.push_back(out.id);
        } else {
            ++report.known;
        }
    }
    return report;
}

}  // namespace kmland
