#pragma once

#include "kmland/dataset.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace kmland {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with potentials, O(n^3)).
/// Returns match[row] = column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const auto n = static_cast<int>(cost.rows());
    if (cost.cols() != cost.rows()) throw PreconditionError("solve_assignment: cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is a virtual free column.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) match[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    return match;
}

struct Alignment {
    std::vector<int> perm;  // row k of the reference pairs with row perm[k] of the other
    Matrix aligned;         // other centres reordered to match the reference
    double sq_distance = 0.0;
};

/// Reorders the rows of `other` to minimise the total squared distance to `reference`.
inline Alignment align_centres(const Matrix& reference, const Matrix& other) {
    if (reference.rows() != other.rows() || reference.cols() != other.cols()) {
        throw PreconditionError("align_centres: centre matrices differ in shape");
    }
    const Eigen::Index k = reference.rows();
    Eigen::MatrixXd c(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) c(i, j) = (reference.row(i) - other.row(j)).squaredNorm();
    }
    Alignment out;
    out.perm = solve_assignment(c);
    out.aligned.resize(k, reference.cols());
    for (Eigen::Index i = 0; i < k; ++i) {
        const int j = out.perm[static_cast<std::size_t>(i)];
        out.aligned.row(i) = other.row(j);
        out.sq_distance += c(i, j);
    }
    return out;
}

/// Euclidean distance between two centre sets after optimal cluster correspondence.
inline double aligned_distance(const Matrix& a, const Matrix& b) { return std::sqrt(align_centres(a, b).sq_distance); }

}  // namespace kmland
