#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace kmland {

/// Limited-memory BFGS with a strong-Wolfe line search.
///
/// The objective is any callable `double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)`.
/// Convergence is declared when ||grad|| < grad_tol_rel * (1 + |f|).
struct LbfgsOptions {
    int history = 10;
    int max_iter = 10000;
    double grad_tol_rel = 1e-8;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 60;
    double max_step = 1e20;
};

enum class LbfgsStatus { converged, max_iterations, line_search_failed };

struct LbfgsResult {
    LbfgsStatus status = LbfgsStatus::max_iterations;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;

    bool converged() const { return status == LbfgsStatus::converged; }
};

namespace detail {

// Minimiser of the cubic interpolating (a, fa, ga) and (b, fb, gb), clamped to
// the interior of [a, b]; falls back to bisection when the cubic is degenerate.
inline double interpolate_step(double a, double fa, double ga, double b, double fb, double gb) {
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const double width = hi - lo;
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    double t = 0.5 * (a + b);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double denom = gb - ga + 2.0 * d2;
        if (denom != 0.0) {
            const double c = b - (b - a) * (gb + d2 - d1) / denom;
            if (std::isfinite(c)) t = c;
        }
    }
    const double margin = 0.1 * width;
    if (t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
    return t;
}

}  // namespace detail

template <class Objective>
LbfgsResult lbfgs_minimize(Objective&& objective, Eigen::VectorXd& x, const LbfgsOptions& opt = {},
                           std::vector<double>* value_trace = nullptr) {
    using Eigen::VectorXd;
    LbfgsResult result;
    const Eigen::Index n = x.size();

    VectorXd g(n);
    double f = objective(x, g);
    ++result.evaluations;
    if (value_trace) value_trace->push_back(f);

    std::deque<VectorXd> s_hist;
    std::deque<VectorXd> y_hist;
    std::deque<double> rho_hist;
    std::vector<double> alpha_buf(static_cast<std::size_t>(opt.history));

    VectorXd d(n), x_trial(n), g_trial(n);
    for (int iter = 0; iter < opt.max_iter; ++iter) {
        result.iterations = iter;
        const double gnorm = g.norm();
        if (!(gnorm >= opt.grad_tol_rel * (1.0 + std::abs(f)))) {
            result.status = LbfgsStatus::converged;
            result.value = f;
            result.grad_norm = gnorm;
            return result;
        }

        // Two-loop recursion.
        d = -g;
        const std::size_t m = s_hist.size();
        for (std::size_t j = m; j-- > 0;) {
            alpha_buf[j] = rho_hist[j] * s_hist[j].dot(d);
            d -= alpha_buf[j] * y_hist[j];
        }
        if (m > 0) {
            d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        } else {
            d /= std::max(gnorm, 1e-300);
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double beta = rho_hist[j] * y_hist[j].dot(d);
            d += (alpha_buf[j] - beta) * s_hist[j];
        }

        double dphi0 = g.dot(d);
        if (!(dphi0 < 0.0)) {
            // Not a descent direction: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g / gnorm;
            dphi0 = g.dot(d);
        }

        // Strong-Wolfe search on phi(a) = f(x + a d).
        const double phi0 = f;
        double a_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
        double a = 1.0;
        // Strong-Wolfe step if found; otherwise the best sufficient-decrease step seen.
        bool wolfe = false;
        double step = 0.0;
        double f_acc = phi0;
        VectorXd g_acc = g;

        auto eval = [&](double t, double& phi, double& dphi) {
            x_trial = x + t * d;
            phi = objective(x_trial, g_trial);
            ++result.evaluations;
            dphi = g_trial.dot(d);
        };
        // Approximate Wolfe conditions: once function differences drop to round-off the
        // sufficient-decrease test is meaningless, so accept on the derivative alone.
        const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(phi0);
        auto approx_wolfe = [&](double phi, double dphi) {
            return phi <= phi0 + noise && dphi >= opt.c2 * dphi0 && dphi <= (2.0 * opt.c1 - 1.0) * dphi0;
        };
        auto accept = [&](double t, double phi) {
            wolfe = true;
            step = t;
            f_acc = phi;
            g_acc = g_trial;
        };

        auto zoom = [&](double lo, double phi_lo, double dphi_lo, double hi, double phi_hi,
                        double dphi_hi, int budget) {
            for (int k = 0; k < budget; ++k) {
                const double aj = detail::interpolate_step(lo, phi_lo, dphi_lo, hi, phi_hi, dphi_hi);
                double phi_j, dphi_j;
                eval(aj, phi_j, dphi_j);
                if (approx_wolfe(phi_j, dphi_j)) {
                    accept(aj, phi_j);
                    return;
                }
                if (phi_j > phi0 + opt.c1 * aj * dphi0 || phi_j >= phi_lo) {
                    hi = aj;
                    phi_hi = phi_j;
                    dphi_hi = dphi_j;
                } else {
                    step = aj;
                    f_acc = phi_j;
                    g_acc = g_trial;
                    if (std::abs(dphi_j) <= -opt.c2 * dphi0) {
                        wolfe = true;
                        return;
                    }
                    if (dphi_j * (hi - lo) >= 0.0) {
                        hi = lo;
                        phi_hi = phi_lo;
                        dphi_hi = dphi_lo;
                    }
                    lo = aj;
                    phi_lo = phi_j;
                    dphi_lo = dphi_j;
                }
                if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) return;
            }
        };

        for (int k = 0; k < opt.max_line_search && !wolfe; ++k) {
            double phi_a, dphi_a;
            eval(a, phi_a, dphi_a);
            if (!std::isfinite(phi_a)) {
                a = 0.5 * (a_prev + a);
                continue;
            }
            if (approx_wolfe(phi_a, dphi_a)) {
                accept(a, phi_a);
                break;
            }
            if (phi_a > phi0 + opt.c1 * a * dphi0 || (k > 0 && phi_a >= phi_prev)) {
                zoom(a_prev, phi_prev, dphi_prev, a, phi_a, dphi_a, opt.max_line_search);
                break;
            }
            if (std::abs(dphi_a) <= -opt.c2 * dphi0) {
                accept(a, phi_a);
                break;
            }
            if (dphi_a >= 0.0) {
                zoom(a, phi_a, dphi_a, a_prev, phi_prev, dphi_prev, opt.max_line_search);
                break;
            }
            step = a;
            f_acc = phi_a;
            g_acc = g_trial;
            a_prev = a;
            phi_prev = phi_a;
            dphi_prev = dphi_a;
            a = std::min(2.0 * a, opt.max_step);
        }

        if (!(step > 0.0) || !(f_acc <= phi0 + noise)) {
            result.status = LbfgsStatus::line_search_failed;
            result.value = f;
            result.grad_norm = gnorm;
            return result;
        }

        VectorXd s = step * d;
        VectorXd y = g_acc - g;
        x += s;
        f = f_acc;
        g = g_acc;
        if (value_trace) value_trace->push_back(f);

        const double sy = s.dot(y);
        if (sy > 1e-14 * s.norm() * y.norm()) {
            if (static_cast<int>(s_hist.size()) == opt.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }
    }

    result.status = LbfgsStatus::max_iterations;
    result.value = f;
    result.grad_norm = g.norm();
    result.iterations = opt.max_iter;
    return result;
}

}  // namespace kmland
