#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace descent {

using VecX = Eigen::VectorXd;

struct BoxLbfgsOptions
{
    int memory = 12;
    int max_iterations = 3000;
    /// Stop when the projected gradient infinity norm drops below this.
    double tolerance = 1e-6;
};

struct BoxLbfgsResult
{
    VecX x;
    double f = 0.0;
    double projected_gradient = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

inline VecX project(const VecX &x, const VecX &lo, const VecX &hi) { return x.cwiseMax(lo).cwiseMin(hi); }

/// ||P(x - g) - x||_inf, zero at a first-order point of the box problem.
inline double projected_gradient_norm(const VecX &x, const VecX &g, const VecX &lo, const VecX &hi)
{
    return (project(x - g, lo, hi) - x).cwiseAbs().maxCoeff();
}

/// Projected L-BFGS for min f(x) subject to lo <= x <= hi.
///
/// Variables held at a bound by the gradient are frozen for the quasi-Newton
/// step; the step is projected back onto the box during the Armijo search.
/// fg(x, grad) returns f and writes the gradient.
template <class FunctionGradient>
BoxLbfgsResult minimize_box(FunctionGradient &&fg, VecX x, const VecX &lo, const VecX &hi,
                            const BoxLbfgsOptions &opt = {})
{
    const Eigen::Index n = x.size();
    x = project(x, lo, hi);
    VecX g(n);
    double f = fg(x, g);
    std::deque<VecX> S, Y;
    std::deque<double> rho;

    BoxLbfgsResult out;
    auto binding = [&](Eigen::Index i, const VecX &grad) {
        const double tol_lo = 1e-12 * (1.0 + std::abs(lo[i])), tol_hi = 1e-12 * (1.0 + std::abs(hi[i]));
        return (x[i] <= lo[i] + tol_lo && grad[i] > 0.0) || (x[i] >= hi[i] - tol_hi && grad[i] < 0.0);
    };

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        out.projected_gradient = projected_gradient_norm(x, g, lo, hi);
        if (out.projected_gradient <= opt.tolerance) {
            out.converged = true;
            break;
        }
        VecX free_mask = VecX::Ones(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (binding(i, g))
                free_mask[i] = 0.0;

        // Two-loop recursion on the free subspace.
        VecX q = g.cwiseProduct(free_mask);
        std::vector<double> alpha(S.size());
        for (int j = static_cast<int>(S.size()) - 1; j >= 0; --j) {
            alpha[j] = rho[j] * S[j].dot(q);
            q -= alpha[j] * Y[j];
        }
        if (!S.empty())
            q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t j = 0; j < S.size(); ++j) {
            const double beta = rho[j] * Y[j].dot(q);
            q += (alpha[j] - beta) * S[j];
        }
        VecX d = -q.cwiseProduct(free_mask);
        if (!(d.dot(g) < 0.0)) {
            d = -g.cwiseProduct(free_mask);
            S.clear();
            Y.clear();
            rho.clear();
        }

        double step = S.empty() ? std::min(1.0, 1.0 / std::max(d.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;
        VecX x_new(n), g_new(n);
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls, step *= 0.5) {
            x_new = project(x + step * d, lo, hi);
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (S.empty())
                break;
            S.clear();
            Y.clear();
            rho.clear();
            continue;
        }
        const VecX s = x_new - x, y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        x = x_new;
        g = g_new;
        f = f_new;
    }
    out.x = x;
    out.f = f;
    out.iterations = it;
    out.projected_gradient = projected_gradient_norm(x, g, lo, hi);
    out.converged = out.converged || out.projected_gradient <= opt.tolerance;
    return out;
}

struct AugLagOptions
{
    int max_outer = 40;
    double feasibility_tol = 1e-6;
    double optimality_tol = 1e-5;
    double penalty0 = 10.0;
    double penalty_growth = 10.0;
    double penalty_max = 1e10;
    int inner_max_iterations = 4000;
};

struct AugLagResult
{
    VecX x;
    VecX eq_multipliers;
    VecX ineq_multipliers;
    double objective = 0.0;
    double infeasibility = std::numeric_limits<double>::infinity();
    double stationarity = std::numeric_limits<double>::infinity();
    double penalty = 0.0;
    int outer_iterations = 0;
    int inner_iterations = 0;
    bool converged = false;
    std::string diagnostic;
};

/// Powell-Hestenes-Rockafellar augmented Lagrangian for
///   min f(x)  s.t.  c(x) = 0,  g(x) >= 0,  lo <= x <= hi.
///
/// The problem type provides n(), n_eq(), n_ineq(), bounds(lo, hi),
/// evaluate(x, c, g) -> f, and lagrangian_gradient(x, w_eq, w_ineq, grad) which
/// writes grad f + sum w_eq grad c + sum w_ineq grad g.
template <class Problem>
AugLagResult augmented_lagrangian(const Problem &prob, VecX x, VecX lambda, VecX mu, const AugLagOptions &opt = {})
{
    const Eigen::Index n_eq = prob.n_eq(), n_ineq = prob.n_ineq();
    VecX lo, hi;
    prob.bounds(lo, hi);
    if (lambda.size() != n_eq)
        lambda = VecX::Zero(n_eq);
    if (mu.size() != n_ineq)
        mu = VecX::Zero(n_ineq);
    mu = mu.cwiseMax(0.0);
    double rho = opt.penalty0;

    VecX c(n_eq), g(n_ineq);
    auto violation = [&](const VecX &cc, const VecX &gg) {
        double v = cc.size() ? cc.cwiseAbs().maxCoeff() : 0.0;
        return gg.size() ? std::max(v, (-gg).maxCoeff()) : v;
    };

    AugLagResult out;
    double prev_violation = std::numeric_limits<double>::infinity();
    double inner_tol = 1e-3;
    for (int outer = 0; outer < opt.max_outer; ++outer) {
        auto fg = [&](const VecX &xx, VecX &grad) {
            VecX cc(n_eq), gg(n_ineq);
            const double f = prob.evaluate(xx, cc, gg);
            const VecX w_eq = lambda + rho * cc;
            const VecX shifted = (mu - rho * gg).cwiseMax(0.0);
            double value = f + lambda.dot(cc) + 0.5 * rho * cc.squaredNorm() +
                           (shifted.squaredNorm() - mu.squaredNorm()) / (2.0 * rho);
            prob.lagrangian_gradient(xx, w_eq, VecX(-shifted), grad);
            return value;
        };
        BoxLbfgsOptions inner;
        inner.tolerance = std::max(inner_tol, 0.1 * opt.optimality_tol);
        inner.max_iterations = opt.inner_max_iterations;
        const BoxLbfgsResult res = minimize_box(fg, x, lo, hi, inner);
        x = res.x;
        out.inner_iterations += res.iterations;

        out.objective = prob.evaluate(x, c, g);
        lambda += rho * c;
        mu = (mu - rho * g).cwiseMax(0.0);
        const double viol = violation(c, g);
        double complementarity = 0.0;
        for (Eigen::Index j = 0; j < n_ineq; ++j)
            complementarity = std::max(complementarity, std::abs(mu[j] * g[j]));

        // Stationarity of the ordinary Lagrangian with the updated multipliers.
        VecX grad(x.size());
        prob.lagrangian_gradient(x, lambda, VecX(-mu), grad);
        out.stationarity = projected_gradient_norm(x, grad, lo, hi);
        out.infeasibility = std::max(viol, complementarity);
        out.outer_iterations = outer + 1;
        out.penalty = rho;
        if (out.infeasibility <= opt.feasibility_tol && out.stationarity <= opt.optimality_tol) {
            out.converged = true;
            break;
        }
        if (viol > opt.feasibility_tol && viol > 0.25 * prev_violation) {
            if (rho >= opt.penalty_max) {
                out.diagnostic = "infeasible: penalty unbounded with violation " + std::to_string(viol);
                break;
            }
            rho = std::min(rho * opt.penalty_growth, opt.penalty_max);
        }
        prev_violation = viol;
        inner_tol = std::max(0.1 * inner_tol, 0.1 * opt.optimality_tol);
    }
    out.x = x;
    out.eq_multipliers = lambda;
    out.ineq_multipliers = mu;
    if (!out.converged && out.diagnostic.empty())
        out.diagnostic = "not converged after " + std::to_string(out.outer_iterations) +
                         " outer iterations (infeasibility " + std::to_string(out.infeasibility) +
                         ", stationarity " + std::to_string(out.stationarity) + ")";
    return out;
}

} // namespace descent
