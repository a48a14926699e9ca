#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "depcost/error.hpp"

namespace depcost {

/// Objective to be maximized. Returns f(x) and writes the gradient when
/// `grad` is non-null.
using SmoothObjective = std::function<double(const std::vector<double>& x, std::vector<double>* grad)>;

struct OptimizerOptions {
    int max_iterations = 500;
    /// Convergence on the max-norm of the raw gradient.
    double gradient_tolerance = 1e-5;
    int max_backtracks = 60;
    double armijo = 1e-4;
    /// Newton steps on a finite-difference Hessian once BFGS stalls.
    int max_newton_polish = 8;
};

struct OptimizerResult {
    std::vector<double> x;
    double f = -std::numeric_limits<double>::infinity();
    std::vector<double> grad;
    double gradient_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::string message;
};

namespace detail {

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace detail

/// Per-coordinate step for differencing the gradient.
inline double hessian_step(double x) { return 6e-6 * std::max(std::abs(x), 1e-2); }

/// Symmetrized Hessian from central differences of the analytic gradient.
inline Eigen::MatrixXd hessian_fd(const SmoothObjective& f, const std::vector<double>& x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd h(n, n);
    std::vector<double> xp = x;
    std::vector<double> gp, gm;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double step = hessian_step(x[i]);
        xp[i] = x[i] + step;
        const double fp = f(xp, &gp);
        xp[i] = x[i] - step;
        const double fm = f(xp, &gm);
        xp[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm) || !detail::all_finite(gp) || !detail::all_finite(gm))
            throw NumericalError("non-finite objective while differencing the gradient");
        for (Eigen::Index j = 0; j < n; ++j) h(j, i) = (gp[j] - gm[j]) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

/// BFGS ascent with Armijo backtracking, followed by Newton polishing on a
/// differenced Hessian when the line search can no longer make progress.
inline OptimizerResult maximize_bfgs(const SmoothObjective& f, std::vector<double> x0, const OptimizerOptions& opt = {}) {
    OptimizerResult res;
    const auto n = static_cast<Eigen::Index>(x0.size());
    std::vector<double> g;
    double fx = f(x0, &g);
    if (!std::isfinite(fx) || !detail::all_finite(g)) throw NumericalError("objective not finite at the starting point");

    // Work with the minimization problem F = -f.
    auto neg = [](std::vector<double> v) {
        for (auto& e : v) e = -e;
        return v;
    };
    auto initial_inverse = [&](const std::vector<double>& x) -> Eigen::MatrixXd {
        try {
            Eigen::MatrixXd hess = -hessian_fd(f, x);
            Eigen::LLT<Eigen::MatrixXd> llt(hess);
            if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(n, n));
            Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) d(i, i) = 1.0 / std::max(std::abs(hess(i, i)), 1e-8);
            return d;
        } catch (const NumericalError&) {
            return Eigen::MatrixXd::Identity(n, n);
        }
    };

    Eigen::VectorXd x = detail::to_eigen(x0);
    Eigen::VectorXd G = detail::to_eigen(neg(g));
    Eigen::MatrixXd H = initial_inverse(x0);
    int iter = 0;
    bool stalled = false;
    for (; iter < opt.max_iterations; ++iter) {
        if (G.cwiseAbs().maxCoeff() <= opt.gradient_tolerance) break;
        Eigen::VectorXd p = -H * G;
        double slope = G.dot(p);
        if (!(slope < 0.0)) {
            H = initial_inverse(detail::to_std(x));
            p = -H * G;
            slope = G.dot(p);
            if (!(slope < 0.0)) {
                p = -G;
                slope = G.dot(p);
            }
        }
        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> g_new;
        Eigen::VectorXd x_new;
        double f_new = fx;
        for (int b = 0; b <= opt.max_backtracks; ++b, alpha *= 0.5) {
            x_new = x + alpha * p;
            try {
                f_new = f(detail::to_std(x_new), &g_new);
            } catch (const NumericalError&) {
                continue;
            }
            if (!std::isfinite(f_new) || !detail::all_finite(g_new)) continue;
            // Maximizing f: require f_new >= f + c * alpha * |slope|.
            if (-f_new <= -fx + opt.armijo * alpha * slope) {
                accepted = true;
                break;
            }
            // Function differences below roundoff: accept when the gradient shrinks.
            const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx));
            if (std::abs(f_new - fx) <= noise && detail::max_abs(g_new) < G.cwiseAbs().maxCoeff()) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            stalled = true;
            break;
        }
        Eigen::VectorXd G_new = detail::to_eigen(neg(g_new));
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = G_new - G;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        x = x_new;
        G = G_new;
        fx = f_new;
    }

    // Newton polish: covers line-search stalls caused by roundoff near the optimum.
    // Polish steps count against the iteration budget.
    for (int k = 0; k < opt.max_newton_polish && iter < opt.max_iterations &&
                    G.cwiseAbs().maxCoeff() > opt.gradient_tolerance;
         ++k) {
        Eigen::MatrixXd hess;
        try {
            hess = -hessian_fd(f, detail::to_std(x));
        } catch (const NumericalError&) {
            break;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(hess);
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd p = -llt.solve(G);
        std::vector<double> g_new;
        double f_new;
        try {
            f_new = f(detail::to_std(x + p), &g_new);
        } catch (const NumericalError&) {
            break;
        }
        const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx));
        if (!std::isfinite(f_new) || !detail::all_finite(g_new) || f_new < fx - noise ||
            detail::max_abs(g_new) >= G.cwiseAbs().maxCoeff())
            break;
        x = x + p;
        fx = f_new;
        G = detail::to_eigen(neg(g_new));
        ++iter;
    }

    res.x = detail::to_std(x);
    res.f = fx;
    res.grad = neg(detail::to_std(G));
    res.gradient_norm = G.cwiseAbs().maxCoeff();
    res.iterations = iter;
    res.converged = res.gradient_norm <= opt.gradient_tolerance;
    if (res.converged)
        res.message = "gradient tolerance reached";
    else if (stalled)
        res.message = "line search failed to improve the objective";
    else
        res.message = "iteration budget exhausted";
    return res;
}

} // namespace depcost
