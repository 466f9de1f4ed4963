// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_OPTIM_HPP
#define PPFIT_OPTIM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ppfit/errors.hpp"

namespace ppfit {

struct OptimOptions {
    // Converged when ||grad||_inf <= grad_tol * (1 + |f|).
    double grad_tol = 1e-6;
    int max_iterations = 500;
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    std::vector<double> objective_trace;
};

// Objective: fills grad and returns f(x). Maximization convention.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// BFGS ascent with backtracking (Armijo) line search. The inverse-Hessian
// approximation is dense; fine for the parameter counts seen here.
inline OptimResult maximize_bfgs(const ObjectiveFn& objective, Eigen::VectorXd x0,
                                 const OptimOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    OptimResult res;
    res.x = std::move(x0);

    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd grad(n), grad_new(n);
    double f = objective(res.x, grad);
    if (!std::isfinite(f)) throw NumericError("maximize_bfgs: non-finite objective at start");
    res.objective_trace.push_back(f);

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        res.iterations = iter;
        res.grad_norm = grad.lpNorm<Eigen::Infinity>();
        if (res.grad_norm <= opts.grad_tol * (1.0 + std::abs(f))) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd dir = h_inv * grad;
        double slope = grad.dot(dir);
        if (slope <= 0.0) {  // stale curvature estimate, reset to steepest ascent
            h_inv.setIdentity();
            dir = grad;
            slope = grad.squaredNorm();
        }

        double step = 1.0;
        double f_new = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + step * dir;
            f_new = objective(x_new, grad_new);
            if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Line search exhausted: either converged to machine precision or stuck.
            res.grad_norm = grad.lpNorm<Eigen::Infinity>();
            res.converged = res.grad_norm <= 1e2 * opts.grad_tol * (1.0 + std::abs(f));
            break;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy < -1e-12 * s.norm() * y.norm() && std::abs(sy) > 1e-300) {
            // Standard BFGS update on the inverse Hessian of -f (note sy < 0
            // for a concave objective; work with the negated quantities).
            const Eigen::VectorXd yn = -y;
            const double rho = 1.0 / s.dot(yn);
            const Eigen::MatrixXd i_mat = Eigen::MatrixXd::Identity(n, n);
            h_inv = (i_mat - rho * s * yn.transpose()) * h_inv *
                        (i_mat - rho * yn * s.transpose()) +
                    rho * s * s.transpose();
        }

        res.x = x_new;
        f = f_new;
        grad = grad_new;
        res.objective_trace.push_back(f);
    }

    res.f = f;
    res.gradient = grad;
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (!res.converged)
        res.converged = res.grad_norm <= opts.grad_tol * (1.0 + std::abs(f));
    return res;
}

// Central finite differences of the gradient; used once, at the optimum,
// for curvature-based standard errors.
inline Eigen::MatrixXd fd_hessian(const ObjectiveFn& objective, const Eigen::VectorXd& x,
                                  double rel_step = 1e-5) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd gp(n), gm(n), xp = x, xm = x;
    for (int k = 0; k < n; ++k) {
        const double h = rel_step * (1.0 + std::abs(x[k]));
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        objective(xp, gp);
        objective(xm, gm);
        hess.col(k) = (gp - gm) / (2.0 * h);
        xp[k] = x[k];
        xm[k] = x[k];
    }
    return 0.5 * (hess + hess.transpose());
}

}  // namespace ppfit

#endif  // PPFIT_OPTIM_HPP
