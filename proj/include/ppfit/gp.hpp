// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_GP_HPP
#define PPFIT_GP_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/likelihood.hpp"
#include "ppfit/model.hpp"
#include "ppfit/optim.hpp"

namespace ppfit {

enum class CovarianceFamily { SquaredExponential, Matern32, Matern52 };

inline std::string to_string(CovarianceFamily f) {
    switch (f) {
        case CovarianceFamily::SquaredExponential: return "squared_exponential";
        case CovarianceFamily::Matern32: return "matern32";
        case CovarianceFamily::Matern52: return "matern52";
    }
    return "?";
}

// Stationary covariance k(d). `decay` is the inverse squared length-scale:
// the squared-exponential kernel is variance * exp(-decay * d^2), and the
// Matern kernels use length-scale l = 1/sqrt(decay) so that all families
// share one smoothness parameterization.
struct CovarianceSpec {
    CovarianceFamily family = CovarianceFamily::Matern52;
    double variance = 1.0;
    double decay = 1.0;

    CovarianceSpec() = default;
    CovarianceSpec(CovarianceFamily f, double var, double dec)
        : family(f), variance(var), decay(dec) {
        if (!(variance > 0.0) || !(decay > 0.0))
            throw ValidationError("CovarianceSpec: variance and decay must be positive");
    }

    double length_scale() const { return 1.0 / std::sqrt(decay); }

    double operator()(double d) const {
        switch (family) {
            case CovarianceFamily::SquaredExponential:
                return variance * std::exp(-decay * d * d);
            case CovarianceFamily::Matern32: {
                const double a = std::sqrt(3.0) * d / length_scale();
                return variance * (1.0 + a) * std::exp(-a);
            }
            case CovarianceFamily::Matern52: {
                const double a = std::sqrt(5.0) * d / length_scale();
                return variance * (1.0 + a + a * a / 3.0) * std::exp(-a);
            }
        }
        return 0.0;
    }
};

inline Eigen::MatrixXd gp_covariance_matrix(const std::vector<Point>& nodes,
                                            const CovarianceSpec& spec) {
    const int r = static_cast<int>(nodes.size());
    Eigen::MatrixXd k_mat(r, r);
    for (int i = 0; i < r; ++i) {
        k_mat(i, i) = spec.variance;
        for (int j = i + 1; j < r; ++j) {
            const double d = std::hypot(nodes[i].x - nodes[j].x, nodes[i].y - nodes[j].y);
            k_mat(i, j) = k_mat(j, i) = spec(d);
        }
    }
    return k_mat;
}

inline std::vector<Point> grid_nodes(const GridDiscretization& grid) {
    std::vector<Point> nodes(grid.node_count());
    for (std::size_t j = 0; j < nodes.size(); ++j)
        nodes[j] = {grid.node_x(j), grid.node_y(j)};
    return nodes;
}

// Cholesky with jitter escalation: start at 1e-10 * variance, multiply by 10
// up to 1e-4 * variance, then fail loudly rather than hide the conditioning
// problem.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(Eigen::MatrixXd k_mat,
                                                        double variance,
                                                        double* jitter_used = nullptr) {
    double jitter = 1e-10 * variance;
    const double jitter_max = 1e-4 * variance;
    Eigen::LLT<Eigen::MatrixXd> llt(k_mat);
    if (llt.info() == Eigen::Success) {
        if (jitter_used) *jitter_used = 0.0;
        return llt;
    }
    while (jitter <= jitter_max * (1.0 + 1e-12)) {
        Eigen::MatrixXd kj = k_mat;
        kj.diagonal().array() += jitter;
        llt.compute(kj);
        if (llt.info() == Eigen::Success) {
            if (jitter_used) *jitter_used = jitter;
            return llt;
        }
        jitter *= 10.0;
    }
    throw ConditioningError("covariance matrix not factorizable after jitter escalation to " +
                            std::to_string(jitter_max));
}

// One draw from N(0, K) over the grid nodes.
inline CovariateField gp_prior_sample(const GridDiscretization& grid, const CovarianceSpec& spec,
                                      std::mt19937_64& rng) {
    const auto nodes = grid_nodes(grid);
    const Eigen::LLT<Eigen::MatrixXd> llt =
        cholesky_with_jitter(gp_covariance_matrix(nodes, spec), spec.variance);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(nodes.size());
    for (std::size_t j = 0; j < nodes.size(); ++j) z[j] = normal(rng);
    const Eigen::VectorXd g = llt.matrixL() * z;
    return CovariateField(grid.window(), grid.nx(), grid.ny(),
                          std::vector<double>(g.data(), g.data() + g.size()));
}

namespace detail {

// Area of the disc of radius r centered at c intersected with the window,
// by Simpson quadrature over the chord lengths.
inline double disc_window_area(Point c, double r, const ObservationWindow& win) {
    const double x0 = std::max(c.x - r, win.x_min);
    const double x1 = std::min(c.x + r, win.x_max);
    if (x1 <= x0) return 0.0;
    const int n = 256;  // even
    const double h = (x1 - x0) / n;
    auto chord = [&](double x) {
        const double dx = x - c.x;
        const double s = r * r - dx * dx;
        if (s <= 0.0) return 0.0;
        const double half = std::sqrt(s);
        return std::max(0.0, std::min(c.y + half, win.y_max) - std::max(c.y - half, win.y_min));
    };
    double acc = chord(x0) + chord(x1);
    for (int i = 1; i < n; ++i) acc += chord(x0 + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace detail

// Moving-window estimator: points within radius r of the node, divided by
// the in-window disc area.
inline CovariateField window_intensity_estimate(const PointPattern& pattern, double radius,
                                                const GridDiscretization& grid) {
    if (!(radius > 0.0)) throw ValidationError("window_intensity_estimate: radius must be > 0");
    const ObservationWindow& win = grid.window();
    const double diag = std::hypot(win.width(), win.height());
    if (radius > diag)
        std::cerr << "window_intensity_estimate: radius " << radius
                  << " exceeds the window diagonal; the estimate is close to the global mean "
                     "everywhere\n";
    std::vector<double> vals(grid.node_count());
    const double r2 = radius * radius;
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        const Point c{grid.node_x(j), grid.node_y(j)};
        int count = 0;
        for (const Point& p : pattern.points) {
            const double dx = p.x - c.x, dy = p.y - c.y;
            if (dx * dx + dy * dy <= r2) ++count;
        }
        vals[j] = count / detail::disc_window_area(c, radius, win);
    }
    return CovariateField(win, grid.nx(), grid.ny(), std::move(vals));
}

// Gaussian-kernel intensity estimate with boundary correction: each bump is
// renormalized by its in-window mass, so the field integrates to n.
inline CovariateField kernel_intensity_estimate(const PointPattern& pattern, double bandwidth,
                                                const GridDiscretization& grid) {
    if (!(bandwidth > 0.0)) throw ValidationError("kernel_intensity_estimate: bandwidth must be > 0");
    const ObservationWindow& win = grid.window();
    const double inv_h = 1.0 / bandwidth;
    const double norm = inv_h * inv_h / (2.0 * M_PI);
    const double s = 1.0 / (bandwidth * std::sqrt(2.0));
    std::vector<double> mass(pattern.size());
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const Point& p = pattern.points[i];
        const double mx = 0.5 * (std::erf((win.x_max - p.x) * s) - std::erf((win.x_min - p.x) * s));
        const double my = 0.5 * (std::erf((win.y_max - p.y) * s) - std::erf((win.y_min - p.y) * s));
        mass[i] = mx * my;
    }
    std::vector<double> vals(grid.node_count(), 0.0);
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        const double cx = grid.node_x(j), cy = grid.node_y(j);
        double acc = 0.0;
        for (std::size_t i = 0; i < pattern.size(); ++i) {
            const double zx = (pattern.points[i].x - cx) * inv_h;
            const double zy = (pattern.points[i].y - cy) * inv_h;
            acc += std::exp(-0.5 * (zx * zx + zy * zy)) / mass[i];
        }
        vals[j] = acc * norm;
    }
    return CovariateField(win, grid.nx(), grid.ny(), std::move(vals));
}

// Grid-valued latent component with pointwise Laplace posterior spread.
struct LatentField {
    CovariateField mean;
    CovariateField sd;
    CovarianceSpec spec;
};

struct LatentFitResult {
    FitResult parametric;
    LatentField latent;
    double map_objective = 0.0;     // loglik + log-prior at the mode
    double log_evidence = 0.0;      // Laplace-approximate marginal likelihood
    int outer_iterations = 0;
    double grad_norm = 0.0;
};

struct LatentFitOptions {
    double grad_tol = 1e-6;
    int max_outer = 60;
    int max_newton = 40;
    bool compute_se = false;  // FD Hessian over theta at the mode (costly)
};

// Joint MAP of the parametric coefficients and a shared latent field g over
// the grid, with a sum-to-zero gauge on g (a constant can otherwise trade
// freely against the per-pattern intercepts). Posterior spread of g comes
// from the Laplace approximation at the mode.
inline LatentFitResult fit_map_latent(const ModelSpec& spec,
                                      const std::vector<PointPattern>& patterns,
                                      const CovariateSet& covariates,
                                      const GridDiscretization& grid,
                                      const CovarianceSpec& cov_spec,
                                      const LatentFitOptions& options = {}) {
    Design design = build_design(spec, patterns, covariates, grid);
    const std::size_t r = grid.node_count();
    const int n_theta = design.n_params();

    // Accumulated interpolation weights of all data points onto the nodes:
    // the latent field's data term is dot(weights, g).
    Eigen::VectorXd data_weights = Eigen::VectorXd::Zero(r);
    CovariateField node_layout = CovariateField::constant(grid.window(), grid.nx(), grid.ny(), 0);
    for (const PointPattern& p : patterns)
        for (const Point& pt : p.points)
            for (const auto& [j, a] : node_layout.interp_weights(pt.x, pt.y))
                data_weights[j] += a;

    const Eigen::MatrixXd k_mat = gp_covariance_matrix(grid_nodes(grid), cov_spec);
    const Eigen::LLT<Eigen::MatrixXd> k_llt = cholesky_with_jitter(k_mat, cov_spec.variance);

    Eigen::VectorXd g = Eigen::VectorXd::Zero(r);
    std::vector<double> g_vec(r, 0.0);

    // Initialize theta at the no-latent MLE.
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_theta);
    {
        FitOptions fo;
        fo.compute_se = false;
        FitResult init = fit_mle(spec, patterns, covariates, grid, fo);
        for (int k = 0; k < n_theta; ++k) theta[k] = init.coefficients[k].estimate;
    }

    Eigen::VectorXd grad_theta(n_theta);
    std::vector<double> quad(r);

    auto objective = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& gv,
                         Eigen::VectorXd& gth, std::vector<double>& q) {
        for (std::size_t j = 0; j < r; ++j) g_vec[j] = gv[j];
        double ll = design_loglik_grad(design, th, &g_vec, gth, &q);
        ll += data_weights.dot(gv);
        const Eigen::VectorXd kinv_g = k_llt.solve(gv);
        return ll - 0.5 * gv.dot(kinv_g);
    };

    double obj = objective(theta, g, grad_theta, quad);
    const double obj_init = obj;
    double gnorm = std::numeric_limits<double>::infinity();
    int outer = 0;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(r);

    for (; outer < options.max_outer; ++outer) {
        // g-step: equality-constrained Newton (sum g = 0).
        for (int it = 0; it < options.max_newton; ++it) {
            objective(theta, g, grad_theta, quad);
            Eigen::VectorXd grad_g = data_weights - k_llt.solve(g);
            for (std::size_t j = 0; j < r; ++j) grad_g[j] -= quad[j];
            // projected gradient within the gauge
            Eigen::VectorXd pgrad = (grad_g.array() - grad_g.mean()).matrix();
            if (pgrad.lpNorm<Eigen::Infinity>() <= options.grad_tol * (1.0 + std::abs(obj)))
                break;
            Eigen::MatrixXd hess = k_llt.solve(Eigen::MatrixXd::Identity(r, r));
            for (std::size_t j = 0; j < r; ++j) hess(j, j) += quad[j];
            Eigen::LLT<Eigen::MatrixXd> h_llt(hess);
            if (h_llt.info() != Eigen::Success)
                throw ConditioningError("fit_map_latent: Newton system not positive definite");
            const Eigen::VectorXd hg = h_llt.solve(grad_g);
            const Eigen::VectorXd h1 = h_llt.solve(ones);
            const double mu = ones.dot(hg) / ones.dot(h1);
            Eigen::VectorXd dir = hg - mu * h1;
            double step = 1.0;
            Eigen::VectorXd g_new;
            double obj_new;
            bool ok = false;
            for (int ls = 0; ls < 40; ++ls) {
                g_new = g + step * dir;
                obj_new = objective(theta, g_new, grad_theta, quad);
                if (std::isfinite(obj_new) && obj_new > obj) {
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if (!ok) break;
            g = g_new;
            obj = obj_new;
        }

        // theta-step: BFGS with g held fixed.
        for (std::size_t j = 0; j < r; ++j) g_vec[j] = g[j];
        const double latent_terms =
            data_weights.dot(g) - 0.5 * g.dot(Eigen::VectorXd(k_llt.solve(g)));
        ObjectiveFn theta_obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd& gr) {
            return design_loglik_grad(design, th, &g_vec, gr) + latent_terms;
        };
        OptimOptions oo;
        oo.grad_tol = options.grad_tol;
        oo.max_iterations = 200;
        OptimResult ores = maximize_bfgs(theta_obj, theta, oo);
        theta = ores.x;
        obj = ores.f;

        // joint stationarity check
        obj = objective(theta, g, grad_theta, quad);
        Eigen::VectorXd grad_g = data_weights - k_llt.solve(g);
        for (std::size_t j = 0; j < r; ++j) grad_g[j] -= quad[j];
        const Eigen::VectorXd pgrad = (grad_g.array() - grad_g.mean()).matrix();
        gnorm = std::max(grad_theta.lpNorm<Eigen::Infinity>(),
                         pgrad.lpNorm<Eigen::Infinity>());
        if (gnorm <= options.grad_tol * (1.0 + std::abs(obj))) break;
    }

    if (gnorm > 1e3 * options.grad_tol * (1.0 + std::abs(obj)))
        throw ConvergenceError("fit_map_latent: no convergence after " +
                                   std::to_string(outer) + " outer iterations (|grad|=" +
                                   std::to_string(gnorm) + ")",
                               {obj_init, obj});

    // Laplace spread: diagonal of (K^-1 + W)^-1 with W the curvature weights.
    objective(theta, g, grad_theta, quad);
    Eigen::MatrixXd hess = k_llt.solve(Eigen::MatrixXd::Identity(r, r));
    for (std::size_t j = 0; j < r; ++j) hess(j, j) += quad[j];
    Eigen::LLT<Eigen::MatrixXd> h_llt(hess);
    if (h_llt.info() != Eigen::Success)
        throw ConditioningError("fit_map_latent: Laplace Hessian not positive definite");
    const Eigen::MatrixXd h_inv = h_llt.solve(Eigen::MatrixXd::Identity(r, r));
    std::vector<double> sd(r);
    for (std::size_t j = 0; j < r; ++j) sd[j] = std::sqrt(std::max(0.0, h_inv(j, j)));

    // Laplace evidence: loglik at mode + log-prior - 0.5 log|I + sqrt(W) K sqrt(W)|.
    Eigen::MatrixXd b_mat = Eigen::MatrixXd::Identity(r, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            b_mat(i, j) += std::sqrt(quad[i]) * k_mat(i, j) * std::sqrt(quad[j]);
    Eigen::LLT<Eigen::MatrixXd> b_llt(b_mat);
    double half_logdet_b = 0.0;
    for (std::size_t j = 0; j < r; ++j)
        half_logdet_b += std::log(Eigen::MatrixXd(b_llt.matrixL())(j, j));

    LatentFitResult out;
    out.map_objective = obj;
    out.log_evidence = obj - half_logdet_b;
    out.outer_iterations = outer;
    out.grad_norm = gnorm;
    out.parametric.loglik = obj;
    out.parametric.iterations = outer;
    out.parametric.grad_norm = gnorm;
    out.parametric.converged = true;
    out.parametric.coefficients.resize(n_theta);
    for (int k = 0; k < n_theta; ++k) {
        out.parametric.coefficients[k].name = design.param_names[k];
        out.parametric.coefficients[k].estimate = theta[k];
    }
    if (options.compute_se) {
        ObjectiveFn theta_obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd& gr) {
            return design_loglik_grad(design, th, &g_vec, gr);
        };
        std::vector<int> all(n_theta);
        for (int k = 0; k < n_theta; ++k) all[k] = k;
        detail::fill_se(out.parametric, theta_obj, theta, all);
    }
    out.latent = LatentField{
        CovariateField(grid.window(), grid.nx(), grid.ny(),
                       std::vector<double>(g.data(), g.data() + g.size())),
        CovariateField(grid.window(), grid.nx(), grid.ny(), std::move(sd)), cov_spec};
    return out;
}

// Picks the candidate with the highest evidence; near-ties (relative 1e-9)
// go to the longer length-scale, i.e. the smaller decay. NaN evidences mark
// failed candidates.
inline CovarianceSpec pick_best_candidate(const std::vector<CovarianceSpec>& candidates,
                                          const std::vector<double>& evidences) {
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (std::isnan(evidences[c])) continue;
        if (!best) {
            best = c;
            continue;
        }
        const double ev = evidences[c];
        const double best_ev = evidences[*best];
        const bool tie = std::abs(ev - best_ev) <= 1e-9 * (1.0 + std::abs(best_ev));
        if ((tie && candidates[c].decay < candidates[*best].decay) || (!tie && ev > best_ev))
            best = c;
    }
    if (!best) throw ConditioningError("pick_best_candidate: every candidate failed");
    return candidates[*best];
}

// Empirical-Bayes selection over a candidate grid of covariance specs by the
// Laplace-approximate marginal likelihood.
inline CovarianceSpec select_hyperparameters(const ModelSpec& spec,
                                             const std::vector<PointPattern>& patterns,
                                             const CovariateSet& covariates,
                                             const GridDiscretization& grid,
                                             const std::vector<CovarianceSpec>& candidates,
                                             const LatentFitOptions& options = {},
                                             std::vector<double>* evidences = nullptr) {
    if (candidates.empty())
        throw ValidationError("select_hyperparameters: empty candidate grid");
    std::vector<double> evs(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    std::string last_error;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        try {
            evs[c] = fit_map_latent(spec, patterns, covariates, grid, candidates[c], options)
                         .log_evidence;
        } catch (const ConditioningError& e) {
            last_error = e.what();
        } catch (const ConvergenceError& e) {
            last_error = e.what();
        }
    }
    if (evidences) *evidences = evs;
    try {
        return pick_best_candidate(candidates, evs);
    } catch (const ConditioningError&) {
        throw ConditioningError("select_hyperparameters: every candidate failed (" + last_error +
                                ")");
    }
}

}  // namespace ppfit

#endif  // PPFIT_GP_HPP
