// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_MODEL_HPP
#define PPFIT_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/optim.hpp"

namespace ppfit {

// Sharing structure of a slope term across patterns.
//   PerPattern: one coefficient beta_i per pattern.
//   Shared:     one coefficient for all patterns (gamma, nu in pooled models).
//   Grouped:    beta_i = phi_i * gamma + delta_i with known labels phi_i;
//               contributes one shared gamma plus a per-pattern delta_i.
enum class TermScope { PerPattern, Shared, Grouped };

struct Term {
    std::string covariate;
    TermScope scope = TermScope::PerPattern;
    std::map<std::string, double> labels;  // Grouped only: group_id -> phi
};

// Declarative model. The per-pattern intercept alpha_i is implicit and always
// present; `terms` lists the slope terms.
struct ModelSpec {
    std::vector<Term> terms;
};

// Covariate rasters, resolvable by name either per pattern (m_i) or shared
// across patterns (c, d). Per-pattern entries win over shared ones.
class CovariateSet {
public:
    void add_shared(const std::string& name, CovariateField field) {
        shared_.insert_or_assign(name, std::move(field));
    }
    void add(const std::string& name, const std::string& group_id, CovariateField field) {
        per_pattern_[name].insert_or_assign(group_id, std::move(field));
    }

    const CovariateField& resolve(const std::string& name, const std::string& group_id) const {
        if (auto it = per_pattern_.find(name); it != per_pattern_.end()) {
            if (auto jt = it->second.find(group_id); jt != it->second.end()) return jt->second;
        }
        if (auto it = shared_.find(name); it != shared_.end()) return it->second;
        throw ValidationError("covariate '" + name + "' unresolved for pattern '" + group_id +
                              "'");
    }

    bool has(const std::string& name) const {
        return shared_.count(name) > 0 || per_pattern_.count(name) > 0;
    }

    std::vector<std::string> names() const {
        std::set<std::string> s;
        for (const auto& [k, v] : shared_) s.insert(k);
        for (const auto& [k, v] : per_pattern_) s.insert(k);
        return {s.begin(), s.end()};
    }

private:
    std::map<std::string, CovariateField> shared_;
    std::map<std::string, std::map<std::string, CovariateField>> per_pattern_;
};

// One column of the flattened design for one pattern: a parameter index plus
// the covariate values it multiplies, at the data points (summed) and at the
// quadrature nodes.
struct DesignLoading {
    int param = -1;
    double data_sum = 0.0;            // sum over points of the covariate value
    std::vector<double> node_values;  // covariate at grid nodes (label folded in)
};

struct DesignBlock {
    std::string group_id;
    std::size_t n_points = 0;
    std::vector<DesignLoading> loadings;
};

struct Design {
    GridDiscretization grid;
    std::vector<std::string> param_names;
    std::vector<DesignBlock> blocks;
    bool separable = true;  // no parameter appears in more than one block

    int n_params() const { return static_cast<int>(param_names.size()); }
};

// Flattens a ModelSpec over a set of patterns into one parameter vector with
// a (pattern, term) -> index map. Intercepts come first, then terms in spec
// order. Shared terms map every pattern onto a single index.
inline Design build_design(const ModelSpec& spec, const std::vector<PointPattern>& patterns,
                           const CovariateSet& covariates, const GridDiscretization& grid) {
    if (patterns.empty()) throw ValidationError("build_design: empty pattern set");
    for (const PointPattern& p : patterns) {
        p.check_in_window(grid.window());
        if (p.empty())
            throw ValidationError("build_design: pattern '" + p.group_id +
                                  "' is empty; its intercept is non-identifiable");
    }

    Design design;
    design.grid = grid;
    const std::size_t r = grid.node_count();

    auto new_param = [&](const std::string& name) {
        design.param_names.push_back(name);
        return static_cast<int>(design.param_names.size()) - 1;
    };

    design.blocks.resize(patterns.size());
    for (std::size_t b = 0; b < patterns.size(); ++b) {
        design.blocks[b].group_id = patterns[b].group_id;
        design.blocks[b].n_points = patterns[b].size();
        DesignLoading intercept;
        intercept.param = new_param("alpha[" + patterns[b].group_id + "]");
        intercept.data_sum = static_cast<double>(patterns[b].size());
        intercept.node_values.assign(r, 1.0);
        design.blocks[b].loadings.push_back(std::move(intercept));
    }

    auto covariate_loading = [&](std::size_t b, const Term& term, int param, double mult) {
        const PointPattern& pat = patterns[b];
        const CovariateField& f = covariates.resolve(term.covariate, pat.group_id);
        DesignLoading l;
        l.param = param;
        l.node_values.resize(r);
        for (std::size_t j = 0; j < r; ++j)
            l.node_values[j] = mult * f(grid.node_x(j), grid.node_y(j));
        for (const Point& p : pat.points) l.data_sum += mult * f(p.x, p.y);
        design.blocks[b].loadings.push_back(std::move(l));
    };

    for (const Term& term : spec.terms) {
        switch (term.scope) {
            case TermScope::PerPattern:
                for (std::size_t b = 0; b < patterns.size(); ++b) {
                    int param = new_param(term.covariate + "[" + patterns[b].group_id + "]");
                    covariate_loading(b, term, param, 1.0);
                }
                break;
            case TermScope::Shared: {
                int param = new_param(term.covariate);
                if (patterns.size() > 1) design.separable = false;
                for (std::size_t b = 0; b < patterns.size(); ++b)
                    covariate_loading(b, term, param, 1.0);
                break;
            }
            case TermScope::Grouped: {
                int gamma = new_param(term.covariate + ".gamma");
                if (patterns.size() > 1) design.separable = false;
                for (std::size_t b = 0; b < patterns.size(); ++b) {
                    auto it = term.labels.find(patterns[b].group_id);
                    if (it == term.labels.end())
                        throw ValidationError("grouped term '" + term.covariate +
                                              "' has no label for pattern '" +
                                              patterns[b].group_id + "'");
                    covariate_loading(b, term, gamma, it->second);
                    int delta =
                        new_param(term.covariate + ".delta[" + patterns[b].group_id + "]");
                    covariate_loading(b, term, delta, 1.0);
                }
                break;
            }
        }
    }
    return design;
}

// Log-likelihood (Berman-Turner quadrature form) and gradient over the whole
// design. `latent` optionally adds a shared grid field g to every block's
// log-intensity; `quad_intensity` when non-null receives sum over blocks of
// w_j exp(eta_bj) per node (the curvature weights needed for latent fitting).
inline double design_loglik_grad(const Design& design, const Eigen::VectorXd& theta,
                                 const std::vector<double>* latent, Eigen::VectorXd& grad,
                                 std::vector<double>* quad_intensity = nullptr) {
    const std::size_t r = design.grid.node_count();
    grad.setZero(design.n_params());
    if (quad_intensity) quad_intensity->assign(r, 0.0);
    std::vector<double> eta(r), wexp(r);
    double ll = 0.0;
    for (const DesignBlock& block : design.blocks) {
        if (latent)
            std::copy(latent->begin(), latent->end(), eta.begin());
        else
            std::fill(eta.begin(), eta.end(), 0.0);
        for (const DesignLoading& l : block.loadings) {
            const double t = theta[l.param];
            ll += t * l.data_sum;
            for (std::size_t j = 0; j < r; ++j) eta[j] += t * l.node_values[j];
        }
        double quad = 0.0;
        for (std::size_t j = 0; j < r; ++j) {
            wexp[j] = design.grid.weight(j) * safe_exp(eta[j]);
            quad += wexp[j];
            if (quad_intensity) (*quad_intensity)[j] += wexp[j];
        }
        ll -= quad;
        // The latent field's own data term is accumulated by the latent
        // fitter; only the parametric loadings contribute to `grad` here.
        for (const DesignLoading& l : block.loadings) {
            double q = 0.0;
            for (std::size_t j = 0; j < r; ++j) q += wexp[j] * l.node_values[j];
            grad[l.param] += l.data_sum - q;
        }
    }
    return ll;
}

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
    bool identifiable = true;
};

struct FitResult {
    std::vector<Coefficient> coefficients;
    double loglik = 0.0;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;

    const Coefficient& coef(const std::string& name) const {
        for (const Coefficient& c : coefficients)
            if (c.name == name) return c;
        throw ValidationError("no coefficient named '" + name + "'");
    }
    double estimate(const std::string& name) const { return coef(name).estimate; }
    double se(const std::string& name) const { return coef(name).se; }
    bool has(const std::string& name) const {
        for (const Coefficient& c : coefficients)
            if (c.name == name) return true;
        return false;
    }
};

struct FitOptions {
    double grad_tol = 1e-6;
    int max_iterations = 500;
    bool compute_se = true;
};

namespace detail {

// Objective over the free parameters with the fixed ones pinned.
struct MaskedObjective {
    const Design* design;
    std::vector<int> free_index;        // free slot -> global index
    Eigen::VectorXd full;               // workspace with fixed values baked in
    mutable Eigen::VectorXd full_grad;

    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
        for (std::size_t k = 0; k < free_index.size(); ++k) full[free_index[k]] = x[k];
        double ll = design_loglik_grad(*design, full, nullptr, full_grad);
        grad.resize(static_cast<int>(free_index.size()));
        for (std::size_t k = 0; k < free_index.size(); ++k) grad[k] = full_grad[free_index[k]];
        return ll;
    }
};

inline void fill_se(FitResult& fit, const ObjectiveFn& objective, const Eigen::VectorXd& x,
                    const std::vector<int>& free_index) {
    const Eigen::MatrixXd neg_hess = -fd_hessian(objective, x);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hess);
    bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
    Eigen::MatrixXd cov;
    if (ok) {
        cov = ldlt.solve(Eigen::MatrixXd::Identity(neg_hess.rows(), neg_hess.cols()));
        if (!cov.allFinite()) ok = false;
    }
    for (std::size_t k = 0; k < free_index.size(); ++k) {
        Coefficient& c = fit.coefficients[free_index[k]];
        const double var = ok ? cov(k, k) : std::numeric_limits<double>::quiet_NaN();
        if (ok && var > 0.0 && std::isfinite(var)) {
            c.se = std::sqrt(var);
        } else {
            c.se = std::numeric_limits<double>::quiet_NaN();
            c.identifiable = false;
        }
    }
}

}  // namespace detail

// Maximum-likelihood fit with the named coefficients pinned to fixed values.
inline FitResult fit_constrained(const ModelSpec& spec,
                                 const std::vector<PointPattern>& patterns,
                                 const CovariateSet& covariates,
                                 const GridDiscretization& grid,
                                 const std::map<std::string, double>& fixed,
                                 const FitOptions& options = {}) {
    Design design = build_design(spec, patterns, covariates, grid);
    const int n = design.n_params();

    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(n);
    const double area = grid.window().area();
    for (const DesignBlock& block : design.blocks) {
        // first loading of each block is its intercept
        theta0[block.loadings.front().param] =
            std::log(static_cast<double>(block.n_points) / area);
    }

    std::vector<int> free_index;
    for (int k = 0; k < n; ++k) {
        auto it = fixed.find(design.param_names[k]);
        if (it != fixed.end())
            theta0[k] = it->second;
        else
            free_index.push_back(k);
    }
    for (const auto& [name, value] : fixed) {
        if (std::find(design.param_names.begin(), design.param_names.end(), name) ==
            design.param_names.end())
            throw ValidationError("fit_constrained: unknown coefficient '" + name + "'");
    }

    detail::MaskedObjective masked{&design, free_index, theta0, Eigen::VectorXd(n)};
    Eigen::VectorXd x0(static_cast<int>(free_index.size()));
    for (std::size_t k = 0; k < free_index.size(); ++k) x0[k] = theta0[free_index[k]];

    OptimOptions oopts;
    oopts.grad_tol = options.grad_tol;
    oopts.max_iterations = options.max_iterations;
    ObjectiveFn obj = [&masked](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return masked(x, g);
    };
    OptimResult opt = maximize_bfgs(obj, x0, oopts);
    if (!opt.converged)
        throw ConvergenceError("fit did not reach gradient tolerance after " +
                                   std::to_string(opt.iterations) + " iterations (|grad|=" +
                                   std::to_string(opt.grad_norm) + ")",
                               opt.objective_trace);

    Eigen::VectorXd theta = theta0;
    for (std::size_t k = 0; k < free_index.size(); ++k) theta[free_index[k]] = opt.x[k];

    FitResult fit;
    fit.loglik = opt.f;
    fit.iterations = opt.iterations;
    fit.grad_norm = opt.grad_norm;
    fit.converged = opt.converged;
    fit.coefficients.resize(n);
    for (int k = 0; k < n; ++k) {
        fit.coefficients[k].name = design.param_names[k];
        fit.coefficients[k].estimate = theta[k];
        if (fixed.count(design.param_names[k])) fit.coefficients[k].se = 0.0;
    }
    if (options.compute_se && !free_index.empty()) detail::fill_se(fit, obj, opt.x, free_index);
    return fit;
}

inline FitResult fit_mle(const ModelSpec& spec, const std::vector<PointPattern>& patterns,
                         const CovariateSet& covariates, const GridDiscretization& grid,
                         const FitOptions& options = {}) {
    return fit_constrained(spec, patterns, covariates, grid, {}, options);
}

struct CoefficientComparison {
    std::vector<std::string> group_ids;
    std::vector<double> a;
    std::vector<double> b;
    double mean_difference = 0.0;
    double correlation = 0.0;
};

// Pairs up the per-pattern coefficients "<term>[gid]" of two fits.
inline CoefficientComparison compare_coefficients(const FitResult& fit_a, const FitResult& fit_b,
                                                  const std::string& term) {
    CoefficientComparison cmp;
    const std::string prefix = term + "[";
    for (const Coefficient& ca : fit_a.coefficients) {
        if (ca.name.rfind(prefix, 0) != 0 || ca.name.back() != ']') continue;
        if (!fit_b.has(ca.name)) continue;
        cmp.group_ids.push_back(ca.name.substr(prefix.size(),
                                               ca.name.size() - prefix.size() - 1));
        cmp.a.push_back(ca.estimate);
        cmp.b.push_back(fit_b.estimate(ca.name));
    }
    if (cmp.group_ids.empty())
        throw ValidationError("compare_coefficients: no common per-pattern coefficients for '" +
                              term + "'");
    const std::size_t n = cmp.a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += cmp.a[i];
        mb += cmp.b[i];
    }
    ma /= n;
    mb /= n;
    cmp.mean_difference = ma - mb;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (cmp.a[i] - ma) * (cmp.b[i] - mb);
        saa += (cmp.a[i] - ma) * (cmp.a[i] - ma);
        sbb += (cmp.b[i] - mb) * (cmp.b[i] - mb);
    }
    cmp.correlation = (saa > 0 && sbb > 0) ? sab / std::sqrt(saa * sbb) : 1.0;
    return cmp;
}

// Fitted log-intensity surface of one pattern on the design grid.
inline CovariateField fitted_eta(const Design& design, const FitResult& fit,
                                 const std::string& group_id,
                                 const std::vector<double>* latent = nullptr) {
    for (const DesignBlock& block : design.blocks) {
        if (block.group_id != group_id) continue;
        const std::size_t r = design.grid.node_count();
        std::vector<double> eta(r, 0.0);
        if (latent)
            for (std::size_t j = 0; j < r; ++j) eta[j] = (*latent)[j];
        for (const DesignLoading& l : block.loadings) {
            const double t = fit.coefficients[l.param].estimate;
            for (std::size_t j = 0; j < r; ++j) eta[j] += t * l.node_values[j];
        }
        return CovariateField(design.grid.window(), design.grid.nx(), design.grid.ny(),
                              std::move(eta));
    }
    throw ValidationError("fitted_eta: no pattern '" + group_id + "' in design");
}

namespace detail {

inline void eta_add(std::vector<double>& eta, const CovariateField& f,
                    const GridDiscretization& grid, double coef) {
    for (std::size_t j = 0; j < eta.size(); ++j)
        eta[j] += coef * f(grid.node_x(j), grid.node_y(j));
}

}  // namespace detail

// Reconstructs the fitted log-intensity of one pattern from serialized
// coefficients, without needing the original data (used when simulating or
// diagnosing from a saved fit).
inline CovariateField eta_from_coefficients(const ModelSpec& spec, const FitResult& fit,
                                            const CovariateSet& covariates,
                                            const GridDiscretization& grid,
                                            const std::string& group_id,
                                            const std::vector<double>* latent = nullptr) {
    const std::size_t r = grid.node_count();
    std::vector<double> eta(r, 0.0);
    if (latent)
        for (std::size_t j = 0; j < r; ++j) eta[j] = (*latent)[j];
    const double alpha = fit.estimate("alpha[" + group_id + "]");
    for (double& v : eta) v += alpha;
    for (const Term& term : spec.terms) {
        const CovariateField& f = covariates.resolve(term.covariate, group_id);
        double beta = 0.0;
        switch (term.scope) {
            case TermScope::PerPattern:
                beta = fit.estimate(term.covariate + "[" + group_id + "]");
                break;
            case TermScope::Shared:
                beta = fit.estimate(term.covariate);
                break;
            case TermScope::Grouped: {
                auto it = term.labels.find(group_id);
                if (it == term.labels.end())
                    throw ValidationError("eta_from_coefficients: no label for pattern '" +
                                          group_id + "'");
                beta = fit.estimate(term.covariate + ".gamma") * it->second;
                // the delta part adds with unit multiplier
                detail::eta_add(eta, f, grid, fit.estimate(term.covariate + ".delta[" + group_id + "]"));
                break;
            }
        }
        detail::eta_add(eta, f, grid, beta);
    }
    return CovariateField(grid.window(), grid.nx(), grid.ny(), std::move(eta));
}

}  // namespace ppfit

#endif  // PPFIT_MODEL_HPP
