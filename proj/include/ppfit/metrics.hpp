// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_METRICS_HPP
#define PPFIT_METRICS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/likelihood.hpp"

namespace ppfit {

// A covariate raster read as a predictor of fixation density; scale-free
// (every metric here is invariant under increasing transforms).
using SaliencyMap = CovariateField;

// Relative area V(alpha) of the smallest upper-level set of a density that
// holds probability >= alpha, sampled on a fixed alpha ladder.
struct VolumeCurve {
    std::vector<double> alphas;
    std::vector<double> volumes;

    // Trapezoid integral of V over [0, 1].
    double integral() const {
        double acc = 0.0;
        for (std::size_t i = 1; i < alphas.size(); ++i)
            acc += 0.5 * (volumes[i] + volumes[i - 1]) * (alphas[i] - alphas[i - 1]);
        return acc;
    }
};

inline std::vector<double> default_alpha_ladder(int steps = 200) {
    std::vector<double> a(steps + 1);
    for (int i = 0; i <= steps; ++i) a[i] = static_cast<double>(i) / steps;
    return a;
}

namespace detail {

// Cells sorted by density descending with deterministic index tie-breaking,
// plus their normalized masses and relative areas.
struct SortedCells {
    std::vector<std::size_t> order;
    std::vector<double> mass;      // normalized probability mass per cell
    std::vector<double> rel_area;  // w_j / total area
};

inline SortedCells sort_cells_desc(const CovariateField& density) {
    const GridDiscretization grid = discretization_of(density);
    const std::size_t r = grid.node_count();
    SortedCells out;
    out.order.resize(r);
    out.mass.resize(r);
    out.rel_area.resize(r);
    double total = 0.0;
    const double area = grid.window().area();
    for (std::size_t j = 0; j < r; ++j) {
        out.mass[j] = grid.weight(j) * density.values()[j];
        out.rel_area[j] = grid.weight(j) / area;
        total += out.mass[j];
    }
    if (total <= 0.0) throw ValidationError("density is zero everywhere");
    for (double& m : out.mass) m /= total;
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        return density.values()[a] > density.values()[b];
    });
    return out;
}

}  // namespace detail

// V(alpha) by sorting grid cells by density descending and accumulating mass.
// The density should integrate to 1; if it is off by more than 1e-6 it is
// renormalized with a warning.
inline VolumeCurve contour_volume_curve(const CovariateField& density,
                                        const std::vector<double>& ladder =
                                            default_alpha_ladder()) {
    for (double v : density.values())
        if (v < 0.0) throw ValidationError("contour_volume_curve: negative density");
    const double total = integrate_field(density);
    if (total <= 0.0) throw ValidationError("contour_volume_curve: all-zero density");
    if (std::abs(total - 1.0) > 1e-6)
        std::cerr << "contour_volume_curve: density integrates to " << total
                  << "; renormalizing\n";

    const detail::SortedCells cells = detail::sort_cells_desc(density);
    VolumeCurve curve;
    curve.alphas = ladder;
    curve.volumes.resize(ladder.size());
    // cumulative (mass, volume) walk down the sorted cells
    std::vector<double> cum_mass(cells.order.size()), cum_vol(cells.order.size());
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < cells.order.size(); ++i) {
        m += cells.mass[cells.order[i]];
        v += cells.rel_area[cells.order[i]];
        cum_mass[i] = m;
        cum_vol[i] = v;
    }
    for (std::size_t k = 0; k < ladder.size(); ++k) {
        const double alpha = ladder[k];
        if (alpha <= 0.0) {
            curve.volumes[k] = 0.0;
            continue;
        }
        auto it = std::lower_bound(cum_mass.begin(), cum_mass.end(),
                                   alpha * (1.0 - 1e-12));
        curve.volumes[k] =
            it == cum_mass.end() ? 1.0 : cum_vol[it - cum_mass.begin()];
    }
    return curve;
}

// Empirical 2AFC score: probability over all (fixated, control) pairs that
// the map ranks the fixated point higher; ties count one half. Computed via
// midranks, which reproduces the all-pairs value exactly at O(n log n).
inline double auc_2afc(const SaliencyMap& m, const PointPattern& fixated,
                       const PointPattern& control) {
    if (fixated.empty() || control.empty())
        throw ValidationError("auc_2afc: empty pattern");
    std::vector<std::pair<double, int>> vals;  // (saliency, label 1=fixated)
    vals.reserve(fixated.size() + control.size());
    for (const Point& p : fixated.points) vals.emplace_back(m(p.x, p.y), 1);
    for (const Point& p : control.points) vals.emplace_back(m(p.x, p.y), 0);
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_fixated = 0.0;
    std::size_t i = 0;
    while (i < vals.size()) {
        std::size_t k = i;
        while (k < vals.size() && vals[k].first == vals[i].first) ++k;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(k));
        for (std::size_t t = i; t < k; ++t)
            if (vals[t].second == 1) rank_sum_fixated += midrank;
        i = k;
    }
    const double nf = static_cast<double>(fixated.size());
    const double nc = static_cast<double>(control.size());
    return (rank_sum_fixated - nf * (nf + 1.0) / 2.0) / (nf * nc);
}

// Exact 2AFC probability of the Bayes-optimal rule m = lambda/phi, by double
// quadrature over the grid cells (organized as one sorted sweep).
inline double auc_optimal(const CovariateField& lambda_density,
                          const CovariateField* control_density = nullptr) {
    const GridDiscretization grid = discretization_of(lambda_density);
    const std::size_t r = grid.node_count();
    std::vector<double> lmass(r), cmass(r), score(r);
    double lsum = 0.0, csum = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
        const double lam = lambda_density.values()[j];
        const double phi = control_density ? control_density->values()[j]
                                           : 1.0 / grid.window().area();
        if (lam < 0.0 || phi < 0.0) throw ValidationError("auc_optimal: negative density");
        if (phi == 0.0 && lam > 0.0)
            throw ValidationError("auc_optimal: control density vanishes where the target "
                                  "density is positive (ill-posed ratio)");
        lmass[j] = grid.weight(j) * lam;
        cmass[j] = grid.weight(j) * phi;
        score[j] = phi > 0.0 ? lam / phi : 0.0;
        lsum += lmass[j];
        csum += cmass[j];
    }
    if (lsum <= 0.0 || csum <= 0.0) throw ValidationError("auc_optimal: zero density");
    for (std::size_t j = 0; j < r; ++j) {
        lmass[j] /= lsum;
        cmass[j] /= csum;
    }
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    double pc = 0.0, c_below = 0.0;
    std::size_t i = 0;
    while (i < r) {
        std::size_t k = i;
        double c_tie = 0.0, l_tie = 0.0;
        while (k < r && score[order[k]] == score[order[i]]) {
            c_tie += cmass[order[k]];
            l_tie += lmass[order[k]];
            ++k;
        }
        pc += l_tie * (c_below + 0.5 * c_tie);
        c_below += c_tie;
        i = k;
    }
    return pc;
}

// Center-bias correction: log m - log phi, with m floored so zero-saliency
// cells stay defined.
inline SaliencyMap shuffled_auc_correction(const SaliencyMap& m,
                                           const CovariateField& control_intensity) {
    if (m.nx() != control_intensity.nx() || m.ny() != control_intensity.ny() ||
        !(m.window() == control_intensity.window()))
        throw ValidationError("shuffled_auc_correction: grids do not match");
    const double floor = 1e-12 * std::max(m.max_value(), 0.0);
    std::vector<double> vals(m.node_count());
    for (std::size_t j = 0; j < m.node_count(); ++j) {
        const double phi = control_intensity.values()[j];
        if (phi <= 0.0)
            throw ValidationError("shuffled_auc_correction: non-positive control intensity");
        vals[j] = std::log(std::max(m.values()[j], floor)) - std::log(phi);
    }
    return SaliencyMap(m.window(), m.nx(), m.ny(), std::move(vals));
}

namespace detail {

// Cells of the top-q-area upper-level set of m (deterministic tie-breaking
// by cell index through the stable sort).
inline std::vector<char> top_q_cells(const SaliencyMap& m, double q) {
    const GridDiscretization grid = discretization_of(m);
    std::vector<std::size_t> order(grid.node_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return m.values()[a] > m.values()[b];
    });
    std::vector<char> selected(grid.node_count(), 0);
    const double target = q * grid.window().area();
    double acc = 0.0;
    for (std::size_t j : order) {
        if (acc >= target * (1.0 - 1e-12)) break;
        selected[j] = 1;
        acc += grid.weight(j);
    }
    return selected;
}

}  // namespace detail

// Fraction of fixations inside the top-q-area region of the map.
inline double area_count(const SaliencyMap& m, const PointPattern& fixated, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("area_count: q must be in (0, 1)");
    if (fixated.empty()) throw ValidationError("area_count: empty pattern");
    const GridDiscretization grid = discretization_of(m);
    const std::vector<char> selected = detail::top_q_cells(m, q);
    int inside = 0;
    for (const Point& p : fixated.points)
        if (selected[grid.bin_index(p.x, p.y)]) ++inside;
    return static_cast<double>(inside) / fixated.size();
}

// Integral of the area-count curve over q (trapezoid on a q ladder), the
// criterion-free summary A_c.
inline double area_count_integral(const SaliencyMap& m, const PointPattern& fixated,
                                  int steps = 100) {
    if (fixated.empty()) throw ValidationError("area_count_integral: empty pattern");
    double prev_q = 0.0, prev_v = 0.0, acc = 0.0;
    for (int i = 1; i <= steps; ++i) {
        const double q = static_cast<double>(i) / steps;
        const double v = q < 1.0 ? area_count(m, fixated, q) : 1.0;
        acc += 0.5 * (v + prev_v) * (q - prev_q);
        prev_q = q;
        prev_v = v;
    }
    return acc;
}

struct LogisticFit {
    double intercept = 0.0;
    std::vector<double> slopes;
    double intercept_se = 0.0;
    std::vector<double> slope_se;
    int iterations = 0;
    bool converged = false;
    bool separation = false;
};

namespace detail {

// Newton (IRLS) for logistic regression. Rows of `x` exclude the intercept.
inline LogisticFit logistic_irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                                 int max_iter = 100, double tol = 1e-8) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    Eigen::MatrixXd design(n, d + 1);
    design.col(0).setOnes();
    design.rightCols(d) = x;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);

    LogisticFit fit;
    fit.slopes.resize(d);
    fit.slope_se.resize(d);
    Eigen::MatrixXd info;
    for (int iter = 0; iter < max_iter; ++iter) {
        fit.iterations = iter + 1;
        const Eigen::VectorXd eta = design * beta;
        const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
        const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
        const Eigen::VectorXd grad = design.transpose() * (z - p);
        info = design.transpose() * w.asDiagonal() * design;
        if (grad.lpNorm<Eigen::Infinity>() < tol * n) {
            fit.converged = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success) {
            fit.separation = true;
            break;
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        if (!step.allFinite()) {
            fit.separation = true;
            break;
        }
        beta += step;
        if (beta.lpNorm<Eigen::Infinity>() > 30.0) {  // diverging linear predictor
            fit.separation = true;
            break;
        }
    }
    if (fit.converged && d > 0) {
        // all fitted probabilities pinned at 0 or 1 means the classes are
        // (near-)perfectly separated even though the gradient vanished
        const Eigen::VectorXd eta = design * beta;
        const Eigen::ArrayXd p = 1.0 / (1.0 + (-eta.array()).exp());
        if ((p * (1.0 - p)).maxCoeff() < 1e-6) fit.separation = true;
    }
    if (fit.separation)
        std::cerr << "logistic fit: (near-)perfect separation; coefficients diverging\n";

    fit.intercept = beta[0];
    for (int k = 0; k < d; ++k) fit.slopes[k] = beta[k + 1];
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success) {
        const Eigen::MatrixXd cov =
            ldlt.solve(Eigen::MatrixXd::Identity(d + 1, d + 1));
        fit.intercept_se = std::sqrt(std::max(0.0, cov(0, 0)));
        for (int k = 0; k < d; ++k) fit.slope_se[k] = std::sqrt(std::max(0.0, cov(k + 1, k + 1)));
    }
    return fit;
}

}  // namespace detail

// Spatial logistic regression: pixels become Bernoulli observations
// (occupied or not) regressed on the covariates at pixel centers. Grids
// where many occupied pixels hold several points lose too much information
// and are rejected with guidance to refine.
inline LogisticFit spatial_logistic_fit(const PointPattern& pattern,
                                        const std::vector<const CovariateField*>& covariates,
                                        const GridDiscretization& grid) {
    const BinnedCounts counts = bin_pattern(pattern, grid);
    int occupied = 0, multi = 0;
    for (int k : counts.counts) {
        if (k > 0) ++occupied;
        if (k > 1) ++multi;
    }
    if (occupied == 0) throw ValidationError("spatial_logistic_fit: empty pattern");
    if (multi > occupied / 10)
        throw ValidationError(
            "spatial_logistic_fit: " + std::to_string(multi) + " of " +
            std::to_string(occupied) +
            " occupied pixels hold more than one point; use a finer grid");

    const std::size_t r = grid.node_count();
    Eigen::MatrixXd x(r, static_cast<int>(covariates.size()));
    Eigen::VectorXd z(r);
    for (std::size_t j = 0; j < r; ++j) {
        z[j] = counts.counts[j] > 0 ? 1.0 : 0.0;
        for (std::size_t c = 0; c < covariates.size(); ++c)
            x(j, c) = (*covariates[c])(grid.node_x(j), grid.node_y(j));
    }
    return detail::logistic_irls(x, z);
}

// Case-control (patch) logistic regression on covariate vectors of fixated
// (label 1) and control (label 0) locations.
inline LogisticFit patch_logistic_fit(const std::vector<std::vector<double>>& fixated_values,
                                      const std::vector<std::vector<double>>& control_values) {
    if (fixated_values.empty() || control_values.empty())
        throw ValidationError("patch_logistic_fit: both classes must be non-empty");
    const std::size_t d = fixated_values.front().size();
    for (const auto& v : fixated_values)
        if (v.size() != d) throw ValidationError("patch_logistic_fit: ragged covariate vectors");
    for (const auto& v : control_values)
        if (v.size() != d) throw ValidationError("patch_logistic_fit: ragged covariate vectors");
    const std::size_t n = fixated_values.size() + control_values.size();
    Eigen::MatrixXd x(n, static_cast<int>(d));
    Eigen::VectorXd z(n);
    std::size_t row = 0;
    for (const auto& v : fixated_values) {
        for (std::size_t c = 0; c < d; ++c) x(row, c) = v[c];
        z[row++] = 1.0;
    }
    for (const auto& v : control_values) {
        for (std::size_t c = 0; c < d; ++c) x(row, c) = v[c];
        z[row++] = 0.0;
    }
    return detail::logistic_irls(x, z);
}

// Evaluation summary for one (saliency, pattern) pair.
struct MetricReport {
    double auc = 0.0;
    double auc_shuffled = std::numeric_limits<double>::quiet_NaN();
    std::map<double, double> area_counts;  // q -> fraction
    double a_c = 0.0;
    VolumeCurve volume_curve;
};

}  // namespace ppfit

#endif  // PPFIT_METRICS_HPP
