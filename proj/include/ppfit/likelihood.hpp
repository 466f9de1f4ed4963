// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_LIKELIHOOD_HPP
#define PPFIT_LIKELIHOOD_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"

namespace ppfit {

// Bin counts k_j aligned to the cells of a GridDiscretization.
struct BinnedCounts {
    GridDiscretization grid;
    std::vector<int> counts;

    int total() const {
        int n = 0;
        for (int k : counts) n += k;
        return n;
    }
};

inline BinnedCounts bin_pattern(const PointPattern& pattern, const GridDiscretization& grid) {
    BinnedCounts out{grid, std::vector<int>(grid.node_count(), 0)};
    for (const Point& p : pattern.points) ++out.counts[grid.bin_index(p.x, p.y)];
    return out;
}

// Exact log-likelihood (constants dropped):
//   sum_i eta(s_i) - integral of exp(eta) over the window,
// with eta point-evaluable and the integral done by quadrature on `grid`.
inline double loglik_exact(const PointPattern& pattern,
                           const std::function<double(double, double)>& eta,
                           const GridDiscretization& grid) {
    double ll = 0.0;
    for (const Point& p : pattern.points) {
        const double e = eta(p.x, p.y);
        if (!std::isfinite(e))
            throw NumericError("loglik_exact: non-finite log-intensity at a data point");
        ll += e;
    }
    for (std::size_t j = 0; j < grid.node_count(); ++j)
        ll -= grid.weight(j) * safe_exp(eta(grid.node_x(j), grid.node_y(j)));
    return ll;
}

inline double loglik_exact(const PointPattern& pattern, const CovariateField& eta) {
    return loglik_exact(
        pattern, [&](double x, double y) { return eta(x, y); }, discretization_of(eta));
}

// Binned Poisson count log-pmf. Unlike the other two forms this keeps all
// constants (log k_j!), so it matches standard Poisson pmfs exactly and
// doubles as a cross-check oracle. The bin intensity uses the node value
// (cell center of the nearest-node cell): lambda_j = exp(eta_j) * |cell_j|.
inline double loglik_binned(const BinnedCounts& counts, const CovariateField& eta) {
    const GridDiscretization& grid = counts.grid;
    if (!grid.matches(eta))
        throw ValidationError("loglik_binned: counts and eta on different grids");
    double ll = 0.0;
    for (std::size_t j = 0; j < grid.node_count(); ++j) {
        const double cell = grid.weight(j);
        const int k = counts.counts[j];
        ll += k * (eta.values()[j] + std::log(cell));
        ll -= cell * safe_exp(eta.values()[j]);
        ll -= std::lgamma(static_cast<double>(k) + 1.0);
    }
    return ll;
}

// Berman-Turner approximation: data term through the bilinear interpolation
// weights of each point, integral term through the quadrature weights.
inline double loglik_berman_turner(const PointPattern& pattern, const CovariateField& eta) {
    double ll = 0.0;
    for (const Point& p : pattern.points)
        for (const auto& [j, a] : eta.interp_weights(p.x, p.y)) ll += a * eta.values()[j];
    const GridDiscretization grid = discretization_of(eta);
    for (std::size_t j = 0; j < grid.node_count(); ++j)
        ll -= grid.weight(j) * safe_exp(eta.values()[j]);
    return ll;
}

}  // namespace ppfit

#endif  // PPFIT_LIKELIHOOD_HPP
