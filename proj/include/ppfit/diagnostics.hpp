// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_DIAGNOSTICS_HPP
#define PPFIT_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/simulate.hpp"

namespace ppfit {

// Equal-rectangle partition of the window into kx * ky regions.
struct RegionPartition {
    ObservationWindow window;
    int kx = 4;
    int ky = 4;

    int region_count() const { return kx * ky; }

    int region_of(double x, double y) const {
        if (!window.contains(x, y)) throw OutOfDomainError("region_of: point outside window");
        int ix = std::min(static_cast<int>((x - window.x_min) / window.width() * kx), kx - 1);
        int iy = std::min(static_cast<int>((y - window.y_min) / window.height() * ky), ky - 1);
        return iy * kx + ix;
    }
};

struct Histogram {
    std::vector<double> edges;   // bins + 1
    std::vector<double> counts;  // may hold replicate means, hence double
};

// Counts of pooled points per bin along one axis.
inline Histogram pooled_margin_histogram(const std::vector<PointPattern>& patterns, char axis,
                                         int bins, const ObservationWindow& window) {
    if (bins < 2) throw ValidationError("pooled_margin_histogram: need at least 2 bins");
    if (axis != 'x' && axis != 'y') throw ValidationError("pooled_margin_histogram: axis must be 'x' or 'y'");
    const double lo = axis == 'x' ? window.x_min : window.y_min;
    const double hi = axis == 'x' ? window.x_max : window.y_max;
    Histogram h;
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * i / bins;
    h.counts.assign(bins, 0.0);
    for (const PointPattern& p : patterns)
        for (const Point& pt : p.points) {
            const double v = axis == 'x' ? pt.x : pt.y;
            int b = std::min(static_cast<int>((v - lo) / (hi - lo) * bins), bins - 1);
            h.counts[std::max(b, 0)] += 1.0;
        }
    return h;
}

struct RegionDiagnostic {
    int region = 0;
    double observed = 0.0;
    double replicate_mean = 0.0;
    double lower = 0.0;   // 2.5% replicate quantile
    double upper = 0.0;   // 97.5% replicate quantile
    bool flagged_low = false;
    bool flagged_high = false;
};

struct DiagnosticSummary {
    std::vector<RegionDiagnostic> regions;
    Histogram margin_x_data, margin_x_replicates;
    Histogram margin_y_data, margin_y_replicates;
    double chi2 = 0.0;  // sum over regions of (obs - mean)^2 / max(mean, 1)
    int n_replicates = 0;

    int flag_count() const {
        int n = 0;
        for (const RegionDiagnostic& r : regions)
            if (r.flagged_low || r.flagged_high) ++n;
        return n;
    }
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double f = pos - lo;
    return lo + 1 < sorted.size() ? (1 - f) * sorted[lo] + f * sorted[lo + 1] : sorted[lo];
}

}  // namespace detail

// Simulation-based model criticism: replicate each pattern from its fitted
// log-intensity (conditional on the observed n, so location structure is
// tested, not abundance), then compare per-region counts and pooled margins.
inline DiagnosticSummary posterior_predictive_check(
    const std::vector<CovariateField>& fitted_etas, const std::vector<PointPattern>& patterns,
    int n_replicates, const RegionPartition& partition, const RngSeed& seed,
    int margin_bins = 16, int n_threads = 1) {
    if (n_replicates < 20)
        throw ValidationError("posterior_predictive_check: need at least 20 replicates");
    if (fitted_etas.size() != patterns.size())
        throw ValidationError("posterior_predictive_check: one fitted eta per pattern required");
    const ObservationWindow& win = partition.window;
    for (const CovariateField& eta : fitted_etas)
        if (!(eta.window() == win))
            throw ValidationError("posterior_predictive_check: partition does not cover the "
                                  "model window");

    const int nr = partition.region_count();
    std::vector<double> observed(nr, 0.0);
    for (const PointPattern& p : patterns)
        for (const Point& pt : p.points) observed[partition.region_of(pt.x, pt.y)] += 1.0;

    std::vector<std::size_t> n_per(patterns.size());
    std::vector<std::string> gids(patterns.size());
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        n_per[i] = patterns[i].size();
        gids[i] = patterns[i].group_id;
    }

    // Region counts per replicate plus pooled replicate margins. Replicate
    // `rep` always uses stream seed.stream + rep, so the result does not
    // depend on the thread count.
    std::vector<std::vector<double>> rep_counts(nr, std::vector<double>(n_replicates, 0.0));
    Histogram mx_accum, my_accum;
    mx_accum.edges.resize(margin_bins + 1);
    mx_accum.counts.assign(margin_bins, 0.0);
    my_accum = mx_accum;
    auto run_range = [&](int rep_lo, int rep_hi, Histogram* mx, Histogram* my) {
        for (int rep = rep_lo; rep < rep_hi; ++rep) {
            const std::vector<PointPattern> replicate =
                replicate_dataset(fitted_etas, n_per, gids, seed.with_stream(seed.stream + rep));
            for (const PointPattern& p : replicate)
                for (const Point& pt : p.points)
                    rep_counts[partition.region_of(pt.x, pt.y)][rep] += 1.0;
            const Histogram hx = pooled_margin_histogram(replicate, 'x', margin_bins, win);
            const Histogram hy = pooled_margin_histogram(replicate, 'y', margin_bins, win);
            mx->edges = hx.edges;
            my->edges = hy.edges;
            for (int b = 0; b < margin_bins; ++b) {
                mx->counts[b] += hx.counts[b];
                my->counts[b] += hy.counts[b];
            }
        }
    };
    if (n_threads <= 1) {
        run_range(0, n_replicates, &mx_accum, &my_accum);
    } else {
        const int nt = std::min(n_threads, n_replicates);
        std::vector<Histogram> mxs(nt, mx_accum), mys(nt, my_accum);
        std::vector<std::thread> workers;
        for (int t = 0; t < nt; ++t) {
            const int lo = n_replicates * t / nt;
            const int hi = n_replicates * (t + 1) / nt;
            workers.emplace_back(run_range, lo, hi, &mxs[t], &mys[t]);
        }
        for (std::thread& w : workers) w.join();
        mx_accum.edges = mxs[0].edges;
        my_accum.edges = mys[0].edges;
        for (int t = 0; t < nt; ++t)
            for (int b = 0; b < margin_bins; ++b) {
                mx_accum.counts[b] += mxs[t].counts[b];
                my_accum.counts[b] += mys[t].counts[b];
            }
    }
    for (double& c : mx_accum.counts) c /= n_replicates;
    for (double& c : my_accum.counts) c /= n_replicates;

    DiagnosticSummary summary;
    summary.n_replicates = n_replicates;
    summary.margin_x_data = pooled_margin_histogram(patterns, 'x', margin_bins, win);
    summary.margin_y_data = pooled_margin_histogram(patterns, 'y', margin_bins, win);
    summary.margin_x_replicates = mx_accum;
    summary.margin_y_replicates = my_accum;
    summary.regions.resize(nr);
    for (int g = 0; g < nr; ++g) {
        RegionDiagnostic& rd = summary.regions[g];
        rd.region = g;
        rd.observed = observed[g];
        std::vector<double> sorted = rep_counts[g];
        std::sort(sorted.begin(), sorted.end());
        double mean = 0.0;
        for (double c : sorted) mean += c;
        rd.replicate_mean = mean / n_replicates;
        rd.lower = detail::quantile_sorted(sorted, 0.025);
        rd.upper = detail::quantile_sorted(sorted, 0.975);
        rd.flagged_low = rd.observed < rd.lower;
        rd.flagged_high = rd.observed > rd.upper;
        summary.chi2 += (rd.observed - rd.replicate_mean) * (rd.observed - rd.replicate_mean) /
                        std::max(rd.replicate_mean, 1.0);
    }
    return summary;
}

}  // namespace ppfit

#endif  // PPFIT_DIAGNOSTICS_HPP
