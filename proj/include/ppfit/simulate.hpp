// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_SIMULATE_HPP
#define PPFIT_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"

namespace ppfit {

// Reproducibility contract: identical (seed, stream) gives bit-identical
// sampler output across runs. Independent streams decorrelate parallel work.
struct RngSeed {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    std::mt19937_64 engine(std::uint64_t tag = 0) const {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32),
                          static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
        return std::mt19937_64(seq);
    }

    RngSeed with_stream(std::uint64_t s) const { return RngSeed{seed, s}; }
};

namespace detail {

inline Point uniform_point(const ObservationWindow& win, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(win.x_min, win.x_max);
    std::uniform_real_distribution<double> uy(win.y_min, win.y_max);
    const double x = ux(rng);
    const double y = uy(rng);
    return {x, y};
}

}  // namespace detail

// Homogeneous Poisson pattern: N ~ Poisson(lambda0 * area), points uniform.
inline PointPattern sample_homogeneous(const ObservationWindow& win, double lambda0,
                                       std::mt19937_64& rng, const std::string& group_id = "") {
    if (lambda0 < 0.0) throw ValidationError("sample_homogeneous: negative intensity");
    PointPattern out({}, group_id);
    if (lambda0 == 0.0) return out;
    std::poisson_distribution<long> pois(lambda0 * win.area());
    const long n = pois(rng);
    out.points.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) out.points.push_back(detail::uniform_point(win, rng));
    return out;
}

// Lewis-Shedler thinning: homogeneous candidates at the grid maximum of
// exp(eta), each kept with probability exp(eta(s) - eta_max). The bilinear
// surface never exceeds its node maximum, so the bound is exact.
inline PointPattern sample_thinning(const CovariateField& eta, std::mt19937_64& rng,
                                    const std::string& group_id = "") {
    const double eta_max = eta.max_value();
    const double lambda_max = safe_exp(eta_max);
    if (!std::isfinite(lambda_max))
        throw NumericError("sample_thinning: non-finite intensity bound");
    const ObservationWindow& win = eta.window();
    std::poisson_distribution<long> pois(lambda_max * win.area());
    const long n_cand = pois(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointPattern out({}, group_id);
    for (long i = 0; i < n_cand; ++i) {
        const Point p = detail::uniform_point(win, rng);
        const double u = unit(rng);
        if (std::log(u) <= eta(p.x, p.y) - eta_max) out.points.push_back(p);
    }
    return out;
}

// Exactly n i.i.d. draws from the normalized intensity exp(eta)/integral.
// Rejection works on node values shifted by their maximum, so adding a
// constant to eta leaves the sampler's arithmetic (and output) unchanged.
inline PointPattern sample_conditional_n(const CovariateField& eta, std::size_t n,
                                         std::mt19937_64& rng,
                                         const std::string& group_id = "") {
    std::vector<double> shifted(eta.values());
    const double eta_max = eta.max_value();
    for (double& v : shifted) v -= eta_max;
    const CovariateField log_accept(eta.window(), eta.nx(), eta.ny(), std::move(shifted));

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointPattern out({}, group_id);
    out.points.reserve(n);
    while (out.points.size() < n) {
        const Point p = detail::uniform_point(eta.window(), rng);
        const double u = unit(rng);
        if (std::log(u) <= log_accept(p.x, p.y)) out.points.push_back(p);
    }
    return out;
}

// Kernel density over slope estimates from a training fit; Gaussian kernel,
// Silverman's-rule bandwidth unless overridden. A zero bandwidth override is
// allowed and makes sampling return the support values themselves.
class CoefficientDistribution {
public:
    explicit CoefficientDistribution(std::vector<double> estimates,
                                     double bandwidth_override = -1.0)
        : support_(std::move(estimates)) {
        if (support_.size() < 2)
            throw ValidationError("CoefficientDistribution: need at least 2 estimates");
        if (bandwidth_override >= 0.0) {
            bandwidth_ = bandwidth_override;
        } else {
            bandwidth_ = silverman_bandwidth(support_);
        }
    }

    static double silverman_bandwidth(const std::vector<double>& v) {
        const std::size_t n = v.size();
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / (n - 1));
        std::vector<double> sorted(v);
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double q) {
            const double pos = q * (n - 1);
            const std::size_t lo = static_cast<std::size_t>(pos);
            const double f = pos - lo;
            return lo + 1 < n ? (1 - f) * sorted[lo] + f * sorted[lo + 1] : sorted[lo];
        };
        const double iqr = quantile(0.75) - quantile(0.25);
        double spread = sd;
        if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
        double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
        if (!(h > 0.0)) h = 1e-6 * (1.0 + std::abs(mean));  // degenerate support
        return h;
    }

    double bandwidth() const { return bandwidth_; }
    const std::vector<double>& support() const { return support_; }

    double mean() const {
        double m = 0.0;
        for (double x : support_) m += x;
        return m / support_.size();
    }

    double density(double x) const {
        if (bandwidth_ == 0.0)
            throw NumericError("CoefficientDistribution: density undefined at zero bandwidth");
        const double inv = 1.0 / bandwidth_;
        double acc = 0.0;
        for (double c : support_) {
            const double z = (x - c) * inv;
            acc += std::exp(-0.5 * z * z);
        }
        return acc * inv / (support_.size() * std::sqrt(2.0 * M_PI));
    }

    double sample(std::mt19937_64& rng) const {
        std::uniform_int_distribution<std::size_t> pick(0, support_.size() - 1);
        const double c = support_[pick(rng)];
        if (bandwidth_ == 0.0) return c;
        std::normal_distribution<double> noise(0.0, bandwidth_);
        return c + noise(rng);
    }

private:
    std::vector<double> support_;
    double bandwidth_ = 0.0;
};

inline CoefficientDistribution fit_coefficient_kde(std::vector<double> estimates,
                                                   double bandwidth_override = -1.0) {
    return CoefficientDistribution(std::move(estimates), bandwidth_override);
}

// Predictive pattern for an unseen map: draw a slope from the KDE, form
// eta = beta * m (+ g when a spatial bias is supplied), then sample
// conditional on n. The intercept plays no role after normalization.
// The slope draw uses a separate derived stream so the point stream matches
// sample_conditional_n run with `seed` directly.
inline PointPattern sample_predictive(const CovariateField& new_map,
                                      const CovariateField* bias,
                                      const CoefficientDistribution& coeff, std::size_t n,
                                      const RngSeed& seed, const std::string& group_id = "") {
    if (n < 1) throw ValidationError("sample_predictive: n must be >= 1");
    std::mt19937_64 beta_rng = seed.engine(0x636f6566);  // dedicated slope stream
    const double beta = coeff.sample(beta_rng);
    std::vector<double> eta(new_map.values());
    for (double& v : eta) v *= beta;
    if (bias) {
        if (bias->nx() != new_map.nx() || bias->ny() != new_map.ny() ||
            !(bias->window() == new_map.window()))
            throw ValidationError("sample_predictive: bias grid does not match map grid");
        for (std::size_t j = 0; j < eta.size(); ++j) eta[j] += bias->values()[j];
    }
    const CovariateField eta_field(new_map.window(), new_map.nx(), new_map.ny(), std::move(eta));
    std::mt19937_64 rng = seed.engine();
    return sample_conditional_n(eta_field, n, rng, group_id);
}

// One conditional-on-n replicate per pattern at its fitted log-intensity.
// Pattern i uses stream tag i, so replicates are independent and the whole
// dataset is reproducible from one RngSeed.
inline std::vector<PointPattern> replicate_dataset(const std::vector<CovariateField>& etas,
                                                   const std::vector<std::size_t>& n_per_pattern,
                                                   const std::vector<std::string>& group_ids,
                                                   const RngSeed& seed) {
    if (etas.size() != n_per_pattern.size() || etas.size() != group_ids.size())
        throw ValidationError("replicate_dataset: mismatched input lengths");
    std::vector<PointPattern> out;
    out.reserve(etas.size());
    for (std::size_t i = 0; i < etas.size(); ++i) {
        std::mt19937_64 rng = seed.engine(i + 1);
        out.push_back(sample_conditional_n(etas[i], n_per_pattern[i], rng, group_ids[i]));
    }
    return out;
}

}  // namespace ppfit

#endif  // PPFIT_SIMULATE_HPP
