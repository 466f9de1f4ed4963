// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ppfit/metrics.hpp"
#include "ppfit/model.hpp"
#include "ppfit/simulate.hpp"

using namespace ppfit;

namespace {

const ObservationWindow kUnit(0.0, 1.0, 0.0, 1.0);

// Brute-force all-pairs 2AFC probability over grid cells: an independent
// O(r^2) oracle for auc_optimal's sorted sweep.
double pc_brute_force(const CovariateField& score, const CovariateField& lambda,
                      const CovariateField& phi) {
    const GridDiscretization grid = discretization_of(lambda);
    const std::size_t r = grid.node_count();
    std::vector<double> lm(r), cm(r);
    double ls = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
        lm[j] = grid.weight(j) * lambda.values()[j];
        cm[j] = grid.weight(j) * phi.values()[j];
        ls += lm[j];
        cs += cm[j];
    }
    double pc = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            if (score.values()[i] > score.values()[j])
                pc += lm[i] * cm[j];
            else if (score.values()[i] == score.values()[j])
                pc += 0.5 * lm[i] * cm[j];
        }
    return pc / (ls * cs);
}

// 80/20 two-level density on the unit square: value high on the left strip
// of relative area 0.2, carrying mass 0.8.
CovariateField two_level_density(int n = 201) {
    // high level = 0.8/0.2 = 4, low level = 0.2/0.8 = 0.25
    return CovariateField::from_function(kUnit, n, n, [](double x, double) {
        return x < 0.2 ? 4.0 : 0.25;
    });
}

PointPattern uniform_controls(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng = RngSeed{seed, 0}.engine();
    PointPattern p({}, "ctrl");
    for (std::size_t i = 0; i < n; ++i) p.points.push_back(detail::uniform_point(kUnit, rng));
    return p;
}

}  // namespace

TEST_CASE("contour_volume_curve on a uniform density") {
    const CovariateField uni = CovariateField::constant(kUnit, 21, 21, 1.0);
    const VolumeCurve curve = contour_volume_curve(uni);
    CHECK(curve.volumes.front() == 0.0);
    CHECK(curve.volumes.back() == doctest::Approx(1.0));
    // V(alpha) = alpha within one-cell resolution
    const double cell = 1.0 / (20.0 * 20.0);
    for (std::size_t k = 0; k < curve.alphas.size(); ++k) {
        CHECK(curve.volumes[k] >= curve.alphas[k] - 1e-12);
        CHECK(curve.volumes[k] <= curve.alphas[k] + 2.0 * cell);
    }
    CHECK(curve.integral() == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("contour_volume_curve monotonicity and endpoints") {
    std::mt19937_64 rng = RngSeed{70, 0}.engine();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> vals(15 * 15);
    for (double& v : vals) v = u(rng);
    CovariateField dens(kUnit, 15, 15, vals);
    const double total = integrate_field(dens);
    for (double& v : dens.values()) v /= total;
    const VolumeCurve curve = contour_volume_curve(dens);
    CHECK(curve.volumes.front() == 0.0);
    CHECK(curve.volumes.back() == doctest::Approx(1.0));
    for (std::size_t k = 1; k < curve.volumes.size(); ++k)
        CHECK(curve.volumes[k] >= curve.volumes[k - 1]);
}

TEST_CASE("contour_volume_curve concentrated and two-level densities") {
    SUBCASE("single hot cell") {
        std::vector<double> vals(11 * 11, 0.0);
        vals[5 * 11 + 5] = 1.0;
        CovariateField dens(kUnit, 11, 11, vals);
        const GridDiscretization grid = discretization_of(dens);
        const double cell_rel = grid.weight(5 * 11 + 5) / kUnit.area();
        const VolumeCurve curve = contour_volume_curve(dens);
        for (std::size_t k = 0; k < curve.alphas.size(); ++k) {
            if (curve.alphas[k] <= 0.0) continue;
            CHECK(curve.volumes[k] == doctest::Approx(cell_rel));
        }
    }

    SUBCASE("80/20 construction: V(0.8) = 0.2") {
        const VolumeCurve curve = contour_volume_curve(two_level_density());
        // find alpha = 0.8 on the default ladder
        for (std::size_t k = 0; k < curve.alphas.size(); ++k)
            if (std::abs(curve.alphas[k] - 0.8) < 1e-12)
                CHECK(curve.volumes[k] == doctest::Approx(0.2).epsilon(0.05));
        // analytic integral of V for this density is 0.2
        CHECK(curve.integral() == doctest::Approx(0.2).epsilon(0.05));
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(contour_volume_curve(CovariateField::constant(kUnit, 3, 3, 0.0)),
                        ValidationError);
        CHECK_THROWS_AS(contour_volume_curve(CovariateField::constant(kUnit, 3, 3, -1.0)),
                        ValidationError);
    }
}

TEST_CASE("auc_2afc") {
    const CovariateField ramp =
        CovariateField::from_function(kUnit, 9, 9, [](double x, double) { return x; });

    SUBCASE("constant map scores exactly one half") {
        const CovariateField flat = CovariateField::constant(kUnit, 5, 5, 7.0);
        const PointPattern f = uniform_controls(40, 71);
        const PointPattern c = uniform_controls(60, 72);
        CHECK(auc_2afc(flat, f, c) == 0.5);
    }

    SUBCASE("perfect separation scores one") {
        PointPattern f({{0.9, 0.5}, {0.95, 0.2}, {0.99, 0.8}});
        PointPattern c({{0.1, 0.5}, {0.2, 0.3}});
        CHECK(auc_2afc(ramp, f, c) == 1.0);
        CHECK(auc_2afc(ramp, c, f) == 0.0);
    }

    SUBCASE("matches the naive all-pairs computation") {
        const PointPattern f = uniform_controls(37, 73);
        const PointPattern c = uniform_controls(53, 74);
        double naive = 0.0;
        for (const Point& a : f.points)
            for (const Point& b : c.points) {
                const double ma = ramp(a.x, a.y), mb = ramp(b.x, b.y);
                naive += ma > mb ? 1.0 : (ma == mb ? 0.5 : 0.0);
            }
        naive /= f.size() * c.size();
        CHECK(auc_2afc(ramp, f, c) == doctest::Approx(naive).epsilon(1e-12));
    }

    SUBCASE("invariant under strictly increasing transforms") {
        const PointPattern f = uniform_controls(80, 75);
        const PointPattern c = uniform_controls(80, 76);
        const double base = auc_2afc(ramp, f, c);
        CovariateField warped = ramp;
        for (double& v : warped.values()) v = std::exp(3.0 * v) - 5.0;
        CHECK(auc_2afc(warped, f, c) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("chance level for uniform fixations") {
        const PointPattern f = uniform_controls(2000, 77);
        const PointPattern c = uniform_controls(2000, 78);
        CHECK(auc_2afc(ramp, f, c) == doctest::Approx(0.5).epsilon(0.05));
    }

    CHECK_THROWS_AS(auc_2afc(ramp, PointPattern{}, uniform_controls(3, 79)), ValidationError);
}

TEST_CASE("auc_optimal") {
    SUBCASE("uniform vs uniform is one half") {
        const CovariateField uni = CovariateField::constant(kUnit, 9, 9, 1.0);
        CHECK(auc_optimal(uni) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(auc_optimal(uni, &uni) == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("non-uniform control with uniform target still beats chance") {
        const CovariateField uni = CovariateField::constant(kUnit, 15, 15, 1.0);
        const CovariateField phi =
            CovariateField::from_function(kUnit, 15, 15, [](double x, double y) {
                return 0.2 + std::exp(-6.0 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)));
            });
        CHECK(auc_optimal(uni, &phi) > 0.5);
    }

    SUBCASE("two-level density: p_c = 1 - integral of V = 0.8") {
        CHECK(auc_optimal(two_level_density()) == doctest::Approx(0.8).epsilon(0.02));
    }

    SUBCASE("agrees with the brute-force double quadrature") {
        std::mt19937_64 rng = RngSeed{80, 0}.engine();
        std::uniform_real_distribution<double> u(0.1, 2.0);
        std::vector<double> lv(8 * 8), pv(8 * 8);
        for (double& v : lv) v = u(rng);
        for (double& v : pv) v = u(rng);
        const CovariateField lambda(kUnit, 8, 8, lv);
        const CovariateField phi(kUnit, 8, 8, pv);
        std::vector<double> ratio(lv.size());
        for (std::size_t j = 0; j < lv.size(); ++j) ratio[j] = lv[j] / pv[j];
        const CovariateField score(kUnit, 8, 8, ratio);
        CHECK(auc_optimal(lambda, &phi) ==
              doctest::Approx(pc_brute_force(score, lambda, phi)).epsilon(1e-12));
    }

    SUBCASE("ill-posed ratio is rejected") {
        std::vector<double> pv(3 * 3, 1.0);
        pv[4] = 0.0;
        const CovariateField phi(kUnit, 3, 3, pv);
        const CovariateField lambda = CovariateField::constant(kUnit, 3, 3, 1.0);
        CHECK_THROWS_AS(auc_optimal(lambda, &phi), ValidationError);
    }
}

TEST_CASE("shuffled_auc_correction") {
    const CovariateField phi =
        CovariateField::from_function(kUnit, 21, 21, [](double x, double y) {
            return 0.3 + 2.0 * std::exp(-5.0 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)));
        });

    SUBCASE("uniform control leaves the ranking unchanged") {
        const CovariateField m =
            CovariateField::from_function(kUnit, 21, 21, [](double x, double y) {
                return 0.1 + x + 0.5 * y;
            });
        const CovariateField uni = CovariateField::constant(kUnit, 21, 21, 2.0);
        const SaliencyMap corrected = shuffled_auc_correction(m, uni);
        const PointPattern f = uniform_controls(150, 81);
        const PointPattern c = uniform_controls(150, 82);
        CHECK(auc_2afc(corrected, f, c) == doctest::Approx(auc_2afc(m, f, c)).epsilon(1e-12));
    }

    SUBCASE("m equal to phi collapses to a constant map") {
        const SaliencyMap corrected = shuffled_auc_correction(phi, phi);
        CHECK(corrected.max_value() - corrected.min_value() < 1e-12);
        const PointPattern f = uniform_controls(50, 83);
        const PointPattern c = uniform_controls(50, 84);
        CHECK(auc_2afc(corrected, f, c) == 0.5);
    }

    SUBCASE("correction rescues a center-dark map under center-biased data") {
        // lambda ~ m * phi with m darker at the center: raw AUC is dragged
        // down by the bias; the corrected map scores higher against
        // phi-distributed controls
        const CovariateField m =
            CovariateField::from_function(kUnit, 21, 21, [](double x, double y) {
                return 0.2 + (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
            });
        std::vector<double> eta(m.node_count());
        for (std::size_t j = 0; j < eta.size(); ++j)
            eta[j] = std::log(m.values()[j] * phi.values()[j]);
        const CovariateField log_lambda(kUnit, 21, 21, std::move(eta));
        std::mt19937_64 rng = RngSeed{85, 0}.engine();
        const PointPattern fix = sample_conditional_n(log_lambda, 3000, rng);

        const PointPattern uni_ctrl = uniform_controls(3000, 86);
        std::vector<double> log_phi(phi.values());
        for (double& v : log_phi) v = std::log(v);
        std::mt19937_64 crng = RngSeed{87, 0}.engine();
        const PointPattern phi_ctrl =
            sample_conditional_n(CovariateField(kUnit, 21, 21, std::move(log_phi)), 3000, crng);

        const double raw = auc_2afc(m, fix, uni_ctrl);
        const double corrected = auc_2afc(shuffled_auc_correction(m, phi), fix, phi_ctrl);
        CHECK(corrected > raw);
    }

    SUBCASE("non-positive control intensity is rejected") {
        const CovariateField zero = CovariateField::constant(kUnit, 21, 21, 0.0);
        CHECK_THROWS_AS(shuffled_auc_correction(phi, zero), ValidationError);
        const CovariateField other = CovariateField::constant(kUnit, 5, 5, 1.0);
        CHECK_THROWS_AS(shuffled_auc_correction(phi, other), ValidationError);
    }
}

TEST_CASE("area_count") {
    const CovariateField m = two_level_density();

    SUBCASE("q outside (0,1) is rejected") {
        const PointPattern f = uniform_controls(10, 90);
        CHECK_THROWS_AS(area_count(m, f, 0.0), ValidationError);
        CHECK_THROWS_AS(area_count(m, f, 1.0), ValidationError);
        CHECK_THROWS_AS(area_count(m, PointPattern{}, 0.5), ValidationError);
    }

    SUBCASE("chance level on a constant map") {
        const CovariateField flat = CovariateField::constant(kUnit, 21, 21, 1.0);
        const PointPattern f = uniform_controls(5000, 91);
        for (double q : {0.2, 0.5, 0.8})
            CHECK(area_count(flat, f, q) == doctest::Approx(q).epsilon(0.15));
    }

    SUBCASE("all fixations in the top set") {
        PointPattern f({{0.05, 0.3}, {0.1, 0.9}, {0.15, 0.5}});  // inside the hot strip
        CHECK(area_count(m, f, 0.2) == 1.0);
    }

    SUBCASE("two-level construction: area_count(0.2) near 0.8") {
        std::mt19937_64 rng = RngSeed{92, 0}.engine();
        std::vector<double> log_m(m.values());
        for (double& v : log_m) v = std::log(v);
        const PointPattern f =
            sample_conditional_n(CovariateField(kUnit, 201, 201, std::move(log_m)), 5000, rng);
        CHECK(area_count(m, f, 0.2) == doctest::Approx(0.8).epsilon(0.05));
    }
}

TEST_CASE("area_count_integral") {
    SUBCASE("constant map integrates to one half") {
        const CovariateField flat = CovariateField::constant(kUnit, 21, 21, 3.0);
        const PointPattern f = uniform_controls(4000, 93);
        CHECK(area_count_integral(flat, f) == doctest::Approx(0.5).epsilon(0.05));
    }

    SUBCASE("point-mass predictor approaches one as the grid refines") {
        PointPattern f({{0.5, 0.5}, {0.5, 0.5}});
        double prev = 0.0;
        for (int n : {11, 41, 161}) {
            std::vector<double> vals(static_cast<std::size_t>(n) * n, 0.0);
            const CovariateField m0(kUnit, n, n, vals);
            std::vector<double> vals2(vals);
            vals2[(n / 2) * n + n / 2] = 1.0;
            const CovariateField m(kUnit, n, n, std::move(vals2));
            const double ac = area_count_integral(m, f);
            CHECK(ac >= prev);
            prev = ac;
        }
        CHECK(prev > 0.95);
    }

    SUBCASE("agrees with the empirical AUC against dense uniform controls") {
        const CovariateField m =
            CovariateField::from_function(kUnit, 33, 33, [](double x, double y) {
                return std::exp(-4.0 * ((x - 0.4) * (x - 0.4) + (y - 0.6) * (y - 0.6)));
            });
        std::vector<double> eta(m.node_count());
        for (std::size_t j = 0; j < eta.size(); ++j) eta[j] = 2.0 * m.values()[j];
        const CovariateField log_lambda(kUnit, 33, 33, std::move(eta));
        std::mt19937_64 rng = RngSeed{94, 0}.engine();
        const PointPattern fix = sample_conditional_n(log_lambda, 6000, rng);
        const PointPattern ctrl = uniform_controls(6000, 95);
        const double auc = auc_2afc(log_lambda, fix, ctrl);
        const double ac = area_count_integral(log_lambda, fix);
        CHECK(std::abs(ac - auc) < 0.01);
    }
}

TEST_CASE("spatial_logistic_fit") {
    SUBCASE("intercept-only on a homogeneous pattern") {
        const GridDiscretization grid(kUnit, 40, 40);
        std::mt19937_64 rng = RngSeed{96, 0}.engine();
        const PointPattern p = sample_homogeneous(kUnit, 300.0, rng);
        const LogisticFit fit = spatial_logistic_fit(p, {}, grid);
        CHECK(fit.converged);
        const BinnedCounts counts = bin_pattern(p, grid);
        int occ = 0;
        for (int k : counts.counts)
            if (k > 0) ++occ;
        const double frac = static_cast<double>(occ) / grid.node_count();
        CHECK(fit.intercept == doctest::Approx(std::log(frac / (1.0 - frac))).epsilon(1e-6));
    }

    SUBCASE("intercept tracks alpha + log(pixel area) on fine grids") {
        const GridDiscretization fine(kUnit, 101, 101);
        const double alpha = std::log(900.0);
        std::mt19937_64 rng = RngSeed{97, 0}.engine();
        const PointPattern p = sample_homogeneous(kUnit, 900.0, rng);
        const LogisticFit fit = spatial_logistic_fit(p, {}, fine);
        const double pixel = fine.dx() * fine.dy();
        CHECK(fit.intercept == doctest::Approx(alpha + std::log(pixel)).epsilon(0.1));
    }

    SUBCASE("coarse grids with heavy multi-occupancy are rejected") {
        const GridDiscretization coarse(kUnit, 4, 4);
        std::mt19937_64 rng = RngSeed{98, 0}.engine();
        const PointPattern p = sample_homogeneous(kUnit, 500.0, rng);
        try {
            spatial_logistic_fit(p, {}, coarse);
            FAIL("expected rejection");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("finer grid") != std::string::npos);
        }
    }

    SUBCASE("slope agrees with the IPP slope on a fine grid") {
        const CovariateField m =
            CovariateField::from_function(kUnit, 129, 129, [](double x, double) { return x; });
        const double beta = 1.2;
        const double integral = integrate_field(m, [&](double v) { return std::exp(beta * v); });
        const double alpha = std::log(600.0 / integral);
        std::vector<double> eta(m.values());
        for (double& v : eta) v = alpha + beta * v;
        std::mt19937_64 rng = RngSeed{99, 0}.engine();
        const PointPattern data =
            sample_thinning(CovariateField(kUnit, 129, 129, std::move(eta)), rng);

        CovariateSet covs;
        covs.add_shared("m", m);
        ModelSpec spec;
        spec.terms.push_back({"m", TermScope::PerPattern, {}});
        PointPattern named = data;
        named.group_id = "d";
        const FitResult ipp =
            fit_mle(spec, {named}, covs, GridDiscretization(kUnit, 129, 129));
        const double bt_slope = ipp.estimate("m[d]");

        const LogisticFit fit =
            spatial_logistic_fit(data, {&m}, GridDiscretization(kUnit, 160, 160));
        CHECK(fit.converged);
        const double tol = std::max(0.15 * std::abs(bt_slope), 3.0 * fit.slope_se[0]);
        CHECK(std::abs(fit.slopes[0] - bt_slope) < tol);
    }
}

TEST_CASE("patch_logistic_fit") {
    std::mt19937_64 rng = RngSeed{100, 0}.engine();
    std::normal_distribution<double> nrm(0.0, 1.0);

    SUBCASE("identical class distributions give null slopes") {
        std::vector<std::vector<double>> a, b;
        for (int i = 0; i < 400; ++i) {
            a.push_back({nrm(rng)});
            b.push_back({nrm(rng)});
        }
        const LogisticFit fit = patch_logistic_fit(a, b);
        CHECK(fit.converged);
        CHECK(std::abs(fit.slopes[0]) < 3.0 * fit.slope_se[0]);
    }

    SUBCASE("recovers the IPP slope with uniform controls") {
        // fixated ~ lambda proportional to exp(2.5 v) with v = x on [0,1]
        const CovariateField v =
            CovariateField::from_function(kUnit, 65, 65, [](double x, double) { return x; });
        std::vector<double> eta(v.values());
        for (double& x : eta) x *= 2.5;
        std::mt19937_64 srng = RngSeed{101, 0}.engine();
        const PointPattern fix =
            sample_conditional_n(CovariateField(kUnit, 65, 65, std::move(eta)), 5000, srng);
        const PointPattern ctrl = uniform_controls(5000, 102);
        std::vector<std::vector<double>> fv, cv;
        for (const Point& p : fix.points) fv.push_back({v(p.x, p.y)});
        for (const Point& p : ctrl.points) cv.push_back({v(p.x, p.y)});
        const LogisticFit fit = patch_logistic_fit(fv, cv);
        CHECK(fit.converged);
        CHECK(std::abs(fit.slopes[0] - 2.5) < 3.0 * fit.slope_se[0]);

        // doubling the controls shifts the intercept by about -log 2 and
        // leaves the slope within noise
        std::vector<std::vector<double>> cv2 = cv;
        const PointPattern ctrl2 = uniform_controls(5000, 103);
        for (const Point& p : ctrl2.points) cv2.push_back({v(p.x, p.y)});
        const LogisticFit fit2 = patch_logistic_fit(fv, cv2);
        CHECK(std::abs(fit2.slopes[0] - fit.slopes[0]) < 3.0 * fit.slope_se[0]);
        CHECK(fit2.intercept - fit.intercept ==
              doctest::Approx(-std::log(2.0)).epsilon(0.15));
    }

    SUBCASE("perfect separation is flagged") {
        std::vector<std::vector<double>> a, b;
        for (int i = 0; i < 50; ++i) {
            a.push_back({1.0 + 0.01 * i});
            b.push_back({-1.0 - 0.01 * i});
        }
        const LogisticFit fit = patch_logistic_fit(a, b);
        CHECK(fit.separation);
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(patch_logistic_fit({}, {{1.0}}), ValidationError);
        CHECK_THROWS_AS(patch_logistic_fit({{1.0}}, {{1.0, 2.0}}), ValidationError);
    }
}
