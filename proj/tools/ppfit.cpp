// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: fit, simulate, evaluate, diagnose. Every run is
// driven by a JSON config plus a mandatory seed, and writes deterministic
// artifacts into the output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ppfit/diagnostics.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/gp.hpp"
#include "ppfit/io.hpp"
#include "ppfit/likelihood.hpp"
#include "ppfit/metrics.hpp"
#include "ppfit/model.hpp"
#include "ppfit/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitIo = 4;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::string out_dir = "out";
    int threads = 1;
};

json load_config(const GlobalOptions& opts) {
    json cfg = ppfit::read_json_file(opts.config_path);
    if (opts.seed_override) cfg["seed"] = *opts.seed_override;
    if (!cfg.contains("seed"))
        throw ppfit::ValidationError("config: 'seed' is mandatory (no wall-clock default)");
    return cfg;
}

fs::path resolve_relative(const std::string& path, const std::string& config_path) {
    fs::path p(path);
    if (p.is_absolute()) return p;
    return fs::path(config_path).parent_path() / p;
}

// Covariate entries are either a path (shared raster) or
// {"per_pattern": {group_id: path}}.
ppfit::CovariateSet load_covariates(const json& cfg, const std::string& config_path) {
    ppfit::CovariateSet set;
    if (!cfg.contains("covariates")) return set;
    for (const auto& [name, entry] : cfg.at("covariates").items()) {
        if (entry.is_string()) {
            set.add_shared(name, ppfit::read_raster_file(
                                     resolve_relative(entry.get<std::string>(), config_path)
                                         .string()));
        } else if (entry.is_object() && entry.contains("per_pattern")) {
            for (const auto& [gid, path] : entry.at("per_pattern").items())
                set.add(name, gid,
                        ppfit::read_raster_file(
                            resolve_relative(path.get<std::string>(), config_path).string()));
        } else {
            throw ppfit::ValidationError("config: covariate '" + name +
                                         "' must be a path or {\"per_pattern\": {...}}");
        }
    }
    return set;
}

ppfit::GridDiscretization grid_from_config(const json& cfg, const ppfit::ObservationWindow& win) {
    int nx = 64, ny = 64;
    if (cfg.contains("grid")) {
        nx = cfg.at("grid").value("nx", 64);
        ny = cfg.at("grid").value("ny", 64);
    }
    return ppfit::GridDiscretization(win, nx, ny);
}

ppfit::ObservationWindow window_from_config(const json& cfg, const ppfit::CovariateSet& covs,
                                            const std::vector<std::string>& names) {
    if (cfg.contains("window")) return ppfit::window_from_json(cfg.at("window"));
    // fall back to the window of the first shared covariate
    for (const std::string& name : names)
        if (covs.has(name)) return covs.resolve(name, "").window();
    throw ppfit::ValidationError("config: no 'window' and no covariate to take it from");
}

ppfit::CovarianceSpec covariance_from_json(const json& j) {
    const std::string fam = j.value("family", "matern52");
    ppfit::CovarianceFamily family;
    if (fam == "matern52")
        family = ppfit::CovarianceFamily::Matern52;
    else if (fam == "matern32")
        family = ppfit::CovarianceFamily::Matern32;
    else if (fam == "squared_exponential")
        family = ppfit::CovarianceFamily::SquaredExponential;
    else
        throw ppfit::ValidationError("config: unknown covariance family '" + fam + "'");
    return ppfit::CovarianceSpec(family, j.value("variance", 1.0), j.value("decay", 1.0));
}

int cmd_fit(const GlobalOptions& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("patterns")) throw ppfit::ValidationError("config: 'patterns' required");
    if (!cfg.contains("model")) throw ppfit::ValidationError("config: 'model' required");

    const auto patterns = ppfit::read_patterns_csv_file(
        resolve_relative(cfg.at("patterns").get<std::string>(), opts.config_path).string());
    const ppfit::CovariateSet covariates = load_covariates(cfg, opts.config_path);
    const ppfit::ModelSpec spec = ppfit::model_spec_from_json(cfg.at("model"));
    for (const ppfit::Term& t : spec.terms)
        if (!covariates.has(t.covariate))
            throw ppfit::ValidationError("config: term covariate '" + t.covariate +
                                         "' not provided");

    std::vector<std::string> names;
    for (const ppfit::Term& t : spec.terms) names.push_back(t.covariate);
    const ppfit::ObservationWindow win = window_from_config(cfg, covariates, names);
    const ppfit::GridDiscretization grid = grid_from_config(cfg, win);

    fs::create_directories(opts.out_dir);

    json artifact;
    artifact["model"] = cfg.at("model");
    artifact["window"] = ppfit::window_to_json(win);
    artifact["grid"] = {{"nx", grid.nx()}, {"ny", grid.ny()}};

    if (cfg.at("model").contains("latent")) {
        const json& jl = cfg.at("model").at("latent");
        std::vector<ppfit::CovarianceSpec> candidates;
        if (jl.contains("candidates"))
            for (const auto& jc : jl.at("candidates")) candidates.push_back(covariance_from_json(jc));
        else
            candidates.push_back(covariance_from_json(jl));
        ppfit::LatentFitOptions lopts;
        const ppfit::CovarianceSpec chosen =
            candidates.size() == 1
                ? candidates.front()
                : ppfit::select_hyperparameters(spec, patterns, covariates, grid, candidates,
                                                lopts);
        ppfit::LatentFitResult res =
            ppfit::fit_map_latent(spec, patterns, covariates, grid, chosen, lopts);
        artifact["fit"] = ppfit::fit_result_to_json(res.parametric);
        artifact["map_objective"] = res.map_objective;
        artifact["log_evidence"] = res.log_evidence;
        ppfit::write_json_file((fs::path(opts.out_dir) / "latent.json").string(),
                               ppfit::latent_to_json(res.latent));
    } else {
        const ppfit::FitResult fit = ppfit::fit_mle(spec, patterns, covariates, grid);
        artifact["fit"] = ppfit::fit_result_to_json(fit);
    }
    ppfit::write_json_file((fs::path(opts.out_dir) / "fit.json").string(), artifact);
    return kExitOk;
}

int cmd_simulate(const GlobalOptions& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("simulate")) throw ppfit::ValidationError("config: 'simulate' required");
    const json& sim = cfg.at("simulate");
    const std::string mode = sim.value("mode", "");
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const int n_draws = sim.value("n_draws", 1);
    if (n_draws < 1) throw ppfit::ValidationError("config: n_draws must be >= 1");

    fs::create_directories(opts.out_dir);

    auto draw_file = [&](int k) {
        return (fs::path(opts.out_dir) / ("sim_" + std::to_string(k) + ".csv")).string();
    };

    if (mode == "homogeneous") {
        const double lambda0 = sim.at("lambda0").get<double>();
        const ppfit::ObservationWindow win = ppfit::window_from_json(cfg.at("window"));
        for (int k = 0; k < n_draws; ++k) {
            auto rng = ppfit::RngSeed{seed, static_cast<std::uint64_t>(k)}.engine();
            const ppfit::PointPattern p =
                ppfit::sample_homogeneous(win, lambda0, rng, sim.value("group_id", "sim"));
            ppfit::write_patterns_csv_file(draw_file(k), {p});
        }
        return kExitOk;
    }

    // model-based modes need a log-intensity source: an eta raster or a fit artifact
    std::vector<std::pair<std::string, ppfit::CovariateField>> etas;
    if (sim.contains("eta")) {
        etas.emplace_back(sim.value("group_id", "sim"),
                          ppfit::read_raster_file(
                              resolve_relative(sim.at("eta").get<std::string>(), opts.config_path)
                                  .string()));
    } else if (sim.contains("fit")) {
        const json artifact = ppfit::read_json_file(
            resolve_relative(sim.at("fit").get<std::string>(), opts.config_path).string());
        const ppfit::ModelSpec spec = ppfit::model_spec_from_json(artifact.at("model"));
        const ppfit::FitResult fit = ppfit::fit_result_from_json(artifact.at("fit"));
        const ppfit::CovariateSet covariates = load_covariates(cfg, opts.config_path);
        const ppfit::ObservationWindow win = ppfit::window_from_json(artifact.at("window"));
        const ppfit::GridDiscretization grid(win, artifact.at("grid").at("nx").get<int>(),
                                             artifact.at("grid").at("ny").get<int>());
        for (const ppfit::Coefficient& c : fit.coefficients) {
            if (c.name.rfind("alpha[", 0) != 0) continue;
            const std::string gid = c.name.substr(6, c.name.size() - 7);
            etas.emplace_back(gid,
                              ppfit::eta_from_coefficients(spec, fit, covariates, grid, gid));
        }
    } else {
        throw ppfit::ValidationError("config: simulate needs 'eta', 'fit', or homogeneous mode");
    }

    if (mode == "thinning") {
        for (int k = 0; k < n_draws; ++k) {
            std::vector<ppfit::PointPattern> out;
            for (std::size_t i = 0; i < etas.size(); ++i) {
                auto rng = ppfit::RngSeed{seed, static_cast<std::uint64_t>(k)}.engine(i + 1);
                out.push_back(ppfit::sample_thinning(etas[i].second, rng, etas[i].first));
            }
            ppfit::write_patterns_csv_file(draw_file(k), out);
        }
    } else if (mode == "conditional_n") {
        const std::size_t n = sim.at("n").get<std::size_t>();
        for (int k = 0; k < n_draws; ++k) {
            std::vector<ppfit::PointPattern> out;
            for (std::size_t i = 0; i < etas.size(); ++i) {
                auto rng = ppfit::RngSeed{seed, static_cast<std::uint64_t>(k)}.engine(i + 1);
                out.push_back(ppfit::sample_conditional_n(etas[i].second, n, rng, etas[i].first));
            }
            ppfit::write_patterns_csv_file(draw_file(k), out);
        }
    } else {
        throw ppfit::ValidationError("config: unknown simulate mode '" + mode + "'");
    }
    return kExitOk;
}

int cmd_evaluate(const GlobalOptions& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("evaluate")) throw ppfit::ValidationError("config: 'evaluate' required");
    const json& ev = cfg.at("evaluate");
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

    const ppfit::SaliencyMap saliency = ppfit::read_raster_file(
        resolve_relative(ev.at("saliency").get<std::string>(), opts.config_path).string());
    const auto patterns = ppfit::read_patterns_csv_file(
        resolve_relative(ev.at("patterns").get<std::string>(), opts.config_path).string());
    ppfit::PointPattern pooled;
    for (const auto& p : patterns) {
        p.check_in_window(saliency.window());
        pooled.points.insert(pooled.points.end(), p.points.begin(), p.points.end());
    }
    if (pooled.empty()) throw ppfit::ValidationError("evaluate: no fixations");

    const int n_controls = ev.value("n_uniform_controls", 10000);
    auto rng = ppfit::RngSeed{seed, 0}.engine();
    ppfit::PointPattern controls({}, "control");
    controls.points.reserve(n_controls);
    for (int i = 0; i < n_controls; ++i)
        controls.points.push_back(ppfit::detail::uniform_point(saliency.window(), rng));

    ppfit::MetricReport report;
    report.auc = ppfit::auc_2afc(saliency, pooled, controls);
    report.a_c = ppfit::area_count_integral(saliency, pooled);
    std::vector<double> qs = {0.2, 0.5};
    if (ev.contains("q_values")) qs = ev.at("q_values").get<std::vector<double>>();
    for (double q : qs) report.area_counts[q] = ppfit::area_count(saliency, pooled, q);

    if (ev.contains("control_intensity")) {
        const ppfit::CovariateField phi = ppfit::read_raster_file(
            resolve_relative(ev.at("control_intensity").get<std::string>(), opts.config_path)
                .string());
        const ppfit::SaliencyMap corrected = ppfit::shuffled_auc_correction(saliency, phi);
        auto crng = ppfit::RngSeed{seed, 1}.engine();
        ppfit::CovariateField log_phi = phi;
        for (double& v : log_phi.values()) v = std::log(v);
        const ppfit::PointPattern biased_controls =
            ppfit::sample_conditional_n(log_phi, n_controls, crng, "control");
        report.auc_shuffled = ppfit::auc_2afc(corrected, pooled, biased_controls);
    }

    // V(alpha) of the pattern's own empirical density is not defined; the
    // curve reported here is for the saliency map normalized as a density.
    ppfit::CovariateField density = saliency;
    double mn = density.min_value();
    if (mn < 0.0)
        for (double& v : density.values()) v -= mn;
    const double mass = ppfit::integrate_field(density);
    if (mass <= 0.0) throw ppfit::ValidationError("evaluate: saliency map has no mass");
    for (double& v : density.values()) v /= mass;
    report.volume_curve = ppfit::contour_volume_curve(density);

    fs::create_directories(opts.out_dir);
    ppfit::write_json_file((fs::path(opts.out_dir) / "report.json").string(),
                           ppfit::metric_report_to_json(report));
    ppfit::write_volume_curve_csv((fs::path(opts.out_dir) / "volume_curve.csv").string(),
                                  report.volume_curve);
    return kExitOk;
}

int cmd_diagnose(const GlobalOptions& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("diagnose")) throw ppfit::ValidationError("config: 'diagnose' required");
    const json& dg = cfg.at("diagnose");
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

    const int n_replicates = dg.value("n_replicates", 200);
    const json artifact = ppfit::read_json_file(
        resolve_relative(dg.at("fit").get<std::string>(), opts.config_path).string());
    const auto patterns = ppfit::read_patterns_csv_file(
        resolve_relative(dg.at("patterns").get<std::string>(), opts.config_path).string());
    const ppfit::CovariateSet covariates = load_covariates(cfg, opts.config_path);
    const ppfit::ModelSpec spec = ppfit::model_spec_from_json(artifact.at("model"));
    const ppfit::FitResult fit = ppfit::fit_result_from_json(artifact.at("fit"));
    const ppfit::ObservationWindow win = ppfit::window_from_json(artifact.at("window"));
    const ppfit::GridDiscretization grid(win, artifact.at("grid").at("nx").get<int>(),
                                         artifact.at("grid").at("ny").get<int>());

    std::vector<ppfit::CovariateField> etas;
    for (const auto& p : patterns) {
        p.check_in_window(win);
        etas.push_back(ppfit::eta_from_coefficients(spec, fit, covariates, grid, p.group_id));
    }

    ppfit::RegionPartition partition{win, 4, 4};
    if (dg.contains("partition")) {
        partition.kx = dg.at("partition").value("kx", 4);
        partition.ky = dg.at("partition").value("ky", 4);
    }

    const ppfit::DiagnosticSummary summary = ppfit::posterior_predictive_check(
        etas, patterns, n_replicates, partition, ppfit::RngSeed{seed, 0},
        dg.value("margin_bins", 16), opts.threads);

    fs::create_directories(opts.out_dir);
    ppfit::write_json_file((fs::path(opts.out_dir) / "diagnostics.json").string(),
                           ppfit::diagnostic_summary_to_json(summary));
    ppfit::write_histogram_csv((fs::path(opts.out_dir) / "margin_x.csv").string(),
                               summary.margin_x_data, summary.margin_x_replicates);
    ppfit::write_histogram_csv((fs::path(opts.out_dir) / "margin_y.csv").string(),
                               summary.margin_y_data, summary.margin_y_replicates);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-process modelling of fixation patterns"};
    app.require_subcommand(1);
    app.fallthrough();  // accept the global flags after the subcommand too

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "Path to the JSON run config")->required();
    app.add_option("--seed", opts.seed_override, "Override the config seed");
    app.add_option("--out", opts.out_dir, "Output directory");
    app.add_option("--threads", opts.threads, "Worker threads for replicate generation")
        ->check(CLI::PositiveNumber);

    auto* fit = app.add_subcommand("fit", "Fit a model to point patterns");
    auto* simulate = app.add_subcommand("simulate", "Sample patterns from a model");
    auto* evaluate = app.add_subcommand("evaluate", "Score a saliency map against fixations");
    auto* diagnose = app.add_subcommand("diagnose", "Posterior-predictive model criticism");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) return cmd_fit(opts);
        if (simulate->parsed()) return cmd_simulate(opts);
        if (evaluate->parsed()) return cmd_evaluate(opts);
        if (diagnose->parsed()) return cmd_diagnose(opts);
    } catch (const ppfit::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ppfit::ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return kExitConvergence;
    } catch (const ppfit::ConditioningError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return kExitConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitOk;
}
