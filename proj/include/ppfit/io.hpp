// Copyright (c) 2026 the ppfit authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PPFIT_IO_HPP
#define PPFIT_IO_HPP

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppfit/diagnostics.hpp"
#include "ppfit/errors.hpp"
#include "ppfit/geometry.hpp"
#include "ppfit/gp.hpp"
#include "ppfit/metrics.hpp"
#include "ppfit/model.hpp"

namespace ppfit {

// IO failure (missing file, unwritable path); distinct from ValidationError
// so the CLI can map it to its own exit code.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- point pattern CSV: header "group_id,x,y", UTF-8, '.' decimal ----

inline std::vector<PointPattern> read_patterns_csv(std::istream& in,
                                                   const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(source + ": empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "group_id,x,y")
        throw ValidationError(source + ": expected header 'group_id,x,y', got '" + line + "'");
    std::map<std::string, std::size_t> index;
    std::vector<PointPattern> patterns;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ValidationError(source + ": malformed CSV row " + std::to_string(row));
        const std::string gid = line.substr(0, c1);
        double x, y;
        try {
            std::size_t used;
            x = std::stod(line.substr(c1 + 1, c2 - c1 - 1), &used);
            y = std::stod(line.substr(c2 + 1), &used);
        } catch (const std::exception&) {
            throw ValidationError(source + ": non-numeric coordinate in row " +
                                  std::to_string(row));
        }
        auto it = index.find(gid);
        if (it == index.end()) {
            index.emplace(gid, patterns.size());
            patterns.emplace_back(std::vector<Point>{}, gid);
            it = index.find(gid);
        }
        patterns[it->second].points.push_back({x, y});
    }
    return patterns;
}

inline std::vector<PointPattern> read_patterns_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pattern CSV '" + path + "'");
    return read_patterns_csv(in, path);
}

inline void write_patterns_csv(std::ostream& out, const std::vector<PointPattern>& patterns) {
    out << "group_id,x,y\n";
    out.precision(17);
    for (const PointPattern& p : patterns)
        for (const Point& pt : p.points)
            out << p.group_id << ',' << pt.x << ',' << pt.y << '\n';
}

inline void write_patterns_csv_file(const std::string& path,
                                    const std::vector<PointPattern>& patterns) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write pattern CSV '" + path + "'");
    write_patterns_csv(out, patterns);
}

// ---- raster JSON: window bounds + nx/ny header, row-major values ----

inline nlohmann::json window_to_json(const ObservationWindow& w) {
    return {{"x_min", w.x_min}, {"x_max", w.x_max}, {"y_min", w.y_min}, {"y_max", w.y_max}};
}

inline ObservationWindow window_from_json(const nlohmann::json& j) {
    return ObservationWindow(j.at("x_min").get<double>(), j.at("x_max").get<double>(),
                             j.at("y_min").get<double>(), j.at("y_max").get<double>());
}

inline nlohmann::json raster_to_json(const CovariateField& f) {
    return {{"window", window_to_json(f.window())},
            {"nx", f.nx()},
            {"ny", f.ny()},
            {"values", f.values()}};
}

inline CovariateField raster_from_json(const nlohmann::json& j) {
    return CovariateField(window_from_json(j.at("window")), j.at("nx").get<int>(),
                          j.at("ny").get<int>(), j.at("values").get<std::vector<double>>());
}

inline CovariateField read_raster_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open raster '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
        return raster_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("raster '" + path + "': " + e.what());
    }
}

inline void write_raster_file(const std::string& path, const CovariateField& f) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write raster '" + path + "'");
    out << raster_to_json(f).dump(2) << '\n';
}

// Latent field as one raster file with mean and sd layers.
inline nlohmann::json latent_to_json(const LatentField& lf) {
    return {{"window", window_to_json(lf.mean.window())},
            {"nx", lf.mean.nx()},
            {"ny", lf.mean.ny()},
            {"layers", {{"mean", lf.mean.values()}, {"sd", lf.sd.values()}}},
            {"covariance",
             {{"family", to_string(lf.spec.family)},
              {"variance", lf.spec.variance},
              {"decay", lf.spec.decay}}}};
}

// ---- model spec / fit result JSON ----

inline std::string to_string(TermScope s) {
    switch (s) {
        case TermScope::PerPattern: return "per_pattern";
        case TermScope::Shared: return "shared";
        case TermScope::Grouped: return "grouped";
    }
    return "?";
}

inline TermScope term_scope_from_string(const std::string& s) {
    if (s == "per_pattern") return TermScope::PerPattern;
    if (s == "shared") return TermScope::Shared;
    if (s == "grouped") return TermScope::Grouped;
    throw ValidationError("unknown term scope '" + s + "'");
}

inline nlohmann::json model_spec_to_json(const ModelSpec& spec) {
    nlohmann::json terms = nlohmann::json::array();
    for (const Term& t : spec.terms) {
        nlohmann::json jt = {{"covariate", t.covariate}, {"scope", to_string(t.scope)}};
        if (!t.labels.empty()) jt["labels"] = t.labels;
        terms.push_back(jt);
    }
    return {{"terms", terms}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    for (const auto& jt : j.at("terms")) {
        Term t;
        t.covariate = jt.at("covariate").get<std::string>();
        t.scope = term_scope_from_string(jt.at("scope").get<std::string>());
        if (jt.contains("labels")) t.labels = jt.at("labels").get<std::map<std::string, double>>();
        spec.terms.push_back(std::move(t));
    }
    return spec;
}

inline nlohmann::json fit_result_to_json(const FitResult& fit) {
    nlohmann::json coefs = nlohmann::json::array();
    for (const Coefficient& c : fit.coefficients) {
        nlohmann::json jc = {{"name", c.name},
                             {"estimate", c.estimate},
                             {"identifiable", c.identifiable}};
        jc["se"] = std::isfinite(c.se) ? nlohmann::json(c.se) : nlohmann::json();
        coefs.push_back(jc);
    }
    return {{"coefficients", coefs},
            {"loglik", fit.loglik},
            {"convergence",
             {{"iterations", fit.iterations},
              {"grad_norm", fit.grad_norm},
              {"converged", fit.converged}}}};
}

inline FitResult fit_result_from_json(const nlohmann::json& j) {
    FitResult fit;
    for (const auto& jc : j.at("coefficients")) {
        Coefficient c;
        c.name = jc.at("name").get<std::string>();
        c.estimate = jc.at("estimate").get<double>();
        c.identifiable = jc.at("identifiable").get<bool>();
        c.se = jc.at("se").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                     : jc.at("se").get<double>();
        fit.coefficients.push_back(std::move(c));
    }
    fit.loglik = j.at("loglik").get<double>();
    fit.iterations = j.at("convergence").at("iterations").get<int>();
    fit.grad_norm = j.at("convergence").at("grad_norm").get<double>();
    fit.converged = j.at("convergence").at("converged").get<bool>();
    return fit;
}

// ---- metric report / diagnostics ----

inline nlohmann::json metric_report_to_json(const MetricReport& rep) {
    nlohmann::json areas = nlohmann::json::object();
    for (const auto& [q, v] : rep.area_counts) {
        std::ostringstream key;
        key << q;
        areas[key.str()] = v;
    }
    nlohmann::json j = {{"auc", rep.auc}, {"a_c", rep.a_c}, {"area_counts", areas}};
    j["auc_shuffled"] =
        std::isfinite(rep.auc_shuffled) ? nlohmann::json(rep.auc_shuffled) : nlohmann::json();
    return j;
}

inline void write_volume_curve_csv(const std::string& path, const VolumeCurve& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write volume curve '" + path + "'");
    out << "alpha,volume\n";
    out.precision(17);
    for (std::size_t i = 0; i < curve.alphas.size(); ++i)
        out << curve.alphas[i] << ',' << curve.volumes[i] << '\n';
}

inline nlohmann::json histogram_to_json(const Histogram& h) {
    return {{"edges", h.edges}, {"counts", h.counts}};
}

inline void write_histogram_csv(const std::string& path, const Histogram& data,
                                const Histogram& replicates) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write histogram '" + path + "'");
    out << "bin_lo,bin_hi,data,replicate_mean\n";
    out.precision(17);
    for (std::size_t b = 0; b < data.counts.size(); ++b)
        out << data.edges[b] << ',' << data.edges[b + 1] << ',' << data.counts[b] << ','
            << replicates.counts[b] << '\n';
}

inline nlohmann::json diagnostic_summary_to_json(const DiagnosticSummary& s) {
    nlohmann::json regions = nlohmann::json::array();
    for (const RegionDiagnostic& r : s.regions)
        regions.push_back({{"region", r.region},
                           {"observed", r.observed},
                           {"replicate_mean", r.replicate_mean},
                           {"lower", r.lower},
                           {"upper", r.upper},
                           {"flagged_low", r.flagged_low},
                           {"flagged_high", r.flagged_high}});
    return {{"regions", regions},
            {"chi2", s.chi2},
            {"n_replicates", s.n_replicates},
            {"flag_count", s.flag_count()},
            {"margin_x",
             {{"data", histogram_to_json(s.margin_x_data)},
              {"replicates", histogram_to_json(s.margin_x_replicates)}}},
            {"margin_y",
             {{"data", histogram_to_json(s.margin_y_data)},
              {"replicates", histogram_to_json(s.margin_y_replicates)}}}};
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("'") + path + "': " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

}  // namespace ppfit

#endif  // PPFIT_IO_HPP
