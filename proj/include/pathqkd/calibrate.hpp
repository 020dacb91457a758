#pragma once

// Fits unpublished scenario parameters to observed targets by bounded
// coordinate search on the sum of squared relative errors. Every evaluation
// is a seed-pinned simulation, so the objective is deterministic.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pathqkd/pipeline.hpp"
#include "pathqkd/scenario.hpp"

namespace pathqkd {

struct FreeParameter {
    std::string path;
    double min = 0.0;
    double max = 0.0;
};

struct CalibrationTarget {
    MetricRequest request;
    double value = 0.0;
    std::optional<double> tolerance;          // relative; falls back to the file-wide value
    std::map<std::string, double> overrides;  // scenario parameters changed for this target only
};

struct CalibrationSpec {
    Scenario scenario;
    std::vector<FreeParameter> free;
    std::vector<CalibrationTarget> targets;
    double tolerance = 0.05;
    int max_iterations = 60;
};

struct TargetResidual {
    std::string metric;
    std::map<std::string, double> overrides;
    double target = 0.0;
    double achieved = 0.0;
    double relative_error = 0.0;
    double tolerance = 0.0;

    bool ok() const { return relative_error < tolerance; }
};

struct CalibrationResult {
    Scenario fitted;
    std::vector<TargetResidual> residuals;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double objective = 0.0;
};

inline CalibrationSpec parse_calibration(const std::string& text, const std::string& source,
                                         const std::filesystem::path& base_dir) {
    using detail::Reader;
    const Json j = detail::parse_text(text, source);
    const Reader r(text, source);
    r.object(j, "");
    r.only(j, "", {"$schema", "scenario", "free", "targets", "tolerance", "max_iterations"});
    CalibrationSpec spec;
    std::string scenario_path;
    r.string(j, "", "scenario", scenario_path);
    if (scenario_path.empty()) r.fail("scenario", "is required (path relative to the targets file)");
    const auto full = (base_dir / scenario_path).string();
    spec.scenario = load_scenario(full);
    r.number(j, "", "tolerance", spec.tolerance);
    if (!(spec.tolerance > 0)) r.fail("tolerance", "must be > 0");
    r.integer(j, "", "max_iterations", spec.max_iterations);
    if (spec.max_iterations < 0) r.fail("max_iterations", "must be >= 0");

    if (j.contains("free")) {
        if (!j.at("free").is_array()) r.fail("free", "must be an array");
        for (std::size_t i = 0; i < j.at("free").size(); ++i) {
            const std::string p = "free[" + std::to_string(i) + "]";
            const Json& e = r.object(j.at("free")[i], p);
            r.only(e, p, {"path", "min", "max"});
            FreeParameter f;
            r.string(e, p, "path", f.path);
            r.number(e, p, "min", f.min);
            r.number(e, p, "max", f.max);
            if (!scenario_param(spec.scenario, f.path)) r.fail(p + ".path", "unknown parameter '" + f.path + "'");
            if (!(f.min < f.max)) r.fail(p, "min must be below max");
            spec.free.push_back(f);
        }
    }
    if (!j.contains("targets") || !j.at("targets").is_array() || j.at("targets").empty())
        r.fail("targets", "must be a non-empty array");
    for (std::size_t i = 0; i < j.at("targets").size(); ++i) {
        const std::string p = "targets[" + std::to_string(i) + "]";
        const Json& e = r.object(j.at("targets")[i], p);
        r.only(e, p, {"metric", "value", "tolerance", "block_size", "overrides"});
        CalibrationTarget t;
        r.string(e, p, "metric", t.request.metric);
        const auto& names = metric_names();
        if (std::find(names.begin(), names.end(), t.request.metric) == names.end())
            r.fail(p + ".metric", "unknown metric '" + t.request.metric + "'");
        if (!e.contains("value")) r.fail(p + ".value", "is required");
        r.number(e, p, "value", t.value);
        if (t.value == 0.0) r.fail(p + ".value", "must be nonzero (relative error)");
        if (e.contains("tolerance")) {
            double tol = 0;
            r.number(e, p, "tolerance", tol);
            if (!(tol > 0)) r.fail(p + ".tolerance", "must be > 0");
            t.tolerance = tol;
        }
        r.number(e, p, "block_size", t.request.block_size);
        if (e.contains("overrides")) {
            const Json& o = r.object(e.at("overrides"), p + ".overrides");
            Scenario probe = spec.scenario;
            for (auto it = o.begin(); it != o.end(); ++it) {
                if (!scenario_param(probe, it.key())) r.fail(p + ".overrides." + it.key(), "unknown parameter");
                if (!it.value().is_number()) r.fail(p + ".overrides." + it.key(), "must be a number");
                t.overrides[it.key()] = it.value().get<double>();
            }
        }
        spec.targets.push_back(t);
    }
    return spec;
}

inline CalibrationSpec load_calibration(const std::string& path) {
    return parse_calibration(read_file(path), path, std::filesystem::path(path).parent_path());
}

namespace detail {

class CalibrationObjective {
public:
    explicit CalibrationObjective(const CalibrationSpec& spec) : spec_(spec) {}

    std::vector<TargetResidual> residuals(const Scenario& s) {
        ++evaluations;
        std::vector<TargetResidual> out;
        for (const auto& t : spec_.targets) {
            Scenario v = s;
            for (const auto& [path, value] : t.overrides) require_scenario_param(v, path) = value;
            TargetResidual r;
            r.metric = t.request.metric;
            r.overrides = t.overrides;
            r.target = t.value;
            r.tolerance = t.tolerance.value_or(spec_.tolerance);
            try {
                validate(v.link);
                r.achieved = eval_.evaluate(v, t.request);
                r.relative_error = std::abs(r.achieved - t.value) / std::abs(t.value);
            } catch (const ConfigError&) {
                r.achieved = std::nan("");
                r.relative_error = 1e6;
            } catch (const DomainError&) {
                r.achieved = std::nan("");
                r.relative_error = 1e6;
            }
            out.push_back(r);
        }
        return out;
    }

    static double objective(const std::vector<TargetResidual>& rs) {
        double f = 0.0;
        for (const auto& r : rs) f += (r.relative_error / r.tolerance) * (r.relative_error / r.tolerance);
        return f;
    }

    int evaluations = 0;

private:
    const CalibrationSpec& spec_;
    MetricEvaluator eval_;
};

inline bool all_ok(const std::vector<TargetResidual>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const TargetResidual& r) { return r.ok(); });
}

}  // namespace detail

// Coordinate search: each sweep tries a step up and down in every free
// parameter and keeps moving while the objective improves; steps halve after
// a sweep without improvement. Terms are weighted by their tolerance.
inline CalibrationResult calibrate(const CalibrationSpec& spec) {
    detail::CalibrationObjective obj(spec);
    CalibrationResult res;
    Scenario best = spec.scenario;
    std::vector<TargetResidual> best_r = obj.residuals(best);
    double best_f = detail::CalibrationObjective::objective(best_r);

    std::vector<double> step;
    for (const auto& p : spec.free) step.push_back(0.125 * (p.max - p.min));

    int it = 0;
    while (!detail::all_ok(best_r) && it < spec.max_iterations && !spec.free.empty()) {
        ++it;
        bool improved = false;
        for (std::size_t i = 0; i < spec.free.size(); ++i) {
            const FreeParameter& p = spec.free[i];
            for (double dir : {1.0, -1.0}) {
                bool moved = false;
                for (int k = 0; k < 8; ++k) {
                    Scenario trial = best;
                    double& x = require_scenario_param(trial, p.path);
                    const double nx = std::clamp(x + dir * step[i], p.min, p.max);
                    if (nx == x) break;
                    x = nx;
                    auto r = obj.residuals(trial);
                    const double f = detail::CalibrationObjective::objective(r);
                    if (!(f < best_f)) break;
                    best = trial;
                    best_r = std::move(r);
                    best_f = f;
                    moved = improved = true;
                    if (detail::all_ok(best_r)) break;
                }
                if (moved || detail::all_ok(best_r)) break;
            }
            if (detail::all_ok(best_r)) break;
        }
        if (!improved) {
            double largest = 0.0;
            for (std::size_t i = 0; i < step.size(); ++i) {
                step[i] *= 0.5;
                largest = std::max(largest, step[i] / (spec.free[i].max - spec.free[i].min));
            }
            if (largest < 1e-7) break;
        }
    }
    res.fitted = best;
    res.residuals = best_r;
    res.iterations = it;
    res.evaluations = obj.evaluations;
    res.converged = detail::all_ok(best_r);
    res.objective = best_f;
    return res;
}

inline Json residuals_to_json(const CalibrationResult& r) {
    Json j;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["evaluations"] = r.evaluations;
    j["objective"] = r.objective;
    Json arr = Json::array();
    for (const auto& t : r.residuals) {
        Json e;
        e["metric"] = t.metric;
        Json o = Json::object();
        for (const auto& [k, v] : t.overrides) o[k] = v;
        e["overrides"] = o;
        e["target"] = t.target;
        e["achieved"] = t.achieved;
        e["relative_error"] = t.relative_error;
        e["tolerance"] = t.tolerance;
        e["ok"] = t.ok();
        arr.push_back(e);
    }
    j["residuals"] = arr;
    return j;
}

}  // namespace pathqkd
