#pragma once

// Structured (JSON) forms of run results. Doubles are written with
// round-trip precision.

#include <cctype>
#include <string>
#include <vector>

#include "pathqkd/pipeline.hpp"
#include "pathqkd/scenario.hpp"

namespace pathqkd {

inline Json matrix_json(const Eigen::Matrix4d& m) {
    Json rows = Json::array();
    for (int r = 0; r < 4; ++r) {
        Json row = Json::array();
        for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

inline Json density_json(const TwoQubitState& rho) {
    Json rows = Json::array();
    for (int r = 0; r < 4; ++r) {
        Json row = Json::array();
        for (int c = 0; c < 4; ++c) row.push_back({rho(r, c).real(), rho(r, c).imag()});
        rows.push_back(row);
    }
    return rows;
}

inline Json skr_params_json(const SkrParams& p) {
    return {{"f", p.f},           {"sift_ratio", p.sift_ratio}, {"raw_rate_hz", p.raw_rate_hz},
            {"alpha", p.alpha},   {"eta", p.eta},               {"eps_sec", p.eps_sec},
            {"eps_cor", p.eps_cor}};
}

inline Json qber_json(const QberReport& q) {
    Json j = Json::object();
    for (Basis b : kBases) {
        const std::string k = std::string("qber_") + static_cast<char>(std::tolower(basis_name(b)));
        j[k] = q.has(b) ? Json(q[b]) : Json(nullptr);
    }
    Json totals = Json::object();
    for (Basis b : kBases) totals[std::string(1, basis_name(b))] = q.totals[static_cast<std::size_t>(b)];
    j["totals"] = totals;
    return j;
}

inline Json finite_json(const FiniteKeyResult& f) {
    return {{"block_size", f.block_size},
            {"acquisition_time_s", f.acquisition_time_s},
            {"delta", f.delta},
            {"lambda_ev_bits", f.lambda_ev_bits},
            {"delta_rate_bps", f.delta_rate_bps},
            {"lambda_rate_bps", f.lambda_rate_bps},
            {"skr_fin_bps", f.skr_fin_bps},
            {"block_too_small", f.block_too_small}};
}

inline Json key_analysis_json(const KeyAnalysis& k) {
    Json j;
    j["qber"] = qber_json(k.qber);
    if (k.key_bases)
        j["key_bases"] = {std::string(1, basis_name(k.key_bases->first)),
                          std::string(1, basis_name(k.key_bases->second))};
    j["qber_zx_average"] = 0.5 * (k.qber.z() + k.qber.x());
    j["skr_params"] = skr_params_json(k.skr);
    j["sifted_rate_bps"] = k.sifted_rate_bps;
    j["skr_asymptotic_bps"] = k.skr_asymptotic_bps;
    Json fin = Json::array();
    for (const auto& f : k.finite) fin.push_back(finite_json(f));
    j["finite_key"] = fin;
    return j;
}

inline Json histogram_json(const FidelityHistogram& h, bool with_samples) {
    Json j;
    j["runs_kept"] = h.samples.size();
    j["excluded"] = h.excluded;
    j["mean"] = h.mean;
    j["std"] = h.std;
    j["chsh_mean"] = h.chsh_mean;
    j["chsh_std"] = h.chsh_std;
    if (with_samples) j["samples"] = h.samples;
    return j;
}

inline Json tomography_json(const TomographyAnalysis& t) {
    Json j;
    j["mle"] = {{"log_likelihood", t.mle.log_likelihood},
                {"iterations", t.mle.iterations},
                {"converged", t.mle.converged},
                {"physical_inversion", t.mle.physical_inversion}};
    j["fidelity"] = t.fidelity;
    j["chsh"] = t.chsh;
    j["overlap"] = t.overlap;
    j["joint_probabilities"] = matrix_json(t.joint);
    j["rho"] = density_json(t.mle.rho);
    if (t.monte_carlo) j["monte_carlo"] = histogram_json(*t.monte_carlo, false);
    return j;
}

inline Json trace_summary_json(const TraceSummary& s, double dt) {
    return {{"cycles", s.cycles},
            {"duration_s", static_cast<double>(s.cycles) * dt},
            {"unlocked_fraction", s.unlocked_fraction()},
            {"locked_residual_std_rad", s.locked_residual_std()},
            {"residual_rms_rad", s.residual_rms()},
            {"unlock_events", s.unlock_events},
            {"fringe_scans", s.scans},
            {"longest_unlock_s", s.longest_unlock_s}};
}

inline Json rates_json(const LinkRates& r) {
    return {{"pair_rate_hz", r.pair_rate_hz},
            {"idler_transmittance", r.idler_transmittance},
            {"signal_transmittance", r.signal_transmittance},
            {"true_coincidence_hz", r.true_coincidence_hz},
            {"singles_a_hz", r.singles_a_hz},
            {"singles_b_hz", r.singles_b_hz},
            {"accidental_hz", r.accidental_hz}};
}

}  // namespace pathqkd
