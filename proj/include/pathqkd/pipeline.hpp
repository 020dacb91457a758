#pragma once

// Scenario-level runs: campaign simulation, key and tomography analysis, and
// the scalar metrics used by calibration.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathqkd/link_sim.hpp"
#include "pathqkd/qkd.hpp"
#include "pathqkd/scenario.hpp"
#include "pathqkd/tomography.hpp"

namespace pathqkd {

enum class CampaignKind { Key, Tomography };

inline const char* campaign_name(CampaignKind k) { return k == CampaignKind::Key ? "key" : "tomography"; }

inline std::uint64_t campaign_seed(std::uint64_t seed, CampaignKind k) {
    return derive_seed(seed, k == CampaignKind::Key ? 0x6b6579 : 0x746f6d6f);
}

inline std::uint64_t monte_carlo_seed(std::uint64_t seed) { return derive_seed(seed, 0x6d63); }

inline const Campaign& require_campaign(const Scenario& s, CampaignKind k) {
    const auto& c = k == CampaignKind::Key ? s.key : s.tomography;
    if (!c) throw ConfigError(std::string("field 'campaigns.") + campaign_name(k) + "': required for this command");
    return *c;
}

// Phase histories depend only on the noise and PLL parameters, the schedule
// and the seed; calibration reuses them across count-model evaluations.
class PhaseHistoryCache {
public:
    const PhaseHistory& get(const LinkConfig& cfg, const std::vector<ScheduleEntry>& schedule, std::uint64_t seed,
                            const SimulationOptions& opts) {
        Json k;
        Json link = to_json(cfg);
        k["phase_noise"] = link["phase_noise"];
        k["pll"] = link["pll"];
        k["seed"] = seed;
        k["warmup"] = opts.warmup_s;
        k["trace"] = opts.max_trace_samples;
        Json sched = Json::array();
        for (const auto& e : schedule) sched.push_back({e.setting.name(), e.integration_s});
        k["schedule"] = sched;
        const std::string key = k.dump();
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, run_phase_history(cfg, schedule, seed, opts)).first;
        return it->second;
    }

private:
    std::map<std::string, PhaseHistory> cache_;
};

struct CampaignRun {
    CampaignKind kind = CampaignKind::Key;
    LinkConfig config;  // overrides applied
    std::vector<ScheduleEntry> schedule;
    std::uint64_t seed = 0;
    Simulation sim;
};

inline CampaignRun run_campaign(const Scenario& s, CampaignKind kind, PhaseHistoryCache* cache = nullptr,
                                const SimulationOptions& opts = {}) {
    const Campaign& c = require_campaign(s, kind);
    CampaignRun run;
    run.kind = kind;
    run.config = campaign_config(s, c);
    run.schedule = c.schedule();
    run.seed = campaign_seed(s.seed, kind);
    if (!cache) {
        run.sim = simulate_counts(run.config, run.schedule, run.seed, opts);
        return run;
    }
    const PhaseHistory& h = cache->get(run.config, run.schedule, run.seed, opts);
    SampledCounts sc = sample_counts(run.config, run.schedule, h, run.seed);
    run.sim = Simulation{std::move(sc.table), h.trace, h.summary, std::move(sc.truth), sc.rates};
    return run;
}

struct KeyAnalysis {
    QberReport qber;
    std::optional<std::pair<Basis, Basis>> key_bases;  // when all three QBERs are present
    SkrParams skr;                                     // with raw_rate_hz filled in
    double coincidence_rate_hz = 0.0;                  // R_r
    double sifted_rate_bps = 0.0;
    double skr_asymptotic_bps = 0.0;
    std::vector<FiniteKeyResult> finite;
};

// R_r is the coincidence rate of the Z/X key settings (their counts over
// their integration time); the channel loss is already inside it, so alpha = 1.
inline double key_coincidence_rate(const CountTable& table) {
    double n = 0.0;
    double t = 0.0;
    for (Basis b : {Basis::Z, Basis::X}) {
        const MeasurementSetting s{b, b};
        if (!table.has(s)) throw EmptySetting("key analysis needs setting " + s.name());
        n += static_cast<double>(table.at(s).total());
        t += table.at(s).integration_s;
    }
    if (!(t > 0.0)) throw ValidationError("key settings carry no integration time");
    return n / t;
}

inline KeyAnalysis analyze_key(const CountTable& table, const AnalysisParams& params) {
    KeyAnalysis a;
    a.qber = qber_report(table);
    if (a.qber.has(Basis::Z) && a.qber.has(Basis::X) && a.qber.has(Basis::Y))
        a.key_bases = select_key_bases(a.qber, params.skr.f);
    a.skr = params.skr;
    a.coincidence_rate_hz = key_coincidence_rate(table);
    a.skr.raw_rate_hz = a.coincidence_rate_hz;
    a.skr.alpha = 1.0;
    a.sifted_rate_bps = sifted_rate(a.skr);
    a.skr_asymptotic_bps = skr_asymptotic(a.qber.z(), a.qber.x(), a.skr);
    for (double n : params.block_sizes)
        a.finite.push_back(skr_finite(a.qber.z(), a.qber.x(), a.skr, n, a.sifted_rate_bps));
    return a;
}

struct TomographyAnalysis {
    ReconstructionResult mle;
    LinearInversion linear;
    double fidelity = 0.0;
    double chsh = 0.0;
    JointMatrix joint;
    JointMatrix joint_ideal;
    double overlap = 0.0;
    std::optional<FidelityHistogram> monte_carlo;
};

inline TomographyAnalysis analyze_tomography(const CountTable& table, const TwoQubitState& target, int mc_runs,
                                             std::uint64_t mc_seed, const MonteCarloOptions& mc = {}) {
    TomographyAnalysis t;
    t.linear = linear_inversion(table);
    t.mle = mle_reconstruct(table, mc.mle);
    if (!t.mle.converged)
        throw NotConverged("maximum-likelihood reconstruction hit " + std::to_string(t.mle.iterations) +
                           " iterations without converging");
    t.fidelity = fidelity(t.mle.rho, target);
    t.chsh = chsh_max(t.mle.rho);
    t.joint = joint_probability_matrix(table);
    t.joint_ideal = joint_probability_matrix(target);
    t.overlap = matrix_overlap(t.joint, t.joint_ideal);
    if (mc_runs > 0) t.monte_carlo = monte_carlo_fidelity(table, target, mc_runs, mc_seed, mc);
    return t;
}

inline TwoQubitState target_state(const std::string& name) {
    auto s = named_state(name);
    if (!s) throw ConfigError("field 'target': unknown state '" + name + "' (phi_plus, phi_minus, mixed)");
    return *s;
}

// ---- scalar metrics -------------------------------------------------------

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"qber_z",  "qber_x",   "qber_y",  "skr",         "skr_finite",
                                                "fidelity", "overlap", "chsh",    "skr_analytic"};
    return names;
}

struct MetricRequest {
    std::string metric;
    double block_size = 1e5;  // skr_finite only
};

// Evaluates one metric of a scenario at its pinned seed. Campaign runs and
// tomography results are memoized per scenario digest.
class MetricEvaluator {
public:
    double evaluate(const Scenario& s, const MetricRequest& m) {
        const std::string& name = m.metric;
        if (name == "qber_z" || name == "qber_x" || name == "qber_y" || name == "skr" || name == "skr_finite") {
            const KeyAnalysis& k = key(s);
            if (name == "qber_z") return k.qber.z();
            if (name == "qber_x") return k.qber.x();
            if (name == "qber_y") return k.qber.y();
            if (name == "skr") return k.skr_asymptotic_bps;
            return skr_finite(k.qber.z(), k.qber.x(), k.skr, m.block_size, k.sifted_rate_bps).skr_fin_bps;
        }
        if (name == "fidelity" || name == "overlap" || name == "chsh") {
            const TomographyAnalysis& t = tomo(s);
            if (name == "fidelity") return t.fidelity;
            if (name == "overlap") return t.overlap;
            return t.chsh;
        }
        if (name == "skr_analytic") {
            const Campaign& c = require_campaign(s, CampaignKind::Key);
            const LinkConfig cfg = campaign_config(s, c);
            const PhaseHistory& h = phases_.get(cfg, c.schedule(), campaign_seed(s.seed, CampaignKind::Key), opts());
            double cs = 0.0;
            double n = 0.0;
            for (const auto& x : h.exposure) {
                cs += x.cos_sum;
                n += static_cast<double>(x.cycles);
            }
            return analytic_skr(cfg, cfg.channel.length_km, s.analysis.skr, cs / n).skr_bps;
        }
        throw ConfigError("field 'metric': unknown metric '" + name + "'");
    }

    const KeyAnalysis& key(const Scenario& s) {
        const std::string d = scenario_digest(s);
        auto it = key_.find(d);
        if (it == key_.end()) {
            const CampaignRun run = run_campaign(s, CampaignKind::Key, &phases_, opts());
            it = key_.emplace(d, analyze_key(run.sim.table, s.analysis)).first;
        }
        return it->second;
    }

    const TomographyAnalysis& tomo(const Scenario& s) {
        const std::string d = scenario_digest(s);
        auto it = tomo_.find(d);
        if (it == tomo_.end()) {
            const CampaignRun run = run_campaign(s, CampaignKind::Tomography, &phases_, opts());
            it = tomo_.emplace(d, analyze_tomography(run.sim.table, target_state(s.analysis.target_state), 0, 0))
                     .first;
        }
        return it->second;
    }

private:
    static SimulationOptions opts() {
        SimulationOptions o;
        o.max_trace_samples = 1;
        return o;
    }
    PhaseHistoryCache phases_;
    std::map<std::string, KeyAnalysis> key_;
    std::map<std::string, TomographyAnalysis> tomo_;
};

}  // namespace pathqkd
