#pragma once

// Stochastic simulation of the chip-to-chip link: the entangled state after
// phase error and white noise, rate bookkeeping for true and accidental
// coincidences, and count-table synthesis driven by the closed-loop PLL.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include "pathqkd/count_table.hpp"
#include "pathqkd/link_config.hpp"
#include "pathqkd/phase_lock.hpp"
#include "pathqkd/quantum.hpp"
#include "pathqkd/rng.hpp"

namespace pathqkd {

// Expected accidental coincidences per second between two uncorrelated
// click streams.
inline double accidental_rate(double singles_a_hz, double singles_b_hz, double window_s) {
    if (singles_a_hz < 0 || singles_b_hz < 0 || window_s < 0)
        throw InvalidParam("accidental_rate: inputs must be >= 0");
    return singles_a_hz * singles_b_hz * window_s;
}

// Combined white-noise weight of the noise floor and multi-pair emission.
inline double white_noise_weight(double noise_floor, const SourceParams& source) {
    return 1.0 - (1.0 - noise_floor) * (1.0 - source.multi_pair_fraction);
}

struct PathAmplitudes {
    double a = 1.0 / std::sqrt(2.0);  // |00> path
    double b = 1.0 / std::sqrt(2.0);  // |11> path
};

inline PathAmplitudes path_amplitudes(const SourceParams& s) {
    const double r = s.spiral_imbalance;
    return {1.0 / std::sqrt(1.0 + r), std::sqrt(r / (1.0 + r))};
}

// (1 - w) [V |Phi_phi><Phi_phi| + (1 - V) dephased] + w I/4, with
// |Phi_phi> = a|00> + b e^{i phi}|11>. V is the two-photon coherence
// (1 unless a delay mismatch is given).
inline TwoQubitState effective_state(double residual_phase_rad, const SourceParams& source,
                                     double noise_floor, double coherence_visibility = 1.0) {
    if (!(noise_floor >= 0.0 && noise_floor < 1.0))
        throw InvalidParam("effective_state: noise_floor must lie in [0, 1)");
    if (!(coherence_visibility >= 0.0 && coherence_visibility <= 1.0))
        throw InvalidParam("effective_state: coherence_visibility must lie in [0, 1]");
    const double w = white_noise_weight(noise_floor, source);
    const auto [a, b] = path_amplitudes(source);
    Vector4c psi;
    psi << a, 0, 0, b * std::polar(1.0, residual_phase_rad);
    Matrix4c dephased = Matrix4c::Zero();
    dephased(0, 0) = a * a;
    dephased(3, 3) = b * b;
    const Matrix4c coherent = psi * psi.adjoint();
    const Matrix4c rho = (1.0 - w) * (coherence_visibility * coherent + (1.0 - coherence_visibility) * dephased) +
                         w * Matrix4c::Identity() / 4.0;
    return TwoQubitState::unchecked(rho);
}

// Closed form of born_probabilities(effective_state(phi), setting) under a
// given pair of measurement frames: p_o(phi) = c0 + c1 cos(phi) + c2 sin(phi).
class OutcomeModel {
public:
    OutcomeModel(MeasurementSetting setting, const LinkConfig& cfg)
        : OutcomeModel(setting, cfg.source, cfg.noise_floor, delay_visibility(cfg.source, cfg.channel),
                       cfg.measurement.frame(), MeasurementFrame{}) {}

    OutcomeModel(MeasurementSetting setting, const SourceParams& source, double noise_floor,
                 double coherence_visibility, const MeasurementFrame& alice, const MeasurementFrame& bob) {
        const double w = white_noise_weight(noise_floor, source);
        const auto [a, b] = path_amplitudes(source);
        const ProjectorSet proj = projectors(setting, alice, bob);
        for (std::size_t o = 0; o < 4; ++o) {
            const Complex v0 = proj[o](0);
            const Complex v3 = proj[o](3);
            const Complex k = std::conj(v0) * v3;
            c0_[o] = (1.0 - w) * (a * a * std::norm(v0) + b * b * std::norm(v3)) + 0.25 * w;
            c1_[o] = (1.0 - w) * coherence_visibility * 2.0 * a * b * k.real();
            c2_[o] = (1.0 - w) * coherence_visibility * 2.0 * a * b * k.imag();
        }
    }

    OutcomeProbabilities at(double phase_rad) const { return at(std::cos(phase_rad), std::sin(phase_rad)); }

    OutcomeProbabilities at(double cos_phi, double sin_phi) const {
        OutcomeProbabilities p;
        for (std::size_t o = 0; o < 4; ++o) p[o] = std::max(0.0, c0_[o] + c1_[o] * cos_phi + c2_[o] * sin_phi);
        return p;
    }

private:
    std::array<double, 4> c0_{}, c1_{}, c2_{};
};

struct LinkRates {
    double pair_rate_hz = 0.0;
    double idler_transmittance = 0.0;
    double signal_transmittance = 0.0;
    double true_coincidence_hz = 0.0;
    double singles_a_hz = 0.0;
    double singles_b_hz = 0.0;
    double accidental_hz = 0.0;
};

// Mean rates with all setting-independent losses applied. Each party has two
// detectors; the fiber adds noise photons on Bob's side only.
inline LinkRates link_rates(const LinkConfig& cfg) {
    const auto& s = cfg.source;
    const auto& c = cfg.channel;
    LinkRates r;
    r.pair_rate_hz = s.pair_prob_per_pulse * s.rep_rate_hz;
    r.idler_transmittance = idler_transmittance(c);
    r.signal_transmittance = signal_transmittance(c);
    const double eta = c.detector_efficiency;
    r.true_coincidence_hz = r.pair_rate_hz * r.idler_transmittance * r.signal_transmittance * eta * eta;
    r.singles_a_hz = r.pair_rate_hz * r.idler_transmittance * eta + 2.0 * c.dark_count_rate_hz;
    r.singles_b_hz = r.pair_rate_hz * r.signal_transmittance * eta + 2.0 * c.dark_count_rate_hz +
                     c.fiber_noise_hz_per_km * c.length_km;
    r.accidental_hz = accidental_rate(r.singles_a_hz, r.singles_b_hz, c.coincidence_window_s);
    return r;
}

struct ScheduleEntry {
    MeasurementSetting setting;
    double integration_s = 0.0;
};

inline std::vector<ScheduleEntry> full_tomography_schedule(double integration_s) {
    std::vector<ScheduleEntry> out;
    for (int k = 0; k < 9; ++k) out.push_back({MeasurementSetting::from_index(k), integration_s});
    return out;
}

struct SimulationOptions {
    double warmup_s = 1.0;                  // PLL settling before the first setting
    std::size_t max_trace_samples = 200000;  // trace is decimated to stay under this
};

// Phase statistics seen by each schedule entry: the outcome probabilities
// are linear in cos and sin of the residual, so these sums fix the expected
// counts.
struct PhaseExposure {
    std::uint64_t cycles = 0;
    double cos_sum = 0.0;
    double sin_sum = 0.0;

    double mean_cos() const { return cycles ? cos_sum / static_cast<double>(cycles) : 1.0; }
};

struct PhaseHistory {
    std::vector<PhaseExposure> exposure;  // schedule order
    PhaseTrace trace;                     // decimated
    TraceSummary summary;
};

// Runs the PLL continuously through the schedule, settings back to back
// after a warm-up.
inline PhaseHistory run_phase_history(const LinkConfig& cfg, const std::vector<ScheduleEntry>& schedule,
                                      std::uint64_t seed, const SimulationOptions& opts = {}) {
    validate(cfg);
    if (schedule.empty()) throw ConfigError("field 'schedule': must not be empty");
    for (const auto& e : schedule)
        if (!(e.integration_s > 0.0)) throw ConfigError("field 'schedule.integration_s': must be > 0");

    PhaseHistory h;
    PhaseLockLoop loop(cfg.phase_noise, cfg.pll, derive_seed(seed, 1));
    const double rate = cfg.pll.loop_rate_hz;
    const auto warmup = static_cast<std::uint64_t>(std::llround(opts.warmup_s * rate));
    std::uint64_t total = warmup;
    for (const auto& e : schedule) {
        PhaseExposure x;
        x.cycles = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(e.integration_s * rate)));
        total += x.cycles;
        h.exposure.push_back(x);
    }
    const std::uint64_t cap = std::max<std::uint64_t>(1, opts.max_trace_samples);
    const std::uint64_t decimation = std::max<std::uint64_t>(1, (total + cap - 1) / cap);
    h.trace.reserve(static_cast<std::size_t>(total / decimation + 1));

    std::uint64_t cycle = 0;
    auto advance = [&]() {
        const LoopSample s = loop.step();
        if (cycle++ % decimation == 0) append(h.trace, s);
        return s;
    };
    for (std::uint64_t k = 0; k < warmup; ++k) advance();
    for (auto& x : h.exposure)
        for (std::uint64_t k = 0; k < x.cycles; ++k) {
            const double r = advance().residual;
            x.cos_sum += std::cos(r);
            x.sin_sum += std::sin(r);
        }
    h.summary = loop.summary();
    return h;
}

// Per-setting ground truth kept alongside the sampled counts.
struct SettingTruth {
    MeasurementSetting setting;
    OutcomeCounts true_counts{};
    OutcomeCounts accidental_counts{};
    std::array<double, 4> expected_true{};
    std::array<double, 4> expected_accidental{};
    double mean_residual_cos = 1.0;
};

struct SampledCounts {
    CountTable table;
    std::vector<SettingTruth> truth;  // schedule order
    LinkRates rates;
};

// Within each loop cycle the pair rate is split over the four outcomes by the
// Born probabilities of the effective state at that cycle's residual phase;
// accidentals are spread uniformly. Pair creation per pulse, per-photon
// survival and detection are Bernoulli thinnings with tiny probabilities, so
// the per-setting counts are Poisson variates of the integrated means.
inline SampledCounts sample_counts(const LinkConfig& cfg, const std::vector<ScheduleEntry>& schedule,
                                   const PhaseHistory& history, std::uint64_t seed) {
    validate(cfg);
    if (history.exposure.size() != schedule.size())
        throw InvalidParam("sample_counts: phase history does not match the schedule");
    SampledCounts out;
    out.rates = link_rates(cfg);
    Rng rng(derive_seed(seed, 2));
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& entry = schedule[i];
        const PhaseExposure& x = history.exposure[i];
        const OutcomeModel model(entry.setting, cfg);
        const double n = static_cast<double>(x.cycles);
        const OutcomeProbabilities p = model.at(x.cos_sum / n, x.sin_sum / n);
        SettingTruth truth;
        truth.setting = entry.setting;
        truth.mean_residual_cos = x.mean_cos();
        SettingCounts sc;
        sc.integration_s = entry.integration_s;
        sc.accidental_estimate = out.rates.accidental_hz * entry.integration_s;
        for (std::size_t o = 0; o < 4; ++o) {
            truth.expected_true[o] = out.rates.true_coincidence_hz * entry.integration_s * p[o];
            truth.expected_accidental[o] = 0.25 * sc.accidental_estimate;
            truth.true_counts[o] = poisson(rng, truth.expected_true[o]);
            truth.accidental_counts[o] = poisson(rng, truth.expected_accidental[o]);
            sc.counts[o] = truth.true_counts[o] + truth.accidental_counts[o];
        }
        out.table.add(entry.setting, sc);
        out.truth.push_back(truth);
    }
    return out;
}

struct Simulation {
    CountTable table;
    PhaseTrace trace;
    TraceSummary summary;
    std::vector<SettingTruth> truth;  // schedule order
    LinkRates rates;
};

inline Simulation simulate_counts(const LinkConfig& cfg, const std::vector<ScheduleEntry>& schedule,
                                  std::uint64_t seed, const SimulationOptions& opts = {}) {
    PhaseHistory h = run_phase_history(cfg, schedule, seed, opts);
    SampledCounts c = sample_counts(cfg, schedule, h, seed);
    return {std::move(c.table), std::move(h.trace), h.summary, std::move(c.truth), c.rates};
}

// Line-oriented detection records "channel_id,time_ps,detector_id".
// Channel 0 is Alice (idler), channel 1 Bob (signal); detector 0 is the "+"
// output of the basis, detector 1 the "-" output. Times never decrease
// within a channel.
struct DetectionRecord {
    int channel_id = 0;
    std::int64_t time_ps = 0;
    int detector_id = 0;
};

inline std::vector<DetectionRecord> emit_timestamps(const LinkConfig& cfg, MeasurementSetting setting,
                                                    double duration_s, std::uint64_t seed) {
    validate(cfg);
    if (!(duration_s > 0.0)) throw InvalidParam("emit_timestamps: duration_s must be > 0");
    const LinkRates r = link_rates(cfg);
    // Clicks not belonging to a detected pair.
    const double lone_a = r.singles_a_hz - r.true_coincidence_hz;
    const double lone_b = r.singles_b_hz - r.true_coincidence_hz;

    PhaseLockLoop loop(cfg.phase_noise, cfg.pll, derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 3));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const OutcomeModel model(setting, cfg);
    const double dt = loop.dt();
    const auto steps = static_cast<std::uint64_t>(std::llround(duration_s / dt));
    const double jitter_ps = 0.1 * cfg.channel.coincidence_window_s * 1e12;

    std::vector<DetectionRecord> out;
    std::vector<DetectionRecord> batch;
    for (std::uint64_t k = 0; k < steps; ++k) {
        const LoopSample s = loop.step();
        const double t0_ps = static_cast<double>(k) * dt * 1e12;
        const double span_ps = dt * 1e12;
        batch.clear();
        const OutcomeProbabilities p = model.at(s.residual);
        for (std::size_t o = 0; o < 4; ++o) {
            const std::uint64_t n = poisson(rng, r.true_coincidence_hz * dt * p[o]);
            for (std::uint64_t j = 0; j < n; ++j) {
                const double t = t0_ps + u01(rng) * (span_ps - 2 * jitter_ps) + jitter_ps;
                batch.push_back({0, static_cast<std::int64_t>(t), static_cast<int>(o >> 1)});
                batch.push_back({1, static_cast<std::int64_t>(t + (u01(rng) - 0.5) * jitter_ps),
                                 static_cast<int>(o & 1)});
            }
        }
        for (int ch = 0; ch < 2; ++ch) {
            const std::uint64_t n = poisson(rng, (ch == 0 ? lone_a : lone_b) * dt);
            for (std::uint64_t j = 0; j < n; ++j)
                batch.push_back({ch, static_cast<std::int64_t>(t0_ps + u01(rng) * span_ps), u01(rng) < 0.5 ? 0 : 1});
        }
        std::sort(batch.begin(), batch.end(), [](const DetectionRecord& x, const DetectionRecord& y) {
            return x.time_ps != y.time_ps ? x.time_ps < y.time_ps : x.channel_id < y.channel_id;
        });
        out.insert(out.end(), batch.begin(), batch.end());
    }
    return out;
}

inline void write_timestamps(std::ostream& os, const std::vector<DetectionRecord>& records) {
    os << "channel_id,time_ps,detector_id\n";
    for (const auto& r : records) os << r.channel_id << ',' << r.time_ps << ',' << r.detector_id << '\n';
}

inline void write_trace_csv(std::ostream& os, const PhaseTrace& t) {
    os << "t_s,true_phase,correction,residual,pd_power,locked\n";
    os.precision(17);
    for (std::size_t k = 0; k < t.size(); ++k)
        os << t.time_s[k] << ',' << t.true_phase_rad[k] << ',' << t.correction_rad[k] << ','
           << t.residual_rad[k] << ',' << t.pd_power_norm[k] << ',' << int(t.locked[k]) << '\n';
}

// Pairs every Alice click with Bob clicks within +-window/2 and histograms the
// detector combinations; the post-processing counterpart of emit_timestamps.
inline OutcomeCounts count_coincidences(const std::vector<DetectionRecord>& records, double window_s) {
    const auto half = static_cast<std::int64_t>(0.5 * window_s * 1e12);
    std::vector<DetectionRecord> a, b;
    for (const auto& r : records) (r.channel_id == 0 ? a : b).push_back(r);
    auto by_time = [](const DetectionRecord& x, const DetectionRecord& y) { return x.time_ps < y.time_ps; };
    std::stable_sort(a.begin(), a.end(), by_time);
    std::stable_sort(b.begin(), b.end(), by_time);
    OutcomeCounts out{};
    std::size_t lo = 0;
    for (const auto& ra : a) {
        while (lo < b.size() && b[lo].time_ps < ra.time_ps - half) ++lo;
        for (std::size_t j = lo; j < b.size() && b[j].time_ps <= ra.time_ps + half; ++j)
            ++out[static_cast<std::size_t>(2 * ra.detector_id + b[j].detector_id)];
    }
    return out;
}

}  // namespace pathqkd
