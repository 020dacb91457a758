#pragma once

// Physical parameters of one link scenario: pair source, lossy channel and
// detectors, differential phase noise, and the phase-locked loop.

#include <cmath>
#include <string>

#include "pathqkd/errors.hpp"
#include "pathqkd/quantum.hpp"

namespace pathqkd {

struct SourceParams {
    double rep_rate_hz = 5.0e7;
    double pair_prob_per_pulse = 0.01;
    double multi_pair_fraction = 0.03;
    double spiral_imbalance = 1.0;  // |1>-path pair rate over |0>-path pair rate
    double coherence_time_ps = 5.0;
};

struct ChannelParams {
    double length_km = 0.0;
    double atten_db_per_km = 0.20;
    double coupling_loss_db_per_facet = 7.0;
    int n_facets_signal = 3;
    int n_facets_idler = 1;
    double insertion_loss_db = 0.0;  // lumped filters and components, signal arm
    double detector_efficiency = 0.91;
    double dark_count_rate_hz = 100.0;  // per detector
    double coincidence_window_s = 2.0e-10;
    double delay_mismatch_ps = 0.0;       // residual path-length offset of the delay line
    double fiber_noise_hz_per_km = 0.0;   // noise photons reaching Bob's detectors
};

enum class PhaseProcess { OrnsteinUhlenbeck, RandomWalk };

struct PhaseNoiseParams {
    PhaseProcess process = PhaseProcess::OrnsteinUhlenbeck;
    double bandwidth_hz = 0.5;
    double std_rad = kPi / 2;
    double jump_rate_hz = 1.0 / 300.0;
    double jump_magnitude_rad = kPi;
};

enum class RelockStrategy { FringeScan };

struct PllParams {
    bool enabled = true;
    double loop_rate_hz = 1000.0;
    double kp = 0.1;
    double ki = 0.9;
    double kd = 0.0;
    double setpoint_fraction = 0.5;
    double unlock_threshold = 0.4;
    RelockStrategy relock_strategy = RelockStrategy::FringeScan;
    double fringe_visibility = 0.95;  // pump-leakage interference contrast at the photodiode
    int relock_hold_cycles = 20;
    double relock_timeout_s = 0.25;
    int scan_cycles = 64;

    bool active() const { return enabled && (kp != 0.0 || ki != 0.0 || kd != 0.0); }
};

// Phase-shifter miscalibration of the local measurement settings (Alice side).
struct MeasurementParams {
    double x_phase_error_rad = 0.0;
    double y_phase_error_rad = 0.0;

    MeasurementFrame frame() const { return {x_phase_error_rad, y_phase_error_rad}; }
};

struct LinkConfig {
    SourceParams source;
    ChannelParams channel;
    PhaseNoiseParams phase_noise;
    PllParams pll;
    MeasurementParams measurement;
    double noise_floor = 0.0;  // white-noise weight besides multi-pair emission
};

inline double db_to_transmittance(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

// Idler stays on Alice's chip: only its own facet crossings.
inline double idler_transmittance(const ChannelParams& c) {
    return db_to_transmittance(c.n_facets_idler * c.coupling_loss_db_per_facet);
}

inline double signal_loss_db(const ChannelParams& c) {
    return c.n_facets_signal * c.coupling_loss_db_per_facet + c.atten_db_per_km * c.length_km +
           c.insertion_loss_db;
}

inline double signal_transmittance(const ChannelParams& c) {
    return db_to_transmittance(signal_loss_db(c));
}

// Two-photon interference visibility lost to a residual delay offset,
// Gaussian wavepackets of the given coherence time.
inline double delay_visibility(const SourceParams& s, const ChannelParams& c) {
    if (c.delay_mismatch_ps == 0.0) return 1.0;
    const double x = c.delay_mismatch_ps / s.coherence_time_ps;
    return std::exp(-0.5 * x * x);
}

namespace detail {
inline void require(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw ConfigError("field '" + field + "': " + rule);
}
}  // namespace detail

inline void validate(const SourceParams& s) {
    using detail::require;
    require(s.rep_rate_hz > 0, "source.rep_rate_hz", "must be > 0");
    require(s.pair_prob_per_pulse > 0 && s.pair_prob_per_pulse < 0.1, "source.pair_prob_per_pulse",
            "must lie in (0, 0.1)");
    require(s.multi_pair_fraction >= 0 && s.multi_pair_fraction < 1, "source.multi_pair_fraction",
            "must lie in [0, 1)");
    require(s.spiral_imbalance > 0, "source.spiral_imbalance", "must be > 0");
    require(s.coherence_time_ps > 0, "source.coherence_time_ps", "must be > 0");
}

inline void validate(const ChannelParams& c) {
    using detail::require;
    require(c.length_km >= 0, "channel.length_km", "must be >= 0");
    require(c.atten_db_per_km >= 0, "channel.atten_db_per_km", "must be >= 0");
    require(c.coupling_loss_db_per_facet >= 0, "channel.coupling_loss_db_per_facet", "must be >= 0");
    require(c.n_facets_signal >= 0, "channel.n_facets_signal", "must be >= 0");
    require(c.n_facets_idler >= 0, "channel.n_facets_idler", "must be >= 0");
    require(c.insertion_loss_db >= 0, "channel.insertion_loss_db", "must be >= 0");
    require(c.detector_efficiency > 0 && c.detector_efficiency <= 1, "channel.detector_efficiency",
            "must lie in (0, 1]");
    require(c.dark_count_rate_hz >= 0, "channel.dark_count_rate_hz", "must be >= 0");
    require(c.coincidence_window_s > 0, "channel.coincidence_window_s", "must be > 0");
    require(c.fiber_noise_hz_per_km >= 0, "channel.fiber_noise_hz_per_km", "must be >= 0");
}

inline void validate(const PhaseNoiseParams& p) {
    detail::require(p.bandwidth_hz > 0, "phase_noise.bandwidth_hz", "must be > 0");
    detail::require(p.std_rad >= 0, "phase_noise.std_rad", "must be >= 0");
    detail::require(p.jump_rate_hz >= 0, "phase_noise.jump_rate_hz", "must be >= 0");
}

inline void validate(const PllParams& p, const PhaseNoiseParams& noise) {
    using detail::require;
    require(p.loop_rate_hz > 2.0 * noise.bandwidth_hz, "pll.loop_rate_hz",
            "must exceed twice phase_noise.bandwidth_hz (undersampled controller)");
    require(p.setpoint_fraction > 0 && p.setpoint_fraction < 1, "pll.setpoint_fraction",
            "must lie in (0, 1)");
    require(p.fringe_visibility > 0 && p.fringe_visibility <= 1, "pll.fringe_visibility",
            "must lie in (0, 1]");
    require(std::abs(2.0 * p.setpoint_fraction - 1.0) < p.fringe_visibility, "pll.setpoint_fraction",
            "must lie inside the fringe (1 +- fringe_visibility)/2");
    require(p.unlock_threshold > 0, "pll.unlock_threshold", "must be > 0");
    require(p.relock_hold_cycles >= 1, "pll.relock_hold_cycles", "must be >= 1");
    require(p.relock_timeout_s > 0, "pll.relock_timeout_s", "must be > 0");
    require(p.scan_cycles >= 8, "pll.scan_cycles", "must be >= 8");
}

inline void validate(const LinkConfig& cfg) {
    validate(cfg.source);
    validate(cfg.channel);
    validate(cfg.phase_noise);
    validate(cfg.pll, cfg.phase_noise);
    detail::require(cfg.noise_floor >= 0 && cfg.noise_floor < 1, "noise_floor", "must lie in [0, 1)");
}

}  // namespace pathqkd
