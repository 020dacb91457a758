#pragma once

// Differential phase noise on the dual-core link and the photodiode-driven
// phase-locked loop that holds it at the interferometer setpoint.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "pathqkd/link_config.hpp"
#include "pathqkd/rng.hpp"

namespace pathqkd {

// Wrap into (-pi, pi].
inline double wrap_phase(double x) {
    double y = std::fmod(x + kPi, 2.0 * kPi);
    if (y <= 0.0) y += 2.0 * kPi;
    return y - kPi;
}

// Photodiode power of the pump fringe, normalized to [0, 1].
inline double pd_power(double phase_rad, double fringe_visibility) {
    return 0.5 * (1.0 + fringe_visibility * std::cos(phase_rad));
}

// Per-step innovation std so the OU process keeps stationary std std_rad.
// The random walk uses the same diffusion constant without the restoring force.
inline double phase_innovation_std(const PhaseNoiseParams& p, double dt_s) {
    const double k = 2.0 * kPi * p.bandwidth_hz * dt_s;
    if (p.process == PhaseProcess::OrnsteinUhlenbeck)
        return p.std_rad * std::sqrt(-std::expm1(-2.0 * k));
    return p.std_rad * std::sqrt(2.0 * k);
}

// Stateful phase process; keeps its Gaussian generator between steps.
class PhaseNoiseProcess {
public:
    PhaseNoiseProcess(const PhaseNoiseParams& params, double dt_s, double initial_phase = 0.0)
        : params_(params),
          decay_(params.process == PhaseProcess::OrnsteinUhlenbeck
                     ? std::exp(-2.0 * kPi * params.bandwidth_hz * dt_s)
                     : 1.0),
          sigma_(phase_innovation_std(params, dt_s)),
          jump_prob_(params.jump_rate_hz * dt_s),
          phase_(initial_phase) {}

    double phase() const { return phase_; }
    void add(double delta) { phase_ += delta; }

    double step(Rng& rng) {
        phase_ = phase_ * decay_ + sigma_ * normal_(rng);
        if (jump_prob_ > 0.0 && uniform_(rng) < jump_prob_)
            phase_ += (uniform_(rng) < 0.5 ? -1.0 : 1.0) * params_.jump_magnitude_rad;
        return phase_;
    }

private:
    PhaseNoiseParams params_;
    double decay_;
    double sigma_;
    double jump_prob_;
    double phase_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// One OU / random-walk update. Convenience form of PhaseNoiseProcess::step.
inline double phase_step(double phase, double dt_s, const PhaseNoiseParams& params, Rng& rng) {
    if (!(dt_s > 0.0)) throw InvalidParam("phase_step: dt_s must be > 0");
    PhaseNoiseProcess p(params, dt_s, phase);
    return p.step(rng);
}

struct PhaseTrace {
    std::vector<double> time_s;
    std::vector<double> true_phase_rad;
    std::vector<double> correction_rad;
    std::vector<double> residual_rad;
    std::vector<double> pd_power_norm;
    std::vector<std::uint8_t> locked;

    std::size_t size() const { return time_s.size(); }
    void reserve(std::size_t n) {
        time_s.reserve(n);
        true_phase_rad.reserve(n);
        correction_rad.reserve(n);
        residual_rad.reserve(n);
        pd_power_norm.reserve(n);
        locked.reserve(n);
    }
};

// Running statistics accumulated over every loop cycle, independent of any
// trace decimation.
struct TraceSummary {
    std::uint64_t cycles = 0;
    std::uint64_t locked_cycles = 0;
    double locked_residual_sum = 0.0;
    double locked_residual_sq = 0.0;
    double residual_sq = 0.0;
    std::uint64_t unlock_events = 0;
    std::uint64_t scans = 0;
    double longest_unlock_s = 0.0;

    double unlocked_fraction() const {
        return cycles ? 1.0 - static_cast<double>(locked_cycles) / static_cast<double>(cycles) : 0.0;
    }
    double locked_residual_std() const {
        if (locked_cycles < 2) return 0.0;
        const double n = static_cast<double>(locked_cycles);
        const double m = locked_residual_sum / n;
        return std::sqrt(std::max(0.0, locked_residual_sq / n - m * m));
    }
    double residual_rms() const {
        return cycles ? std::sqrt(residual_sq / static_cast<double>(cycles)) : 0.0;
    }
};

struct LoopSample {
    double time_s = 0.0;
    double true_phase = 0.0;
    double correction = 0.0;
    double residual = 0.0;
    double pd_power = 0.0;
    bool locked = true;
};

// Closed-loop simulation of the fiber-stretcher PLL at loop_rate_hz.
//
// The photodiode sees the pump fringe at phase residual + lock_offset, where
// lock_offset puts the setpoint power on the falling slope at zero residual.
// A PID acts on the normalized power error (radians near lock). Lock is lost
// when |power - setpoint| exceeds unlock_threshold and regained after
// relock_hold_cycles consecutive cycles within half of it. If the PID has not
// relocked within relock_timeout_s, a fringe scan sweeps the stretcher over
// one period, fits the fringe and restarts the PID at the fitted phase.
class PhaseLockLoop {
public:
    PhaseLockLoop(const PhaseNoiseParams& noise, const PllParams& pll, std::uint64_t seed)
        : pll_(pll),
          dt_(1.0 / pll.loop_rate_hz),
          noise_(noise, dt_),
          rng_(seed),
          lock_offset_(std::acos((2.0 * pll.setpoint_fraction - 1.0) / pll.fringe_visibility)),
          error_scale_(0.5 * pll.fringe_visibility * std::sin(lock_offset_)),
          timeout_cycles_(static_cast<std::uint64_t>(std::ceil(pll.relock_timeout_s * pll.loop_rate_hz))) {
        validate(noise);
        validate(pll, noise);
    }

    double dt() const { return dt_; }
    const TraceSummary& summary() const { return summary_; }

    void inject_jump(double delta_rad) { noise_.add(delta_rad); }

    LoopSample step() {
        noise_.step(rng_);
        LoopSample s;
        ++cycle_;
        s.time_s = static_cast<double>(cycle_) * dt_;
        s.true_phase = noise_.phase();
        s.correction = correction_;
        s.residual = wrap_phase(s.true_phase - correction_);
        s.pd_power = pd_power(s.residual + lock_offset_, pll_.fringe_visibility);
        const double power_error = pll_.setpoint_fraction - s.pd_power;

        update_lock(std::abs(power_error));
        s.locked = locked_;
        record(s);

        if (pll_.active()) control(power_error, s.pd_power);
        return s;
    }

private:
    void update_lock(double abs_error) {
        if (locked_) {
            if (abs_error > pll_.unlock_threshold) {
                locked_ = false;
                ++summary_.unlock_events;
                unlocked_cycles_ = 0;
                good_cycles_ = 0;
            }
            return;
        }
        ++unlocked_cycles_;
        good_cycles_ = abs_error < 0.5 * pll_.unlock_threshold ? good_cycles_ + 1 : 0;
        if (good_cycles_ >= pll_.relock_hold_cycles && !scan_) {
            locked_ = true;
            summary_.longest_unlock_s =
                std::max(summary_.longest_unlock_s, static_cast<double>(unlocked_cycles_) * dt_);
        }
    }

    void record(const LoopSample& s) {
        ++summary_.cycles;
        summary_.residual_sq += s.residual * s.residual;
        if (s.locked) {
            ++summary_.locked_cycles;
            summary_.locked_residual_sum += s.residual;
            summary_.locked_residual_sq += s.residual * s.residual;
        }
    }

    void control(double power_error, double power) {
        if (scan_) {
            scan_step(power);
            return;
        }
        if (!locked_ && unlocked_cycles_ >= timeout_cycles_) {
            start_scan();
            return;
        }
        const double e = power_error / error_scale_;
        integral_ += pll_.ki * e;
        correction_ = integral_ + pll_.kp * e + pll_.kd * (e - prev_error_);
        prev_error_ = e;
    }

    void start_scan() {
        scan_ = ScanState{};
        scan_->origin = correction_;
        ++summary_.scans;
        correction_ = scan_->origin;
    }

    // Power observed this cycle belongs to the stretcher position applied
    // during it; least-squares fit of a + b cos(c) + d sin(c) over one period.
    void scan_step(double power) {
        ScanState& sc = *scan_;
        const double c = correction_;
        sc.s1 += power;
        sc.sc += power * std::cos(c);
        sc.ss += power * std::sin(c);
        ++sc.n;
        if (sc.n < pll_.scan_cycles) {
            correction_ = sc.origin + 2.0 * kPi * sc.n / pll_.scan_cycles;
            return;
        }
        // Uniform sampling over a full period: cos/sin sums decouple.
        const double theta = std::atan2(sc.ss, sc.sc);
        const double phase_estimate = theta - lock_offset_;
        correction_ = sc.origin + wrap_phase(phase_estimate - sc.origin);
        integral_ = correction_;
        prev_error_ = 0.0;
        scan_.reset();
        unlocked_cycles_ = 0;
        good_cycles_ = 0;
    }

    struct ScanState {
        double origin = 0.0;
        double s1 = 0.0, sc = 0.0, ss = 0.0;
        int n = 0;
    };

    PllParams pll_;
    double dt_;
    PhaseNoiseProcess noise_;
    Rng rng_;
    double lock_offset_;
    double error_scale_;
    std::uint64_t timeout_cycles_;

    std::uint64_t cycle_ = 0;
    double correction_ = 0.0;
    double integral_ = 0.0;
    double prev_error_ = 0.0;
    bool locked_ = true;
    std::uint64_t unlocked_cycles_ = 0;
    int good_cycles_ = 0;
    std::optional<ScanState> scan_;
    TraceSummary summary_;
};

struct InjectedJump {
    double time_s = 0.0;
    double magnitude_rad = kPi;
};

struct PllRun {
    PhaseTrace trace;
    TraceSummary summary;
};

inline void append(PhaseTrace& t, const LoopSample& s) {
    t.time_s.push_back(s.time_s);
    t.true_phase_rad.push_back(s.true_phase);
    t.correction_rad.push_back(s.correction);
    t.residual_rad.push_back(s.residual);
    t.pd_power_norm.push_back(s.pd_power);
    t.locked.push_back(s.locked ? 1 : 0);
}

inline PllRun pll_run(const PhaseNoiseParams& noise, const PllParams& pll, double duration_s,
                      std::uint64_t seed, const std::vector<InjectedJump>& jumps = {}) {
    if (!(duration_s > 0.0)) throw InvalidParam("pll_run: duration_s must be > 0");
    PhaseLockLoop loop(noise, pll, seed);
    const auto n = static_cast<std::size_t>(std::llround(duration_s * pll.loop_rate_hz));
    PllRun out;
    out.trace.reserve(n);
    std::size_t next_jump = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k + 1) * loop.dt();
        while (next_jump < jumps.size() && jumps[next_jump].time_s <= t) {
            loop.inject_jump(jumps[next_jump].magnitude_rad);
            ++next_jump;
        }
        append(out.trace, loop.step());
    }
    out.summary = loop.summary();
    return out;
}

}  // namespace pathqkd
