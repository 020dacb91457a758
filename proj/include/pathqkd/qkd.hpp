#pragma once

// BBM92 key-rate analysis: per-basis QBER, asymptotic and finite-key secret
// key rates, key-basis selection and the analytic rate-versus-length model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathqkd/count_table.hpp"
#include "pathqkd/errors.hpp"
#include "pathqkd/link_sim.hpp"
#include "pathqkd/quantum.hpp"

namespace pathqkd {

inline double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy: p must lie in [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// Error outcomes of a matched-basis setting for a Phi+ source: Z and X are
// correlated, Y anti-correlated.
inline std::uint64_t qber_errors(Basis b, const OutcomeCounts& n) {
    return b == Basis::Y ? n[0] + n[3] : n[1] + n[2];
}

inline double qber_from_counts(const CountTable& table, MeasurementSetting setting) {
    if (setting.alice != setting.bob)
        throw BasisMismatch("QBER needs matching bases, got " + setting.name());
    if (!table.has(setting)) throw EmptySetting("no counts for setting " + setting.name());
    const SettingCounts& c = table.at(setting);
    if (c.total() == 0) throw EmptySetting("setting " + setting.name() + " has zero counts");
    return static_cast<double>(qber_errors(setting.alice, c.counts)) / static_cast<double>(c.total());
}

struct QberReport {
    std::array<std::optional<double>, 3> qber{};  // indexed by Basis
    std::array<std::uint64_t, 3> totals{};

    double operator[](Basis b) const {
        const auto& q = qber[static_cast<std::size_t>(b)];
        if (!q) throw EmptySetting(std::string("no QBER for basis ") + basis_name(b));
        return *q;
    }
    bool has(Basis b) const { return qber[static_cast<std::size_t>(b)].has_value(); }
    double z() const { return (*this)[Basis::Z]; }
    double x() const { return (*this)[Basis::X]; }
    double y() const { return (*this)[Basis::Y]; }
};

// QBER of every matched-basis setting present in the table.
inline QberReport qber_report(const CountTable& table) {
    QberReport r;
    for (Basis b : kBases) {
        const MeasurementSetting s{b, b};
        if (!table.has(s) || table.at(s).total() == 0) continue;
        r.qber[static_cast<std::size_t>(b)] = qber_from_counts(table, s);
        r.totals[static_cast<std::size_t>(b)] = table.at(s).total();
    }
    return r;
}

struct SkrParams {
    double f = 1.1;            // error-correction efficiency
    double sift_ratio = 0.5;   // S
    double raw_rate_hz = 0.0;  // R_r
    double alpha = 1.0;        // transmittance not already in raw_rate_hz
    double eta = 0.91;         // detector efficiency
    double eps_sec = 1e-12;
    double eps_cor = 1e-12;
};

inline void validate(const SkrParams& p) {
    if (!(p.f >= 1.0)) throw DomainError("skr.f must be >= 1");
    if (!(p.sift_ratio > 0.0 && p.sift_ratio <= 1.0)) throw DomainError("skr.sift_ratio must lie in (0, 1]");
    if (!(p.raw_rate_hz >= 0.0)) throw DomainError("skr.raw_rate_hz must be >= 0");
    if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw DomainError("skr.alpha must lie in [0, 1]");
    if (!(p.eta > 0.0 && p.eta <= 1.0)) throw DomainError("skr.eta must lie in (0, 1]");
    if (!(p.eps_sec > 0.0 && p.eps_sec < 1.0)) throw DomainError("skr.eps_sec must lie in (0, 1)");
    if (!(p.eps_cor > 0.0 && p.eps_cor < 1.0)) throw DomainError("skr.eps_cor must lie in (0, 1)");
}

// S * R_r * alpha * eta: sifted key bits per second.
inline double sifted_rate(const SkrParams& p) { return p.sift_ratio * p.raw_rate_hz * p.alpha * p.eta; }

inline void require_qber(double q, const char* name) {
    if (!(q >= 0.0 && q <= 0.5)) throw DomainError(std::string(name) + " must lie in [0, 0.5]");
}

// 1 - f H2(q_key) - H2(q_check); may be negative.
inline double secret_fraction(double qber_key, double qber_check, double f) {
    return 1.0 - f * binary_entropy(qber_key) - binary_entropy(qber_check);
}

inline double skr_asymptotic(double qber_z, double qber_x, const SkrParams& p) {
    require_qber(qber_z, "qber_z");
    require_qber(qber_x, "qber_x");
    validate(p);
    return std::max(0.0, secret_fraction(qber_z, qber_x, p.f)) * sifted_rate(p);
}

struct FiniteKeyResult {
    double block_size = 0.0;          // n_Z
    double acquisition_time_s = 0.0;  // tau = n_Z / sifted rate
    double delta = 0.0;               // Hoeffding penalty per sifted bit
    double lambda_ev_bits = 0.0;      // error-verification cost per block
    double delta_rate_bps = 0.0;
    double lambda_rate_bps = 0.0;
    double skr_asymptotic_bps = 0.0;
    double skr_fin_bps = 0.0;
    bool block_too_small = false;  // penalties exceed the asymptotic rate
};

inline double hoeffding_delta(double block_size, double eps_sec) {
    return std::sqrt(std::log(1.0 / eps_sec) / block_size);
}

// SKR_fin = SKR - Delta * r - log2(2/eps_cor) / tau, with the per-bit Delta
// converted to bit/s by the sifted rate r and tau the block acquisition time.
inline FiniteKeyResult skr_finite(double qber_z, double qber_x, const SkrParams& p, double block_size,
                                  double sifted_rate_bps) {
    if (!(block_size >= 1e3)) throw DomainError("block_size must be >= 1e3");
    if (!(sifted_rate_bps > 0.0)) throw DomainError("sifted_rate_bps must be > 0");
    FiniteKeyResult r;
    r.block_size = block_size;
    r.skr_asymptotic_bps = skr_asymptotic(qber_z, qber_x, p);
    r.acquisition_time_s = block_size / sifted_rate_bps;
    r.delta = hoeffding_delta(block_size, p.eps_sec);
    r.lambda_ev_bits = std::log2(2.0 / p.eps_cor);
    r.delta_rate_bps = r.delta * sifted_rate_bps;
    r.lambda_rate_bps = r.lambda_ev_bits / r.acquisition_time_s;
    const double v = r.skr_asymptotic_bps - r.delta_rate_bps - r.lambda_rate_bps;
    r.block_too_small = v <= 0.0;
    r.skr_fin_bps = std::max(0.0, v);
    return r;
}

// Ordered (key, check) pair of distinct bases with the largest secret
// fraction; ties keep the earlier candidate, Z-keyed pairs first.
inline std::pair<Basis, Basis> select_key_bases(const QberReport& report, double f = 1.1) {
    for (Basis b : kBases)
        if (!report.has(b)) throw EmptySetting(std::string("select_key_bases needs QBER for basis ") + basis_name(b));
    std::pair<Basis, Basis> best{Basis::Z, Basis::X};
    double best_value = -std::numeric_limits<double>::infinity();
    for (Basis key : kBases)
        for (Basis check : kBases) {
            if (key == check) continue;
            const double v = secret_fraction(report[key], report[check], f);
            if (v > best_value) {
                best_value = v;
                best = {key, check};
            }
        }
    return best;
}

// Mean of cos(residual) seen by the counts, from a seeded PLL run of the
// given length. With the PLL off this is the open-loop phase statistic.
inline double mean_residual_cos(const LinkConfig& cfg, double duration_s, std::uint64_t seed) {
    validate(cfg);
    PhaseLockLoop loop(cfg.phase_noise, cfg.pll, derive_seed(seed, 1));
    const auto n = static_cast<std::uint64_t>(std::max(1.0, std::round(duration_s * cfg.pll.loop_rate_hz)));
    double sum = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) sum += std::cos(loop.step().residual);
    return sum / static_cast<double>(n);
}

struct AnalyticPoint {
    double length_km = 0.0;
    double qber_z = 0.0;
    double qber_x = 0.0;
    double coincidence_hz = 0.0;  // true + accidental, per key setting
    double raw_rate_hz = 0.0;     // R_r, coincidences before fiber attenuation
    double alpha = 1.0;           // fiber transmittance
    double sifted_rate_bps = 0.0;
    double skr_bps = 0.0;
};

// Expected QBER of a matched-basis setting from the outcome model averaged
// over the residual phase, diluted by uniformly distributed accidentals.
inline double expected_qber(const LinkConfig& cfg, Basis b, double mean_cos) {
    const LinkRates r = link_rates(cfg);
    const OutcomeModel model(MeasurementSetting{b, b}, cfg);
    const OutcomeProbabilities p = model.at(mean_cos, 0.0);
    const double err = b == Basis::Y ? p[0] + p[3] : p[1] + p[2];
    const double total = r.true_coincidence_hz + r.accidental_hz;
    return (r.true_coincidence_hz * err + 0.5 * r.accidental_hz) / total;
}

// Closed-form SKR of the Z/X key at one fiber length. The phase statistic is
// taken as length independent; losses and fiber noise photons scale with L.
inline AnalyticPoint analytic_skr(LinkConfig cfg, double length_km, SkrParams skr, double mean_cos) {
    cfg.channel.length_km = length_km;
    validate(cfg);
    AnalyticPoint pt;
    pt.length_km = length_km;
    const LinkRates r = link_rates(cfg);
    pt.coincidence_hz = r.true_coincidence_hz + r.accidental_hz;
    pt.alpha = db_to_transmittance(cfg.channel.atten_db_per_km * length_km);
    pt.raw_rate_hz = pt.coincidence_hz / pt.alpha;
    pt.qber_z = std::clamp(expected_qber(cfg, Basis::Z, mean_cos), 0.0, 0.5);
    pt.qber_x = std::clamp(expected_qber(cfg, Basis::X, mean_cos), 0.0, 0.5);
    skr.raw_rate_hz = pt.raw_rate_hz;
    skr.alpha = pt.alpha;
    pt.sifted_rate_bps = sifted_rate(skr);
    pt.skr_bps = skr_asymptotic(pt.qber_z, pt.qber_x, skr);
    return pt;
}

inline std::vector<AnalyticPoint> skr_vs_distance(const LinkConfig& tmpl, const SkrParams& skr,
                                                  const std::vector<double>& lengths_km, double mean_cos) {
    for (std::size_t i = 0; i < lengths_km.size(); ++i) {
        if (!(lengths_km[i] >= 0.0)) throw ConfigError("field 'lengths': must be >= 0");
        if (i && lengths_km[i] < lengths_km[i - 1]) throw ConfigError("field 'lengths': must be sorted ascending");
    }
    std::vector<AnalyticPoint> out;
    out.reserve(lengths_km.size());
    for (double l : lengths_km) out.push_back(analytic_skr(tmpl, l, skr, mean_cos));
    return out;
}

}  // namespace pathqkd
