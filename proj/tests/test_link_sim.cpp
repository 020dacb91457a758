#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pathqkd/link_sim.hpp"
#include "pathqkd/tomography.hpp"

using namespace pathqkd;

namespace {

SourceParams ideal_source() {
    SourceParams s;
    s.multi_pair_fraction = 0.0;
    return s;
}

LinkConfig quiet_link() {
    LinkConfig c;
    c.phase_noise.jump_rate_hz = 0.0;
    return c;
}

}  // namespace

TEST(LinkSim, EffectiveStateLimits) {
    EXPECT_LT(trace_distance(effective_state(0.0, ideal_source(), 0.0), bell_phi_plus()), 1e-12);
    EXPECT_LT(trace_distance(effective_state(kPi, ideal_source(), 0.0), bell_phi_minus()), 1e-12);
    EXPECT_THROW(effective_state(0.0, ideal_source(), 1.0), InvalidParam);
    EXPECT_THROW(effective_state(0.0, ideal_source(), -0.1), InvalidParam);
}

TEST(LinkSim, WernerWeightCombinesNoiseSources) {
    SourceParams s;
    s.multi_pair_fraction = 0.03;
    EXPECT_NEAR(white_noise_weight(0.02, s), 0.0494, 1e-12);
    const auto rho = effective_state(0.0, s, 0.02);
    EXPECT_TRUE(rho.is_physical());
    EXPECT_NEAR(fidelity(rho, bell_phi_plus()), 1.0 - 0.75 * 0.0494, 1e-9);
    EXPECT_NEAR(fidelity(rho, bell_phi_plus()), 0.963, 5e-4);
}

TEST(LinkSim, SpiralImbalanceSetsPopulations) {
    SourceParams s = ideal_source();
    s.spiral_imbalance = 3.0;
    const auto rho = effective_state(0.0, s, 0.0);
    EXPECT_NEAR(rho(3, 3).real() / rho(0, 0).real(), 3.0, 1e-12);
}

TEST(LinkSim, OutcomeModelMatchesBornRule) {
    LinkConfig c;
    c.noise_floor = 0.05;
    c.measurement.x_phase_error_rad = 0.2;
    c.measurement.y_phase_error_rad = -0.3;
    c.source.spiral_imbalance = 1.3;
    c.channel.delay_mismatch_ps = 2.0;
    const double v = delay_visibility(c.source, c.channel);
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        const OutcomeModel model(s, c);
        const auto proj = projectors(s, c.measurement.frame(), MeasurementFrame{});
        for (double phi : {0.0, 0.4, -1.3, 2.9}) {
            const auto rho = effective_state(phi, c.source, c.noise_floor, v);
            const auto p = born_probabilities(rho.matrix(), proj);
            const auto q = model.at(phi);
            for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(p[o], q[o], 1e-12) << s.name() << " phi " << phi;
        }
    }
}

TEST(LinkSim, DelayMismatchReducesCoherence) {
    SourceParams s;
    ChannelParams c;
    EXPECT_EQ(delay_visibility(s, c), 1.0);
    c.delay_mismatch_ps = s.coherence_time_ps;
    EXPECT_NEAR(delay_visibility(s, c), std::exp(-0.5), 1e-12);
}

TEST(LinkSim, RatesFollowLossBudget) {
    LinkConfig c;
    c.channel.length_km = 50;
    const auto r = link_rates(c);
    const double mu_r = c.source.pair_prob_per_pulse * c.source.rep_rate_hz;
    const double t_i = std::pow(10.0, -7.0 / 10);
    const double t_s = std::pow(10.0, -(21.0 + 10.0) / 10);
    EXPECT_NEAR(r.true_coincidence_hz, mu_r * t_i * t_s * 0.91 * 0.91, 1e-9 * r.true_coincidence_hz);
    EXPECT_NEAR(r.accidental_hz, r.singles_a_hz * r.singles_b_hz * 2e-10, 1e-12);
    EXPECT_NEAR(accidental_rate(1e5, 1e4, 1e-9), 1.0, 1e-12);
    EXPECT_THROW(accidental_rate(-1, 1, 1), InvalidParam);
}

TEST(LinkSim, ScheduleErrors) {
    EXPECT_THROW(simulate_counts(LinkConfig{}, {}, 1), ConfigError);
    EXPECT_THROW(simulate_counts(LinkConfig{}, {{MeasurementSetting{Basis::Z, Basis::Z}, 0.0}}, 1), ConfigError);
    LinkConfig bad;
    bad.source.pair_prob_per_pulse = 0.5;
    EXPECT_THROW(simulate_counts(bad, full_tomography_schedule(1.0), 1), ConfigError);
}

TEST(LinkSim, SimulationIsDeterministic) {
    const auto sched = full_tomography_schedule(0.5);
    const auto a = simulate_counts(LinkConfig{}, sched, 42);
    const auto b = simulate_counts(LinkConfig{}, sched, 42);
    const auto c = simulate_counts(LinkConfig{}, sched, 43);
    EXPECT_TRUE(a.table == b.table);
    EXPECT_FALSE(a.table == c.table);
    EXPECT_TRUE(a.table.has_all_nine());
}

TEST(LinkSim, CountsArePoissonAroundExpectation) {
    // Fixed phase history, 400 independent count draws.
    LinkConfig c = quiet_link();
    const std::vector<ScheduleEntry> sched{{MeasurementSetting{Basis::X, Basis::X}, 0.2}};
    const PhaseHistory h = run_phase_history(c, sched, 1);
    const int n = 400;
    std::array<double, 4> sum{}, sq{};
    std::array<double, 4> lambda{};
    for (int r = 0; r < n; ++r) {
        const auto sc = sample_counts(c, sched, h, 1000 + r);
        const auto& t = sc.truth[0];
        for (std::size_t o = 0; o < 4; ++o) {
            lambda[o] = t.expected_true[o] + t.expected_accidental[o];
            const double x = static_cast<double>(sc.table.at(sched[0].setting).counts[o]);
            sum[o] += x;
            sq[o] += x * x;
        }
    }
    for (std::size_t o = 0; o < 4; ++o) {
        const double mean = sum[o] / n;
        const double var = sq[o] / n - mean * mean;
        EXPECT_NEAR(mean, lambda[o], 5.0 * std::sqrt(lambda[o] / n)) << "outcome " << o;
        EXPECT_NEAR(var / lambda[o], 1.0, 0.25) << "outcome " << o;
    }
}

TEST(LinkSim, QberTracksResidualPhase) {
    LinkConfig locked = quiet_link();
    LinkConfig open = quiet_link();
    open.pll.enabled = false;
    const std::vector<ScheduleEntry> sched{{MeasurementSetting{Basis::X, Basis::X}, 60.0}};
    const auto a = simulate_counts(locked, sched, 3);
    const auto b = simulate_counts(open, sched, 3);
    auto q = [&](const Simulation& s) {
        const auto& n = s.table.at(sched[0].setting).counts;
        return double(n[1] + n[2]) / double(n[0] + n[1] + n[2] + n[3]);
    };
    EXPECT_LT(q(a), 0.1);
    EXPECT_GT(q(b), 0.2);
}

TEST(LinkSim, TimestampsReproduceCounts) {
    LinkConfig c = quiet_link();
    c.source.pair_prob_per_pulse = 0.08;
    c.channel.coupling_loss_db_per_facet = 3.0;
    const MeasurementSetting s{Basis::Z, Basis::Z};
    const double dur = 2.0;
    const auto rec = emit_timestamps(c, s, dur, 17);
    std::array<std::int64_t, 2> last{-1, -1};
    for (const auto& x : rec) {
        ASSERT_GE(x.time_ps, last[x.channel_id]);
        last[x.channel_id] = x.time_ps;
    }
    const auto n = count_coincidences(rec, c.channel.coincidence_window_s);
    const auto r = link_rates(c);
    const double expected = (r.true_coincidence_hz + r.accidental_hz) * dur;
    const double total = double(n[0] + n[1] + n[2] + n[3]);
    EXPECT_NEAR(total, expected, 5.0 * std::sqrt(expected));
    // Z correlations of the Werner-like state: errors are accidentals plus w/2.
    const double w = white_noise_weight(c.noise_floor, c.source);
    const double q = double(n[1] + n[2]) / total;
    const double q_expected = (r.true_coincidence_hz * w / 2 + r.accidental_hz / 2) /
                              (r.true_coincidence_hz + r.accidental_hz);
    EXPECT_NEAR(q, q_expected, 5.0 * std::sqrt(q_expected / total));

    std::ostringstream os;
    write_timestamps(os, rec);
    EXPECT_EQ(os.str().substr(0, 30), "channel_id,time_ps,detector_id");
}

TEST(LinkSim, TraceCsvHeader) {
    const auto sim = simulate_counts(LinkConfig{}, full_tomography_schedule(0.1), 1);
    std::ostringstream os;
    write_trace_csv(os, sim.trace);
    EXPECT_EQ(os.str().substr(0, 47), "t_s,true_phase,correction,residual,pd_power,loc");
    EXPECT_GT(sim.trace.size(), 0u);
}
