#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pathqkd/phase_lock.hpp"

using namespace pathqkd;

namespace {

PhaseNoiseParams no_jumps() {
    PhaseNoiseParams p;
    p.jump_rate_hz = 0.0;
    return p;
}

double stddev(const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

}  // namespace

TEST(PhaseLock, PdPowerFringe) {
    EXPECT_NEAR(pd_power(0.0, 1.0), 1.0, 1e-15);
    EXPECT_NEAR(pd_power(kPi, 1.0), 0.0, 1e-15);
    EXPECT_NEAR(pd_power(kPi / 2, 1.0), 0.5, 1e-15);
}

TEST(PhaseLock, ZeroNoiseKeepsPhase) {
    PhaseNoiseParams p = no_jumps();
    p.std_rad = 0.0;
    Rng rng(1);
    double phi = 0.3;
    for (int k = 0; k < 1000; ++k) phi = phase_step(phi, 1e-3, p, rng);
    // Only the deterministic OU relaxation remains.
    EXPECT_NEAR(phi, 0.3 * std::exp(-2 * kPi * 0.5 * 1.0), 1e-12);
    PhaseNoiseProcess proc(p, 1e-3, 0.0);
    for (int k = 0; k < 1000; ++k) EXPECT_EQ(proc.step(rng), 0.0);
}

TEST(PhaseLock, OuStationaryStd) {
    const PhaseNoiseParams p = no_jumps();
    PhaseNoiseProcess proc(p, 1e-3, 0.0);
    Rng rng(2);
    std::vector<double> v;
    v.reserve(1000000);
    for (int k = 0; k < 1000000; ++k) v.push_back(proc.step(rng));
    // 1e6 steps span 500 correlation times; 10 % is several sigma.
    EXPECT_NEAR(stddev(v), p.std_rad, 0.1 * p.std_rad);
}

TEST(PhaseLock, WideBandOuIsUncorrelated) {
    PhaseNoiseParams p = no_jumps();
    p.bandwidth_hz = 1e6;
    PhaseNoiseProcess proc(p, 1e-3, 0.0);
    Rng rng(3);
    std::vector<double> v;
    for (int k = 0; k < 100000; ++k) v.push_back(proc.step(rng));
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double c0 = 0, c1 = 0;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        c0 += (v[k] - m) * (v[k] - m);
        c1 += (v[k] - m) * (v[k + 1] - m);
    }
    EXPECT_LT(std::abs(c1 / c0), 0.05);
}

TEST(PhaseLock, UndersampledLoopIsRejected) {
    PhaseNoiseParams n;
    n.bandwidth_hz = 600;
    PllParams pll;
    EXPECT_THROW(PhaseLockLoop(n, pll, 1), ConfigError);
    EXPECT_THROW(pll_run(PhaseNoiseParams{}, pll, 0.0, 1), InvalidParam);
}

TEST(PhaseLock, ZeroNoiseResidualVanishes) {
    PhaseNoiseParams n = no_jumps();
    n.std_rad = 0.0;
    const auto run = pll_run(n, PllParams{}, 5.0, 4);
    for (std::size_t k = 1000; k < run.trace.size(); ++k) EXPECT_NEAR(run.trace.residual_rad[k], 0.0, 1e-9);
}

TEST(PhaseLock, OpenLoopMatchesRawNoise) {
    PllParams off;
    off.enabled = false;
    const auto run = pll_run(no_jumps(), off, 600.0, 5);
    const double s = stddev(run.trace.residual_rad);
    EXPECT_NEAR(s, kPi / 2, 0.2 * kPi / 2);
}

TEST(PhaseLock, ClosedLoopSuppressesNoiseTenfold) {
    PllParams off;
    off.enabled = false;
    const auto open = pll_run(no_jumps(), off, 300.0, 6);
    const auto closed = pll_run(no_jumps(), PllParams{}, 300.0, 6);
    EXPECT_LE(closed.summary.locked_residual_std(), open.summary.residual_rms() / 10.0);
}

TEST(PhaseLock, RelocksAfterPiJump) {
    const auto run = pll_run(no_jumps(), PllParams{}, 20.0, 7, {{10.0, kPi}});
    EXPECT_GE(run.summary.unlock_events, 1u);
    EXPECT_LE(run.summary.longest_unlock_s, 2.0);
    EXPECT_TRUE(run.trace.locked.back());
}

TEST(PhaseLock, UnlockedFractionSmall) {
    const auto run = pll_run(PhaseNoiseParams{}, PllParams{}, 600.0, 8);
    EXPECT_LT(run.summary.unlocked_fraction(), 0.05);
}

TEST(PhaseLock, SeededRunsRepeat) {
    const auto a = pll_run(PhaseNoiseParams{}, PllParams{}, 10.0, 9);
    const auto b = pll_run(PhaseNoiseParams{}, PllParams{}, 10.0, 9);
    EXPECT_EQ(a.trace.residual_rad, b.trace.residual_rad);
}
