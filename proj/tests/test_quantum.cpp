#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pathqkd/quantum.hpp"
#include "support.hpp"

using namespace pathqkd;

TEST(Quantum, BellStatesArePhysical) {
    EXPECT_TRUE(bell_phi_plus().is_physical());
    EXPECT_TRUE(bell_phi_minus().is_physical());
    EXPECT_NEAR(bell_phi_plus()(0, 3).real(), 0.5, 1e-15);
    EXPECT_NEAR(bell_phi_minus()(0, 3).real(), -0.5, 1e-15);
}

TEST(Quantum, CheckedRejectsUnphysical) {
    Matrix4c m = Matrix4c::Zero();
    m(0, 0) = 1.2;
    m(1, 1) = -0.2;
    EXPECT_THROW(TwoQubitState::checked(m), InvalidState);
    Matrix4c h = bell_phi_plus().matrix();
    h(0, 3) += Complex(0, 0.1);
    EXPECT_THROW(TwoQubitState::checked(h), InvalidState);
}

TEST(Quantum, ChshOfPhiPlusIsTsirelson) {
    EXPECT_NEAR(chsh_max(bell_phi_plus()), 2.0 * std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(chsh_max(TwoQubitState::maximally_mixed()), 0.0, 1e-12);
}

TEST(Quantum, ChshMatchesAngleSearch) {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        const auto rho = fixtures::random_state(rng, 1 + i % 4);
        EXPECT_NEAR(chsh_max(rho), oracle::chsh_brute_force(rho), 1e-6) << "state " << i;
    }
}

TEST(Quantum, ChshOfWernerState) {
    // p Phi+ + (1 - p) I/4 has S = 2 sqrt(2) p.
    for (double p : {0.3, 0.7, 1.0}) {
        const Matrix4c m = p * bell_phi_plus().matrix() + (1 - p) * Matrix4c::Identity() / 4.0;
        EXPECT_NEAR(chsh_max(TwoQubitState::checked(m)), 2.0 * std::sqrt(2.0) * p, 1e-12);
    }
}

TEST(Quantum, FidelityAgreesWithUhlmannFormula) {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto a = fixtures::random_state(rng);
        const auto b = fixtures::random_state(rng, 1 + i % 4);
        EXPECT_NEAR(fidelity(a, b), oracle::uhlmann_fidelity(a, b), 1e-9);
        EXPECT_NEAR(fidelity(a, bell_phi_plus()), fidelity_to_pure(a, phi_plus_vector()), 1e-9);
    }
}

TEST(Quantum, FidelityProperties) {
    Rng rng(6);
    const auto a = fixtures::random_state(rng);
    const auto b = fixtures::random_state(rng);
    EXPECT_NEAR(fidelity(a, a), 1.0, 1e-9);
    EXPECT_NEAR(fidelity(a, b), fidelity(b, a), 1e-9);
    EXPECT_NEAR(fidelity(bell_phi_plus(), bell_phi_minus()), 0.0, 1e-12);
    EXPECT_NEAR(fidelity(TwoQubitState::maximally_mixed(), bell_phi_plus()), 0.25, 1e-12);
}

TEST(Quantum, BornProbabilitiesOfPhiPlus) {
    const auto zz = born_probabilities(bell_phi_plus(), MeasurementSetting{Basis::Z, Basis::Z});
    EXPECT_NEAR(zz[0], 0.5, 1e-12);
    EXPECT_NEAR(zz[1], 0.0, 1e-12);
    EXPECT_NEAR(zz[3], 0.5, 1e-12);
    const auto yy = born_probabilities(bell_phi_plus(), MeasurementSetting{Basis::Y, Basis::Y});
    EXPECT_NEAR(yy[1] + yy[2], 1.0, 1e-12);
    const auto zx = born_probabilities(bell_phi_plus(), MeasurementSetting{Basis::Z, Basis::X});
    for (double p : zx) EXPECT_NEAR(p, 0.25, 1e-12);
}

TEST(Quantum, BornProbabilitiesSumToOne) {
    Rng rng(7);
    for (int i = 0; i < 10; ++i) {
        const auto rho = fixtures::random_state(rng);
        for (int k = 0; k < 9; ++k) {
            const auto p = born_probabilities(rho, MeasurementSetting::from_index(k));
            double s = 0;
            for (double x : p) {
                EXPECT_GE(x, -1e-12);
                s += x;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Quantum, CorrelationRoundTrip) {
    Rng rng(8);
    const auto rho = fixtures::random_state(rng);
    const auto back = state_from_correlations(correlations_of(rho));
    EXPECT_TRUE(back.physical);
    EXPECT_LT(trace_distance(rho, back.state), 1e-12);
}

TEST(Quantum, TraceDistance) {
    EXPECT_NEAR(trace_distance(bell_phi_plus(), bell_phi_minus()), 1.0, 1e-12);
    EXPECT_NEAR(trace_distance(bell_phi_plus(), bell_phi_plus()), 0.0, 1e-12);
}

TEST(Quantum, ProjectToPhysicalFixesNegativeEigenvalue) {
    Matrix4c m = bell_phi_plus().matrix();
    m(1, 1) = -0.05;
    m(2, 2) = 0.05;
    const auto p = project_to_physical(m);
    EXPECT_TRUE(p.is_physical());
}

TEST(Quantum, SettingNames) {
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        EXPECT_EQ(MeasurementSetting::parse(s.name())->index(), k);
    }
    EXPECT_FALSE(MeasurementSetting::parse("ZQ"));
}
