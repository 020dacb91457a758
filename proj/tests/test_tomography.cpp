#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pathqkd/tomography.hpp"
#include "support.hpp"

using namespace pathqkd;

TEST(Tomography, ExactPhiPlusCounts) {
    const auto table = fixtures::exact_counts(bell_phi_plus(), 1e6);
    const auto lin = linear_inversion(table);
    EXPECT_LT(trace_distance(lin.state, bell_phi_plus()), 1e-6);
    const auto r = mle_reconstruct(table);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(fidelity(r.rho, bell_phi_plus()), 1.0, 1e-4);
    EXPECT_NEAR(chsh_max(r.rho), 2.0 * std::sqrt(2.0), 1e-3);
    EXPECT_EQ(matrix_overlap(joint_probability_matrix(table), joint_probability_matrix(bell_phi_plus())), 1.0);
}

TEST(Tomography, MaximallyMixedCounts) {
    const auto table = fixtures::exact_counts(TwoQubitState::maximally_mixed(), 4e4);
    const auto r = mle_reconstruct(table);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(trace_distance(r.rho, TwoQubitState::maximally_mixed()), 1e-6);
}

TEST(Tomography, ValidationErrors) {
    CountTable t = fixtures::exact_counts(bell_phi_plus(), 100);
    CountTable missing;
    for (int k = 0; k < 8; ++k) missing.set(MeasurementSetting::from_index(k), t.at(MeasurementSetting::from_index(k)));
    EXPECT_THROW(validate_tomography(missing), ValidationError);
    EXPECT_THROW(mle_reconstruct(missing), ValidationError);
    SettingCounts zero;
    zero.integration_s = 1;
    t.set(MeasurementSetting{Basis::X, Basis::Y}, zero);
    EXPECT_THROW(validate_tomography(t), EmptySetting);
}

TEST(Tomography, MleBeatsProjectedInversion) {
    Rng rng(21);
    for (int i = 0; i < 10; ++i) {
        const auto rho = fixtures::random_state(rng, 1 + i % 4);
        const auto table = fixtures::sampled_counts(rho, 2000, rng);
        const auto r = mle_reconstruct(table);
        ASSERT_TRUE(r.converged);
        EXPECT_TRUE(r.rho.is_physical());
        EXPECT_GE(r.log_likelihood, log_likelihood(table, projected_linear_inversion(table)) - 1e-9);
        EXPECT_NEAR(r.log_likelihood, log_likelihood(table, r.rho), 1e-6 * std::abs(r.log_likelihood));
    }
}

TEST(Tomography, MleRecoversStateAtHighCounts) {
    Rng rng(22);
    for (int i = 0; i < 5; ++i) {
        const auto rho = fixtures::random_state(rng, 1 + i % 4);
        const auto r = mle_reconstruct(fixtures::sampled_counts(rho, 1000000, rng));
        EXPECT_LT(trace_distance(r.rho, rho), 0.01) << "state " << i;
    }
}

TEST(Tomography, LikelihoodGradientMatchesFiniteDifference) {
    Rng rng(23);
    const auto table = fixtures::sampled_counts(fixtures::random_state(rng), 5000, rng);
    const detail::LikelihoodData data(table);
    const detail::NegLogLikelihood f{data};
    Eigen::Matrix<double, 16, 1> x;
    for (int k = 0; k < 16; ++k) x(k) = 0.3 + 0.05 * k;
    Eigen::Matrix<double, 16, 1> g;
    f(x, &g);
    for (int k = 0; k < 16; ++k) {
        auto xp = x, xm = x;
        xp(k) += 1e-6;
        xm(k) -= 1e-6;
        const double fd = (f(xp, nullptr) - f(xm, nullptr)) / 2e-6;
        EXPECT_NEAR(g(k), fd, 1e-6) << "component " << k;
    }
}

TEST(Tomography, ResampleModes) {
    const auto table = fixtures::exact_counts(bell_phi_plus(), 1000);
    Rng rng(1);
    EXPECT_TRUE(resample_counts(table, rng, 0.0) == table);
    EXPECT_FALSE(resample_counts(table, rng, 1.0) == table);
    const auto g = resample_counts(table, rng, 2.0);
    EXPECT_TRUE(g.has_all_nine());
}

TEST(Tomography, MonteCarloSingleRun) {
    const auto table = fixtures::exact_counts(bell_phi_plus(), 1000);
    const auto h = monte_carlo_fidelity(table, bell_phi_plus(), 1, 5);
    EXPECT_EQ(h.samples.size(), 1u);
    EXPECT_EQ(h.std, 0.0);
    EXPECT_THROW(monte_carlo_fidelity(table, bell_phi_plus(), 0, 5), InvalidParam);
}

TEST(Tomography, MonteCarloIndependentOfThreads) {
    Rng rng(3);
    const auto table = fixtures::sampled_counts(fixtures::random_state(rng), 3000, rng);
    MonteCarloOptions one, many;
    one.threads = 1;
    many.threads = 4;
    const auto a = monte_carlo_fidelity(table, bell_phi_plus(), 40, 9, one);
    const auto b = monte_carlo_fidelity(table, bell_phi_plus(), 40, 9, many);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.chsh_samples, b.chsh_samples);
}

TEST(Tomography, MonteCarloSpreadShrinksWithCounts) {
    const auto rho = TwoQubitState::checked(0.9 * bell_phi_plus().matrix() + 0.1 * Matrix4c::Identity() / 4.0);
    const auto small = monte_carlo_fidelity(fixtures::exact_counts(rho, 1000), bell_phi_plus(), 200, 1);
    const auto large = monte_carlo_fidelity(fixtures::exact_counts(rho, 16000), bell_phi_plus(), 200, 1);
    // Poisson spread scales as 1/sqrt(N): a factor of 4 here.
    EXPECT_NEAR(small.std / large.std, 4.0, 1.0);
    EXPECT_NEAR(large.mean, fidelity(rho, bell_phi_plus()), 3 * large.std);
}

TEST(Tomography, JointMatrixProperties) {
    Rng rng(4);
    const auto rho = fixtures::random_state(rng);
    const auto p = joint_probability_matrix(fixtures::exact_counts(rho, 1e7));
    const auto q = joint_probability_matrix(rho);
    for (int br = 0; br < 2; ++br)
        for (int bc = 0; bc < 2; ++bc) EXPECT_NEAR((p.block<2, 2>(2 * br, 2 * bc).sum()), 1.0, 1e-12);
    EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(matrix_overlap(q, q), 1.0, 1e-12);
    JointMatrix bad = q;
    bad(0, 0) += 0.1;
    EXPECT_THROW(matrix_overlap(bad, q), NotNormalized);
}

TEST(Tomography, DensityExports) {
    std::ostringstream a, b;
    write_density_csv(a, bell_phi_plus());
    write_density_polar_csv(b, bell_phi_plus());
    std::istringstream rows(a.str());
    std::string line;
    int n = 0;
    while (std::getline(rows, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
        ++n;
    }
    EXPECT_EQ(n, 4);
    EXPECT_EQ(b.str().substr(0, 24), "row,col,amplitude,phase_");
}
