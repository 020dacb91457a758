#pragma once

#include <cmath>
#include <random>

#include "pathqkd/count_table.hpp"
#include "pathqkd/quantum.hpp"
#include "pathqkd/rng.hpp"

namespace pathqkd::fixtures {

// Ginibre-distributed random density matrix of the given rank.
inline TwoQubitState random_state(Rng& rng, int rank = 4) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Matrix<Complex, 4, Eigen::Dynamic> g(4, rank);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < rank; ++c) g(r, c) = {n(rng), n(rng)};
    Matrix4c rho = g * g.adjoint();
    rho /= rho.trace().real();
    return TwoQubitState::checked(0.5 * (rho + rho.adjoint()));
}

// Counts equal to the rounded expectation, N per setting.
inline CountTable exact_counts(const TwoQubitState& rho, double n_per_setting) {
    CountTable t;
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        const auto p = born_probabilities(rho, s);
        SettingCounts c;
        c.integration_s = 1.0;
        for (std::size_t o = 0; o < 4; ++o) c.counts[o] = static_cast<std::uint64_t>(std::llround(n_per_setting * p[o]));
        t.set(s, c);
    }
    return t;
}

// Multinomial counts with N trials per setting.
inline CountTable sampled_counts(const TwoQubitState& rho, std::uint64_t n_per_setting, Rng& rng) {
    CountTable t;
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        const auto p = born_probabilities(rho, s);
        SettingCounts c;
        c.integration_s = 1.0;
        std::uint64_t left = n_per_setting;
        double mass = 1.0;
        for (std::size_t o = 0; o < 3; ++o) {
            const double q = mass > 0 ? std::clamp(p[o] / mass, 0.0, 1.0) : 0.0;
            std::binomial_distribution<std::uint64_t> b(left, q);
            c.counts[o] = b(rng);
            left -= c.counts[o];
            mass -= p[o];
        }
        c.counts[3] = left;
        t.set(s, c);
    }
    return t;
}

}  // namespace pathqkd::fixtures
