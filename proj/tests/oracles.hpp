#pragma once

// Independent reference computations used by the tests and the acceptance
// runner. None of them call the library routine they check.

#include <algorithm>
#include <array>
#include <cmath>

#include "pathqkd/quantum.hpp"

namespace pathqkd::oracle {

inline Eigen::Vector3d direction(double theta, double phi) {
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

inline Matrix2c spin(const Eigen::Vector3d& n) {
    Matrix2c m;
    m << Complex(n.z(), 0), Complex(n.x(), -n.y()), Complex(n.x(), n.y()), Complex(-n.z(), 0);
    return m;
}

// CHSH value for Bob directions b, b', with Alice's two directions chosen
// optimally: S = |m(b + b')| + |m(b - b')|, m_i(v) = Tr[rho (sigma_i x v.sigma)].
inline double chsh_for_bob(const Matrix4c& rho, const Eigen::Vector3d& b, const Eigen::Vector3d& bp) {
    static const std::array<Matrix2c, 3> sig = [] {
        std::array<Matrix2c, 3> s;
        s[0] << 0, 1, 1, 0;
        s[1] << 0, Complex(0, -1), Complex(0, 1), 0;
        s[2] << 1, 0, 0, -1;
        return s;
    }();
    auto m_of = [&](const Eigen::Vector3d& v) {
        Eigen::Vector3d m;
        const Matrix2c bv = spin(v);
        for (int i = 0; i < 3; ++i) {
            Matrix4c op;
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) op.block<2, 2>(2 * r, 2 * c) = sig[i](r, c) * bv;
            m(i) = (rho * op).trace().real();
        }
        return m;
    };
    return m_of(b + bp).norm() + m_of(b - bp).norm();
}

// Maximal CHSH value by grid search over Bob's two directions followed by
// pattern-search refinement.
inline double chsh_brute_force(const TwoQubitState& state) {
    const Matrix4c& rho = state.matrix();
    std::array<double, 4> best{};
    double best_s = -1.0;
    const int g = 8;
    for (int i = 0; i <= g; ++i)
        for (int j = 0; j < 2 * g; ++j)
            for (int k = 0; k <= g; ++k)
                for (int l = 0; l < 2 * g; ++l) {
                    const std::array<double, 4> x{kPi * i / g, kPi * j / g, kPi * k / g, kPi * l / g};
                    const double s = chsh_for_bob(rho, direction(x[0], x[1]), direction(x[2], x[3]));
                    if (s > best_s) {
                        best_s = s;
                        best = x;
                    }
                }
    double step = kPi / g;
    while (step > 1e-9) {
        bool moved = false;
        for (int d = 0; d < 4; ++d)
            for (double sgn : {1.0, -1.0}) {
                auto x = best;
                x[d] += sgn * step;
                const double s = chsh_for_bob(rho, direction(x[0], x[1]), direction(x[2], x[3]));
                if (s > best_s) {
                    best_s = s;
                    best = x;
                    moved = true;
                }
            }
        if (!moved) step *= 0.5;
    }
    return best_s;
}

// (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 through two eigendecompositions.
inline double uhlmann_fidelity(const TwoQubitState& rho, const TwoQubitState& sigma) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(rho.matrix());
    Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix4c sq = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
    const Matrix4c m = sq * sigma.matrix() * sq;
    Eigen::SelfAdjointEigenSolver<Matrix4c> em(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    double tr = 0.0;
    for (int k = 0; k < 4; ++k)
        if (em.eigenvalues()(k) > 1e-14) tr += std::sqrt(em.eigenvalues()(k));
    return tr * tr;
}

// Binary entropy by integrating its derivative log2((1 - t)/t) from 1/2,
// where H2 = 1 (composite Simpson, singularities avoided for p >= 1e-6).
inline double binary_entropy_integral(double p, int n = 20000) {
    if (p == 0.0 || p == 1.0) return 0.0;
    auto d = [](double t) { return std::log2((1.0 - t) / t); };
    const double a = 0.5;
    const double h = (p - a) / n;
    double s = d(a) + d(p);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * d(a + k * h);
    return 1.0 + s * h / 3.0;
}

}  // namespace pathqkd::oracle
