#pragma once

// Dense two-qubit state algebra: density matrices, Pauli correlations,
// Born-rule outcome probabilities, Uhlmann fidelity and the maximal CHSH value.
//
// Basis order throughout is |00>, |01>, |10>, |11> with the first qubit held
// by Alice (idler) and the second by Bob (signal).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "pathqkd/errors.hpp"

namespace pathqkd {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix<Complex, 2, 2>;
using Matrix4c = Eigen::Matrix<Complex, 4, 4>;
using Vector2c = Eigen::Matrix<Complex, 2, 1>;
using Vector4c = Eigen::Matrix<Complex, 4, 1>;
using Vector4d = Eigen::Vector4d;

inline constexpr double kPi = 3.14159265358979323846;

namespace tolerance {
inline constexpr double kHermitian = 1e-12;
inline constexpr double kTrace = 1e-12;
inline constexpr double kPsd = 1e-10;
}  // namespace tolerance

enum class Pauli { I = 0, X = 1, Y = 2, Z = 3 };

inline constexpr std::array<Pauli, 4> kPaulis{Pauli::I, Pauli::X, Pauli::Y, Pauli::Z};

inline Matrix2c pauli_matrix(Pauli p) {
    const Complex i{0.0, 1.0};
    Matrix2c m;
    switch (p) {
        case Pauli::I: m << 1, 0, 0, 1; break;
        case Pauli::X: m << 0, 1, 1, 0; break;
        case Pauli::Y: m << 0, -i, i, 0; break;
        case Pauli::Z: m << 1, 0, 0, -1; break;
    }
    return m;
}

inline Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
    Matrix4c out;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) out.block<2, 2>(2 * r, 2 * c) = a(r, c) * b;
    return out;
}

inline Vector4c kron(const Vector2c& a, const Vector2c& b) {
    Vector4c out;
    out << a(0) * b(0), a(0) * b(1), a(1) * b(0), a(1) * b(1);
    return out;
}

// Measurement bases, in the order the tomography tables use.
enum class Basis { Z = 0, X = 1, Y = 2 };

inline constexpr std::array<Basis, 3> kBases{Basis::Z, Basis::X, Basis::Y};

inline constexpr char basis_name(Basis b) {
    switch (b) {
        case Basis::Z: return 'Z';
        case Basis::X: return 'X';
        case Basis::Y: return 'Y';
    }
    return '?';
}

inline std::optional<Basis> parse_basis(char c) {
    switch (c) {
        case 'Z': case 'z': return Basis::Z;
        case 'X': case 'x': return Basis::X;
        case 'Y': case 'y': return Basis::Y;
        default: return std::nullopt;
    }
}

inline constexpr Pauli pauli_of(Basis b) {
    switch (b) {
        case Basis::Z: return Pauli::Z;
        case Basis::X: return Pauli::X;
        case Basis::Y: return Pauli::Y;
    }
    return Pauli::I;
}

struct MeasurementSetting {
    Basis alice = Basis::Z;
    Basis bob = Basis::Z;

    constexpr int index() const { return 3 * static_cast<int>(alice) + static_cast<int>(bob); }
    static constexpr MeasurementSetting from_index(int k) {
        return {kBases[static_cast<std::size_t>(k / 3)], kBases[static_cast<std::size_t>(k % 3)]};
    }
    std::string name() const { return {basis_name(alice), basis_name(bob)}; }
    static std::optional<MeasurementSetting> parse(std::string_view s) {
        if (s.size() != 2) return std::nullopt;
        auto a = parse_basis(s[0]);
        auto b = parse_basis(s[1]);
        if (!a || !b) return std::nullopt;
        return MeasurementSetting{*a, *b};
    }
    friend constexpr bool operator==(const MeasurementSetting&, const MeasurementSetting&) = default;
};

// Joint outcome index: 2 * alice_bit + bob_bit, bit 0 being the "+" eigenstate.
enum class Outcome { PP = 0, PM = 1, MP = 2, MM = 3 };

inline constexpr std::array<const char*, 4> kOutcomeKeys{"pp", "pm", "mp", "mm"};

using OutcomeProbabilities = std::array<double, 4>;

// Imperfect local measurement: the equatorial bases pick up a phase error
// from the phase-shifter setting (|0> +- e^{i(theta+err)}|1>).
struct MeasurementFrame {
    double x_phase_error_rad = 0.0;
    double y_phase_error_rad = 0.0;
};

// Eigenvector of `basis` with eigenvalue +1 (sign 0) or -1 (sign 1).
inline Vector2c basis_vector(Basis basis, int sign, const MeasurementFrame& frame = {}) {
    const double s = sign == 0 ? 1.0 : -1.0;
    const double r = 1.0 / std::sqrt(2.0);
    Vector2c v;
    switch (basis) {
        case Basis::Z:
            v << (sign == 0 ? 1.0 : 0.0), (sign == 0 ? 0.0 : 1.0);
            break;
        case Basis::X:
            v << r, s * r * std::polar(1.0, frame.x_phase_error_rad);
            break;
        case Basis::Y:
            v << r, s * r * std::polar(1.0, kPi / 2 + frame.y_phase_error_rad);
            break;
    }
    return v;
}

// Product projector vectors for the four joint outcomes of a setting.
using ProjectorSet = std::array<Vector4c, 4>;

inline ProjectorSet projectors(MeasurementSetting setting, const MeasurementFrame& alice = {},
                               const MeasurementFrame& bob = {}) {
    ProjectorSet out;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            out[static_cast<std::size_t>(2 * a + b)] =
                kron(basis_vector(setting.alice, a, alice), basis_vector(setting.bob, b, bob));
    return out;
}

struct StateCheck {
    double hermitian_deviation = 0.0;
    double trace_deviation = 0.0;
    double min_eigenvalue = 0.0;

    bool hermitian() const { return hermitian_deviation < tolerance::kHermitian; }
    bool unit_trace() const { return trace_deviation < tolerance::kTrace; }
    bool psd() const { return min_eigenvalue >= -tolerance::kPsd; }
    bool physical() const { return hermitian() && unit_trace() && psd(); }
};

// Ascending eigenvalues of the Hermitian part of m.
inline Vector4d hermitian_eigenvalues(const Matrix4c& m) {
    const Matrix4c h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

class TwoQubitState {
public:
    TwoQubitState() : rho_(Matrix4c::Identity() / 4.0) {}

    // No invariant checks; linear inversion may legitimately produce
    // non-positive matrices.
    static TwoQubitState unchecked(const Matrix4c& m) { return TwoQubitState(m); }

    static TwoQubitState checked(const Matrix4c& m) {
        TwoQubitState s(m);
        s.validate();
        return s;
    }

    static TwoQubitState pure(const Vector4c& psi) {
        const Vector4c n = psi / psi.norm();
        return TwoQubitState(n * n.adjoint());
    }

    static TwoQubitState maximally_mixed() { return TwoQubitState(); }

    const Matrix4c& matrix() const { return rho_; }
    Complex operator()(int r, int c) const { return rho_(r, c); }

    StateCheck check() const {
        StateCheck c;
        c.hermitian_deviation = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
        c.trace_deviation = std::abs(rho_.trace() - Complex{1.0, 0.0});
        c.min_eigenvalue = hermitian_eigenvalues(rho_)(0);
        return c;
    }

    bool is_physical() const { return check().physical(); }

    void validate() const {
        const StateCheck c = check();
        if (!c.hermitian())
            throw InvalidState("state is not Hermitian (deviation " +
                               std::to_string(c.hermitian_deviation) + ")");
        if (!c.unit_trace())
            throw InvalidState("state trace deviates from 1 by " +
                               std::to_string(c.trace_deviation));
        if (!c.psd())
            throw InvalidState("state has negative eigenvalue " + std::to_string(c.min_eigenvalue));
    }

private:
    explicit TwoQubitState(const Matrix4c& m) : rho_(m) {}
    Matrix4c rho_;
};

inline double trace_distance(const TwoQubitState& a, const TwoQubitState& b) {
    return 0.5 * hermitian_eigenvalues(a.matrix() - b.matrix()).cwiseAbs().sum();
}

inline TwoQubitState bell_phi_plus() {
    Vector4c psi;
    psi << 1, 0, 0, 1;
    return TwoQubitState::pure(psi);
}

inline TwoQubitState bell_phi_minus() {
    Vector4c psi;
    psi << 1, 0, 0, -1;
    return TwoQubitState::pure(psi);
}

inline Vector4c phi_plus_vector() {
    Vector4c psi;
    psi << 1, 0, 0, 1;
    return psi / std::sqrt(2.0);
}

// Named target states accepted by the tools.
inline std::optional<TwoQubitState> named_state(std::string_view name) {
    if (name == "phi_plus" || name == "phi+") return bell_phi_plus();
    if (name == "phi_minus" || name == "phi-") return bell_phi_minus();
    if (name == "mixed") return TwoQubitState::maximally_mixed();
    return std::nullopt;
}

// Clamp eigenvalues in [-kPsd, 0) to zero and renormalize; more negative
// eigenvalues are an error.
inline Matrix4c clamp_to_physical(const Matrix4c& m) {
    const Matrix4c h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h);
    Vector4d ev = es.eigenvalues();
    if (ev(0) < -tolerance::kPsd)
        throw InvalidState("state has negative eigenvalue " + std::to_string(ev(0)));
    ev = ev.cwiseMax(0.0);
    const double tr = ev.sum();
    if (!(tr > 0.0)) throw InvalidState("state has zero trace");
    const Matrix4c v = es.eigenvectors();
    return v * (ev / tr).cast<Complex>().asDiagonal() * v.adjoint();
}

// Euclidean projection of a Hermitian unit-trace matrix onto the physical set
// by clipping negative eigenvalues and renormalizing. Used for the
// projected-linear-inversion baseline.
inline TwoQubitState project_to_physical(const Matrix4c& m) {
    const Matrix4c h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(h);
    Vector4d ev = es.eigenvalues().cwiseMax(0.0);
    const Matrix4c v = es.eigenvectors();
    return TwoQubitState::unchecked(v * (ev / ev.sum()).cast<Complex>().asDiagonal() * v.adjoint());
}

namespace detail {

inline void require_physical(const TwoQubitState& rho, const char* what) {
    const StateCheck c = rho.check();
    if (!c.hermitian() || !c.unit_trace() || !c.psd())
        throw InvalidState(std::string(what) + ": input state violates density-matrix invariants");
}

// Square root of a PSD matrix. Eigenvalues below 1e-14 are treated as exact
// zeros so rank-deficient states do not pick up sqrt(rounding) noise.
inline Matrix4c psd_sqrt(const Matrix4c& m) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (m + m.adjoint()));
    Vector4d ev = es.eigenvalues();
    for (int k = 0; k < 4; ++k) ev(k) = ev(k) < 1e-14 ? 0.0 : std::sqrt(ev(k));
    const Matrix4c v = es.eigenvectors();
    return v * ev.cast<Complex>().asDiagonal() * v.adjoint();
}

}  // namespace detail

inline double pauli_expectation(const TwoQubitState& rho, Pauli i, Pauli j) {
    detail::require_physical(rho, "pauli_expectation");
    const Complex e = (rho.matrix() * kron(pauli_matrix(i), pauli_matrix(j))).trace();
    if (std::abs(e.imag()) > 1e-10)
        throw InvalidState("Pauli expectation has imaginary part " + std::to_string(e.imag()));
    return e.real();
}

// c(i, j) = Tr(rho sigma_i (x) sigma_j), indices in Pauli order I, X, Y, Z.
struct CorrelationTensor {
    Eigen::Matrix4d c = Eigen::Matrix4d::Zero();

    double operator()(Pauli i, Pauli j) const {
        return c(static_cast<int>(i), static_cast<int>(j));
    }
    double& operator()(Pauli i, Pauli j) { return c(static_cast<int>(i), static_cast<int>(j)); }

    Eigen::Matrix3d block() const { return c.block<3, 3>(1, 1); }
};

// Full correlation tensor, without the physicality requirement of
// pauli_expectation; works for any Hermitian matrix.
inline CorrelationTensor correlations_of(const Matrix4c& m) {
    CorrelationTensor t;
    for (Pauli i : kPaulis)
        for (Pauli j : kPaulis)
            t(i, j) = (m * kron(pauli_matrix(i), pauli_matrix(j))).trace().real();
    return t;
}

inline CorrelationTensor correlations_of(const TwoQubitState& rho) {
    return correlations_of(rho.matrix());
}

struct LinearInversion {
    TwoQubitState state;
    bool physical = false;
    double min_eigenvalue = 0.0;
};

// rho = 1/4 sum_ij c_ij sigma_i (x) sigma_j. Hermitian and unit-trace by
// construction, not necessarily positive.
inline LinearInversion state_from_correlations(const CorrelationTensor& t) {
    if (std::abs(t(Pauli::I, Pauli::I) - 1.0) > 1e-12)
        throw InvalidParam("correlation tensor must have c_00 = 1");
    Matrix4c m = Matrix4c::Zero();
    for (Pauli i : kPaulis)
        for (Pauli j : kPaulis) m += t(i, j) * kron(pauli_matrix(i), pauli_matrix(j));
    m /= 4.0;
    LinearInversion out{TwoQubitState::unchecked(m), false, 0.0};
    out.min_eigenvalue = hermitian_eigenvalues(m)(0);
    out.physical = out.min_eigenvalue >= -tolerance::kPsd;
    return out;
}

// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, evaluated as the squared
// nuclear norm of sqrt(a) sqrt(b).
inline double fidelity(const TwoQubitState& rho_exp, const TwoQubitState& rho_th) {
    const StateCheck ca = rho_exp.check();
    const StateCheck cb = rho_th.check();
    if (!ca.hermitian() || !cb.hermitian() || ca.trace_deviation > 1e-9 || cb.trace_deviation > 1e-9)
        throw InvalidState("fidelity: input is not a unit-trace Hermitian matrix");
    const Matrix4c a = detail::psd_sqrt(clamp_to_physical(rho_exp.matrix()));
    const Matrix4c b = detail::psd_sqrt(clamp_to_physical(rho_th.matrix()));
    Eigen::JacobiSVD<Matrix4c> svd(a * b);
    const double tr = svd.singularValues().sum();
    return std::clamp(tr * tr, 0.0, 1.0);
}

// <psi|rho|psi>; equals the Uhlmann fidelity for a pure target.
inline double fidelity_to_pure(const TwoQubitState& rho, const Vector4c& psi) {
    const Vector4c n = psi / psi.norm();
    return (n.adjoint() * rho.matrix() * n)(0, 0).real();
}

// Maximal CHSH value over all local measurement directions:
// 2 sqrt(t1 + t2), t1 >= t2 the two largest eigenvalues of T^T T.
inline double chsh_max(const TwoQubitState& rho) {
    detail::require_physical(rho, "chsh_max");
    const Eigen::Matrix3d t = correlations_of(rho).block();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t.transpose() * t, Eigen::EigenvaluesOnly);
    const Eigen::Vector3d ev = es.eigenvalues();
    return 2.0 * std::sqrt(std::max(0.0, ev(2) + ev(1)));
}

inline OutcomeProbabilities born_probabilities(const Matrix4c& rho, const ProjectorSet& proj) {
    OutcomeProbabilities p{};
    for (std::size_t k = 0; k < 4; ++k) {
        const double v = (proj[k].adjoint() * rho * proj[k])(0, 0).real();
        p[k] = v < 0.0 && v > -tolerance::kPsd ? 0.0 : v;
    }
    return p;
}

inline OutcomeProbabilities born_probabilities(const TwoQubitState& rho, MeasurementSetting setting) {
    detail::require_physical(rho, "born_probabilities");
    return born_probabilities(rho.matrix(), projectors(setting));
}

}  // namespace pathqkd
