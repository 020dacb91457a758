#pragma once

// Two-qubit state tomography from the nine Pauli-basis settings: linear
// inversion, maximum-likelihood reconstruction over the physical set, Monte
// Carlo error bars and the Z/X joint-probability comparison.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "pathqkd/count_table.hpp"
#include "pathqkd/errors.hpp"
#include "pathqkd/quantum.hpp"
#include "pathqkd/rng.hpp"

namespace pathqkd {

// Throws unless all nine settings are present with nonzero totals.
inline void validate_tomography(const CountTable& table) {
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        if (!table.has(s)) throw ValidationError("tomography data is missing setting " + s.name());
        if (table.at(s).total() == 0) throw EmptySetting("setting " + s.name() + " has zero counts");
    }
}

inline double correlation_of_counts(const OutcomeCounts& n) {
    const double total = static_cast<double>(n[0] + n[1] + n[2] + n[3]);
    return (static_cast<double>(n[0]) - static_cast<double>(n[1]) - static_cast<double>(n[2]) +
            static_cast<double>(n[3])) /
           total;
}

inline CorrelationTensor correlations_from_counts(const CountTable& table) {
    validate_tomography(table);
    CorrelationTensor t;
    t.c.setZero();
    t.c(0, 0) = 1.0;
    for (int k = 0; k < 9; ++k) {
        const auto s = MeasurementSetting::from_index(k);
        const OutcomeCounts& n = table.at(s).counts;
        const double total = static_cast<double>(n[0] + n[1] + n[2] + n[3]);
        const auto i = static_cast<int>(pauli_of(s.alice));
        const auto j = static_cast<int>(pauli_of(s.bob));
        t.c(i, j) = correlation_of_counts(n);
        // Marginals, each averaged over the other party's three bases.
        t.c(i, 0) += (static_cast<double>(n[0] + n[1]) - static_cast<double>(n[2] + n[3])) / total / 3.0;
        t.c(0, j) += (static_cast<double>(n[0] + n[2]) - static_cast<double>(n[1] + n[3])) / total / 3.0;
    }
    return t;
}

inline LinearInversion linear_inversion(const CountTable& table) {
    return state_from_correlations(correlations_from_counts(table));
}

// Linear inversion followed by eigenvalue clipping onto the physical set.
inline TwoQubitState projected_linear_inversion(const CountTable& table) {
    return project_to_physical(linear_inversion(table).state.matrix());
}

namespace detail {

inline constexpr double kProbabilityFloor = 1e-12;

// The 36 projector vectors and their counts in a flat layout.
struct LikelihoodData {
    std::array<Vector4c, 36> v;
    std::array<double, 36> n{};
    double total = 0.0;

    explicit LikelihoodData(const CountTable& table) {
        for (int k = 0; k < 9; ++k) {
            const auto s = MeasurementSetting::from_index(k);
            const ProjectorSet proj = projectors(s);
            const OutcomeCounts& c = table.at(s).counts;
            for (std::size_t o = 0; o < 4; ++o) {
                const auto idx = static_cast<std::size_t>(4 * k) + o;
                v[idx] = proj[o];
                n[idx] = static_cast<double>(c[o]);
                total += n[idx];
            }
        }
    }

    // Sum over settings of the multinomial log-likelihood for an
    // unnormalized positive matrix a (each setting's projectors sum to I).
    double log_likelihood(const Matrix4c& a) const {
        const double tr = a.trace().real();
        double ll = 0.0;
        for (std::size_t k = 0; k < 36; ++k) {
            if (n[k] == 0.0) continue;
            const double p = (v[k].adjoint() * a * v[k])(0, 0).real() / tr;
            ll += n[k] * std::log(std::max(p, kProbabilityFloor));
        }
        return ll;
    }
};

// Lower-triangular T from 16 reals: 4 diagonal entries then the real and
// imaginary parts of the six strictly lower entries.
inline Matrix4c unpack_t(const Eigen::Matrix<double, 16, 1>& x) {
    Matrix4c t = Matrix4c::Zero();
    int p = 4;
    for (int i = 0; i < 4; ++i) {
        t(i, i) = x(i);
        for (int j = 0; j < i; ++j) {
            t(i, j) = Complex(x(p), x(p + 1));
            p += 2;
        }
    }
    return t;
}

inline Eigen::Matrix<double, 16, 1> pack_t(const Matrix4c& t) {
    Eigen::Matrix<double, 16, 1> x;
    int p = 4;
    for (int i = 0; i < 4; ++i) {
        x(i) = t(i, i).real();
        for (int j = 0; j < i; ++j) {
            x(p) = t(i, j).real();
            x(p + 1) = t(i, j).imag();
            p += 2;
        }
    }
    return x;
}

// Negative log-likelihood per count and its gradient in the T parameters.
struct NegLogLikelihood {
    const LikelihoodData& data;

    double operator()(const Eigen::Matrix<double, 16, 1>& x, Eigen::Matrix<double, 16, 1>* grad) const {
        const Matrix4c t = unpack_t(x);
        const Matrix4c a = t.adjoint() * t;
        const double tr = a.trace().real();
        double ll = 0.0;
        Matrix4c m = Matrix4c::Zero();
        for (std::size_t k = 0; k < 36; ++k) {
            if (data.n[k] == 0.0) continue;
            const double q = (data.v[k].adjoint() * a * data.v[k])(0, 0).real();
            const double p = q / tr;
            ll += data.n[k] * std::log(std::max(p, kProbabilityFloor));
            if (grad && p > kProbabilityFloor) m += (data.n[k] / q) * (data.v[k] * data.v[k].adjoint());
        }
        if (grad) {
            m -= (data.total / tr) * Matrix4c::Identity();
            const Matrix4c tm = t * m;
            int p = 4;
            for (int i = 0; i < 4; ++i) {
                (*grad)(i) = -2.0 * tm(i, i).real() / data.total;
                for (int j = 0; j < i; ++j) {
                    (*grad)(p) = -2.0 * tm(i, j).real() / data.total;
                    (*grad)(p + 1) = -2.0 * tm(i, j).imag() / data.total;
                    p += 2;
                }
            }
        }
        return -ll / data.total;
    }
};

}  // namespace detail

inline double log_likelihood(const CountTable& table, const TwoQubitState& rho) {
    validate_tomography(table);
    return detail::LikelihoodData(table).log_likelihood(rho.matrix());
}

struct MleOptions {
    int max_iterations = 5000;
    double relative_tolerance = 1e-10;
};

struct ReconstructionResult {
    TwoQubitState rho;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    bool physical_inversion = false;
};

// Maximum-likelihood reconstruction with rho = T^dagger T / Tr(T^dagger T),
// T lower triangular, maximized by BFGS with a backtracking line search from
// the maximally mixed state. Returns the best iterate with converged = false
// when the iteration budget runs out.
inline ReconstructionResult mle_reconstruct(const CountTable& table, const MleOptions& opts = {}) {
    using Vec = Eigen::Matrix<double, 16, 1>;
    using Mat = Eigen::Matrix<double, 16, 16>;
    validate_tomography(table);
    const detail::LikelihoodData data(table);
    const detail::NegLogLikelihood f{data};

    ReconstructionResult result;
    result.physical_inversion = linear_inversion(table).physical;

    Vec x = detail::pack_t(Matrix4c::Identity() / 2.0);
    Vec g;
    double fx = f(x, &g);
    Mat h = Mat::Identity();
    bool reset_once = false;

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        Vec d = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            d = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        Vec xn, gn;
        double fn = fx;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x + step * d;
            fn = f(xn, &gn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (reset_once) {
                result.converged = true;
                break;
            }
            h.setIdentity();
            reset_once = true;
            continue;
        }
        reset_once = false;

        const double ll_old = -fx * data.total;
        const double ll_new = -fn * data.total;
        const Vec s = xn - x;
        const Vec y = gn - g;
        x = xn;
        g = gn;
        fx = fn;
        if (std::abs(ll_new - ll_old) <= opts.relative_tolerance * std::max(std::abs(ll_new), 1.0)) {
            result.converged = true;
            ++it;
            break;
        }
        const double sy = s.dot(y);
        if (sy > 1e-16) {
            const double r = 1.0 / sy;
            const Mat i = Mat::Identity();
            h = (i - r * s * y.transpose()) * h * (i - r * y * s.transpose()) + r * s * s.transpose();
        }
    }
    result.iterations = it;

    const Matrix4c t = detail::unpack_t(x);
    Matrix4c a = t.adjoint() * t;
    a /= a.trace().real();
    a = 0.5 * (a + a.adjoint());
    result.rho = TwoQubitState::unchecked(a);
    result.log_likelihood = data.log_likelihood(a);
    return result;
}

// Resamples every count as Poisson(n). variance_scale rescales the count
// variance for an empirical noise model: 0 keeps the data fixed, values other
// than 1 draw from a Gaussian with variance scale * n.
inline CountTable resample_counts(const CountTable& table, Rng& rng, double variance_scale = 1.0) {
    CountTable out;
    for (const auto& s : table.settings()) {
        SettingCounts c = table.at(s);
        if (variance_scale != 0.0) {
            for (auto& n : c.counts) {
                const double mean = static_cast<double>(n);
                if (variance_scale == 1.0) {
                    n = poisson(rng, mean);
                } else {
                    std::normal_distribution<double> d(mean, std::sqrt(variance_scale * mean));
                    n = static_cast<std::uint64_t>(std::max(0.0, std::round(d(rng))));
                }
            }
        }
        out.set(s, c);
    }
    return out;
}

struct MonteCarloOptions {
    double variance_scale = 1.0;
    unsigned threads = 0;  // 0 = hardware concurrency
    MleOptions mle;
};

struct FidelityHistogram {
    std::vector<double> samples;       // converged runs, in run order
    std::vector<double> chsh_samples;  // CHSH value of each kept run
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 below two samples
    double chsh_mean = 0.0;
    double chsh_std = 0.0;
    std::size_t excluded = 0;  // runs that hit the iteration limit
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Run r uses the seed derive_seed(seed, 0x6d63, r), so the result does not
// depend on the thread count.
inline FidelityHistogram monte_carlo_fidelity(const CountTable& table, const TwoQubitState& target, int n_runs,
                                              std::uint64_t seed, const MonteCarloOptions& opts = {}) {
    if (n_runs < 1) throw InvalidParam("monte_carlo_fidelity: n_runs must be >= 1");
    validate_tomography(table);
    detail::require_physical(target, "monte_carlo_fidelity target");

    const auto n = static_cast<std::size_t>(n_runs);
    std::vector<double> fid(n), chsh(n);
    std::vector<std::uint8_t> ok(n, 0);
    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t r = begin; r < n; r += step) {
            Rng rng(derive_seed(seed, 0x6d63, r));
            const CountTable sample = resample_counts(table, rng, opts.variance_scale);
            try {
                validate_tomography(sample);
            } catch (const EmptySetting&) {
                continue;
            }
            const ReconstructionResult rec = mle_reconstruct(sample, opts.mle);
            if (!rec.converged) continue;
            fid[r] = std::clamp(fidelity(rec.rho, target), 0.0, 1.0);
            chsh[r] = chsh_max(rec.rho);
            ok[r] = 1;
        }
    };
    unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& th : pool) th.join();
    }

    FidelityHistogram h;
    for (std::size_t r = 0; r < n; ++r) {
        if (!ok[r]) {
            ++h.excluded;
            continue;
        }
        h.samples.push_back(fid[r]);
        h.chsh_samples.push_back(chsh[r]);
    }
    std::tie(h.mean, h.std) = mean_std(h.samples);
    std::tie(h.chsh_mean, h.chsh_std) = mean_std(h.chsh_samples);
    return h;
}

using JointMatrix = Eigen::Matrix4d;

// Blocks: row block = Alice basis, column block = Bob basis, Z first then X.
// Within a block, row = Alice outcome, column = Bob outcome ("+" first).
inline JointMatrix joint_probability_matrix(const CountTable& table) {
    JointMatrix m;
    constexpr std::array<Basis, 2> kZX{Basis::Z, Basis::X};
    for (int ba = 0; ba < 2; ++ba)
        for (int bb = 0; bb < 2; ++bb) {
            const MeasurementSetting s{kZX[static_cast<std::size_t>(ba)], kZX[static_cast<std::size_t>(bb)]};
            if (!table.has(s)) throw EmptySetting("joint probability matrix needs setting " + s.name());
            const SettingCounts& c = table.at(s);
            if (c.total() == 0) throw EmptySetting("setting " + s.name() + " has zero counts");
            for (int o = 0; o < 4; ++o)
                m(2 * ba + o / 2, 2 * bb + o % 2) =
                    static_cast<double>(c.counts[static_cast<std::size_t>(o)]) / static_cast<double>(c.total());
        }
    return m;
}

inline JointMatrix joint_probability_matrix(const TwoQubitState& rho) {
    JointMatrix m;
    constexpr std::array<Basis, 2> kZX{Basis::Z, Basis::X};
    for (int ba = 0; ba < 2; ++ba)
        for (int bb = 0; bb < 2; ++bb) {
            const auto p = born_probabilities(
                rho, MeasurementSetting{kZX[static_cast<std::size_t>(ba)], kZX[static_cast<std::size_t>(bb)]});
            double sum = 0.0;
            for (double x : p) sum += std::max(x, 0.0);
            for (int o = 0; o < 4; ++o)
                m(2 * ba + o / 2, 2 * bb + o % 2) = std::max(p[static_cast<std::size_t>(o)], 0.0) / sum;
        }
    return m;
}

// 1 - (1/4) sum over the four blocks of the total-variation distance.
inline double matrix_overlap(const JointMatrix& p_exp, const JointMatrix& p_th) {
    double tv_sum = 0.0;
    for (int br = 0; br < 2; ++br)
        for (int bc = 0; bc < 2; ++bc) {
            const auto a = p_exp.block<2, 2>(2 * br, 2 * bc);
            const auto b = p_th.block<2, 2>(2 * br, 2 * bc);
            if (std::abs(a.sum() - 1.0) > 1e-6 || std::abs(b.sum() - 1.0) > 1e-6)
                throw NotNormalized("joint probability block (" + std::to_string(br) + "," + std::to_string(bc) +
                                    ") does not sum to 1");
            tv_sum += 0.5 * (a - b).cwiseAbs().sum();
        }
    return 1.0 - 0.25 * tv_sum;
}

// Row-major, one matrix row per line as re,im pairs.
inline void write_density_csv(std::ostream& os, const TwoQubitState& rho) {
    os.precision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (c) os << ',';
            os << rho(r, c).real() << ',' << rho(r, c).imag();
        }
        os << '\n';
    }
}

// One entry per line: row, column, |rho_rc|, arg(rho_rc).
inline void write_density_polar_csv(std::ostream& os, const TwoQubitState& rho) {
    os.precision(17);
    os << "row,col,amplitude,phase_rad\n";
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            os << r << ',' << c << ',' << std::abs(rho(r, c)) << ',' << std::arg(rho(r, c)) << '\n';
}

}  // namespace pathqkd
