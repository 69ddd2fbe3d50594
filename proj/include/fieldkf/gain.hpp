#pragma once

#include "fieldkf/errors.hpp"
#include "fieldkf/fourier.hpp"
#include "fieldkf/grid.hpp"
#include "fieldkf/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace fieldkf {

/// How the inverse noise spectrum is regularized at finite resolution.
///
/// The spectrum decays below machine precision well inside the Nyquist box,
/// so a raw inverse blows up. The default band mask keeps frequencies where
/// the spectrum's smallest eigenvalue is at least eps_rel times its global
/// maximum and zeroes the rest; the Tikhonov mode inverts (spectrum + eps I)
/// everywhere instead.
struct RegularizationPolicy {
    enum class Mode { band_mask, tikhonov };
    Mode mode = Mode::band_mask;
    double eps_rel = 1e-12;
};

/// Time-invariant quantities shared by every filter step: the kernel
/// f = inverse transform of (gamma_bar^T spectrum^-1), the information
/// matrix S = integral of f * gamma, and its principal square root G.
struct GainPrecomputation {
    GriddedFunction f;               // n x m, real, on the measurement grid
    Eigen::MatrixXd S;               // n x n symmetric PSD
    Eigen::MatrixXd G;               // principal square root, G G = S
    std::vector<std::uint8_t> band_mask; // retained flag per dual-grid point
    double band_retention = 0.0;     // fraction of frequencies retained
    double gamma_energy_retained = 0.0;
    Eigen::VectorXd weights;         // trapezoidal weights on the grid
};

namespace detail {

/// Flat index of -omega on an fftshift-ascending dual grid.
inline std::int64_t mirror_flat(const GridSpec& dual, std::int64_t flat) {
    std::vector<std::int64_t> idx;
    dual.unflatten(flat, idx);
    std::int64_t out = 0;
    for (int a = 0; a < dual.dim(); ++a)
        out = out * dual.count(a) + mirror_freq_index(dual.count(a), idx[a]);
    return out;
}

} // namespace detail

/// f(i): inverse continuous transform of gamma_bar(w)^T spectrum(w)^-1 with
/// frequencies outside the retained band zeroed.
///
/// gamma is m x n on the measurement grid; the spectrum must live on the
/// grid's dual. The transform is Hermitian-symmetrized across +-w (an exact
/// identity for real gamma and real stationary kernels) before inversion so
/// the result is real to machine precision; the imaginary residue is
/// checked against 1e-8 of the real magnitude and then discarded.
///
/// Errors: more than half of the retained band numerically singular
/// (assumption 3); regularization discarding over 99% of gamma's spectral
/// energy (assumption 4).
inline GriddedFunction compute_f(const GriddedFunction& gamma, const KernelSpectrum& spectrum,
                                 const RegularizationPolicy& reg,
                                 std::vector<std::uint8_t>* mask_out = nullptr,
                                 double* energy_retained_out = nullptr) {
    const GridSpec& grid = gamma.grid();
    const GridSpec dual = grid.dual();
    if (!spectrum.grid().same_geometry(dual))
        throw std::invalid_argument("compute_f: spectrum is not on the dual of gamma's grid");
    if (gamma.rows() != spectrum.out_dim())
        throw std::invalid_argument("compute_f: gamma rows must match kernel output dimension");

    const int m = gamma.rows(), n = gamma.cols();
    GriddedFunction gbar = forward_ct(gamma); // m x n per frequency

    // smallest spectrum eigenvalue per frequency, and the global largest
    Eigen::VectorXd lam_min(dual.size());
    double lam_max = 0.0;
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        if (m == 1) {
            const double v = spectrum.values.comp(0, 0)[k].real();
            lam_min[k] = v;
            lam_max = std::max(lam_max, v);
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(spectrum.values.value_at(k));
            lam_min[k] = es.eigenvalues().minCoeff();
            lam_max = std::max(lam_max, es.eigenvalues().maxCoeff());
        }
    }

    const double floor = reg.eps_rel * lam_max;
    const bool tikhonov = reg.mode == RegularizationPolicy::Mode::tikhonov;
    std::vector<std::uint8_t> mask(dual.size(), 0);
    std::int64_t retained = 0;
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        mask[k] = tikhonov || lam_min[k] >= floor;
        retained += mask[k];
    }
    if (retained == 0) throw AssumptionError(3, "noise spectrum is singular on the whole grid");

    // H(w) = gamma_bar(w)^T spectrum(w)^-1 on the retained band
    GriddedFunction H(dual, n, m);
    std::int64_t singular = 0;
    Eigen::MatrixXcd gk(m, n), rk(m, m);
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        if (!mask[k]) continue;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) gk(r, c) = gbar.comp(r, c)[k];
        rk = spectrum.values.value_at(k);
        if (tikhonov) rk += floor * Eigen::MatrixXcd::Identity(m, m);
        bool ok = true;
        Eigen::MatrixXcd hk;
        if (m == 1) {
            const std::complex<double> r00 = rk(0, 0);
            ok = std::abs(r00) > 0.0 && std::isfinite(std::abs(r00));
            if (ok) hk = gk.transpose() / r00;
        } else {
            // gamma_bar^T R^-1 = (R^-T gamma_bar)^T
            Eigen::FullPivLU<Eigen::MatrixXcd> lu(rk.transpose());
            ok = lu.isInvertible();
            if (ok) hk = lu.solve(gk).transpose();
        }
        if (!ok) {
            ++singular;
            mask[k] = 0;
            continue;
        }
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c) H.comp(r, c)[k] = hk(r, c);
    }
    if (2 * singular > retained)
        throw AssumptionError(3, "noise spectrum numerically singular on more than half of the "
                                 "retained band");

    // energy of gamma_bar kept by the mask
    double e_total = 0.0, e_kept = 0.0;
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            const Eigen::VectorXcd& col = gbar.comp(r, c);
            for (std::int64_t k = 0; k < dual.size(); ++k) {
                const double e = std::norm(col[k]);
                e_total += e;
                if (mask[k]) e_kept += e;
            }
        }
    const double energy_retained = e_total > 0.0 ? e_kept / e_total : 1.0;
    if (e_total > 0.0 && energy_retained < 0.01)
        throw AssumptionError(4, "regularization removed over 99% of the measurement transform's "
                                 "energy; whitened measurement kernel is not integrable at this "
                                 "resolution");

    // Hermitian symmetrization across +-w; exact in exact arithmetic, kills
    // FFT noise amplified by the spectral division
    GriddedFunction Hs(dual, n, m);
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        const std::int64_t km = detail::mirror_flat(dual, k);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c)
                Hs.comp(r, c)[k] = 0.5 * (H.comp(r, c)[k] + std::conj(H.comp(r, c)[km]));
    }

    GriddedFunction f = inverse_ct(Hs, grid);
    const double imag = f.max_abs_imag();
    const double mag = f.max_abs();
    if (mag > 0.0 && imag > 1e-8 * mag)
        throw std::runtime_error("compute_f: inverse transform has imaginary residue " +
                                 std::to_string(imag / mag) + " of the real magnitude");
    f.strip_imag();

    if (mask_out) *mask_out = std::move(mask);
    if (energy_retained_out) *energy_retained_out = energy_retained;
    return f;
}

/// S = integral of f(i) gamma(i) di by trapezoidal quadrature, symmetrized.
/// Asymmetry beyond 1e-10 of the magnitude signals a broken f and raises;
/// small negative eigenvalues are clipped to zero.
inline Eigen::MatrixXd compute_S(const GriddedFunction& f, const GriddedFunction& gamma) {
    if (!f.grid().same_geometry(gamma.grid()) || f.cols() != gamma.rows())
        throw std::invalid_argument("compute_S: mismatched grids or shapes");
    const int n = f.rows(), m = f.cols();
    if (gamma.cols() != n) throw std::invalid_argument("compute_S: gamma must be m x n");

    const Eigen::VectorXd w = trapezoid_weights(f.grid());
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p)
                acc += (f.comp(r, p).real().array() * gamma.comp(p, c).real().array() * w.array())
                           .sum();
            S(r, c) = acc;
        }

    const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale)
        throw std::runtime_error("compute_S: asymmetry " + std::to_string(asym / scale) +
                                 " of magnitude; f computation is inconsistent with gamma");
    S = 0.5 * (S + S.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double lmax = std::max(es.eigenvalues().maxCoeff(), 1.0);
    if (es.eigenvalues().minCoeff() < -1e-10 * lmax)
        throw std::runtime_error("compute_S: significantly negative eigenvalue " +
                                 std::to_string(es.eigenvalues().minCoeff()));
    if (es.eigenvalues().minCoeff() < 0.0)
        S = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
            es.eigenvectors().transpose();
    return S;
}

/// Frequency-domain route to the same matrix:
/// S = sum over the retained band of gamma_bar^* spectrum^-1 gamma_bar dw.
/// Used as the independent cross-check of compute_S.
inline Eigen::MatrixXd compute_S_spectral(const GriddedFunction& gamma,
                                          const KernelSpectrum& spectrum,
                                          const RegularizationPolicy& reg) {
    const GridSpec dual = gamma.grid().dual();
    if (!spectrum.grid().same_geometry(dual))
        throw std::invalid_argument("compute_S_spectral: spectrum grid mismatch");
    const int m = gamma.rows(), n = gamma.cols();
    GriddedFunction gbar = forward_ct(gamma);

    double lam_max = 0.0;
    Eigen::VectorXd lam_min(dual.size());
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        if (m == 1) {
            lam_min[k] = spectrum.values.comp(0, 0)[k].real();
            lam_max = std::max(lam_max, lam_min[k]);
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(spectrum.values.value_at(k));
            lam_min[k] = es.eigenvalues().minCoeff();
            lam_max = std::max(lam_max, es.eigenvalues().maxCoeff());
        }
    }
    const double floor = reg.eps_rel * lam_max;
    const bool tikhonov = reg.mode == RegularizationPolicy::Mode::tikhonov;

    double dvol = 1.0;
    for (int a = 0; a < dual.dim(); ++a) dvol *= dual.spacing(a);

    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd gk(m, n), rk(m, m);
    for (std::int64_t k = 0; k < dual.size(); ++k) {
        if (!tikhonov && lam_min[k] < floor) continue;
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) gk(r, c) = gbar.comp(r, c)[k];
        rk = spectrum.values.value_at(k);
        if (tikhonov) rk += floor * Eigen::MatrixXcd::Identity(m, m);
        if (m == 1) {
            if (!(std::abs(rk(0, 0)) > 0.0)) continue;
            S += gk.adjoint() * gk / rk(0, 0);
        } else {
            Eigen::FullPivLU<Eigen::MatrixXcd> lu(rk);
            if (!lu.isInvertible()) continue;
            S += gk.adjoint() * lu.solve(gk);
        }
    }
    Eigen::MatrixXd Sr = (dvol * S).real();
    return 0.5 * (Sr + Sr.transpose());
}

/// Principal square root of a symmetric PSD matrix: symmetric eigensolve,
/// eigenvalues below 1e-12 of the largest treated as zero.
inline Eigen::MatrixXd principal_sqrt(const Eigen::MatrixXd& S) {
    const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-300);
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("principal_sqrt: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        lam[i] = lam[i] > 1e-12 * lmax ? std::sqrt(lam[i]) : 0.0;
    Eigen::MatrixXd G = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (G + G.transpose());
}

/// All time-invariant gain data for a (gamma, kernel) pair.
inline GainPrecomputation make_gain_precomputation(const GriddedFunction& gamma,
                                                   const StationaryKernel& kernel,
                                                   const RegularizationPolicy& reg = {}) {
    const KernelSpectrum spec = kernel_spectrum(kernel, gamma.grid().dual());
    std::vector<std::uint8_t> mask;
    double energy = 0.0;
    GriddedFunction f = compute_f(gamma, spec, reg, &mask, &energy);
    Eigen::MatrixXd S = compute_S(f, gamma);
    Eigen::MatrixXd G = principal_sqrt(S);
    double retained = 0.0;
    for (auto v : mask) retained += v;
    retained /= static_cast<double>(mask.size());
    Eigen::VectorXd w = trapezoid_weights(gamma.grid());
    return GainPrecomputation{std::move(f), std::move(S), std::move(G), std::move(mask),
                              retained, energy, std::move(w)};
}

/// Largest magnitude of P_prior gamma^T(i) over the grid; the natural scale
/// for optimality residuals.
inline double prior_gain_scale(const Eigen::MatrixXd& P_prior, const GriddedFunction& gamma) {
    double s = 0.0;
    for (std::int64_t p = 0; p < gamma.grid().size(); ++p) {
        const Eigen::MatrixXd v = P_prior * gamma.real_value_at(p).transpose();
        s = std::max(s, v.cwiseAbs().maxCoeff());
    }
    return s;
}

/// Residual of the optimality condition
///
///   integral kappa(i) (gamma(i) P- gamma^T(i') + R(i - i')) di = P- gamma^T(i')
///
/// evaluated by quadrature at a lattice of probe points i'. Probes sit on a
/// probes_per_axis^d sublattice inset 10% of the extent from each side:
/// within half a kernel width of the boundary the truncated integral loses
/// noise-kernel mass that the infinite-domain condition assumes, so edge
/// probes would measure domain truncation instead of gain error. Full-grid
/// probing is available at O(N^2) cost.
inline double verify_optimality(const GriddedFunction& kappa, const Eigen::MatrixXd& P_prior,
                                const GriddedFunction& gamma, const StationaryKernel& kernel,
                                int probes_per_axis = 5, bool full_grid = false) {
    const GridSpec& grid = gamma.grid();
    const int n = kappa.rows(), m = kappa.cols();
    if (gamma.rows() != m || gamma.cols() != n)
        throw std::invalid_argument("verify_optimality: kappa/gamma shape mismatch");

    const Eigen::VectorXd w = trapezoid_weights(grid);

    // integral kappa gamma di (n x n), shared by every probe
    Eigen::MatrixXd intKG = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p)
                acc += (kappa.comp(r, p).real().array() * gamma.comp(p, c).real().array() *
                        w.array())
                           .sum();
            intKG(r, c) = acc;
        }

    std::vector<std::int64_t> probes;
    if (full_grid) {
        probes.resize(grid.size());
        for (std::int64_t p = 0; p < grid.size(); ++p) probes[p] = p;
    } else {
        std::vector<std::vector<std::int64_t>> axis_idx(grid.dim());
        for (int a = 0; a < grid.dim(); ++a)
            for (int k = 0; k < probes_per_axis; ++k) {
                const double t = probes_per_axis == 1
                                     ? 0.5
                                     : 0.1 + 0.8 * static_cast<double>(k) / (probes_per_axis - 1);
                axis_idx[a].push_back(
                    static_cast<std::int64_t>(std::llround(t * static_cast<double>(grid.count(a) - 1))));
            }
        std::vector<std::size_t> ctr(grid.dim(), 0);
        const std::int64_t total = [&] {
            std::int64_t t = 1;
            for (int a = 0; a < grid.dim(); ++a) t *= probes_per_axis;
            return t;
        }();
        std::vector<std::int64_t> idx(grid.dim());
        for (std::int64_t q = 0; q < total; ++q) {
            for (int a = 0; a < grid.dim(); ++a) idx[a] = axis_idx[a][ctr[a]];
            probes.push_back(grid.flatten(idx));
            for (int a = grid.dim() - 1; a >= 0; --a) {
                if (++ctr[a] < static_cast<std::size_t>(probes_per_axis)) break;
                ctr[a] = 0;
            }
        }
    }

    double max_res = 0.0;
    std::vector<double> off(grid.dim());
    Eigen::MatrixXd T1(n, m);
    for (std::int64_t probe : probes) {
        const std::vector<double> ip = grid.point(probe);

        // integral kappa(i) R(i - i') di
        T1.setZero();
        for (std::int64_t p = 0; p < grid.size(); ++p) {
            const std::vector<double> q = grid.point(p);
            for (int a = 0; a < grid.dim(); ++a) off[a] = q[a] - ip[a];
            const Eigen::MatrixXd Rv = kernel.eval(off);
            T1 += w[p] * kappa.real_value_at(p) * Rv;
        }

        const Eigen::MatrixXd rhs = P_prior * gamma.real_value_at(probe).transpose();
        const Eigen::MatrixXd res = T1 + intKG * rhs - rhs;
        max_res = std::max(max_res, res.cwiseAbs().maxCoeff());
    }
    return max_res;
}

} // namespace fieldkf
