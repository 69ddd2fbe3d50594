#pragma once

#include "fieldkf/grid.hpp"

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <vector>

namespace fieldkf {

namespace detail {

/// Thin thread-safe wrapper over FFTW's complex transform.
///
/// Plans are cached per thread and created with FFTW_ESTIMATE so results
/// are reproducible run to run (FFTW_MEASURE picks timing-dependent
/// algorithms). FFTW's planner itself is serialized by a global mutex.
class FftEngine {
public:
    static void transform_inplace(std::complex<double>* data,
                                  const std::vector<int>& dims, bool forward) {
        thread_local PlanCache cache;
        fftw_plan plan = cache.get(dims, forward ? Kind::fwd : Kind::bwd);
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(data),
                         reinterpret_cast<fftw_complex*>(data));
    }

    /// Hermitian-input complex-to-real transform. `in` holds the half
    /// spectrum (last axis 0..n/2) and is clobbered; `out` has the full
    /// real size.
    static void transform_c2r(std::complex<double>* in, double* out,
                              const std::vector<int>& dims) {
        thread_local PlanCache cache;
        fftw_plan plan = cache.get(dims, Kind::c2r);
        fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(in), out);
    }

private:
    enum class Kind { fwd, bwd, c2r };

    struct PlanCache {
        std::map<std::pair<std::vector<int>, Kind>, fftw_plan> plans;

        fftw_plan get(const std::vector<int>& dims, Kind kind) {
            auto key = std::make_pair(dims, kind);
            auto it = plans.find(key);
            if (it != plans.end()) return it->second;

            std::int64_t total = 1, half = 1;
            for (std::size_t a = 0; a < dims.size(); ++a) {
                total *= dims[a];
                half *= a + 1 < dims.size() ? dims[a] : dims[a] / 2 + 1;
            }
            std::lock_guard<std::mutex> lock(planner_mutex());
            fftw_plan plan = nullptr;
            if (kind == Kind::c2r) {
                fftw_complex* in = fftw_alloc_complex(static_cast<std::size_t>(half));
                double* out = fftw_alloc_real(static_cast<std::size_t>(total));
                plan = fftw_plan_dft_c2r(static_cast<int>(dims.size()), dims.data(), in, out,
                                         FFTW_ESTIMATE | FFTW_UNALIGNED);
                fftw_free(in);
                fftw_free(out);
            } else {
                fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(total));
                plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf, buf,
                                     kind == Kind::fwd ? FFTW_FORWARD : FFTW_BACKWARD,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
                fftw_free(buf);
            }
            plans.emplace(key, plan);
            return plan;
        }

        ~PlanCache() {
            std::lock_guard<std::mutex> lock(planner_mutex());
            for (auto& kv : plans) fftw_destroy_plan(kv.second);
        }
    };

    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }
};

/// Index of -omega on an fftshift-ascending frequency axis of length n.
inline std::int64_t mirror_freq_index(std::int64_t n, std::int64_t j) {
    if (n % 2 == 1) return n - 1 - j;
    return j == 0 ? 0 : n - j; // the unpaired -Nyquist bin is its own mirror
}

/// Odometer iteration over a grid: calls visit(flat, idx).
template <typename F>
void for_each_index(const GridSpec& g, F&& visit) {
    std::vector<std::int64_t> idx(g.dim(), 0);
    for (std::int64_t flat = 0; flat < g.size(); ++flat) {
        visit(flat, idx);
        for (int a = g.dim() - 1; a >= 0; --a) {
            if (++idx[a] < g.count(a)) break;
            idx[a] = 0;
        }
    }
}

} // namespace detail

/// Tensor-product trapezoidal weights: per axis delta * [1/2, 1, ..., 1, 1/2].
inline Eigen::VectorXd trapezoid_weights(const GridSpec& grid) {
    std::vector<Eigen::VectorXd> axis(grid.dim());
    for (int a = 0; a < grid.dim(); ++a) {
        axis[a] = Eigen::VectorXd::Constant(grid.count(a), grid.spacing(a));
        axis[a][0] *= 0.5;
        axis[a][grid.count(a) - 1] *= 0.5;
    }
    Eigen::VectorXd w(grid.size());
    detail::for_each_index(grid, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
        double v = 1.0;
        for (int a = 0; a < grid.dim(); ++a) v *= axis[a][idx[a]];
        w[flat] = v;
    });
    return w;
}

/// Trapezoidal-rule approximation of the integral of fn over its box,
/// elementwise over the matrix shape.
inline Eigen::MatrixXcd quadrature(const GriddedFunction& fn) {
    const Eigen::VectorXd w = trapezoid_weights(fn.grid());
    Eigen::MatrixXcd out(fn.rows(), fn.cols());
    for (int r = 0; r < fn.rows(); ++r)
        for (int c = 0; c < fn.cols(); ++c)
            out(r, c) = (fn.comp(r, c).array() * w.array().cast<std::complex<double>>()).sum();
    return out;
}

inline Eigen::MatrixXd quadrature_real(const GriddedFunction& fn) {
    return quadrature(fn).real();
}

/// Continuous Fourier transform approximation on the dual grid:
///
///   F(w_k) ~ sum_n fn(i_n) e^{-2 pi j w_k . i_n} prod(delta)
///
/// i.e. the discrete FFT scaled by the sample volume and phase-shifted so
/// the grid's lower corner is the integration origin. Frequencies come out
/// in natural ascending order.
inline GriddedFunction forward_ct(const GriddedFunction& fn) {
    const GridSpec& g = fn.grid();
    const GridSpec dual = g.dual();

    double scale = 1.0;
    std::vector<int> dims(g.dim());
    for (int a = 0; a < g.dim(); ++a) {
        scale *= g.spacing(a);
        dims[a] = static_cast<int>(g.count(a));
    }

    // per-axis: DFT bin feeding shifted output index j, and origin phase
    std::vector<std::vector<std::int64_t>> srcbin(g.dim());
    std::vector<Eigen::VectorXcd> phase(g.dim());
    for (int a = 0; a < g.dim(); ++a) {
        const std::int64_t n = g.count(a), s = n / 2;
        srcbin[a].resize(n);
        phase[a].resize(n);
        for (std::int64_t j = 0; j < n; ++j) {
            srcbin[a][j] = (j - s + n) % n;
            const double w = dual.coord(a, j);
            phase[a][j] = std::exp(std::complex<double>(0.0, -2.0 * M_PI * w * g.lower(a)));
        }
    }

    GriddedFunction out(dual, fn.rows(), fn.cols());
    Eigen::VectorXcd buf(g.size());
    for (int r = 0; r < fn.rows(); ++r)
        for (int c = 0; c < fn.cols(); ++c) {
            buf = fn.comp(r, c);
            detail::FftEngine::transform_inplace(buf.data(), dims, /*forward=*/true);
            Eigen::VectorXcd& dst = out.comp(r, c);
            detail::for_each_index(dual, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
                std::int64_t src = 0;
                std::complex<double> ph(scale, 0.0);
                for (int a = 0; a < g.dim(); ++a) {
                    src = src * g.count(a) + srcbin[a][idx[a]];
                    ph *= phase[a][idx[a]];
                }
                dst[flat] = buf[src] * ph;
            });
        }
    return out;
}

/// Inverse continuous transform onto an explicit primal grid:
///
///   f(i_n) ~ sum_k F(w_k) e^{+2 pi j i_n . w_k} prod(delta_w)
///
/// Exact round trip: inverse_ct(forward_ct(f), f.grid()) == f up to
/// floating-point rounding.
inline GriddedFunction inverse_ct(const GriddedFunction& spec, const GridSpec& target) {
    const GridSpec& dg = spec.grid();
    if (!dg.same_geometry(target.dual()))
        throw std::invalid_argument("inverse_ct: spectrum grid is not dual to the target grid");

    double scale = 1.0;
    std::vector<int> dims(dg.dim());
    for (int a = 0; a < dg.dim(); ++a) {
        scale *= dg.spacing(a);
        dims[a] = static_cast<int>(dg.count(a));
    }

    std::vector<std::vector<std::int64_t>> dstbin(dg.dim());
    std::vector<Eigen::VectorXcd> phase(dg.dim());
    for (int a = 0; a < dg.dim(); ++a) {
        const std::int64_t n = dg.count(a), s = n / 2;
        dstbin[a].resize(n);
        phase[a].resize(n);
        for (std::int64_t j = 0; j < n; ++j) {
            dstbin[a][j] = (j - s + n) % n;
            const double w = dg.coord(a, j);
            phase[a][j] = std::exp(std::complex<double>(0.0, 2.0 * M_PI * w * target.lower(a)));
        }
    }

    GriddedFunction out(target, spec.rows(), spec.cols());
    Eigen::VectorXcd buf(dg.size());
    for (int r = 0; r < spec.rows(); ++r)
        for (int c = 0; c < spec.cols(); ++c) {
            const Eigen::VectorXcd& src = spec.comp(r, c);
            detail::for_each_index(dg, [&](std::int64_t flat, const std::vector<std::int64_t>& idx) {
                std::int64_t dst = 0;
                std::complex<double> ph(1.0, 0.0);
                for (int a = 0; a < dg.dim(); ++a) {
                    dst = dst * dg.count(a) + dstbin[a][idx[a]];
                    ph *= phase[a][idx[a]];
                }
                buf[dst] = src[flat] * ph;
            });
            detail::FftEngine::transform_inplace(buf.data(), dims, /*forward=*/false);
            out.comp(r, c) = buf * scale;
        }
    return out;
}

/// Inverse transform assuming the primal grid is centered on the origin
/// (lower = -floor(N/2) * delta per axis), which holds for every grid built
/// over a symmetric box.
inline GriddedFunction inverse_ct(const GriddedFunction& spec) {
    return inverse_ct(spec, spec.grid().dual());
}

} // namespace fieldkf
