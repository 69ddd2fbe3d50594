#pragma once

#include "fieldkf/errors.hpp"
#include "fieldkf/fourier.hpp"
#include "fieldkf/grid.hpp"
#include "fieldkf/kernels.hpp"
#include "fieldkf/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace fieldkf {

/// Exact sampler for centered wide-sense-stationary Gaussian fields on a
/// uniform grid.
///
/// Primary path: circulant embedding of the kernel on a 2x-padded periodic
/// grid (M_a = 2(N_a - 1) per axis), sampling in the frequency domain at
/// FFT cost. The embedded spectrum is checked for nonnegativity; if it
/// fails, grids of at most 40^2 points fall back to a dense PSD square
/// root of the Gram matrix, and anything larger raises EmbeddingError.
///
/// Draws are bit-reproducible functions of (kernel, grid, seed).
class FieldSampler {
public:
    FieldSampler(const StationaryKernel& kernel, GridSpec grid)
        : grid_(std::move(grid)), m_(kernel.out_dim()) {
        build_embedding(kernel);
        if (!embedding_ok_) {
            if (grid_.size() <= kDenseFallbackMaxPoints) {
                build_dense(kernel);
            } else {
                throw EmbeddingError(
                    "circulant embedding spectrum has negative eigenvalues (min " +
                    std::to_string(worst_eig_) + " vs max " + std::to_string(max_eig_) +
                    ") and the grid is too large for the dense fallback");
            }
        }
    }

    bool used_dense_fallback() const { return !embedding_ok_; }

    /// One realization; an m x 1 real field on the grid.
    FieldSample sample(std::uint64_t seed) const {
        return embedding_ok_ ? sample_embedding(seed) : sample_dense(seed);
    }

    static constexpr std::int64_t kDenseFallbackMaxPoints = 1600; // 40^2

private:
    void build_embedding(const StationaryKernel& kernel) {
        const int d = grid_.dim();
        edims_.resize(d);
        etotal_ = 1;
        for (int a = 0; a < d; ++a) {
            edims_[a] = static_cast<int>(2 * (grid_.count(a) - 1));
            etotal_ *= edims_[a];
        }

        // kernel on the torus with signed offsets
        std::vector<Eigen::VectorXcd> entry(static_cast<std::size_t>(m_) * m_,
                                            Eigen::VectorXcd::Zero(etotal_));
        std::vector<std::int64_t> idx(d, 0);
        std::vector<double> off(d);
        for (std::int64_t flat = 0; flat < etotal_; ++flat) {
            for (int a = 0; a < d; ++a) {
                const std::int64_t p = idx[a];
                const std::int64_t sgn = (p <= edims_[a] / 2) ? p : p - edims_[a];
                off[a] = static_cast<double>(sgn) * grid_.spacing(a);
            }
            const Eigen::MatrixXd v = kernel.eval(off);
            for (int r = 0; r < m_; ++r)
                for (int c = 0; c < m_; ++c) entry[static_cast<std::size_t>(r) * m_ + c][flat] = v(r, c);
            for (int a = d - 1; a >= 0; --a) {
                if (++idx[a] < edims_[a]) break;
                idx[a] = 0;
            }
        }
        for (auto& e : entry) detail::FftEngine::transform_inplace(e.data(), edims_, true);

        if (m_ == 1) {
            max_eig_ = 0.0;
            worst_eig_ = 0.0;
            for (std::int64_t k = 0; k < etotal_; ++k) {
                const double lam = entry[0][k].real();
                max_eig_ = std::max(max_eig_, lam);
                worst_eig_ = std::min(worst_eig_, lam);
            }
            embedding_ok_ = worst_eig_ >= -kEigTol * std::max(max_eig_, 1.0);
            if (embedding_ok_) build_half_spectrum(entry[0]);
            return;
        }

        // general m: per-frequency Hermitian PSD square root
        bfactor_.resize(etotal_);
        max_eig_ = 0.0;
        worst_eig_ = 0.0;
        std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>> pass;
        Eigen::MatrixXcd lamk(m_, m_);
        for (std::int64_t k = 0; k < etotal_; ++k) {
            for (int r = 0; r < m_; ++r)
                for (int c = 0; c < m_; ++c) lamk(r, c) = entry[static_cast<std::size_t>(r) * m_ + c][k];
            lamk = 0.5 * (lamk + lamk.adjoint()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(lamk);
            max_eig_ = std::max(max_eig_, es.eigenvalues().maxCoeff());
            worst_eig_ = std::min(worst_eig_, es.eigenvalues().minCoeff());
            bfactor_[k] = es.eigenvectors() *
                          es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                          es.eigenvectors().adjoint();
        }
        embedding_ok_ = worst_eig_ >= -kEigTol * std::max(max_eig_, 1.0);
        if (!embedding_ok_) bfactor_.clear();
    }

    /// Classifies each bin of the c2r half spectrum (last axis 0..M/2) so
    /// the per-draw loop stays branch-cheap: fresh complex bins, boundary
    /// bins paired with their conjugate mirror inside the stored half, one
    /// real bin per self-conjugate frequency, and bins a mirror fills.
    void build_half_spectrum(const Eigen::VectorXcd& lambda_full) {
        hdims_ = edims_;
        hdims_.back() = edims_.back() / 2 + 1;
        htotal_ = 1;
        for (int n : hdims_) htotal_ *= n;

        kind_.assign(htotal_, kFresh);
        amp_.resize(htotal_);
        mirror_.assign(htotal_, 0);

        const int d = static_cast<int>(hdims_.size());
        std::vector<std::int64_t> j(d, 0), mj(d);
        for (std::int64_t h = 0; h < htotal_; ++h) {
            std::int64_t full = 0;
            for (int a = 0; a < d; ++a) full = full * edims_[a] + j[a];
            const double lam = std::max(lambda_full[full].real(), 0.0);

            const std::int64_t last = j[d - 1];
            if (last == 0 || 2 * last == edims_[d - 1]) {
                // self-conjugate plane: pair bins across the other axes
                std::int64_t mh = 0;
                bool self = true;
                for (int a = 0; a < d; ++a) {
                    mj[a] = a == d - 1 ? last : (edims_[a] - j[a]) % edims_[a];
                    mh = mh * hdims_[a] + mj[a];
                    self = self && mj[a] == j[a];
                }
                if (self) {
                    kind_[h] = kReal;
                    amp_[h] = std::sqrt(lam);
                } else if (h < mh) {
                    kind_[h] = kPair;
                    amp_[h] = std::sqrt(0.5 * lam);
                    mirror_[h] = mh;
                } else {
                    kind_[h] = kSkip;
                    amp_[h] = 0.0;
                }
            } else {
                kind_[h] = kFresh;
                amp_[h] = std::sqrt(0.5 * lam);
            }

            for (int a = d - 1; a >= 0; --a) {
                if (++j[a] < hdims_[a]) break;
                j[a] = 0;
            }
        }
    }

    FieldSample sample_embedding(std::uint64_t seed) const {
        NormalDeviate nd(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(etotal_));
        FieldSample out(grid_, m_, 1);

        if (m_ == 1) {
            Eigen::VectorXcd w(htotal_);
            for (std::int64_t h = 0; h < htotal_; ++h) {
                switch (kind_[h]) {
                    case kFresh: {
                        const double a = nd(), b = nd();
                        w[h] = amp_[h] * std::complex<double>(a, b);
                        break;
                    }
                    case kPair: {
                        const double a = nd(), b = nd();
                        w[h] = amp_[h] * std::complex<double>(a, b);
                        w[mirror_[h]] = std::conj(w[h]);
                        break;
                    }
                    case kReal:
                        w[h] = amp_[h] * nd();
                        break;
                    default:
                        break; // written by its mirror
                }
            }
            Eigen::VectorXd field(etotal_);
            detail::FftEngine::transform_c2r(w.data(), field.data(), edims_);
            Eigen::VectorXcd& dst = out.comp(0, 0);
            detail::for_each_index(grid_, [&](std::int64_t flat,
                                              const std::vector<std::int64_t>& idx) {
                std::int64_t src = 0;
                for (int a = 0; a < grid_.dim(); ++a) src = src * edims_[a] + idx[a];
                dst[flat] = field[src] * scale;
            });
            return out;
        }

        std::vector<Eigen::VectorXcd> comp(m_, Eigen::VectorXcd(etotal_));
        Eigen::VectorXcd xi(m_);
        for (std::int64_t k = 0; k < etotal_; ++k) {
            for (int r = 0; r < m_; ++r) {
                const double re = nd(), im = nd();
                xi[r] = std::complex<double>(re, im);
            }
            const Eigen::VectorXcd v = bfactor_[k] * xi;
            for (int r = 0; r < m_; ++r) comp[r][k] = v[r];
        }
        for (int r = 0; r < m_; ++r) {
            detail::FftEngine::transform_inplace(comp[r].data(), edims_, true);
            Eigen::VectorXcd& dst = out.comp(r, 0);
            detail::for_each_index(grid_, [&](std::int64_t flat,
                                              const std::vector<std::int64_t>& idx) {
                std::int64_t src = 0;
                for (int a = 0; a < grid_.dim(); ++a) src = src * edims_[a] + idx[a];
                dst[flat] = comp[r][src].real() * scale;
            });
        }
        return out;
    }

    void build_dense(const StationaryKernel& kernel) {
        const std::int64_t n = grid_.size() * m_;
        Eigen::MatrixXd gram(n, n);
        std::vector<double> off(grid_.dim());
        for (std::int64_t p = 0; p < grid_.size(); ++p) {
            const std::vector<double> ip = grid_.point(p);
            for (std::int64_t q = 0; q < grid_.size(); ++q) {
                const std::vector<double> iq = grid_.point(q);
                for (int a = 0; a < grid_.dim(); ++a) off[a] = ip[a] - iq[a];
                gram.block(p * m_, q * m_, m_, m_) = kernel.eval(off);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (gram + gram.transpose()));
        const double lmax = es.eigenvalues().maxCoeff();
        if (es.eigenvalues().minCoeff() < -kEigTol * std::max(lmax, 1.0))
            throw EmbeddingError("embedding failed and the dense Gram matrix is not PSD either; "
                                 "the kernel is not a valid stationary covariance on this grid");
        dense_sqrt_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                      es.eigenvectors().transpose();
    }

    FieldSample sample_dense(std::uint64_t seed) const {
        NormalDeviate nd(seed);
        Eigen::VectorXd xi(dense_sqrt_.rows());
        for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = nd();
        const Eigen::VectorXd y = dense_sqrt_ * xi;
        FieldSample out(grid_, m_, 1);
        for (std::int64_t p = 0; p < grid_.size(); ++p)
            for (int r = 0; r < m_; ++r) out.comp(r, 0)[p] = y[p * m_ + r];
        return out;
    }

    static constexpr double kEigTol = 1e-10;

    enum Kind : std::int8_t { kFresh, kPair, kReal, kSkip };

    GridSpec grid_;
    int m_;
    std::vector<int> edims_;
    std::int64_t etotal_ = 0;
    bool embedding_ok_ = false;
    double max_eig_ = 0.0, worst_eig_ = 0.0;
    std::vector<int> hdims_;                     // m == 1: c2r half grid
    std::int64_t htotal_ = 0;
    std::vector<Kind> kind_;
    std::vector<double> amp_;
    std::vector<std::int64_t> mirror_;
    std::vector<Eigen::MatrixXcd> bfactor_;      // m > 1
    Eigen::MatrixXd dense_sqrt_;                 // fallback
};

/// One-shot draw (builds the sampler internally; reuse FieldSampler when
/// drawing many realizations of the same field).
inline FieldSample sample_field(const StationaryKernel& kernel, const GridSpec& grid,
                                std::uint64_t seed) {
    return FieldSampler(kernel, grid).sample(seed);
}

} // namespace fieldkf
