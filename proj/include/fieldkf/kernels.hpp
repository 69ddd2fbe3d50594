#pragma once

#include "fieldkf/fourier.hpp"
#include "fieldkf/grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fieldkf {

/// Stationary matrix-valued covariance kernel R(offset) of a wide-sense
/// stationary random field. Implementations must satisfy R(-d) = R(d)^T,
/// a finite PSD R(0), and absolute integrability, and may expose an
/// analytic spectrum; fields lacking one get the numerically transformed
/// spectrum from kernel_spectrum.
class StationaryKernel {
public:
    virtual ~StationaryKernel() = default;

    virtual int out_dim() const = 0;

    /// R(offset), an m x m matrix.
    virtual Eigen::MatrixXd eval(const std::vector<double>& offset) const = 0;

    virtual bool has_analytic_spectrum() const { return false; }

    /// Spectrum value at one frequency (only if has_analytic_spectrum()).
    virtual Eigen::MatrixXd spectrum_at(const std::vector<double>& freq) const {
        (void)freq;
        throw std::logic_error("kernel has no analytic spectrum");
    }
};

/// Isotropic squared-exponential kernel
///
///   R(d) = nu / (2 pi l^2)^{d/2} * exp(-|d|^2 / (2 l^2)) * I_m
///
/// with spectrum nu * exp(-2 pi^2 l^2 |w|^2) * I_m in every dimension.
class SquaredExponentialKernel final : public StationaryKernel {
public:
    SquaredExponentialKernel(double intensity, double length_scale, int out_dim = 1)
        : intensity_(intensity), length_scale_(length_scale), out_dim_(out_dim) {
        if (!(intensity_ > 0.0) || !(length_scale_ > 0.0) || out_dim_ < 1)
            throw std::invalid_argument("SquaredExponentialKernel: need nu > 0, ell > 0, m >= 1");
    }

    double intensity() const { return intensity_; }
    double length_scale() const { return length_scale_; }
    int out_dim() const override { return out_dim_; }

    Eigen::MatrixXd eval(const std::vector<double>& offset) const override {
        double r2 = 0.0;
        for (double x : offset) r2 += x * x;
        const double dim = static_cast<double>(offset.size());
        const double norm = std::pow(2.0 * M_PI * length_scale_ * length_scale_, 0.5 * dim);
        const double v = intensity_ / norm * std::exp(-r2 / (2.0 * length_scale_ * length_scale_));
        return v * Eigen::MatrixXd::Identity(out_dim_, out_dim_);
    }

    bool has_analytic_spectrum() const override { return true; }

    Eigen::MatrixXd spectrum_at(const std::vector<double>& freq) const override {
        double w2 = 0.0;
        for (double w : freq) w2 += w * w;
        const double v =
            intensity_ * std::exp(-2.0 * M_PI * M_PI * length_scale_ * length_scale_ * w2);
        return v * Eigen::MatrixXd::Identity(out_dim_, out_dim_);
    }

private:
    double intensity_, length_scale_;
    int out_dim_;
};

/// Kernel spectrum sampled on a dual frequency grid; values are m x m and
/// Hermitian PSD at every frequency.
struct KernelSpectrum {
    GriddedFunction values; // m x m per frequency, on the dual grid

    const GridSpec& grid() const { return values.grid(); }
    int out_dim() const { return values.rows(); }
};

/// R(offset) for a kernel (free-function form of StationaryKernel::eval).
inline Eigen::MatrixXd kernel_eval(const StationaryKernel& kernel,
                                   const std::vector<double>& offset) {
    return kernel.eval(offset);
}

/// Spectrum of a stationary kernel on the given dual grid: the analytic
/// form when the kernel has one, otherwise the continuous-transform of the
/// kernel sampled on the (centered) primal grid, Hermitized.
inline KernelSpectrum kernel_spectrum(const StationaryKernel& kernel, const GridSpec& dual_grid) {
    const int m = kernel.out_dim();
    if (kernel.has_analytic_spectrum()) {
        GriddedFunction vals(dual_grid, m, m);
        for (std::int64_t p = 0; p < dual_grid.size(); ++p)
            vals.set_value_at(p, kernel.spectrum_at(dual_grid.point(p)).cast<std::complex<double>>());
        return KernelSpectrum{std::move(vals)};
    }

    const GridSpec primal = dual_grid.dual(); // centered
    GriddedFunction sampled(primal, m, m);
    for (std::int64_t p = 0; p < primal.size(); ++p)
        sampled.set_value_at(p, kernel.eval(primal.point(p)).cast<std::complex<double>>());
    GriddedFunction vals = forward_ct(sampled);
    for (std::int64_t p = 0; p < dual_grid.size(); ++p) {
        const Eigen::MatrixXcd v = vals.value_at(p);
        vals.set_value_at(p, 0.5 * (v + v.adjoint()));
    }
    return KernelSpectrum{std::move(vals)};
}

} // namespace fieldkf
