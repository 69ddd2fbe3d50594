#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fieldkf {

/// Uniform rectangular sampling of a box in R^d, together with the dual
/// frequency grid used by the continuous-transform approximation.
///
/// Points are laid out in row-major (C) order with the last axis fastest,
/// matching the FFT layout. The dual grid stores frequencies in natural
/// ascending order (fftshift convention); for axis a it has spacing
/// 1/(N_a * delta_a) and spans [-1/(2 delta_a), 1/(2 delta_a)).
class GridSpec {
public:
    GridSpec(std::vector<double> lower, std::vector<double> spacing,
             std::vector<std::int64_t> counts)
        : lower_(std::move(lower)), spacing_(std::move(spacing)), counts_(std::move(counts)) {
        if (lower_.empty() || lower_.size() != spacing_.size() || lower_.size() != counts_.size())
            throw std::invalid_argument("GridSpec: dimension mismatch between lower/spacing/counts");
        std::int64_t total = 1;
        for (std::size_t a = 0; a < counts_.size(); ++a) {
            if (!(spacing_[a] > 0.0))
                throw std::invalid_argument("GridSpec: spacing must be strictly positive");
            if (counts_[a] < 2)
                throw std::invalid_argument("GridSpec: need at least 2 samples per axis");
            if (total > (std::int64_t(1) << 46) / counts_[a])
                throw std::invalid_argument("GridSpec: total sample count too large");
            total *= counts_[a];
        }
        size_ = total;
    }

    /// Covers [lo, hi] per axis with counts = round(extent/spacing) + 1,
    /// endpoints included.
    static GridSpec over_box(const std::vector<double>& lo, const std::vector<double>& hi,
                             const std::vector<double>& spacing) {
        if (lo.size() != hi.size() || lo.size() != spacing.size())
            throw std::invalid_argument("GridSpec::over_box: dimension mismatch");
        std::vector<std::int64_t> counts(lo.size());
        for (std::size_t a = 0; a < lo.size(); ++a) {
            if (!(hi[a] > lo[a]))
                throw std::invalid_argument("GridSpec::over_box: need hi > lo");
            counts[a] = static_cast<std::int64_t>(std::llround((hi[a] - lo[a]) / spacing[a])) + 1;
        }
        return GridSpec(lo, spacing, counts);
    }

    int dim() const { return static_cast<int>(counts_.size()); }
    std::int64_t size() const { return size_; }
    std::int64_t count(int axis) const { return counts_[axis]; }
    double lower(int axis) const { return lower_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    const std::vector<std::int64_t>& counts() const { return counts_; }

    double coord(int axis, std::int64_t index) const {
        return lower_[axis] + spacing_[axis] * static_cast<double>(index);
    }

    void unflatten(std::int64_t flat, std::vector<std::int64_t>& idx) const {
        idx.resize(counts_.size());
        for (int a = dim() - 1; a >= 0; --a) {
            idx[a] = flat % counts_[a];
            flat /= counts_[a];
        }
    }

    std::int64_t flatten(const std::vector<std::int64_t>& idx) const {
        std::int64_t flat = 0;
        for (int a = 0; a < dim(); ++a) flat = flat * counts_[a] + idx[a];
        return flat;
    }

    std::vector<double> point(std::int64_t flat) const {
        std::vector<std::int64_t> idx;
        unflatten(flat, idx);
        std::vector<double> p(idx.size());
        for (int a = 0; a < dim(); ++a) p[a] = coord(a, idx[a]);
        return p;
    }

    /// Dual frequency grid (same counts, fftshift-ascending frequencies).
    GridSpec dual() const {
        std::vector<double> dlo(dim()), dsp(dim());
        for (int a = 0; a < dim(); ++a) {
            dsp[a] = 1.0 / (static_cast<double>(counts_[a]) * spacing_[a]);
            dlo[a] = -static_cast<double>(counts_[a] / 2) * dsp[a];
        }
        return GridSpec(dlo, dsp, counts_);
    }

    /// Product of per-axis extents (N_a - 1) * delta_a.
    double box_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim(); ++a) v *= spacing_[a] * static_cast<double>(counts_[a] - 1);
        return v;
    }

    bool same_geometry(const GridSpec& o, double tol = 1e-12) const {
        if (dim() != o.dim() || counts_ != o.counts_) return false;
        for (int a = 0; a < dim(); ++a) {
            const double scale = std::max({std::abs(spacing_[a]), std::abs(lower_[a]), 1e-300});
            if (std::abs(spacing_[a] - o.spacing_[a]) > tol * scale) return false;
            if (std::abs(lower_[a] - o.lower_[a]) > tol * std::max(scale, 1.0)) return false;
        }
        return true;
    }

private:
    std::vector<double> lower_, spacing_;
    std::vector<std::int64_t> counts_;
    std::int64_t size_ = 0;
};

/// An r x c matrix-valued function sampled on a grid. Values are stored
/// componentwise: comp(r, c) is the complex scalar field of one matrix
/// entry over all grid points, which is the natural layout for the FFT.
class GriddedFunction {
public:
    GriddedFunction(GridSpec grid, int rows, int cols)
        : grid_(std::move(grid)), rows_(rows), cols_(cols) {
        if (rows_ < 1 || cols_ < 1)
            throw std::invalid_argument("GriddedFunction: matrix shape must be positive");
        comp_.resize(static_cast<std::size_t>(rows_) * cols_,
                     Eigen::VectorXcd::Zero(grid_.size()));
    }

    /// Samples fn(point) -> r x c real matrix at every grid point.
    static GriddedFunction sample(const GridSpec& grid, int rows, int cols,
                                  const std::function<Eigen::MatrixXd(const std::vector<double>&)>& fn) {
        GriddedFunction out(grid, rows, cols);
        for (std::int64_t p = 0; p < grid.size(); ++p) {
            const Eigen::MatrixXd v = fn(grid.point(p));
            if (v.rows() != rows || v.cols() != cols)
                throw std::invalid_argument("GriddedFunction::sample: shape mismatch from callback");
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) out.comp(r, c)[p] = v(r, c);
        }
        return out;
    }

    const GridSpec& grid() const { return grid_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

    Eigen::VectorXcd& comp(int r, int c) { return comp_[static_cast<std::size_t>(r) * cols_ + c]; }
    const Eigen::VectorXcd& comp(int r, int c) const {
        return comp_[static_cast<std::size_t>(r) * cols_ + c];
    }

    Eigen::MatrixXcd value_at(std::int64_t flat) const {
        Eigen::MatrixXcd v(rows_, cols_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) v(r, c) = comp(r, c)[flat];
        return v;
    }

    Eigen::MatrixXd real_value_at(std::int64_t flat) const {
        Eigen::MatrixXd v(rows_, cols_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) v(r, c) = comp(r, c)[flat].real();
        return v;
    }

    void set_value_at(std::int64_t flat, const Eigen::MatrixXcd& v) {
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) comp(r, c)[flat] = v(r, c);
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : comp_) m = std::max(m, v.cwiseAbs().maxCoeff());
        return m;
    }

    double max_abs_imag() const {
        double m = 0.0;
        for (const auto& v : comp_) m = std::max(m, v.imag().cwiseAbs().maxCoeff());
        return m;
    }

    /// Drops imaginary parts in place.
    GriddedFunction& strip_imag() {
        for (auto& v : comp_) v = v.real().cast<std::complex<double>>();
        return *this;
    }

    GriddedFunction& operator*=(std::complex<double> s) {
        for (auto& v : comp_) v *= s;
        return *this;
    }

    GriddedFunction& operator+=(const GriddedFunction& o) {
        require_compatible(o);
        for (std::size_t i = 0; i < comp_.size(); ++i) comp_[i] += o.comp_[i];
        return *this;
    }

    friend GriddedFunction operator*(std::complex<double> s, GriddedFunction f) {
        f *= s;
        return f;
    }

    friend GriddedFunction operator+(GriddedFunction a, const GriddedFunction& b) {
        a += b;
        return a;
    }

    friend GriddedFunction operator-(GriddedFunction a, const GriddedFunction& b) {
        a.require_compatible(b);
        for (std::size_t i = 0; i < a.comp_.size(); ++i) a.comp_[i] -= b.comp_[i];
        return a;
    }

    /// Pointwise M * f(i) for a constant matrix M (e.g. the gain kappa = P f).
    GriddedFunction left_multiplied(const Eigen::MatrixXd& M) const {
        if (M.cols() != rows_)
            throw std::invalid_argument("left_multiplied: shape mismatch");
        GriddedFunction out(grid_, static_cast<int>(M.rows()), cols_);
        for (int r = 0; r < M.rows(); ++r)
            for (int c = 0; c < cols_; ++c) {
                Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(grid_.size());
                for (int k = 0; k < rows_; ++k) acc += M(r, k) * comp(k, c);
                out.comp(r, c) = acc;
            }
        return out;
    }

    void require_compatible(const GriddedFunction& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_ || !grid_.same_geometry(o.grid_))
            throw std::invalid_argument("GriddedFunction: incompatible grids or shapes");
    }

private:
    GridSpec grid_;
    int rows_, cols_;
    std::vector<Eigen::VectorXcd> comp_;
};

/// One realization of an m-vector-valued field on a grid (a measurement or
/// a noise draw): an m x 1 GriddedFunction with real values.
using FieldSample = GriddedFunction;

} // namespace fieldkf
