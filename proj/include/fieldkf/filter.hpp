#pragma once

#include "fieldkf/gain.hpp"
#include "fieldkf/grid.hpp"
#include "fieldkf/kernels.hpp"

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <vector>

namespace fieldkf {

/// Linear system with finite-dimensional state and field-valued measurement:
///
///   x_{k+1} = A x_k + w_k,          cov(w) = Q > 0
///   z_k(i)  = gamma(i) x_k + v_k(i)
///
/// with v a centered wide-sense-stationary field of covariance kernel R.
struct SystemModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd Q;
    GriddedFunction gamma; // m x n per grid point
    std::shared_ptr<const StationaryKernel> kernel;

    const GridSpec& grid() const { return gamma.grid(); }
    int state_dim() const { return static_cast<int>(A.rows()); }
    int meas_dim() const { return gamma.rows(); }

    void validate() const {
        if (A.rows() != A.cols()) throw std::invalid_argument("SystemModel: A must be square");
        if (Q.rows() != A.rows() || Q.cols() != A.cols())
            throw std::invalid_argument("SystemModel: Q shape mismatch");
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() >
            1e-10 * std::max(Q.cwiseAbs().maxCoeff(), 1e-300))
            throw std::invalid_argument("SystemModel: Q must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(Q);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("SystemModel: Q must be positive definite");
        if (gamma.cols() != A.rows())
            throw std::invalid_argument("SystemModel: gamma columns must match the state dimension");
        if (!kernel || kernel->out_dim() != gamma.rows())
            throw std::invalid_argument("SystemModel: kernel output dim must match gamma rows");
        for (int r = 0; r < gamma.rows(); ++r)
            for (int c = 0; c < gamma.cols(); ++c)
                if (!gamma.comp(r, c).allFinite())
                    throw std::invalid_argument("SystemModel: gamma must be finite on the grid");
    }
};

/// Estimate and covariance at one time step. After predict(), x_hat and
/// P_prior hold the one-step-ahead prediction; update_covariance and
/// update_state then produce the posterior pair.
struct FilterState {
    int k = 0;
    Eigen::VectorXd x_hat;
    Eigen::MatrixXd P;       // posterior
    Eigen::MatrixXd P_prior; // prior from the last prediction
};

namespace detail {

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& P, const char* who) {
    const double scale = std::max(P.cwiseAbs().maxCoeff(), 1e-300);
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::runtime_error(std::string(who) + ": covariance drifted from symmetry");
    return 0.5 * (P + P.transpose());
}

} // namespace detail

/// Time update: x <- A x, P_prior <- A P A^T + Q.
inline FilterState predict(const FilterState& state, const SystemModel& model) {
    FilterState out = state;
    out.x_hat = model.A * state.x_hat;
    out.P_prior = detail::symmetrized(model.A * state.P * model.A.transpose() + model.Q, "predict");
    out.P = out.P_prior; // posterior pending the measurement
    return out;
}

/// Measurement update of the covariance: P = P-(I + S P-)^-1, symmetrized.
inline Eigen::MatrixXd update_covariance(const Eigen::MatrixXd& P_prior, const Eigen::MatrixXd& S) {
    const Eigen::Index n = P_prior.rows();
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + S * P_prior;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
        throw std::runtime_error("update_covariance: I + S P_prior is singular; inputs are not PSD");
    // solve on the right: P (I + S P-) = P-  =>  (I + S P-)^T P^T = P-^T
    const Eigen::MatrixXd P =
        Eigen::FullPivLU<Eigen::MatrixXd>(M.transpose()).solve(P_prior.transpose()).transpose();
    return detail::symmetrized(P, "update_covariance");
}

/// Optimal gain function kappa_k(i) = P_k f(i).
inline GriddedFunction gain_function(const Eigen::MatrixXd& P_post,
                                     const GainPrecomputation& precomp) {
    return precomp.f.left_multiplied(P_post);
}

/// Innovation integral: integral f(i) (z(i) - gamma(i) x_pred) di by the
/// same trapezoidal rule as compute_S (required for the optimality residual
/// to cancel at finite resolution).
inline Eigen::VectorXd innovation_integral(const GriddedFunction& f, const FieldSample& z,
                                           const GriddedFunction& gamma,
                                           const Eigen::VectorXd& x_pred,
                                           const Eigen::VectorXd& weights) {
    const int n = f.rows(), m = f.cols();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (int p = 0; p < m; ++p) {
        // innovation component p over the grid
        Eigen::ArrayXd s = z.comp(p, 0).real().array();
        for (int j = 0; j < n; ++j) s -= x_pred[j] * gamma.comp(p, j).real().array();
        for (int r = 0; r < n; ++r)
            out[r] += (f.comp(r, p).real().array() * s * weights.array()).sum();
    }
    return out;
}

/// Measurement update of the state. Expects `state` to carry the predicted
/// mean in x_hat and the posterior covariance for this step in P (from
/// update_covariance); increments k.
inline FilterState update_state(const FilterState& state, const FieldSample& z,
                                const SystemModel& model, const GainPrecomputation& precomp) {
    if (!z.grid().same_geometry(model.grid()))
        throw std::invalid_argument("update_state: measurement grid does not match the model grid");
    if (z.rows() != model.meas_dim() || z.cols() != 1)
        throw std::invalid_argument("update_state: measurement must be an m-vector field");
    FilterState out = state;
    out.x_hat = state.x_hat +
                state.P * innovation_integral(precomp.f, z, model.gamma, state.x_hat,
                                              precomp.weights);
    out.k = state.k + 1;
    return out;
}

/// One full step: predict, covariance update, state update.
inline FilterState filter_step(const FilterState& state, const FieldSample& z,
                               const SystemModel& model, const GainPrecomputation& precomp) {
    FilterState pred = predict(state, model);
    pred.P = update_covariance(pred.P_prior, precomp.S);
    return update_state(pred, z, model, precomp);
}

/// Runs the recursion over a measurement sequence. The covariance
/// trajectory never depends on the data, so it could equally be produced
/// ahead of time; filtering measurements only changes the x_hat entries.
inline std::vector<FilterState> run_filter(const SystemModel& model,
                                           const GainPrecomputation& precomp,
                                           const std::vector<FieldSample>& measurements,
                                           const FilterState& init) {
    if (measurements.empty())
        throw std::invalid_argument("run_filter: need at least one measurement");
    std::vector<FilterState> out;
    out.reserve(measurements.size());
    FilterState s = init;
    for (const FieldSample& z : measurements) {
        s = filter_step(s, z, model, precomp);
        out.push_back(s);
    }
    return out;
}

/// The data-free covariance recursion alone: (P_prior_k, P_k) for
/// k = 1..steps starting from P_0.
inline std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> covariance_trajectory(
    const SystemModel& model, const Eigen::MatrixXd& S, const Eigen::MatrixXd& P0, int steps) {
    std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> out;
    out.reserve(steps);
    Eigen::MatrixXd P = P0;
    for (int k = 0; k < steps; ++k) {
        const Eigen::MatrixXd Pp =
            detail::symmetrized(model.A * P * model.A.transpose() + model.Q, "covariance_trajectory");
        P = update_covariance(Pp, S);
        out.emplace_back(Pp, P);
    }
    return out;
}

} // namespace fieldkf
