#pragma once

#include "fieldkf/errors.hpp"
#include "fieldkf/filter.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace fieldkf {

/// Data of the discrete-time algebraic Riccati equation in G-form,
///
///   P = A P A^T - A P G (I + G^T P G)^-1 G^T P A^T + Q
///
/// where G is the principal square root of the information matrix S.
struct DareProblem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd G;
    Eigen::MatrixXd Q;
};

struct SteadyState {
    Eigen::MatrixXd P_prior_inf;
    Eigen::MatrixXd P_post_inf;
    int iterations = 0;
    double residual = 0.0;
};

/// Largest eigenvalue magnitude.
inline double spectral_radius(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw std::invalid_argument("spectral_radius: matrix must be square");
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// PBH test: (A, B) is stabilizable iff [A - lambda I | B] has full row rank
/// for every eigenvalue lambda of A with |lambda| >= 1 (unit-circle modes
/// count). Rank is judged by singular values at 1e-10 of the largest.
inline bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || B.rows() != n)
        throw std::invalid_argument("is_stabilizable: incompatible shapes");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::complex<double> lam = es.eigenvalues()[i];
        if (std::abs(lam) < 1.0 - 1e-10) continue;
        Eigen::MatrixXcd pencil(n, n + B.cols());
        pencil << A.cast<std::complex<double>>() -
                      lam * Eigen::MatrixXcd::Identity(n, n),
            B.cast<std::complex<double>>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
        const Eigen::VectorXd sv = svd.singularValues();
        if (sv[0] <= 0.0 || sv[n - 1] < 1e-10 * sv[0]) return false;
    }
    return true;
}

inline bool is_detectable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    return is_stabilizable(A.transpose(), B);
}

/// One Riccati iteration in the canonical G-form.
inline Eigen::MatrixXd riccati_step(const Eigen::MatrixXd& P_prior, const DareProblem& prob) {
    const Eigen::Index n = prob.A.rows();
    const Eigen::MatrixXd GtPG =
        Eigen::MatrixXd::Identity(prob.G.cols(), prob.G.cols()) +
        prob.G.transpose() * P_prior * prob.G;
    const Eigen::MatrixXd mid =
        prob.G * GtPG.llt().solve(prob.G.transpose() * P_prior * prob.A.transpose());
    Eigen::MatrixXd next =
        prob.A * P_prior * prob.A.transpose() - prob.A * P_prior * mid + prob.Q;
    (void)n;
    return 0.5 * (next + next.transpose());
}

/// Fixed-point DARE solve from P_0 = Q. Preconditions (checked): Q > 0,
/// (A, Q) stabilizable (assumption 6), (A, G) detectable (assumption 7);
/// under them the iteration converges to the unique stabilizing solution
/// for any PSD start. The stabilizing property rho((I - P S) A) < 1 is
/// verified before returning.
inline SteadyState solve_dare(const DareProblem& prob, double tol = 1e-12,
                              int max_iter = 100000) {
    Eigen::LLT<Eigen::MatrixXd> llt(prob.Q);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("solve_dare: Q must be positive definite");
    if (!is_stabilizable(prob.A, prob.Q))
        throw AssumptionError(6, "(A, Q) is not stabilizable");
    if (!is_detectable(prob.A, prob.G))
        throw AssumptionError(7, "(A, G) is not detectable");

    Eigen::MatrixXd P = prob.Q;
    double res = 0.0;
    int it = 0;
    for (; it < max_iter; ++it) {
        const Eigen::MatrixXd next = riccati_step(P, prob);
        res = (next - P).cwiseAbs().maxCoeff();
        P = next;
        if (res <= tol) break;
    }
    if (res > tol)
        throw std::runtime_error("solve_dare: no convergence in " + std::to_string(max_iter) +
                                 " iterations (residual " + std::to_string(res) + ")");

    const Eigen::MatrixXd S = prob.G * prob.G;
    const Eigen::MatrixXd P_post = update_covariance(P, S);
    const double rho = spectral_radius(
        (Eigen::MatrixXd::Identity(P.rows(), P.cols()) - P_post * S) * prob.A);
    if (rho >= 1.0)
        throw std::runtime_error("solve_dare: solution is not stabilizing (rho = " +
                                 std::to_string(rho) + ")");
    return SteadyState{P, P_post, it + 1, res};
}

} // namespace fieldkf
