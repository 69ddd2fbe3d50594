#pragma once

#include "fieldkf/filter.hpp"
#include "fieldkf/gain.hpp"
#include "fieldkf/random.hpp"
#include "fieldkf/sampling.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <thread>
#include <vector>

namespace fieldkf {

/// Camera-over-a-patterned-wall scenario: a double-integrator state
/// [position, velocity], a pinhole projection of a decaying ring pattern
/// linearized at lin_point, and squared-exponential measurement noise on a
/// square pixel domain. Defaults reproduce the reference configuration.
struct PinholeScenario {
    double eta = 0.1;        // pattern decay
    double xi = 0.8;         // pattern frequency
    double focal = 0.01;     // focal length
    Eigen::Vector2d lin_point{1.0, 0.0};
    double delta_t = 1.0;
    double sigma_q2 = 0.01;  // position process variance
    double sigma_qd2 = 0.01; // velocity process variance
    double nu = 10.0;        // noise intensity
    double ell = 0.025;      // noise length scale
    double domain_lo = -0.5, domain_hi = 0.5;
    double spacing = 0.005;
    Eigen::Vector2d x0{1.0, 0.0};

    enum class InitCov { process_noise, zero, identity };
    InitCov p0_mode = InitCov::process_noise;

    enum class TruthModel { linear, pinhole };
    TruthModel truth_model = TruthModel::linear;

    int trials = 2000;
    int horizon = 50;
    std::uint64_t seed = 1u;
    int threads = 0; // 0: hardware concurrency

    GridSpec grid() const {
        return GridSpec::over_box({domain_lo, domain_lo}, {domain_hi, domain_hi},
                                  {spacing, spacing});
    }

    Eigen::Matrix2d state_matrix() const {
        Eigen::Matrix2d A;
        A << 1.0, delta_t, 0.0, 1.0;
        return A;
    }

    Eigen::Matrix2d process_noise() const {
        return Eigen::Vector2d(sigma_q2, sigma_qd2).asDiagonal();
    }

    Eigen::Matrix2d initial_covariance() const {
        switch (p0_mode) {
            case InitCov::zero: return Eigen::Matrix2d::Zero();
            case InitCov::identity: return Eigen::Matrix2d::Identity();
            default: return process_noise();
        }
    }
};

/// Wall pattern C(p) = exp(-(eta |p|)^2) cos(xi |p|) + 1.
inline double wall_intensity(const Eigen::Vector2d& p, const PinholeScenario& sc) {
    const double r = p.norm();
    const double er = sc.eta * r;
    return std::exp(-er * er) * std::cos(sc.xi * r) + 1.0;
}

/// Derivative of the projected wall pattern with respect to position at the
/// linearization point: gamma(i) = [dC(i q / L_f)/dq |_{q = qbar}, 0].
/// Velocity never enters the measurement, hence the zero column.
inline Eigen::RowVector2d measurement_gamma_at(const Eigen::Vector2d& i,
                                               const PinholeScenario& sc) {
    const double qbar = sc.lin_point[0];
    const double r = i.norm() / sc.focal; // |i| / L_f
    const double e = sc.eta * r * qbar;
    const double g = -std::exp(-e * e) *
                     (2.0 * (sc.eta * r) * (sc.eta * r) * qbar * std::cos(sc.xi * r * qbar) +
                      sc.xi * r * std::sin(sc.xi * r * qbar));
    return Eigen::RowVector2d(g, 0.0);
}

/// gamma sampled on the scenario grid (1 x 2 per point).
inline GriddedFunction measurement_gamma(const PinholeScenario& sc) {
    return GriddedFunction::sample(sc.grid(), 1, 2, [&sc](const std::vector<double>& p) {
        return Eigen::MatrixXd(measurement_gamma_at(Eigen::Vector2d(p[0], p[1]), sc));
    });
}

inline std::shared_ptr<const SquaredExponentialKernel> noise_kernel(const PinholeScenario& sc) {
    return std::make_shared<SquaredExponentialKernel>(sc.nu, sc.ell, 1);
}

inline SystemModel make_system_model(const PinholeScenario& sc) {
    SystemModel model{sc.state_matrix(), sc.process_noise(), measurement_gamma(sc),
                      noise_kernel(sc)};
    model.validate();
    return model;
}

/// State sequence x_0..x_horizon under x_{k+1} = A x_k + w_k,
/// w ~ N(0, diag(sigma_q2, sigma_qd2)); deterministic per seed.
inline std::vector<Eigen::Vector2d> simulate_truth(const PinholeScenario& sc,
                                                   std::uint64_t seed) {
    NormalDeviate nd(mix_seed(seed, 0x7472757468ULL)); // "truth" tag
    const Eigen::Matrix2d A = sc.state_matrix();
    const double sq = std::sqrt(sc.sigma_q2), sqd = std::sqrt(sc.sigma_qd2);
    std::vector<Eigen::Vector2d> xs;
    xs.reserve(sc.horizon + 1);
    xs.push_back(sc.x0);
    for (int k = 0; k < sc.horizon; ++k)
        xs.push_back(A * xs.back() + Eigen::Vector2d(sq * nd(), sqd * nd()));
    return xs;
}

namespace detail {

inline std::uint64_t measurement_seed(std::uint64_t seed, int k) {
    return mix_seed(mix_seed(seed, 0x6d656173ULL), static_cast<std::uint64_t>(k)); // "meas" tag
}

/// z_k = (linear or linearized-pinhole measurement of x) + noise draw.
/// The pinhole variant measures the true nonlinear projection with the
/// static linearization-point image subtracted, so the linear filter's
/// measurement model stays valid to first order.
inline FieldSample generate_measurement_impl(const Eigen::Vector2d& x,
                                             const GriddedFunction& gamma,
                                             const FieldSampler& sampler,
                                             const PinholeScenario& sc, std::uint64_t seed,
                                             int k) {
    FieldSample z = sampler.sample(measurement_seed(seed, k));
    if (sc.truth_model == PinholeScenario::TruthModel::linear) {
        z.comp(0, 0) += x[0] * gamma.comp(0, 0);
    } else {
        const GridSpec& g = gamma.grid();
        const double qbar = sc.lin_point[0];
        Eigen::VectorXcd& zv = z.comp(0, 0);
        for (std::int64_t p = 0; p < g.size(); ++p) {
            const std::vector<double> pt = g.point(p);
            const Eigen::Vector2d i(pt[0], pt[1]);
            zv[p] += wall_intensity(i * (x[0] / sc.focal), sc) -
                     wall_intensity(i * (qbar / sc.focal), sc) +
                     gamma.comp(0, 0)[p].real() * qbar;
        }
    }
    return z;
}

} // namespace detail

/// z_k(i) = gamma(i) x_k + v_k(i) with a fresh noise realization sub-seeded
/// by (seed, k), so distinct steps never share a draw.
inline FieldSample generate_measurement(const Eigen::Vector2d& x, const PinholeScenario& sc,
                                        std::uint64_t seed, int k) {
    const GriddedFunction gamma = measurement_gamma(sc);
    const FieldSampler sampler(*noise_kernel(sc), sc.grid());
    return detail::generate_measurement_impl(x, gamma, sampler, sc, seed, k);
}

/// Per-step empirical MSE against the covariance recursion's prediction.
struct MseResult {
    std::vector<double> emp_q, emp_qd;     // empirical mean squared error
    std::vector<double> theo_q, theo_qd;   // diag(P_k)
    std::vector<double> stderr_q, stderr_qd;
    int trials = 0;
};

namespace detail {

/// Pairwise tree reduction over trial index ranges; the result is a fixed
/// function of the trial ordering, independent of thread count.
inline void pairwise_sum(const std::vector<Eigen::ArrayXXd>& per_trial, std::size_t lo,
                         std::size_t hi, Eigen::ArrayXXd& out) {
    if (hi - lo <= 8) {
        out = per_trial[lo];
        for (std::size_t t = lo + 1; t < hi; ++t) out += per_trial[t];
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Eigen::ArrayXXd left, right;
    pairwise_sum(per_trial, lo, mid, left);
    pairwise_sum(per_trial, mid, hi, right);
    out = left + right;
}

} // namespace detail

/// Runs `trials` independent truth + filter pairs and averages the squared
/// estimation errors. Trials run concurrently; the reduction over trial
/// indices is an ordered pairwise tree, so results are bit-identical for
/// any thread count.
inline MseResult monte_carlo_mse(const PinholeScenario& sc) {
    if (sc.trials < 1) throw std::invalid_argument("monte_carlo_mse: need at least one trial");
    const SystemModel model = make_system_model(sc);
    const GainPrecomputation precomp = make_gain_precomputation(model.gamma, *model.kernel);
    const FieldSampler sampler(*model.kernel, model.grid());

    // data-free covariance path (posteriors per step)
    const auto cov_path = covariance_trajectory(model, precomp.S, sc.initial_covariance(),
                                                sc.horizon);

    const int H = sc.horizon;
    std::vector<Eigen::ArrayXXd> sq_err(sc.trials);   // (H+1) x 2 per trial
    std::atomic<int> next{0};

    auto worker = [&]() {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= sc.trials) return;
            const std::uint64_t trial_seed = mix_seed(sc.seed, static_cast<std::uint64_t>(t));
            const auto truth = simulate_truth(sc, trial_seed);

            Eigen::ArrayXXd err(H + 1, 2);
            Eigen::Vector2d xh = sc.x0; // estimate initialized at the true state
            err(0, 0) = std::pow(truth[0][0] - xh[0], 2);
            err(0, 1) = std::pow(truth[0][1] - xh[1], 2);
            for (int k = 1; k <= H; ++k) {
                const FieldSample z = detail::generate_measurement_impl(
                    truth[k], model.gamma, sampler, sc, trial_seed, k);
                const Eigen::Vector2d xp = model.A * xh;
                const Eigen::VectorXd corr =
                    innovation_integral(precomp.f, z, model.gamma, xp, precomp.weights);
                xh = xp + cov_path[k - 1].second * corr;
                err(k, 0) = std::pow(truth[k][0] - xh[0], 2);
                err(k, 1) = std::pow(truth[k][1] - xh[1], 2);
            }
            sq_err[t] = std::move(err);
        }
    };

    int nthreads = sc.threads > 0 ? sc.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, std::min(nthreads, sc.trials));
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads - 1; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    Eigen::ArrayXXd sum;
    detail::pairwise_sum(sq_err, 0, sq_err.size(), sum);
    const double n = static_cast<double>(sc.trials);
    const Eigen::ArrayXXd mean = sum / n;

    // second moments of the squared errors, for standard-error bands
    for (auto& e : sq_err) e = e.square();
    Eigen::ArrayXXd sum2;
    detail::pairwise_sum(sq_err, 0, sq_err.size(), sum2);
    const Eigen::ArrayXXd var = (sum2 / n - mean.square()).max(0.0);

    MseResult out;
    out.trials = sc.trials;
    out.emp_q.resize(H + 1);
    out.emp_qd.resize(H + 1);
    out.theo_q.resize(H + 1);
    out.theo_qd.resize(H + 1);
    out.stderr_q.resize(H + 1);
    out.stderr_qd.resize(H + 1);
    const Eigen::Matrix2d P0 = sc.initial_covariance();
    for (int k = 0; k <= H; ++k) {
        out.emp_q[k] = mean(k, 0);
        out.emp_qd[k] = mean(k, 1);
        const Eigen::MatrixXd Pk = k == 0 ? Eigen::MatrixXd(P0) : cov_path[k - 1].second;
        out.theo_q[k] = Pk(0, 0);
        out.theo_qd[k] = Pk(1, 1);
        out.stderr_q[k] = std::sqrt(var(k, 0) / n);
        out.stderr_qd[k] = std::sqrt(var(k, 1) / n);
    }
    return out;
}

} // namespace fieldkf
