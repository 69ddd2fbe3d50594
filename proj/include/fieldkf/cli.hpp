#pragma once

#include "fieldkf/config.hpp"
#include "fieldkf/csv.hpp"
#include "fieldkf/oracle.hpp"
#include "fieldkf/riccati.hpp"
#include "fieldkf/version.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fieldkf {

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const ExperimentConfig& cfg, double g1, double band_retention,
                           double gamma_energy_retained) {
    nlohmann::json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["timestamp_utc"] = utc_timestamp();
    m["seed"] = cfg.scenario.seed;
    m["config"] = cfg.to_json();
    m["g1"] = g1;
    m["band_retention"] = band_retention;
    m["gamma_energy_retained"] = gamma_energy_retained;
    std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
}

inline void ensure_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

/// Random symmetric PSD matrix (M M^T with standard-normal M).
inline Eigen::MatrixXd random_psd(int n, NormalDeviate& nd) {
    Eigen::MatrixXd M(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) M(r, c) = nd();
    return M * M.transpose();
}

} // namespace detail

/// steady-state: DARE solve for the configured scenario; writes
/// steadystate.csv (covariances, closed-loop spectral radius, G1, the two
/// worked stabilizability/detectability demonstrations) plus the manifest.
inline int cmd_steady_state(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const SystemModel model = make_system_model(cfg.scenario);
    const GainPrecomputation pre =
        make_gain_precomputation(model.gamma, *model.kernel, cfg.reg_policy());

    const bool stab = is_stabilizable(model.A, model.Q);
    const bool det = is_detectable(model.A, pre.G);
    if (!stab) throw AssumptionError(6, "(A, Q) is not stabilizable for this scenario");
    if (!det) throw AssumptionError(7, "(A, G) is not detectable for this scenario");

    const SteadyState ss =
        solve_dare(DareProblem{model.A, pre.G, model.Q}, cfg.dare_tol, cfg.dare_max_iter);
    const double rho =
        spectral_radius((Eigen::MatrixXd::Identity(2, 2) - ss.P_post_inf * pre.S) * model.A);

    // worked demonstrations: A - Q/(2 sigma_q^2), and A^T - S M with
    // M = [[1/s11, 1/(4 s11)], [0, 0]] so that S M = [[1, 1/4], [0, 0]]
    const double rho_stab =
        spectral_radius(model.A - model.Q / (2.0 * cfg.scenario.sigma_q2));
    const double g1 = pre.G(0, 0);
    const double s11 = pre.S(0, 0);
    double rho_det = std::numeric_limits<double>::quiet_NaN();
    if (s11 > 0.0) {
        Eigen::Matrix2d M;
        M << 1.0 / s11, 1.0 / (4.0 * s11), 0.0, 0.0;
        rho_det = spectral_radius(model.A.transpose() - pre.S * M);
    }

    CsvWriter csv(out_dir + "/steadystate.csv", {"quantity", "value"});
    auto put = [&csv](const std::string& k, double v) { csv.row({k, csv_num(v)}); };
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            put("p_prior_inf_" + std::to_string(r) + std::to_string(c), ss.P_prior_inf(r, c));
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            put("p_post_inf_" + std::to_string(r) + std::to_string(c), ss.P_post_inf(r, c));
    put("rho_closed_loop", rho);
    put("g1", g1);
    put("s11", s11);
    put("rho_stabilizability_demo", rho_stab);
    put("rho_detectability_demo", rho_det);
    put("stabilizable", stab ? 1.0 : 0.0);
    put("detectable", det ? 1.0 : 0.0);
    put("dare_iterations", ss.iterations);
    put("dare_residual", ss.residual);
    put("band_retention", pre.band_retention);

    detail::write_manifest(out_dir, "steady-state", cfg, g1, pre.band_retention,
                           pre.gamma_energy_retained);
    return 0;
}

/// simulate: one recorded filter realization (trial 0) and the Monte-Carlo
/// MSE table; writes trajectory.csv, mse.csv and the manifest.
inline int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const PinholeScenario& sc = cfg.scenario;
    const SystemModel model = make_system_model(sc);
    const GainPrecomputation pre =
        make_gain_precomputation(model.gamma, *model.kernel, cfg.reg_policy());
    const FieldSampler sampler(*model.kernel, model.grid());
    const auto cov_path = covariance_trajectory(model, pre.S, sc.initial_covariance(), sc.horizon);

    // trial 0, bit-identical to the first Monte-Carlo trial
    {
        const std::uint64_t trial_seed = mix_seed(sc.seed, 0);
        const auto truth = simulate_truth(sc, trial_seed);
        CsvWriter csv(out_dir + "/trajectory.csv",
                      {"step", "q_true", "qd_true", "q_hat", "qd_hat", "p_q", "p_qd"});
        Eigen::Vector2d xh = sc.x0;
        const Eigen::Matrix2d P0 = sc.initial_covariance();
        csv.row({csv_num(0), csv_num(truth[0][0]), csv_num(truth[0][1]), csv_num(xh[0]),
                 csv_num(xh[1]), csv_num(P0(0, 0)), csv_num(P0(1, 1))});
        for (int k = 1; k <= sc.horizon; ++k) {
            const FieldSample z =
                detail::generate_measurement_impl(truth[k], model.gamma, sampler, sc, trial_seed, k);
            const Eigen::Vector2d xp = model.A * xh;
            xh = xp + cov_path[k - 1].second *
                          innovation_integral(pre.f, z, model.gamma, xp, pre.weights);
            csv.row({csv_num(k), csv_num(truth[k][0]), csv_num(truth[k][1]), csv_num(xh[0]),
                     csv_num(xh[1]), csv_num(cov_path[k - 1].second(0, 0)),
                     csv_num(cov_path[k - 1].second(1, 1))});
        }
    }

    const MseResult mse = monte_carlo_mse(sc);
    CsvWriter csv(out_dir + "/mse.csv", {"step", "emp_mse_q", "emp_mse_qd", "theo_mse_q",
                                         "theo_mse_qd", "stderr_q", "stderr_qd"});
    for (int k = 0; k <= sc.horizon; ++k)
        csv.row({csv_num(k), csv_num(mse.emp_q[k]), csv_num(mse.emp_qd[k]),
                 csv_num(mse.theo_q[k]), csv_num(mse.theo_qd[k]), csv_num(mse.stderr_q[k]),
                 csv_num(mse.stderr_qd[k])});

    detail::write_manifest(out_dir, "simulate", cfg, pre.G(0, 0), pre.band_retention,
                           pre.gamma_energy_retained);
    return 0;
}

/// validate: optimality-condition residual at steady state plus the
/// two-route consistency checks; one row per check, nonzero exit if any
/// residual exceeds its threshold.
inline int cmd_validate(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const PinholeScenario& sc = cfg.scenario;
    const SystemModel model = make_system_model(sc);
    const RegularizationPolicy reg = cfg.reg_policy();
    const GainPrecomputation pre = make_gain_precomputation(model.gamma, *model.kernel, reg);

    // steady state where the assumptions allow it, one predicted step if not
    Eigen::MatrixXd P_prior;
    try {
        P_prior = solve_dare(DareProblem{model.A, pre.G, model.Q}, cfg.dare_tol,
                             cfg.dare_max_iter)
                      .P_prior_inf;
    } catch (const AssumptionError&) {
        const Eigen::MatrixXd P0 = sc.initial_covariance();
        P_prior = model.A * P0 * model.A.transpose() + model.Q;
    }
    const Eigen::MatrixXd P_post = update_covariance(P_prior, pre.S);
    GriddedFunction kappa = gain_function(P_post, pre);
    if (cfg.gain_perturbation != 0.0)
        kappa *= std::complex<double>(1.0 + cfg.gain_perturbation, 0.0);

    struct Row {
        std::string name;
        double residual, threshold;
    };
    std::vector<Row> rows;

    const double scale = prior_gain_scale(P_prior, model.gamma);
    rows.push_back({"optimality_condition",
                    verify_optimality(kappa, P_prior, model.gamma, *model.kernel,
                                      cfg.optimality_probes),
                    1e-3 * std::max(scale, 1e-300)});

    const Eigen::MatrixXd S_freq = compute_S_spectral(model.gamma, kernel_spectrum(
                                        *model.kernel, model.grid().dual()), reg);
    const double s_scale = std::max(pre.S.cwiseAbs().maxCoeff(), 1e-300);
    rows.push_back({"s_two_route", (pre.S - S_freq).cwiseAbs().maxCoeff() / s_scale, 1e-4});

    {
        const DareProblem prob{model.A, pre.G, model.Q};
        NormalDeviate nd(mix_seed(sc.seed, 0x76616cULL));
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Eigen::MatrixXd P = detail::random_psd(model.state_dim(), nd);
            const Eigen::MatrixXd via_riccati = riccati_step(P, prob);
            const Eigen::MatrixXd via_filter =
                model.A * update_covariance(P, pre.S) * model.A.transpose() + model.Q;
            const double ref = std::max(via_riccati.cwiseAbs().maxCoeff(), 1.0);
            worst = std::max(worst,
                             (via_riccati - via_filter).cwiseAbs().maxCoeff() / ref);
        }
        rows.push_back({"riccati_route_equivalence", worst, 1e-10});
    }

    {
        // posterior identity: P = (I - integral kappa gamma di) P_prior
        const GriddedFunction kappa_clean = gain_function(P_post, pre);
        GriddedFunction kg(model.grid(), 2, 2);
        Eigen::MatrixXd intKG = Eigen::MatrixXd::Zero(2, 2);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                intKG(r, c) = (kappa_clean.comp(r, 0).real().array() *
                               model.gamma.comp(0, c).real().array() * pre.weights.array())
                                  .sum();
        const Eigen::MatrixXd alt = (Eigen::MatrixXd::Identity(2, 2) - intKG) * P_prior;
        rows.push_back({"posterior_identity",
                        (alt - P_post).cwiseAbs().maxCoeff() /
                            std::max(P_post.cwiseAbs().maxCoeff(), 1e-300),
                        1e-6});
    }

    bool all_pass = true;
    CsvWriter csv(out_dir + "/validation.csv", {"check", "residual", "threshold", "pass"});
    for (const Row& r : rows) {
        const bool pass = r.residual <= r.threshold;
        all_pass = all_pass && pass;
        csv.row({r.name, csv_num(r.residual), csv_num(r.threshold), pass ? "1" : "0"});
    }

    detail::write_manifest(out_dir, "validate", cfg, pre.G(0, 0), pre.band_retention,
                           pre.gamma_energy_retained);
    return all_pass ? 0 : 1;
}

/// oracle: finite-dimensional Kalman comparison across stride levels;
/// writes oracle.csv.
inline int cmd_oracle(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const SystemModel model = make_system_model(cfg.scenario);
    const GainPrecomputation pre =
        make_gain_precomputation(model.gamma, *model.kernel, cfg.reg_policy());
    const Eigen::MatrixXd P0 = cfg.scenario.initial_covariance();
    const Eigen::MatrixXd P_prior = model.A * P0 * model.A.transpose() + model.Q;

    const auto rows = convergence_study(model, pre, P_prior, cfg.strides, cfg.oracle_cap);

    CsvWriter csv(out_dir + "/oracle.csv", {"stride", "points", "spacing", "cov_gap_rel",
                                            "gain_rms_rel", "gain_max_abs", "non_comparable"});
    for (std::size_t i = 0; i < rows.size(); ++i)
        csv.row({csv_num(cfg.strides[i]), csv_num(rows[i].points), csv_num(rows[i].spacing),
                 csv_num(rows[i].cov_gap_rel), csv_num(rows[i].gain_rms_rel),
                 csv_num(rows[i].gain_max_abs), rows[i].non_comparable ? "1" : "0"});

    detail::write_manifest(out_dir, "oracle", cfg, pre.G(0, 0), pre.band_retention,
                           pre.gamma_energy_retained);
    return 0;
}

/// plot-script: emits a small python script that renders the CSVs written
/// by `simulate`; the CSVs stay the contract, no graphics happen here.
inline int cmd_plot_script(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    (void)cfg;
    std::ofstream out(out_dir + "/plot_results.py", std::ios::binary);
    out << R"py(#!/usr/bin/env python3
"""Plots trajectory.csv and mse.csv produced by the `simulate` command."""
import csv
import sys

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def main(directory="."):
    traj = read(f"{directory}/trajectory.csv")
    mse = read(f"{directory}/mse.csv")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(traj["step"], traj["q_true"], label="true position")
    ax1.plot(traj["step"], traj["q_hat"], "--", label="estimated position")
    ax1.set_xlabel("step"); ax1.set_ylabel("position"); ax1.legend()

    ax2.plot(mse["step"], mse["emp_mse_q"], label="empirical MSE (position)")
    ax2.plot(mse["step"], mse["theo_mse_q"], "--", label="theoretical (position)")
    ax2.plot(mse["step"], mse["emp_mse_qd"], label="empirical MSE (velocity)")
    ax2.plot(mse["step"], mse["theo_mse_qd"], "--", label="theoretical (velocity)")
    ax2.set_xlabel("step"); ax2.set_ylabel("MSE"); ax2.set_yscale("log"); ax2.legend()

    fig.tight_layout()
    fig.savefig(f"{directory}/results.png", dpi=150)
    print(f"wrote {directory}/results.png")


if __name__ == "__main__":
    main(*sys.argv[1:])
)py";
    return 0;
}

} // namespace fieldkf
