// Acceptance suite: runs every gate criterion of the library against the
// reference scenario at its stated tolerance and prints one line each.
// Exit code 0 iff all criteria pass.

#include <fieldkf/fieldkf.hpp>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace fieldkf;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail, double seconds) {
    std::printf("[%s] %-28s %s  (%.1fs)\n", pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

} // namespace

int main() {
    const ExperimentConfig cfg; // reference defaults
    const PinholeScenario& sc = cfg.scenario;

    Timer setup_timer;
    const SystemModel model = make_system_model(sc);
    const GainPrecomputation pre = make_gain_precomputation(model.gamma, *model.kernel);
    std::printf("setup: reference model and gain precomputation (%.1fs)\n",
                setup_timer.elapsed());

    // ---- 1. steady-state covariance reproduction ---------------------------
    SteadyState ss{Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero(), 0, 0.0};
    {
        Timer t;
        ss = solve_dare(DareProblem{model.A, pre.G, model.Q}, cfg.dare_tol, cfg.dare_max_iter);
        Eigen::Matrix2d P_prior_ref, P_post_ref;
        P_prior_ref << 1.2018, 0.2019, 0.2019, 0.0695;
        P_post_ref << 0.8475, 0.1424, 0.1424, 0.0595;
        const double e1 = (ss.P_prior_inf - P_prior_ref).cwiseAbs().maxCoeff();
        const double e2 = (ss.P_post_inf - P_post_ref).cwiseAbs().maxCoeff();
        report("steady-state-covariances", e1 <= 1e-3 && e2 <= 1e-3 && t.elapsed() < 10.0,
               fmt("max|P-ref| = %.2e / %.2e (tol 1e-3)", e1, e2), t.elapsed());
    }

    // ---- 2. stability demonstrations ---------------------------------------
    {
        Timer t;
        const double rho_stab =
            spectral_radius(model.A - model.Q / (2.0 * sc.sigma_q2));
        Eigen::Matrix2d M;
        M << 1.0 / pre.S(0, 0), 1.0 / (4.0 * pre.S(0, 0)), 0.0, 0.0;
        const double rho_det = spectral_radius(model.A.transpose() - pre.S * M);
        const bool ok = std::abs(rho_stab - 0.5) <= 1e-12 && std::abs(rho_det - 0.5) <= 1e-6 &&
                        is_stabilizable(model.A, model.Q) && is_detectable(model.A, pre.G) &&
                        t.elapsed() < 1.0;
        report("stability-demonstrations", ok,
               fmt("rho_stab = %.12f, rho_det = %.8f (both 1/2)", rho_stab, rho_det),
               t.elapsed());
    }

    // ---- 4. optimality-condition residual (before the long MC run) ---------
    {
        Timer t;
        const GriddedFunction kappa = gain_function(ss.P_post_inf, pre);
        const double res =
            verify_optimality(kappa, ss.P_prior_inf, model.gamma, *model.kernel, 5);
        const double scale = prior_gain_scale(ss.P_prior_inf, model.gamma);
        report("optimality-residual", res <= 1e-3 * scale && t.elapsed() < 30.0,
               fmt("residual = %.2e vs 1e-3 * %.3f = %.2e", res, scale, 1e-3 * scale),
               t.elapsed());
    }

    // ---- 5. two-route consistency suite -------------------------------------
    {
        Timer t;
        const Eigen::MatrixXd S_freq = compute_S_spectral(
            model.gamma, kernel_spectrum(*model.kernel, model.grid().dual()), {});
        const double ra =
            (pre.S - S_freq).cwiseAbs().maxCoeff() / pre.S.cwiseAbs().maxCoeff();

        NormalDeviate nd(404);
        double rb = 0.0;
        const DareProblem prob{model.A, pre.G, model.Q};
        for (int i = 0; i < 100; ++i) {
            Eigen::MatrixXd root(2, 2);
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) root(r, c) = nd();
            const Eigen::MatrixXd P = root * root.transpose();
            const Eigen::MatrixXd via_G = riccati_step(P, prob);
            const Eigen::MatrixXd via_S =
                model.A * update_covariance(P, pre.S) * model.A.transpose() + model.Q;
            rb = std::max(rb, (via_G - via_S).cwiseAbs().maxCoeff() /
                                  std::max(1.0, via_S.cwiseAbs().maxCoeff()));
        }

        const GriddedFunction kappa = gain_function(ss.P_post_inf, pre);
        Eigen::Matrix2d intKG = Eigen::Matrix2d::Zero();
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                intKG(r, c) = (kappa.comp(r, 0).real().array() *
                               model.gamma.comp(0, c).real().array() * pre.weights.array())
                                  .sum();
        const Eigen::Matrix2d alt = (Eigen::Matrix2d::Identity() - intKG) * ss.P_prior_inf;
        const double rc = (alt - ss.P_post_inf).cwiseAbs().maxCoeff() /
                          ss.P_post_inf.cwiseAbs().maxCoeff();

        report("two-route-consistency", ra <= 1e-4 && rb <= 1e-10 && rc <= 1e-6,
               fmt("S %.1e<=1e-4, riccati %.1e<=1e-10, posterior %.1e<=1e-6", ra, rb, rc),
               t.elapsed());
    }

    // ---- 6. Fourier correctness ---------------------------------------------
    {
        Timer t;
        const double ell = 0.025;
        const GridSpec g = sc.grid();
        auto gauss = [&g](double l) {
            GriddedFunction f(g, 1, 1);
            for (std::int64_t p = 0; p < g.size(); ++p) {
                const auto x = g.point(p);
                f.comp(0, 0)[p] =
                    std::exp(-(x[0] * x[0] + x[1] * x[1]) / (2 * l * l)) / (2 * M_PI * l * l);
            }
            return f;
        };

        const GriddedFunction F = forward_ct(gauss(ell));
        const GridSpec d = F.grid();
        double pair_err = 0.0;
        for (std::int64_t k = 0; k < d.size(); ++k) {
            const auto w = d.point(k);
            const double wn2 = w[0] * w[0] + w[1] * w[1];
            if (wn2 > 50.0 * 50.0) continue;
            pair_err = std::max(pair_err,
                                std::abs(F.comp(0, 0)[k] -
                                         std::complex<double>(std::exp(
                                             -2 * M_PI * M_PI * ell * ell * wn2))));
        }

        NormalDeviate nd(606);
        GriddedFunction noise(g, 1, 1);
        for (std::int64_t p = 0; p < g.size(); ++p)
            noise.comp(0, 0)[p] = std::complex<double>(nd(), nd());
        const GriddedFunction back = inverse_ct(forward_ct(noise), g);
        double rt_err = 0.0;
        for (std::int64_t p = 0; p < g.size(); ++p)
            rt_err = std::max(rt_err, std::abs(back.comp(0, 0)[p] - noise.comp(0, 0)[p]));
        rt_err /= noise.max_abs();

        const double l1 = 0.04, l2 = 0.06, l3 = std::sqrt(l1 * l1 + l2 * l2);
        const GriddedFunction Ff = forward_ct(gauss(l1)), Fg = forward_ct(gauss(l2)),
                              Fc = forward_ct(gauss(l3));
        double conv_err = 0.0;
        for (std::int64_t k = 0; k < d.size(); ++k)
            conv_err = std::max(conv_err, std::abs(Ff.comp(0, 0)[k] * Fg.comp(0, 0)[k] -
                                                   Fc.comp(0, 0)[k]));

        report("fourier-correctness", pair_err <= 1e-6 && rt_err <= 1e-10 && conv_err <= 1e-6,
               fmt("pair %.1e<=1e-6, roundtrip %.1e<=1e-10, conv %.1e<=1e-6", pair_err,
                   rt_err, conv_err),
               t.elapsed());
    }

    // ---- 7. oracle convergence ----------------------------------------------
    {
        Timer t;
        const Eigen::MatrixXd P_prior =
            model.A * sc.initial_covariance() * model.A.transpose() + model.Q;
        const auto rows = convergence_study(model, pre, P_prior, cfg.strides, cfg.oracle_cap);
        bool nonincreasing = true;
        for (std::size_t i = 0; i + 1 < rows.size(); ++i)
            nonincreasing = nonincreasing && rows[i + 1].cov_gap_rel <= rows[i].cov_gap_rel + 1e-12;
        const double final_gap = rows.back().cov_gap_rel;
        report("oracle-convergence",
               nonincreasing && final_gap <= 0.05 && rows.size() == cfg.strides.size(),
               fmt("gaps %.4f -> %.4f -> %.4f (final <= 0.05)", rows[0].cov_gap_rel,
                   rows[1].cov_gap_rel, rows[2].cov_gap_rel),
               t.elapsed());
    }

    // ---- 8. appendix integrability bound ------------------------------------
    {
        Timer t;
        const GriddedFunction kappa = gain_function(ss.P_post_inf, pre);
        const Eigen::VectorXd& w = pre.weights;
        const GridSpec& g = model.grid();

        // L1 norms by quadrature
        Eigen::ArrayXd k0 = kappa.comp(0, 0).real().array(),
                       k1 = kappa.comp(1, 0).real().array();
        const double l1_kappa = (w.array() * (k0.square() + k1.square()).sqrt()).sum();
        const Eigen::ArrayXd gk = model.gamma.comp(0, 0).real().array() * k0;
        const double l1_gamma_kappa = (w.array() * gk.abs()).sum();

        const double sigma0 = std::sqrt(model.kernel->eval({0.0, 0.0})(0, 0));
        const double p_half = std::sqrt(ss.P_prior_inf.trace());
        const double rhs = sigma0 * l1_kappa + p_half * l1_gamma_kappa;

        const int draws = cfg.appendix_draws;
        const Eigen::Matrix2d L = Eigen::LLT<Eigen::Matrix2d>(ss.P_prior_inf).matrixL();
        const FieldSampler sampler(*model.kernel, g);
        NormalDeviate nd(mix_seed(sc.seed, 0xA99ULL));
        double acc = 0.0, acc2 = 0.0;
        for (int dr = 0; dr < draws; ++dr) {
            const Eigen::Vector2d e = L * Eigen::Vector2d(nd(), nd());
            FieldSample v = sampler.sample(mix_seed(sc.seed, 0xA99000ULL + dr));
            const Eigen::ArrayXd s =
                v.comp(0, 0).real().array() + e[0] * model.gamma.comp(0, 0).real().array();
            const double val =
                (w.array() * ((k0 * s).square() + (k1 * s).square()).sqrt()).sum();
            acc += val;
            acc2 += val * val;
        }
        const double mean = acc / draws;
        const double sd = std::sqrt(std::max(acc2 / draws - mean * mean, 0.0));
        const double ucb99 = mean + 2.5758 * sd / std::sqrt(static_cast<double>(draws));
        report("appendix-bound", ucb99 <= rhs,
               fmt("estimate %.3f (99%% ucb %.3f) <= bound %.3f over %d draws", mean, ucb99,
                   rhs, draws),
               t.elapsed());
    }

    // ---- 3. Monte-Carlo MSE (the long criterion) ----------------------------
    {
        Timer t;
        PinholeScenario mc = sc; // 2000 trials, horizon 50 by default
        const MseResult r = monte_carlo_mse(mc);
        double emp_q = 0.0, emp_qd = 0.0;
        int count = 0;
        for (int k = 30; k <= mc.horizon; ++k) {
            emp_q += r.emp_q[k];
            emp_qd += r.emp_qd[k];
            ++count;
        }
        emp_q /= count;
        emp_qd /= count;
        const double ratio_q = emp_q / 0.8475;
        const double ratio_qd = emp_qd / 0.0595;
        const bool ok = ratio_q >= 0.95 && ratio_q <= 1.05 && ratio_qd >= 0.95 &&
                        ratio_qd <= 1.05 && t.elapsed() < 300.0;
        report("monte-carlo-mse", ok,
               fmt("plateau MSE ratios: position %.3f, velocity %.3f (in [0.95, 1.05])",
                   ratio_q, ratio_qd),
               t.elapsed());
    }

    // ---- 9. determinism of the command layer --------------------------------
    {
        Timer t;
        ExperimentConfig small = cfg;
        small.scenario.trials = 60;
        small.scenario.horizon = 25;
        small.scenario.spacing = 0.0125;
        small.strides = {8, 4, 2};

        const fs::path base = fs::temp_directory_path() / "fieldkf_acceptance";
        fs::remove_all(base);
        bool ok = true;
        std::string detail;

        const fs::path a1 = base / "steady1", a2 = base / "steady2";
        cmd_steady_state(cfg, a1.string());
        cmd_steady_state(cfg, a2.string());
        ok = ok && slurp(a1 / "steadystate.csv") == slurp(a2 / "steadystate.csv");

        const fs::path b1 = base / "sim1", b2 = base / "sim2";
        cmd_simulate(small, b1.string());
        cmd_simulate(small, b2.string());
        ok = ok && slurp(b1 / "mse.csv") == slurp(b2 / "mse.csv") &&
             slurp(b1 / "trajectory.csv") == slurp(b2 / "trajectory.csv");

        const fs::path c1 = base / "val1", c2 = base / "val2";
        cmd_validate(small, c1.string());
        cmd_validate(small, c2.string());
        ok = ok && slurp(c1 / "validation.csv") == slurp(c2 / "validation.csv");

        const fs::path d1 = base / "oracle1", d2 = base / "oracle2";
        cmd_oracle(small, d1.string());
        cmd_oracle(small, d2.string());
        ok = ok && slurp(d1 / "oracle.csv") == slurp(d2 / "oracle.csv");

        fs::remove_all(base);
        report("determinism", ok, "re-runs produce byte-identical CSVs for all commands",
               t.elapsed());
    }

    std::printf("ACCEPTANCE: %d/9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
