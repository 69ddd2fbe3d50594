#pragma once

#include "fieldkf/errors.hpp"
#include "fieldkf/pinhole.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace fieldkf {

/// Everything a command needs: the scenario (all keys optional, defaults
/// reproduce the reference configuration exactly) plus command options.
/// Unknown keys are rejected.
struct ExperimentConfig {
    PinholeScenario scenario;

    double dare_tol = 1e-12;
    int dare_max_iter = 100000;
    std::vector<int> strides{20, 10, 5};
    std::int64_t oracle_cap = 4000;
    std::string reg_mode = "band-mask"; // or "tikhonov"
    double reg_eps_rel = 1e-12;
    int appendix_draws = 1000;
    double gain_perturbation = 0.0; // validation power-check hook
    int optimality_probes = 5;

    RegularizationPolicy reg_policy() const {
        RegularizationPolicy reg;
        if (reg_mode == "band-mask")
            reg.mode = RegularizationPolicy::Mode::band_mask;
        else if (reg_mode == "tikhonov")
            reg.mode = RegularizationPolicy::Mode::tikhonov;
        else
            throw ConfigError("reg_mode must be \"band-mask\" or \"tikhonov\"");
        reg.eps_rel = reg_eps_rel;
        return reg;
    }

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
};

namespace detail {

inline void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown config key \"" + it.key() + "\"");
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) {
        try {
            dst = j.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
        }
    }
}

inline void maybe_vec2(const nlohmann::json& j, const char* key, Eigen::Vector2d& dst) {
    if (j.contains(key)) {
        std::vector<double> v;
        maybe(j, key, v);
        if (v.size() != 2) throw ConfigError(std::string("\"") + key + "\" must have 2 entries");
        dst = Eigen::Vector2d(v[0], v[1]);
    }
}

} // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "eta", "xi", "focal_length", "linearization_point", "delta_t", "sigma_q2",
        "sigma_qd2", "nu", "ell", "domain", "sample_spacing", "x0", "p0_mode",
        "truth_model", "trials", "horizon", "seed", "threads", "dare_tol",
        "dare_max_iter", "strides", "oracle_cap", "reg_mode", "reg_eps_rel",
        "appendix_draws", "gain_perturbation", "optimality_probes"};
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::require_known_keys(j, known);

    ExperimentConfig c;
    PinholeScenario& s = c.scenario;
    detail::maybe(j, "eta", s.eta);
    detail::maybe(j, "xi", s.xi);
    detail::maybe(j, "focal_length", s.focal);
    detail::maybe_vec2(j, "linearization_point", s.lin_point);
    detail::maybe(j, "delta_t", s.delta_t);
    detail::maybe(j, "sigma_q2", s.sigma_q2);
    detail::maybe(j, "sigma_qd2", s.sigma_qd2);
    detail::maybe(j, "nu", s.nu);
    detail::maybe(j, "ell", s.ell);
    if (j.contains("domain")) {
        std::vector<double> d;
        detail::maybe(j, "domain", d);
        if (d.size() != 2 || !(d[1] > d[0]))
            throw ConfigError("\"domain\" must be [lo, hi] with hi > lo");
        s.domain_lo = d[0];
        s.domain_hi = d[1];
    }
    detail::maybe(j, "sample_spacing", s.spacing);
    detail::maybe_vec2(j, "x0", s.x0);
    if (j.contains("p0_mode")) {
        const std::string v = j.at("p0_mode").get<std::string>();
        if (v == "process-noise")
            s.p0_mode = PinholeScenario::InitCov::process_noise;
        else if (v == "zero")
            s.p0_mode = PinholeScenario::InitCov::zero;
        else if (v == "identity")
            s.p0_mode = PinholeScenario::InitCov::identity;
        else
            throw ConfigError("p0_mode must be \"process-noise\", \"zero\" or \"identity\"");
    }
    if (j.contains("truth_model")) {
        const std::string v = j.at("truth_model").get<std::string>();
        if (v == "linear")
            s.truth_model = PinholeScenario::TruthModel::linear;
        else if (v == "pinhole")
            s.truth_model = PinholeScenario::TruthModel::pinhole;
        else
            throw ConfigError("truth_model must be \"linear\" or \"pinhole\"");
    }
    detail::maybe(j, "trials", s.trials);
    detail::maybe(j, "horizon", s.horizon);
    detail::maybe(j, "seed", s.seed);
    detail::maybe(j, "threads", s.threads);
    if (s.trials < 1 || s.horizon < 1) throw ConfigError("trials and horizon must be >= 1");
    if (!(s.spacing > 0.0)) throw ConfigError("sample_spacing must be positive");

    detail::maybe(j, "dare_tol", c.dare_tol);
    detail::maybe(j, "dare_max_iter", c.dare_max_iter);
    detail::maybe(j, "strides", c.strides);
    detail::maybe(j, "oracle_cap", c.oracle_cap);
    detail::maybe(j, "reg_mode", c.reg_mode);
    detail::maybe(j, "reg_eps_rel", c.reg_eps_rel);
    detail::maybe(j, "appendix_draws", c.appendix_draws);
    detail::maybe(j, "gain_perturbation", c.gain_perturbation);
    detail::maybe(j, "optimality_probes", c.optimality_probes);
    c.reg_policy(); // validates reg_mode
    return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

inline nlohmann::json ExperimentConfig::to_json() const {
    const PinholeScenario& s = scenario;
    nlohmann::json j;
    j["eta"] = s.eta;
    j["xi"] = s.xi;
    j["focal_length"] = s.focal;
    j["linearization_point"] = {s.lin_point[0], s.lin_point[1]};
    j["delta_t"] = s.delta_t;
    j["sigma_q2"] = s.sigma_q2;
    j["sigma_qd2"] = s.sigma_qd2;
    j["nu"] = s.nu;
    j["ell"] = s.ell;
    j["domain"] = {s.domain_lo, s.domain_hi};
    j["sample_spacing"] = s.spacing;
    j["x0"] = {s.x0[0], s.x0[1]};
    j["p0_mode"] = s.p0_mode == PinholeScenario::InitCov::process_noise ? "process-noise"
                   : s.p0_mode == PinholeScenario::InitCov::zero        ? "zero"
                                                                        : "identity";
    j["truth_model"] =
        s.truth_model == PinholeScenario::TruthModel::linear ? "linear" : "pinhole";
    j["trials"] = s.trials;
    j["horizon"] = s.horizon;
    j["seed"] = s.seed;
    j["threads"] = s.threads;
    j["dare_tol"] = dare_tol;
    j["dare_max_iter"] = dare_max_iter;
    j["strides"] = strides;
    j["oracle_cap"] = oracle_cap;
    j["reg_mode"] = reg_mode;
    j["reg_eps_rel"] = reg_eps_rel;
    j["appendix_draws"] = appendix_draws;
    j["gain_perturbation"] = gain_perturbation;
    j["optimality_probes"] = optimality_probes;
    return j;
}

} // namespace fieldkf
