#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "depcost/dataset.hpp"
#include "depcost/draws.hpp"
#include "depcost/error.hpp"
#include "depcost/likelihood.hpp"
#include "depcost/optimize.hpp"
#include "depcost/spec.hpp"

namespace depcost {

inline double adjusted_rho_square(double ll_final, double ll_null, std::size_t k) {
    return 1.0 - (ll_final - static_cast<double>(k)) / ll_null;
}

/// Log-likelihood of the equal-shares binary null.
inline double equal_shares_null(std::size_t n_obs) { return static_cast<double>(n_obs) * std::log(0.5); }

struct FitOptions {
    OptimizerOptions optimizer;
    unsigned workers = 1;
};

struct EstimationResult {
    UtilitySpec spec;
    ParameterVector estimates;
    std::vector<std::string> names;
    std::vector<double> values;
    /// NaN where unavailable (Hessian not negative definite).
    std::vector<double> std_errors;
    std::vector<double> t_stats;
    bool covariance_available = false;
    double ll_final = 0.0;
    double ll_null = 0.0;
    double adj_rho_sq = 0.0;
    std::size_t k = 0;
    std::size_t n_obs = 0;
    std::size_t n_respondents = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::string message;
    DrawConfig draws;
};

inline EstimationResult fit(const UtilitySpec& spec, const ChoiceDataset& data, const DrawConfig& draws,
                            const ParameterVector& start, const FitOptions& options = {});

/// Starting values: the linear-time logit with the same CH structure is fitted
/// first, then its coefficients are mapped onto the requested spec
/// (tau = 1, beta_T = 0.01, sigma_xi = 1).

inline ParameterVector auto_start(const UtilitySpec& spec, const ChoiceDataset& data, const FitOptions& options = {}) {
    ParameterVector start = default_start(spec);
    if (!spec.has_panel_effect && spec.transform.kind == TransformKind::Linear) return start;
    UtilitySpec base = spec;
    base.has_panel_effect = false;
    base.transform = TimeTransform{};
    try {
        const auto pre = fit(base, data, {}, default_start(base), options);
        if (!pre.converged) return start;
        start.asc = pre.estimates.asc;
        start.beta_c = pre.estimates.beta_c;
        start.beta_t = pre.estimates.beta_t;
        if (spec.has_children_interaction) start.delta_cht = pre.estimates.delta_cht;
        if (spec.transform.kind == TransformKind::Exponential) {
            const double rate = *start.beta_T;
            start.beta_t /= rate;
            if (start.delta_cht) *start.delta_cht /= rate;
        }
    } catch (const NumericalError&) {
    }
    return start;
}

inline EstimationResult fit(const UtilitySpec& spec, const ChoiceDataset& data, const DrawConfig& draws,
                            const ParameterVector& start, const FitOptions& options) {
    check_params(spec, start);
    if (spec.has_panel_effect) validate(draws);
    LikelihoodModel model(spec, data, draws, options.workers);
    if (model.n_respondents() < 2) throw DataError("estimation requires at least 2 respondents");

    SmoothObjective objective = [&model](const std::vector<double>& x, std::vector<double>* g) {
        return g ? model.loglik_and_gradient(x, *g) : model.loglik(x);
    };
    const auto theta0 = pack(spec, start);
    const double f0 = model.loglik(theta0);
    if (!std::isfinite(f0)) throw NumericalError("objective not finite at the starting point");

    auto opt = maximize_bfgs(objective, theta0, options.optimizer);

    EstimationResult r;
    r.spec = spec;
    r.draws = draws;
    const auto layout = model.layout();
    // The likelihood depends on sigma_xi only through |sigma_xi|.
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i] == Param::SigmaXi) opt.x[i] = std::abs(opt.x[i]);
    r.values = opt.x;
    r.estimates = unpack(spec, opt.x);
    for (Param p : layout) r.names.push_back(param_key(p));
    r.k = layout.size();
    r.ll_final = model.loglik(opt.x);
    r.n_obs = model.n_obs();
    r.n_respondents = model.n_respondents();
    r.ll_null = equal_shares_null(r.n_obs);
    r.adj_rho_sq = adjusted_rho_square(r.ll_final, r.ll_null, r.k);
    r.converged = opt.converged;
    r.gradient_norm = opt.gradient_norm;
    r.iterations = opt.iterations;
    r.message = opt.message;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.std_errors.assign(r.k, nan);
    r.t_stats.assign(r.k, nan);
    try {
        const Eigen::MatrixXd neg_h = -hessian_fd(objective, opt.x);
        Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(neg_h.rows(), neg_h.cols()));
            bool ok = true;
            for (std::size_t i = 0; i < r.k; ++i) {
                const double v = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
                if (!(v > 0.0) || !std::isfinite(v)) ok = false;
            }
            if (ok) {
                r.covariance_available = true;
                for (std::size_t i = 0; i < r.k; ++i) {
                    r.std_errors[i] = std::sqrt(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
                    r.t_stats[i] = r.values[i] / r.std_errors[i];
                }
            }
        }
    } catch (const NumericalError&) {
    }
    if (!r.covariance_available)
        r.message += "; std errors unavailable (Hessian not negative definite)";
    return r;
}

// ---------------------------------------------------------------------------
// JSON report

namespace detail {
inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double number_or_nan(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
} // namespace detail

inline nlohmann::json draws_to_json(const DrawConfig& d) {
    return {{"n_draws", d.n_draws},
            {"generator", d.generator == DrawGenerator::Halton ? "halton" : "pseudorandom"},
            {"base", d.base},
            {"skip", d.skip},
            {"seed", d.seed}};
}

inline DrawConfig draws_from_json(const nlohmann::json& j) {
    DrawConfig d;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& key = it.key();
        if (key == "n_draws")
            d.n_draws = it->get<std::size_t>();
        else if (key == "generator") {
            const auto g = it->get<std::string>();
            if (g == "halton")
                d.generator = DrawGenerator::Halton;
            else if (g == "pseudorandom")
                d.generator = DrawGenerator::PseudoRandom;
            else
                throw ConfigError("unknown draw generator '" + g + "'");
        } else if (key == "base")
            d.base = it->get<std::uint64_t>();
        else if (key == "skip")
            d.skip = it->get<std::uint64_t>();
        else if (key == "seed")
            d.seed = it->get<std::uint64_t>();
        else
            throw ConfigError("unknown key 'draws." + key + "'");
    }
    validate(d);
    return d;
}

inline nlohmann::json params_to_json(const UtilitySpec& spec, const ParameterVector& p) {
    nlohmann::json j = nlohmann::json::object();
    for (Param k : param_layout(spec)) j[param_key(k)] = p.get(k);
    return j;
}

/// Parameter object keyed by param_key; missing slots keep `base` values.
inline ParameterVector params_from_json(const UtilitySpec& spec, const nlohmann::json& j, ParameterVector base) {
    const auto layout = param_layout(spec);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (Param k : layout) {
            if (param_key(k) == it.key()) {
                base.set(k, it->get<double>());
                known = true;
            }
        }
        if (!known) throw ConfigError("model " + spec.label() + " has no parameter '" + it.key() + "'");
    }
    check_params(spec, base);
    return base;
}

inline nlohmann::json to_json(const EstimationResult& r) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < r.k; ++i)
        params.push_back({{"name", r.names[i]},
                          {"estimate", r.values[i]},
                          {"std_error", detail::number_or_null(r.std_errors[i])},
                          {"t_stat", detail::number_or_null(r.t_stats[i])}});
    nlohmann::json j{{"spec", r.spec.label()},
                     {"transform", to_string(r.spec.transform.kind)},
                     {"parameters", params},
                     {"ll_final", r.ll_final},
                     {"ll_null", r.ll_null},
                     {"null_model", "equal_shares"},
                     {"adj_rho_sq", r.adj_rho_sq},
                     {"k", r.k},
                     {"n_obs", r.n_obs},
                     {"n_respondents", r.n_respondents},
                     {"covariance_available", r.covariance_available},
                     {"convergence",
                      {{"converged", r.converged},
                       {"iterations", r.iterations},
                       {"gradient_norm", r.gradient_norm},
                       {"message", r.message}}}};
    if (r.spec.has_panel_effect) j["draws"] = draws_to_json(r.draws);
    return j;
}

/// Reads the fields written by to_json; extra top-level keys (audit blocks) are ignored.
inline EstimationResult result_from_json(const nlohmann::json& j) {
    EstimationResult r;
    const auto kind = parse_transform_kind(j.at("transform").get<std::string>());
    r.spec = make_spec(j.at("spec").get<std::string>(),
                       kind == TransformKind::Power ? TransformKind::Power : TransformKind::BoxCox);
    if (r.spec.transform.kind != kind) throw DataError("transform does not match model " + r.spec.label());
    for (const auto& p : j.at("parameters")) {
        r.names.push_back(p.at("name").get<std::string>());
        r.values.push_back(p.at("estimate").get<double>());
        r.std_errors.push_back(detail::number_or_nan(p.at("std_error")));
        r.t_stats.push_back(detail::number_or_nan(p.at("t_stat")));
    }
    const auto layout = param_layout(r.spec);
    if (layout.size() != r.names.size()) throw DataError("parameter list does not match model " + r.spec.label());
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (param_key(layout[i]) != r.names[i]) throw DataError("unexpected parameter '" + r.names[i] + "'");
    r.estimates = unpack(r.spec, r.values);
    r.k = layout.size();
    r.ll_final = j.at("ll_final").get<double>();
    r.ll_null = j.at("ll_null").get<double>();
    r.adj_rho_sq = j.at("adj_rho_sq").get<double>();
    r.n_obs = j.at("n_obs").get<std::size_t>();
    r.n_respondents = j.at("n_respondents").get<std::size_t>();
    r.covariance_available = j.at("covariance_available").get<bool>();
    const auto& c = j.at("convergence");
    r.converged = c.at("converged").get<bool>();
    r.iterations = c.at("iterations").get<int>();
    r.gradient_norm = c.at("gradient_norm").get<double>();
    r.message = c.at("message").get<std::string>();
    if (j.contains("draws")) r.draws = draws_from_json(j.at("draws"));
    return r;
}

} // namespace depcost
