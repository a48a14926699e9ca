#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "depcost/dataset.hpp"
#include "depcost/error.hpp"

namespace depcost {

enum class TransformKind { Linear, BoxCox, Power, Exponential };

inline std::string to_string(TransformKind k) {
    switch (k) {
    case TransformKind::Linear: return "linear";
    case TransformKind::BoxCox: return "boxcox";
    case TransformKind::Power: return "power";
    case TransformKind::Exponential: return "exponential";
    }
    return "linear";
}

inline TransformKind parse_transform_kind(std::string_view s) {
    if (s == "linear") return TransformKind::Linear;
    if (s == "boxcox") return TransformKind::BoxCox;
    if (s == "power") return TransformKind::Power;
    if (s == "exponential") return TransformKind::Exponential;
    throw ConfigError("unknown transform '" + std::string(s) + "'");
}

/// |tau| below this uses the logarithmic limit of the Box-Cox transform.
inline constexpr double kBoxCoxLogSwitch = 1e-8;

struct TimeTransform {
    TransformKind kind = TransformKind::Linear;
    double tau = 1.0;    // BoxCox / Power
    double beta_T = 0.0; // Exponential, 1/days

    bool needs_positive_time() const { return kind == TransformKind::BoxCox || kind == TransformKind::Power; }
};

namespace detail {
inline void check_domain(double t, const TimeTransform& f) {
    if (!std::isfinite(t)) throw NumericalError("non-finite time argument");
    if (f.needs_positive_time() ? !(t > 0.0) : !(t >= 0.0))
        throw NumericalError("time argument " + std::to_string(t) + " outside the domain of the " + to_string(f.kind) +
                             " transform");
    if (f.kind == TransformKind::Exponential && !std::isfinite(f.beta_T))
        throw NumericalError("exponential rate must be finite");
}
} // namespace detail

inline double transform_time(double t, const TimeTransform& f) {
    detail::check_domain(t, f);
    switch (f.kind) {
    case TransformKind::Linear: return t;
    case TransformKind::BoxCox:
        if (std::abs(f.tau) < kBoxCoxLogSwitch) return std::log(t);
        return std::expm1(f.tau * std::log(t)) / f.tau;
    case TransformKind::Power: return std::pow(t, f.tau);
    case TransformKind::Exponential: return std::exp(f.beta_T * t);
    }
    return t;
}

inline double transform_time_derivative(double t, const TimeTransform& f) {
    detail::check_domain(t, f);
    switch (f.kind) {
    case TransformKind::Linear: return 1.0;
    case TransformKind::BoxCox: return std::pow(t, f.tau - 1.0);
    case TransformKind::Power: return f.tau * std::pow(t, f.tau - 1.0);
    case TransformKind::Exponential: return f.beta_T * std::exp(f.beta_T * t);
    }
    return 1.0;
}

/// Partial of the transformed value with respect to its own shape parameter
/// (tau for BoxCox/Power, beta_T for Exponential; zero for Linear).
inline double transform_time_shape_derivative(double t, const TimeTransform& f) {
    detail::check_domain(t, f);
    switch (f.kind) {
    case TransformKind::Linear: return 0.0;
    case TransformKind::BoxCox: {
        const double lt = std::log(t);
        if (std::abs(f.tau) < kBoxCoxLogSwitch) return 0.5 * lt * lt;
        const double tt = std::exp(f.tau * lt);
        return (tt * lt) / f.tau - std::expm1(f.tau * lt) / (f.tau * f.tau);
    }
    case TransformKind::Power: return std::pow(t, f.tau) * std::log(t);
    case TransformKind::Exponential: return t * std::exp(f.beta_T * t);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

enum class ModelName { MNL1, MNL2, MNL1Low, MNL1High, ML1, ML2, ML3, ML4, ML5, ML6 };

inline constexpr std::array<ModelName, 10> kAllModels{ModelName::MNL1, ModelName::MNL2, ModelName::ML1,
                                                      ModelName::ML2,  ModelName::ML3,  ModelName::ML4,
                                                      ModelName::ML5,  ModelName::ML6,  ModelName::MNL1Low,
                                                      ModelName::MNL1High};

inline std::string to_string(ModelName m) {
    switch (m) {
    case ModelName::MNL1: return "MNL1";
    case ModelName::MNL2: return "MNL2";
    case ModelName::MNL1Low: return "MNL1-low";
    case ModelName::MNL1High: return "MNL1-high";
    case ModelName::ML1: return "ML1";
    case ModelName::ML2: return "ML2";
    case ModelName::ML3: return "ML3";
    case ModelName::ML4: return "ML4";
    case ModelName::ML5: return "ML5";
    case ModelName::ML6: return "ML6";
    }
    return "?";
}

inline ModelName parse_model_name(std::string_view s) {
    for (auto m : kAllModels)
        if (to_string(m) == s) return m;
    throw ConfigError("unknown model '" + std::string(s) + "'");
}

struct UtilitySpec {
    ModelName name = ModelName::MNL1;
    bool has_children_interaction = false;
    bool has_panel_effect = false;
    /// Reserved for a normally distributed time coefficient; no shipped model sets it
    /// and the estimator rejects it.
    bool has_random_time_coefficient = false;
    TimeTransform transform;

    std::string label() const { return to_string(name); }
};

/// Utility definition for a model family. `tau_variant` selects
/// BoxCox or Power for ML3/ML4 and is ignored otherwise.
inline UtilitySpec make_spec(ModelName m, TransformKind tau_variant = TransformKind::BoxCox) {
    if (tau_variant != TransformKind::BoxCox && tau_variant != TransformKind::Power)
        throw ConfigError("tau variant must be boxcox or power");
    UtilitySpec s;
    s.name = m;
    switch (m) {
    case ModelName::MNL1:
    case ModelName::MNL1Low:
    case ModelName::MNL1High: break;
    case ModelName::MNL2: s.has_children_interaction = true; break;
    case ModelName::ML1: s.has_panel_effect = true; break;
    case ModelName::ML2:
        s.has_panel_effect = true;
        s.has_children_interaction = true;
        break;
    case ModelName::ML3:
        s.has_panel_effect = true;
        s.transform = {tau_variant, 1.0, 0.0};
        break;
    case ModelName::ML4:
        s.has_panel_effect = true;
        s.has_children_interaction = true;
        s.transform = {tau_variant, 1.0, 0.0};
        break;
    case ModelName::ML5:
        s.has_panel_effect = true;
        s.transform = {TransformKind::Exponential, 1.0, 0.01};
        break;
    case ModelName::ML6:
        s.has_panel_effect = true;
        s.has_children_interaction = true;
        s.transform = {TransformKind::Exponential, 1.0, 0.01};
        break;
    }
    return s;
}

inline UtilitySpec make_spec(std::string_view name, TransformKind tau_variant = TransformKind::BoxCox) {
    return make_spec(parse_model_name(name), tau_variant);
}

// ---------------------------------------------------------------------------

/// Parameter slots in their fixed packing order.
enum class Param { ASC, BetaC, BetaT, DeltaCHT, Tau, BetaTExp, SigmaXi };

inline std::string param_key(Param p) {
    switch (p) {
    case Param::ASC: return "ASC";
    case Param::BetaC: return "beta_c";
    case Param::BetaT: return "beta_t";
    case Param::DeltaCHT: return "delta_cht";
    case Param::Tau: return "tau";
    case Param::BetaTExp: return "beta_T";
    case Param::SigmaXi: return "sigma_xi";
    }
    return "?";
}

inline std::vector<Param> param_layout(const UtilitySpec& s) {
    std::vector<Param> out{Param::ASC, Param::BetaC, Param::BetaT};
    if (s.has_children_interaction) out.push_back(Param::DeltaCHT);
    if (s.transform.kind == TransformKind::BoxCox || s.transform.kind == TransformKind::Power)
        out.push_back(Param::Tau);
    if (s.transform.kind == TransformKind::Exponential) out.push_back(Param::BetaTExp);
    if (s.has_panel_effect) out.push_back(Param::SigmaXi);
    return out;
}

/// Number of free parameters K.
inline std::size_t free_parameter_count(const UtilitySpec& s) { return param_layout(s).size(); }

struct ParameterVector {
    double asc = 0.0;
    double beta_c = 0.0;
    double beta_t = 0.0;
    std::optional<double> delta_cht;
    std::optional<double> tau;
    std::optional<double> beta_T;
    std::optional<double> sigma_xi;
    /// Only read by welfare averaging for specs with a random time coefficient.
    std::optional<double> sigma_beta_t;

    bool operator==(const ParameterVector&) const = default;

    double get(Param p) const {
        switch (p) {
        case Param::ASC: return asc;
        case Param::BetaC: return beta_c;
        case Param::BetaT: return beta_t;
        case Param::DeltaCHT: return delta_cht.value_or(0.0);
        case Param::Tau: return tau.value_or(1.0);
        case Param::BetaTExp: return beta_T.value_or(0.0);
        case Param::SigmaXi: return sigma_xi.value_or(0.0);
        }
        return 0.0;
    }

    void set(Param p, double v) {
        switch (p) {
        case Param::ASC: asc = v; break;
        case Param::BetaC: beta_c = v; break;
        case Param::BetaT: beta_t = v; break;
        case Param::DeltaCHT: delta_cht = v; break;
        case Param::Tau: tau = v; break;
        case Param::BetaTExp: beta_T = v; break;
        case Param::SigmaXi: sigma_xi = v; break;
        }
    }
};

/// Throws unless `p` carries exactly the parameters `s` implies.
inline void check_params(const UtilitySpec& s, const ParameterVector& p) {
    auto expect = [&](bool want, const std::optional<double>& v, Param which) {
        if (want != v.has_value())
            throw ConfigError("model " + s.label() + (want ? " requires " : " does not take ") + param_key(which));
        if (v && !std::isfinite(*v)) throw NumericalError(param_key(which) + " is not finite");
    };
    const bool tau_model = s.transform.kind == TransformKind::BoxCox || s.transform.kind == TransformKind::Power;
    expect(s.has_children_interaction, p.delta_cht, Param::DeltaCHT);
    expect(tau_model, p.tau, Param::Tau);
    expect(s.transform.kind == TransformKind::Exponential, p.beta_T, Param::BetaTExp);
    expect(s.has_panel_effect, p.sigma_xi, Param::SigmaXi);
    if (!std::isfinite(p.asc) || !std::isfinite(p.beta_c) || !std::isfinite(p.beta_t))
        throw NumericalError("non-finite linear parameter");
    if (p.sigma_xi && *p.sigma_xi < 0.0) throw ConfigError("sigma_xi must be non-negative");
}

/// Zero vector with the slots of `s` present; the shape parameters take
/// their neutral/starting values (tau = 1, beta_T = 0.01).
inline ParameterVector default_start(const UtilitySpec& s) {
    ParameterVector p;
    for (Param k : param_layout(s)) {
        switch (k) {
        case Param::Tau: p.tau = 1.0; break;
        case Param::BetaTExp: p.beta_T = 0.01; break;
        case Param::SigmaXi: p.sigma_xi = 1.0; break;
        case Param::DeltaCHT: p.delta_cht = 0.0; break;
        default: break;
        }
    }
    return p;
}

inline std::vector<double> pack(const UtilitySpec& s, const ParameterVector& p) {
    std::vector<double> out;
    for (Param k : param_layout(s)) out.push_back(p.get(k));
    return out;
}

inline ParameterVector unpack(const UtilitySpec& s, const std::vector<double>& theta) {
    const auto layout = param_layout(s);
    if (theta.size() != layout.size()) throw ConfigError("parameter count mismatch for " + s.label());
    ParameterVector p;
    for (std::size_t i = 0; i < layout.size(); ++i) p.set(layout[i], theta[i]);
    return p;
}

/// Transform of `s` with the shape parameter taken from `p`.
inline TimeTransform resolved_transform(const UtilitySpec& s, const ParameterVector& p) {
    TimeTransform f = s.transform;
    if (f.kind == TransformKind::BoxCox || f.kind == TransformKind::Power) f.tau = p.tau.value_or(f.tau);
    if (f.kind == TransformKind::Exponential) f.beta_T = p.beta_T.value_or(f.beta_T);
    return f;
}

enum class Alternative { Purchase, Wait };

/// Systematic (non-Gumbel) utility. The panel term xi enters the purchase
/// alternative only and must be 0 for specs without a panel effect.
inline double systematic_utility(const UtilitySpec& s, const ParameterVector& p, Alternative alt,
                                 const ChoiceObservation& obs, int ch, double xi) {
    check_params(s, p);
    if (!s.has_panel_effect && xi != 0.0) throw ConfigError("model " + s.label() + " has no panel effect");
    const TimeTransform f = resolved_transform(s, p);
    const double time_coef = p.beta_t + (s.has_children_interaction ? *p.delta_cht * ch : 0.0);
    if (alt == Alternative::Purchase)
        return p.asc + p.beta_c * obs.cost_final + time_coef * transform_time(obs.dt_days, f) + xi;
    return time_coef * transform_time(obs.edt_days(), f);
}

} // namespace depcost
