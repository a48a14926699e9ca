#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "depcost/csv.hpp"
#include "depcost/draws.hpp"
#include "depcost/error.hpp"
#include "depcost/quadrature.hpp"
#include "depcost/spec.hpp"

namespace depcost {

enum class CostUnit { MonthlyEquivalent, Total12Month };

inline double unit_factor(CostUnit u) { return u == CostUnit::Total12Month ? 12.0 : 1.0; }

inline std::string to_string(CostUnit u) { return u == CostUnit::Total12Month ? "total12" : "monthly"; }

inline CostUnit parse_cost_unit(std::string_view s) {
    if (s == "monthly") return CostUnit::MonthlyEquivalent;
    if (s == "total12") return CostUnit::Total12Month;
    throw ConfigError("unknown unit '" + std::string(s) + "' (expected monthly or total12)");
}

inline std::vector<double> uniform_grid(double t_max, double step) {
    if (!(t_max > 0.0) || !(step > 0.0)) throw ConfigError("grid horizon and step must be positive");
    std::vector<double> g;
    const auto n = static_cast<std::size_t>(std::floor(t_max / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) g.push_back(static_cast<double>(i) * step);
    return g;
}

struct DCFConfig {
    std::vector<double> time_grid = uniform_grid(30.0, 0.5);
    CostUnit unit = CostUnit::Total12Month;
    int ch = 0;
    /// Applied to tau models (ML3/ML4) only.
    TransformKind transform_variant = TransformKind::BoxCox;
    double quadrature_tolerance = 1e-6;
};

inline void validate(const DCFConfig& c) {
    if (c.time_grid.empty() || c.time_grid.front() != 0.0) throw ConfigError("time grid must start at 0");
    for (std::size_t i = 1; i < c.time_grid.size(); ++i)
        if (!(c.time_grid[i] > c.time_grid[i - 1])) throw ConfigError("time grid must be strictly increasing");
    if (!(c.quadrature_tolerance > 0.0)) throw ConfigError("quadrature tolerance must be positive");
    if (c.ch != 0 && c.ch != 1) throw ConfigError("ch must be 0 or 1");
    if (c.transform_variant != TransformKind::BoxCox && c.transform_variant != TransformKind::Power)
        throw ConfigError("transform variant must be boxcox or power");
}

/// `spec` with the configured BoxCox/Power variant substituted for tau models.
inline UtilitySpec with_variant(UtilitySpec spec, TransformKind variant) {
    if (spec.transform.kind == TransformKind::BoxCox || spec.transform.kind == TransformKind::Power)
        spec.transform.kind = variant;
    return spec;
}

namespace detail {

inline double time_coefficient(const UtilitySpec& s, const ParameterVector& p, int ch) {
    return p.beta_t + (s.has_children_interaction ? p.delta_cht.value_or(0.0) * ch : 0.0);
}

inline void require_cost_coefficient(const ParameterVector& p) {
    if (p.beta_c == 0.0) throw NumericalError("marginal value undefined: beta_c is zero");
}

/// Antiderivative of the time derivative, i.e. the transform itself, extended
/// to t = 0 for BoxCox/Power when tau > 0.
inline double time_antiderivative(double t, const TimeTransform& f) {
    if ((f.kind == TransformKind::BoxCox || f.kind == TransformKind::Power) && t == 0.0) {
        if (!(f.tau > 0.0)) throw NumericalError("integral from 0 requires tau > 0");
        return f.kind == TransformKind::BoxCox ? -1.0 / f.tau : 0.0;
    }
    return transform_time(t, f);
}

} // namespace detail

/// Marginal value of deprivation time in dollars of monthly bill per day.
/// Signed: negative when extra deprivation is a disutility.
inline double mvdt(const UtilitySpec& spec, const ParameterVector& params, double t, int ch) {
    detail::require_cost_coefficient(params);
    const TimeTransform f = resolved_transform(spec, params);
    return detail::time_coefficient(spec, params, ch) * transform_time_derivative(t, f) / (-params.beta_c);
}

/// Cost of deprivation growing from t_from to t_to days: the integral of
/// -mvdt, in the configured unit. Closed form for every transform kind.
inline double deprivation_cost(const UtilitySpec& spec, const ParameterVector& params, double t_from, double t_to,
                               const DCFConfig& config) {
    if (!(t_from >= 0.0) || t_to < t_from) throw ConfigError("deprivation interval must satisfy 0 <= from <= to");
    if (t_from == t_to) return 0.0;
    detail::require_cost_coefficient(params);
    const UtilitySpec s = with_variant(spec, config.transform_variant);
    const TimeTransform f = resolved_transform(s, params);
    const double coef = detail::time_coefficient(s, params, config.ch);
    const double span = detail::time_antiderivative(t_to, f) - detail::time_antiderivative(t_from, f);
    return unit_factor(config.unit) * coef / params.beta_c * span;
}

/// Same integral by adaptive Simpson on -mvdt; the cross-check for the closed forms.
inline double deprivation_cost_quadrature(const UtilitySpec& spec, const ParameterVector& params, double t_from,
                                          double t_to, const DCFConfig& config) {
    if (!(t_from >= 0.0) || t_to < t_from) throw ConfigError("deprivation interval must satisfy 0 <= from <= to");
    const UtilitySpec s = with_variant(spec, config.transform_variant);
    const double factor = unit_factor(config.unit);
    auto integrand = [&](double t) {
        // BoxCox/Power derivatives are continuous at 0 for tau > 1; use the limit.
        if (t == 0.0 && s.transform.needs_positive_time()) {
            const double tau = params.tau.value_or(1.0);
            if (tau > 1.0) return 0.0;
            if (tau == 1.0) return -mvdt(s, params, 1.0, config.ch);
            throw NumericalError("integrand singular at 0 for tau < 1");
        }
        return -mvdt(s, params, t, config.ch);
    };
    return factor * adaptive_simpson(integrand, t_from, t_to, config.quadrature_tolerance / factor);
}

/// Cost averaged over draws of the random components that enter mvdt. For
/// the shipped specs only the panel term is random, and it drops out of the
/// marginal rate, so this equals deprivation_cost.
inline double deprivation_cost_averaged(const UtilitySpec& spec, const ParameterVector& params, double t_from,
                                        double t_to, const DCFConfig& config, const DrawConfig& draws) {
    validate(draws);
    if (!spec.has_random_time_coefficient) return deprivation_cost(spec, params, t_from, t_to, config);
    const double spread = params.sigma_beta_t.value_or(0.0);
    const auto z = normal_draws(draws, 1);
    double sum = 0.0;
    for (double zr : z) {
        ParameterVector p = params;
        p.beta_t = params.beta_t + spread * zr;
        sum += deprivation_cost(spec, p, t_from, t_to, config);
    }
    return sum / static_cast<double>(z.size());
}

struct DCFCurve {
    std::vector<double> times;
    std::vector<double> costs;
    std::string spec_name;
    TransformKind transform = TransformKind::Linear;
    ParameterVector params_used;
    CostUnit unit = CostUnit::Total12Month;
    int ch = 0;
};

inline DCFCurve dcf_curve(const UtilitySpec& spec, const ParameterVector& params, const DCFConfig& config) {
    validate(config);
    check_params(spec, params);
    DCFCurve c;
    c.spec_name = spec.label();
    c.transform = with_variant(spec, config.transform_variant).transform.kind;
    c.params_used = params;
    c.unit = config.unit;
    c.ch = config.ch;
    c.times = config.time_grid;
    c.costs.reserve(c.times.size());
    for (double t : c.times) c.costs.push_back(deprivation_cost(spec, params, 0.0, t, config));
    return c;
}

// ---------------------------------------------------------------------------
// Polynomial regression

struct PolyFit {
    int degree = 0;
    /// Ascending powers of t (days).
    std::vector<double> coefficients;
    double r_squared = 0.0;
    double adj_r_squared = 0.0;
    double residual_ss = 0.0;
    std::size_t n_points = 0;
    int rank = 0;
    bool rank_deficient = false;
    bool constant_response = false;

    double operator()(double t) const {
        double y = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) y = y * t + *it;
        return y;
    }
};

inline double adjusted_r_squared(double r2, std::size_t n, int degree) {
    return 1.0 - (1.0 - r2) * (static_cast<double>(n) - 1.0) / (static_cast<double>(n) - degree - 1.0);
}

/// Least squares in ascending powers via column-pivoted Householder QR on a
/// Vandermonde matrix of t scaled to [-1, 1].
inline PolyFit fit_polynomial(const std::vector<double>& x, const std::vector<double>& y, int degree) {
    if (degree < 1) throw ConfigError("polynomial degree must be at least 1");
    if (x.size() != y.size()) throw ConfigError("x and y lengths differ");
    const std::size_t n = x.size();
    if (n <= static_cast<std::size_t>(degree) + 1) throw ConfigError("need more grid points than degree + 1");
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;

    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd V(rows, cols);
    Eigen::VectorXd Y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double u = x[static_cast<std::size_t>(i)] / scale;
        double p = 1.0;
        for (Eigen::Index j = 0; j < cols; ++j, p *= u) V(i, j) = p;
        Y(i) = y[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
    const Eigen::VectorXd a = qr.solve(Y);

    PolyFit fit;
    fit.degree = degree;
    fit.n_points = n;
    fit.rank = static_cast<int>(qr.rank());
    fit.rank_deficient = fit.rank < degree + 1;
    double s = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j, s *= scale) fit.coefficients.push_back(a(j) / s);

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit(x[i]);
        ss_res += r * r;
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    fit.residual_ss = ss_res;
    if (ss_tot == 0.0) {
        fit.constant_response = true;
        fit.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
    } else {
        fit.r_squared = 1.0 - ss_res / ss_tot;
    }
    fit.adj_r_squared = adjusted_r_squared(fit.r_squared, n, degree);
    return fit;
}

inline PolyFit fit_polynomial(const DCFCurve& curve, int degree) { return fit_polynomial(curve.times, curve.costs, degree); }

/// Degree used for the published curve fits: cubic for the exponential models.
inline int default_poly_degree(const UtilitySpec& spec) {
    return spec.transform.kind == TransformKind::Exponential ? 3 : 2;
}

// ---------------------------------------------------------------------------
// Export

inline void write_curve(std::ostream& out, const DCFCurve& c) {
    out << "time_days,cost_dollars,unit,spec,ch\n";
    for (std::size_t i = 0; i < c.times.size(); ++i)
        out << csv::format_double(c.times[i]) << ',' << csv::format_double(c.costs[i]) << ',' << to_string(c.unit)
            << ',' << c.spec_name << ',' << c.ch << '\n';
}

inline DCFCurve read_curve(std::istream& in, const std::string& source = "<stream>") {
    DCFCurve c;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = csv::split_line(line, ',');
        if (!header) {
            if (f.size() != 5 || f[0] != "time_days" || f[1] != "cost_dollars")
                throw DataError(source + ": not a curve file (bad header)");
            header = true;
            continue;
        }
        if (f.size() != 5) throw DataError(source + ": row " + std::to_string(line_no) + ": expected 5 fields");
        auto t = csv::parse_double(f[0]);
        auto y = csv::parse_double(f[1]);
        auto ch = csv::parse_int(f[4]);
        if (!t || !y || !ch) throw DataError(source + ": row " + std::to_string(line_no) + ": bad number");
        c.times.push_back(*t);
        c.costs.push_back(*y);
        c.unit = parse_cost_unit(f[2]);
        c.spec_name = f[3];
        c.ch = static_cast<int>(*ch);
    }
    if (!header) throw DataError(source + ": empty curve file");
    return c;
}

inline nlohmann::json to_json(const PolyFit& p, const DCFCurve& c) {
    return {{"spec", c.spec_name},
            {"transform", to_string(c.transform)},
            {"unit", to_string(c.unit)},
            {"ch", c.ch},
            {"degree", p.degree},
            {"powers", "ascending"},
            {"variable", "time_days"},
            {"coefficients", p.coefficients},
            {"r_squared", p.r_squared},
            {"adj_r_squared", p.adj_r_squared},
            {"residual_ss", p.residual_ss},
            {"n_points", p.n_points},
            {"rank", p.rank},
            {"rank_deficient", p.rank_deficient},
            {"constant_response", p.constant_response}};
}

} // namespace depcost
