#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "depcost/published.hpp"
#include "depcost/quadrature.hpp"
#include "depcost/welfare.hpp"

using namespace depcost;

namespace {

DCFConfig monthly(int ch = 0) {
    DCFConfig c;
    c.unit = CostUnit::MonthlyEquivalent;
    c.ch = ch;
    return c;
}

// Composite 5-point Gauss-Legendre on [a, b] with n panels.
template <class F> double gauss_legendre(const F& f, double a, double b, int n) {
    const std::array<double, 5> x{0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                  0.9061798459386640};
    const std::array<double, 5> w{0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                  0.2369268850561891};
    const double h = (b - a) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double m = a + (i + 0.5) * h;
        for (int k = 0; k < 5; ++k) s += w[k] * f(m + 0.5 * h * x[k]);
    }
    return 0.5 * h * s;
}

double second_difference(const DCFCurve& c, std::size_t i) { return c.costs[i + 1] - 2 * c.costs[i] + c.costs[i - 1]; }

int ch_for(ModelName m) { return make_spec(m).has_children_interaction ? 1 : 0; }

} // namespace

TEST(Mvdt, PublishedLogits) {
    const auto s1 = make_spec(ModelName::MNL1);
    const auto s2 = make_spec(ModelName::MNL2);
    const auto p1 = published_estimates(ModelName::MNL1);
    const auto p2 = published_estimates(ModelName::MNL2);
    EXPECT_NEAR(mvdt(s1, p1, 5.0, 0), -0.1826 / 0.0025, 1e-10);
    EXPECT_NEAR(std::abs(mvdt(s1, p1, 17.0, 0)), 73.04, 0.01);
    EXPECT_NEAR(std::abs(mvdt(s2, p2, 3.0, 1)), 86.15, 0.05);
    EXPECT_NEAR(std::abs(mvdt(s2, p2, 3.0, 0)), 52.78, 0.05);
    EXPECT_NEAR(std::abs(mvdt(make_spec(ModelName::MNL1Low), published_estimates(ModelName::MNL1Low), 1, 0)), 89.5,
                0.05);
    EXPECT_NEAR(std::abs(mvdt(make_spec(ModelName::MNL1High), published_estimates(ModelName::MNL1High), 1, 0)), 53.5,
                0.05);
}

TEST(Mvdt, ZeroCostCoefficient) {
    auto p = published_estimates(ModelName::MNL1);
    p.beta_c = 0.0;
    EXPECT_THROW(mvdt(make_spec(ModelName::MNL1), p, 1, 0), NumericalError);
    EXPECT_THROW(deprivation_cost(make_spec(ModelName::MNL1), p, 0, 30, monthly()), NumericalError);
}

TEST(Dcf, Mnl1ThirtyDays) {
    const auto s = make_spec(ModelName::MNL1);
    const auto p = published_estimates(ModelName::MNL1);
    EXPECT_NEAR(deprivation_cost(s, p, 0, 30, monthly()), 2191.2, 1e-9);
    EXPECT_NEAR(deprivation_cost(s, p, 0, 30, DCFConfig{}), 26294.4, 1e-8);
}

TEST(Dcf, Ml5ClosedFormAgainstGaussLegendre) {
    const auto s = make_spec(ModelName::ML5);
    const auto p = published_estimates(ModelName::ML5);
    const double beta_t = -3.7373, beta_T = 0.0464, beta_c = -0.0040;
    const double oracle =
        gauss_legendre([&](double t) { return beta_t * beta_T * std::exp(beta_T * t) / beta_c; }, 0.0, 30.0, 30);
    const double closed = deprivation_cost(s, p, 0, 30, monthly());
    EXPECT_NEAR(closed, oracle, 1e-8);
    EXPECT_NEAR(closed, 2824.36, 0.01);
    EXPECT_NEAR(deprivation_cost_quadrature(s, p, 0, 30, monthly()), closed, 1e-6);
}

TEST(Dcf, ClosedFormMatchesQuadratureForAllTransforms) {
    for (auto m : kAllModels) {
        for (auto variant : {TransformKind::BoxCox, TransformKind::Power}) {
            for (int ch : {0, 1}) {
                if (ch == 1 && !make_spec(m).has_children_interaction) continue;
                auto cfg = monthly(ch);
                cfg.transform_variant = variant;
                const auto s = make_spec(m);
                const auto p = published_estimates(m);
                for (auto [a, b] : {std::pair{0.0, 30.0}, std::pair{2.5, 11.0}, std::pair{0.0, 0.5}}) {
                    const double cf = deprivation_cost(s, p, a, b, cfg);
                    const double q = deprivation_cost_quadrature(s, p, a, b, cfg);
                    EXPECT_NEAR(cf, q, 1e-6) << to_string(m) << " [" << a << "," << b << "]";
                }
            }
        }
    }
}

TEST(Dcf, SubUnitTauFromZeroAndQuadratureAwayFromZero) {
    auto s = make_spec(ModelName::ML3);
    auto p = published_estimates(ModelName::ML3);
    p.tau = 0.6;
    const auto cfg = monthly();
    // Closed form extends to 0: (30^0.6 - 1)/0.6 - (-1/0.6) = 30^0.6 / 0.6.
    EXPECT_NEAR(deprivation_cost(s, p, 0, 30, cfg), p.beta_t / p.beta_c * std::pow(30.0, 0.6) / 0.6, 1e-9);
    EXPECT_NEAR(deprivation_cost_quadrature(s, p, 1, 30, cfg), deprivation_cost(s, p, 1, 30, cfg), 1e-6);
    EXPECT_THROW(deprivation_cost(s, p, 5, 1, cfg), ConfigError);
}

TEST(Dcf, AveragedEqualsPlain) {
    DrawConfig d;
    d.n_draws = 200;
    for (auto m : kAllModels) {
        const auto s = make_spec(m);
        const auto p = published_estimates(m);
        EXPECT_EQ(deprivation_cost_averaged(s, p, 0, 30, DCFConfig{}, d), deprivation_cost(s, p, 0, 30, DCFConfig{}));
    }
    auto s = make_spec(ModelName::ML1);
    s.has_random_time_coefficient = true;
    auto p = published_estimates(ModelName::ML1);
    p.sigma_beta_t = 0.0;
    EXPECT_NEAR(deprivation_cost_averaged(s, p, 0, 30, DCFConfig{}, d), deprivation_cost(s, p, 0, 30, DCFConfig{}),
                1e-9);
}

TEST(Curve, UnitScalingIsTwelve) {
    for (auto m : kAllModels) {
        const auto a = dcf_curve(make_spec(m), published_estimates(m), monthly());
        const auto b = dcf_curve(make_spec(m), published_estimates(m), DCFConfig{});
        for (std::size_t i = 0; i < a.costs.size(); ++i) EXPECT_NEAR(b.costs[i], 12.0 * a.costs[i], 1e-9 * b.costs[i] + 1e-12);
    }
}

TEST(Curve, ShapeByTransform) {
    for (auto m : kAllModels) {
        const auto c = dcf_curve(make_spec(m), published_estimates(m), monthly(ch_for(m)));
        ASSERT_EQ(c.times.size(), 61u);
        EXPECT_EQ(c.costs.front(), 0.0);
        for (std::size_t i = 1; i < c.costs.size(); ++i) EXPECT_GT(c.costs[i], c.costs[i - 1]) << to_string(m);
        const auto kind = make_spec(m).transform.kind;
        for (std::size_t i = 1; i + 1 < c.costs.size(); ++i) {
            if (kind == TransformKind::Linear)
                EXPECT_NEAR(second_difference(c, i), 0.0, 1e-9 * c.costs.back());
            else
                EXPECT_GT(second_difference(c, i), 0.0) << to_string(m) << " i=" << i;
        }
    }
}

TEST(Curve, ChildrenAndIncomeDominance) {
    const std::vector<std::pair<ModelName, ModelName>> pairs{
        {ModelName::MNL2, ModelName::MNL1}, {ModelName::ML2, ModelName::ML1},
        {ModelName::ML4, ModelName::ML3},   {ModelName::ML6, ModelName::ML5},
        {ModelName::MNL1Low, ModelName::MNL1High}};
    for (auto [hi, lo] : pairs) {
        const auto a = dcf_curve(make_spec(hi), published_estimates(hi), monthly(ch_for(hi)));
        const auto b = dcf_curve(make_spec(lo), published_estimates(lo), monthly(ch_for(lo)));
        for (std::size_t i = 1; i < a.times.size(); ++i)
            EXPECT_GT(a.costs[i], b.costs[i]) << to_string(hi) << " vs " << to_string(lo) << " t=" << a.times[i];
    }
}

TEST(PolyFit, ExactQuadratic) {
    std::vector<double> x, y;
    for (int i = 0; i <= 60; ++i) {
        x.push_back(0.5 * i);
        y.push_back(3.0 - 2.0 * x.back() + 0.25 * x.back() * x.back());
    }
    const auto f = fit_polynomial(x, y, 2);
    EXPECT_NEAR(f.coefficients[0], 3.0, 1e-9);
    EXPECT_NEAR(f.coefficients[1], -2.0, 1e-10);
    EXPECT_NEAR(f.coefficients[2], 0.25, 1e-11);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_FALSE(f.rank_deficient);
}

TEST(PolyFit, LinearCurveHasNoQuadraticTerm) {
    const auto c = dcf_curve(make_spec(ModelName::MNL1), published_estimates(ModelName::MNL1), DCFConfig{});
    const auto f = fit_polynomial(c, 2);
    EXPECT_NEAR(f.coefficients[2], 0.0, 1e-9);
    EXPECT_NEAR(f.coefficients[1], 12 * 0.1826 / 0.0025, 1e-6);
}

TEST(PolyFit, AdjustedRSquaredFormulaAndPublishedFits) {
    EXPECT_NEAR(adjusted_r_squared(0.98, 61, 2), 1 - 0.02 * 60.0 / 58.0, 1e-15);
    for (auto m : kAllModels) {
        const auto s = make_spec(m);
        const auto c = dcf_curve(s, published_estimates(m), DCFConfig{});
        const auto f = fit_polynomial(c, default_poly_degree(s));
        EXPECT_GE(f.adj_r_squared, 0.99) << to_string(m);
    }
}

TEST(PolyFit, ConstantAndUnderdetermined) {
    EXPECT_THROW(fit_polynomial({0, 1, 2}, {1, 2, 3}, 2), ConfigError);
    const auto f = fit_polynomial({0, 1, 2, 3, 4}, {5, 5, 5, 5, 5}, 2);
    EXPECT_TRUE(f.constant_response);
    EXPECT_NEAR(f(2.5), 5.0, 1e-12);
}

TEST(Curve, WriteReadRoundTrip) {
    const auto c = dcf_curve(make_spec(ModelName::ML4), published_estimates(ModelName::ML4), monthly(1));
    std::stringstream buf;
    write_curve(buf, c);
    const auto back = read_curve(buf);
    EXPECT_EQ(back.times, c.times);
    EXPECT_EQ(back.costs, c.costs);
    EXPECT_EQ(back.ch, 1);
    EXPECT_EQ(back.unit, CostUnit::MonthlyEquivalent);
    EXPECT_EQ(back.spec_name, c.spec_name);
}

TEST(Quadrature, AdaptiveSimpson) {
    EXPECT_NEAR(adaptive_simpson([](double t) { return std::sin(t); }, 0.0, M_PI, 1e-10), 2.0, 1e-10);
    EXPECT_THROW(adaptive_simpson([](double) { return NAN; }, 0.0, 1.0, 1e-6), NumericalError);
}
