#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "depcost/design.hpp"

using namespace depcost;

namespace {

ParameterVector priors() {
    ParameterVector p;
    p.asc = -1.0;
    p.beta_c = -0.0025;
    p.beta_t = -0.18;
    return p;
}

// det(M^{-1})^{1/3} for a 3x3 M via cofactor expansion.
double inverse_det_cuberoot(const double m[3][3]) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    return std::cbrt(1.0 / det);
}

} // namespace

TEST(Balanced, LevelBalance) {
    const auto d = balanced_design();
    ASSERT_EQ(d.scenarios.size(), 36u);
    ASSERT_EQ(d.block_ids().size(), 9u);
    EXPECT_NO_THROW(validate(d));
    const auto rep = level_balance_report(d);
    for (const auto& a : rep.attributes) {
        EXPECT_EQ(a.imbalance, 0) << a.attribute;
        for (int c : a.counts) EXPECT_EQ(c, 9);
        for (const auto& [b, imb] : a.block_imbalance) EXPECT_EQ(imb, 0) << a.attribute << " block " << b;
    }
}

TEST(Balanced, DistinctBlocksAndIdentifiable) {
    const auto d = balanced_design();
    for (int a : d.block_ids())
        for (int b : d.block_ids())
            if (a < b) {
                auto x = d.block(a), y = d.block(b);
                for (auto& s : x) s.block = 0;
                for (auto& s : y) s.block = 0;
                EXPECT_NE(x, y) << a << " " << b;
            }
    const auto r = d_error(d, priors());
    EXPECT_FALSE(r.singular);
    EXPECT_TRUE(std::isfinite(r.value));
}

TEST(DError, PermutationInvariance) {
    auto d = balanced_design();
    const double base = d_error(d, priors()).value;
    std::mt19937 rng(4);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(d.scenarios.begin(), d.scenarios.end(), rng);
        EXPECT_EQ(d_error(d, priors()).value, base);
    }
}

TEST(DError, DuplicationHalves) {
    const auto d = balanced_design();
    Design twice = d;
    twice.scenarios.insert(twice.scenarios.end(), d.scenarios.begin(), d.scenarios.end());
    const double a = d_error(d, priors()).value;
    EXPECT_NEAR(d_error(twice, priors()).value, a / 2.0, 1e-10 * a);
}

TEST(DError, ToyDesignMatchesHandInversion) {
    Design d;
    d.scenarios = {{1, 1.0, 1.0, 0.10}, {1, 3.0, 5.0, 0.50}, {1, 5.0, 7.0, 0.75}};
    const auto pr = priors();
    const double bill = 150.0;
    double info[3][3] = {};
    for (const auto& s : d.scenarios) {
        const double x[3] = {1.0, bill * (1.0 + s.pct_increase), -s.wt_days};
        const double v = pr.asc * x[0] + pr.beta_c * x[1] + pr.beta_t * x[2];
        const double p = std::exp(v) / (1.0 + std::exp(v));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) info[i][j] += p * (1.0 - p) * x[i] * x[j];
    }
    const double oracle = inverse_det_cuberoot(info);
    const auto r = d_error(d, pr, bill);
    ASSERT_FALSE(r.singular);
    EXPECT_NEAR(r.value, oracle, 1e-10 * oracle);
}

TEST(DError, SingularDesign) {
    Design d;
    for (int i = 0; i < 4; ++i) d.scenarios.push_back({1, 1.0 + 2 * i, 3.0, 0.25});
    const auto r = d_error(d, priors());
    EXPECT_TRUE(r.singular);
    EXPECT_EQ(r.rank, 1);
    EXPECT_TRUE(std::isinf(r.value));
}

TEST(Improve, ZeroBudgetAndMonotoneTrace) {
    const auto d = balanced_design();
    const auto none = improve_design(d, priors(), 0, 1);
    EXPECT_EQ(none.design.scenarios, d.scenarios);
    EXPECT_EQ(none.trace.size(), 1u);
    const auto r = improve_design(d, priors(), 300, 7);
    ASSERT_EQ(r.trace.size(), 301u);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
    EXPECT_NEAR(d_error(r.design, priors()).value, r.trace.back(), 1e-12 * r.trace.back());
    EXPECT_NO_THROW(validate(r.design));
    const auto again = improve_design(d, priors(), 300, 7);
    EXPECT_EQ(again.design.scenarios, r.design.scenarios);
}

TEST(Improve, RestoresIdentifiability) {
    Design d;
    d.scenarios = {{1, 1, 3, 0.25}, {1, 3, 3, 0.25}, {1, 5, 3, 0.25}, {1, 7, 3, 0.25}};
    ASSERT_TRUE(d_error(d, priors()).singular);
    const auto r = improve_design(d, priors(), 200, 3);
    EXPECT_TRUE(std::isfinite(r.trace.back()));
    EXPECT_FALSE(d_error(r.design, priors()).singular);
}

TEST(Files, RoundTripAndValidation) {
    const auto d = balanced_design();
    std::stringstream buf;
    write_design(buf, d);
    const auto back = read_design(buf);
    EXPECT_EQ(back.scenarios, d.scenarios);
    std::istringstream bad("block,dt,wt,p\n1,2,3,0.25\n");
    EXPECT_THROW(read_design(bad), DataError);
    std::istringstream uneven("block,dt,wt,p\n1,1,3,0.25\n1,3,3,0.5\n2,5,1,0.1\n");
    EXPECT_THROW(read_design(uneven), DataError);
    EXPECT_EQ(to_json(level_balance_report(d)).size(), 3u);
}
