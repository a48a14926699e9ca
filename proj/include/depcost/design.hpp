#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "depcost/csv.hpp"
#include "depcost/draws.hpp"
#include "depcost/error.hpp"
#include "depcost/likelihood.hpp"
#include "depcost/spec.hpp"

namespace depcost {

struct Scenario {
    int block = 1;
    double dt_days = 1.0;
    double wt_days = 1.0;
    double pct_increase = 0.1;

    bool operator==(const Scenario&) const = default;
};

struct LevelSets {
    std::vector<double> dt{1.0, 3.0, 5.0, 7.0};
    std::vector<double> wt{1.0, 3.0, 5.0, 7.0};
    std::vector<double> pct{0.10, 0.25, 0.50, 0.75};

    bool operator==(const LevelSets&) const = default;
};

struct Design {
    std::vector<Scenario> scenarios;
    LevelSets levels;

    std::vector<int> block_ids() const {
        std::vector<int> ids;
        for (const auto& s : scenarios) ids.push_back(s.block);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    std::vector<Scenario> block(int id) const {
        std::vector<Scenario> out;
        for (const auto& s : scenarios)
            if (s.block == id) out.push_back(s);
        return out;
    }
};

namespace detail {
inline bool member(const std::vector<double>& set, double v) {
    return std::find(set.begin(), set.end(), v) != set.end();
}
} // namespace detail

/// Level membership and equal block sizes.
inline void validate(const Design& d) {
    if (d.scenarios.empty()) throw DataError("design has no scenarios");
    for (std::size_t i = 0; i < d.scenarios.size(); ++i) {
        const auto& s = d.scenarios[i];
        if (!detail::member(d.levels.dt, s.dt_days) || !detail::member(d.levels.wt, s.wt_days) ||
            !detail::member(d.levels.pct, s.pct_increase))
            throw DataError("scenario " + std::to_string(i + 1) + " uses a level outside the level sets");
    }
    std::map<int, std::size_t> sizes;
    for (const auto& s : d.scenarios) ++sizes[s.block];
    const auto first = sizes.begin()->second;
    for (const auto& [b, n] : sizes)
        if (n != first) throw DataError("unequal block sizes (block " + std::to_string(b) + ")");
}

/// 36 scenarios in 9 blocks of 4. Within each block each attribute visits
/// every level once, so every block and the full design are level balanced.
inline Design balanced_design(const LevelSets& levels = {}, int n_blocks = 9) {
    const std::size_t m = levels.dt.size();
    if (m == 0 || levels.wt.size() != m || levels.pct.size() != m)
        throw ConfigError("balanced design needs equally sized level sets");
    Design d;
    d.levels = levels;
    for (int b = 0; b < n_blocks; ++b) {
        for (std::size_t j = 0; j < m; ++j) {
            Scenario s;
            s.block = b + 1;
            s.dt_days = levels.dt[j];
            s.wt_days = levels.wt[(j + static_cast<std::size_t>(b)) % m];
            s.pct_increase = levels.pct[(j + 2 * static_cast<std::size_t>(b) + static_cast<std::size_t>(b / 4)) % m];
            d.scenarios.push_back(s);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------

struct AttributeBalance {
    std::string attribute;
    std::vector<double> levels;
    std::vector<int> counts;
    int imbalance = 0;
    std::map<int, std::vector<int>> block_counts;
    std::map<int, int> block_imbalance;
};

struct BalanceReport {
    std::vector<AttributeBalance> attributes;
};

inline BalanceReport level_balance_report(const Design& d) {
    if (d.scenarios.empty()) throw DataError("design has no scenarios");
    auto tally = [](const std::vector<double>& levels, const std::vector<double>& values) {
        std::vector<int> c(levels.size(), 0);
        for (double v : values) {
            auto it = std::find(levels.begin(), levels.end(), v);
            if (it != levels.end()) ++c[static_cast<std::size_t>(it - levels.begin())];
        }
        return c;
    };
    auto spread = [](const std::vector<int>& c) {
        if (c.empty()) return 0;
        return *std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end());
    };
    BalanceReport rep;
    const std::vector<std::pair<std::string, const std::vector<double>*>> attrs{
        {"dt", &d.levels.dt}, {"wt", &d.levels.wt}, {"pct", &d.levels.pct}};
    for (std::size_t a = 0; a < attrs.size(); ++a) {
        auto value = [a](const Scenario& s) { return a == 0 ? s.dt_days : a == 1 ? s.wt_days : s.pct_increase; };
        AttributeBalance ab;
        ab.attribute = attrs[a].first;
        ab.levels = *attrs[a].second;
        std::vector<double> all;
        for (const auto& s : d.scenarios) all.push_back(value(s));
        ab.counts = tally(ab.levels, all);
        ab.imbalance = spread(ab.counts);
        for (int b : d.block_ids()) {
            std::vector<double> vals;
            for (const auto& s : d.block(b)) vals.push_back(value(s));
            ab.block_counts[b] = tally(ab.levels, vals);
            ab.block_imbalance[b] = spread(ab.block_counts[b]);
        }
        rep.attributes.push_back(std::move(ab));
    }
    return rep;
}

// ---------------------------------------------------------------------------

struct DErrorReport {
    /// +inf when the information matrix is singular.
    double value = std::numeric_limits<double>::infinity();
    bool singular = true;
    /// Numerical rank of the information matrix.
    int rank = 0;
    Eigen::MatrixXd information;
};

/// Covariate of the utility difference V_p - V_w under the linear
/// (ASC, beta_c, beta_t) form: (1, C, DT - EDT).
inline Eigen::Vector3d design_covariate(const Scenario& s, double bill_reference) {
    return {1.0, bill_reference * (1.0 + s.pct_increase), s.dt_days - expected_total_deprivation(s.dt_days, s.wt_days)};
}

/// MNL D-error det(I^{-1})^{1/K}, with I = sum_s p(1-p) x x^T at the priors.
/// Terms are summed in sorted attribute order so that any reordering of the
/// scenarios gives the same bits.
inline DErrorReport d_error(const Design& d, const ParameterVector& priors, double bill_reference = 150.0) {
    if (d.scenarios.empty()) throw DataError("design has no scenarios");
    if (!(bill_reference > 0.0)) throw ConfigError("bill reference must be positive");
    std::vector<Scenario> order = d.scenarios;
    std::sort(order.begin(), order.end(), [](const Scenario& a, const Scenario& b) {
        return std::tie(a.dt_days, a.wt_days, a.pct_increase) < std::tie(b.dt_days, b.wt_days, b.pct_increase);
    });
    Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
    const Eigen::Vector3d beta(priors.asc, priors.beta_c, priors.beta_t);
    for (const auto& s : order) {
        const Eigen::Vector3d x = design_covariate(s, bill_reference);
        const double p = logit_probability(beta.dot(x), 0.0);
        info += p * (1.0 - p) * x * x.transpose();
    }
    DErrorReport rep;
    rep.information = info;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(info);
    const auto ev = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(ev.maxCoeff(), 1e-300);
    for (int i = 0; i < 3; ++i) rep.rank += ev(i) > cutoff;
    if (rep.rank < 3) return rep;
    rep.singular = false;
    // det(I^{-1})^{1/K} = (prod of eigenvalues)^{-1/K}
    rep.value = std::exp(-(std::log(ev(0)) + std::log(ev(1)) + std::log(ev(2))) / 3.0);
    return rep;
}

struct ImproveResult {
    Design design;
    /// D-error after each iteration, starting with the input design's value.
    std::vector<double> trace;
    int accepted = 0;
};

/// Random single-attribute level swaps, accepted when the D-error drops or,
/// from a singular start, when the information rank rises.
inline ImproveResult improve_design(const Design& start, const ParameterVector& priors, int budget,
                                    std::uint64_t seed, double bill_reference = 150.0) {
    validate(start);
    ImproveResult r;
    r.design = start;
    const auto first = d_error(start, priors, bill_reference);
    double best = first.value;
    int rank = first.rank;
    r.trace.push_back(best);
    std::mt19937_64 rng(seed);
    auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(uniform_open01(rng) * static_cast<double>(n)) % n; };
    for (int it = 0; it < budget; ++it) {
        Design cand = r.design;
        auto& s = cand.scenarios[pick(cand.scenarios.size())];
        const std::size_t attr = pick(3);
        const auto& levels = attr == 0 ? cand.levels.dt : attr == 1 ? cand.levels.wt : cand.levels.pct;
        double& slot = attr == 0 ? s.dt_days : attr == 1 ? s.wt_days : s.pct_increase;
        const double proposal = levels[pick(levels.size())];
        if (proposal != slot) {
            slot = proposal;
            const auto rep = d_error(cand, priors, bill_reference);
            if (rep.rank > rank || (!rep.singular && rep.value < best)) {
                best = rep.value;
                rank = rep.rank;
                r.design = std::move(cand);
                ++r.accepted;
            }
        }
        r.trace.push_back(best);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Files

inline void write_design(std::ostream& out, const Design& d) {
    out << "block,dt,wt,p\n";
    for (const auto& s : d.scenarios)
        out << s.block << ',' << csv::format_double(s.dt_days) << ',' << csv::format_double(s.wt_days) << ','
            << csv::format_double(s.pct_increase) << '\n';
}

inline Design read_design(std::istream& in, const LevelSets& levels = {}, const std::string& source = "<stream>") {
    Design d;
    d.levels = levels;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto f = csv::split_line(line, ',');
        if (!header) {
            if (f.size() != 4 || csv::trim(f[0]) != "block" || csv::trim(f[1]) != "dt" || csv::trim(f[2]) != "wt" ||
                csv::trim(f[3]) != "p")
                throw DataError(source + ": design header must be block,dt,wt,p");
            header = true;
            continue;
        }
        const auto tag = source + ": row " + std::to_string(line_no) + ": ";
        if (f.size() != 4) throw DataError(tag + "expected 4 fields");
        auto b = csv::parse_int(f[0]);
        auto dt = csv::parse_double(f[1]);
        auto wt = csv::parse_double(f[2]);
        auto p = csv::parse_double(f[3]);
        if (!b || !dt || !wt || !p) throw DataError(tag + "bad number");
        d.scenarios.push_back({static_cast<int>(*b), *dt, *wt, *p});
    }
    validate(d);
    return d;
}

inline nlohmann::json to_json(const BalanceReport& r) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& a : r.attributes) {
        nlohmann::json blocks = nlohmann::json::object();
        for (const auto& [b, c] : a.block_counts)
            blocks[std::to_string(b)] = {{"counts", c}, {"imbalance", a.block_imbalance.at(b)}};
        out.push_back({{"attribute", a.attribute},
                       {"levels", a.levels},
                       {"counts", a.counts},
                       {"imbalance", a.imbalance},
                       {"blocks", blocks}});
    }
    return out;
}

} // namespace depcost
