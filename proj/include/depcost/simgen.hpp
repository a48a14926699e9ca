#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "depcost/dataset.hpp"
#include "depcost/design.hpp"
#include "depcost/draws.hpp"
#include "depcost/error.hpp"
#include "depcost/estimate.hpp"
#include "depcost/likelihood.hpp"
#include "depcost/spec.hpp"

namespace depcost {

enum class BillFamily { LogNormal, Degenerate };

struct BillDistribution {
    BillFamily family = BillFamily::LogNormal;
    double median = 150.0;
    double log_scale = 0.4;
    double min = 30.0;
    double max = 1000.0;
    /// Degenerate family only.
    double value = 150.0;
};

struct PopulationConfig {
    std::size_t n_respondents = 680;
    BillDistribution bill;
    double children_flag_rate = 0.432;
    double income_split_rate = 418.0 / 666.0;
    std::uint64_t seed = 1;
};

inline void validate(const PopulationConfig& c) {
    if (c.n_respondents < 1) throw ConfigError("population needs at least one respondent");
    if (!(c.children_flag_rate >= 0.0 && c.children_flag_rate <= 1.0) ||
        !(c.income_split_rate >= 0.0 && c.income_split_rate <= 1.0))
        throw ConfigError("population rates must lie in [0,1]");
    const auto& b = c.bill;
    if (b.family == BillFamily::Degenerate) {
        if (!(b.value > 0.0)) throw ConfigError("bill value must be positive");
    } else if (!(b.median > 0.0) || !(b.log_scale >= 0.0) || !(b.min > 0.0) || !(b.max > b.min) ||
               b.median < b.min || b.median > b.max) {
        throw ConfigError("invalid log-normal bill distribution");
    }
}

namespace detail {

inline double sample_bill(const BillDistribution& b, std::mt19937_64& rng) {
    double v = b.value;
    if (b.family == BillFamily::LogNormal) {
        do {
            v = b.median * std::exp(b.log_scale * standard_normal(rng));
        } while (v < b.min || v > b.max);
    }
    return std::round(v * 100.0) / 100.0;
}

template <std::size_t N> std::size_t sample_weighted(const std::array<double, N>& w, std::mt19937_64& rng) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform_open01(rng) * total;
    for (std::size_t i = 0; i < N; ++i) {
        if (u < w[i]) return i;
        u -= w[i];
    }
    return N - 1;
}

} // namespace detail

/// Synthetic respondents with block, bill, CH and income assigned; all
/// choices are left as "wait".
inline ChoiceDataset generate_population(const PopulationConfig& config, const Design& design) {
    validate(config);
    if (design.scenarios.empty()) throw DataError("design has no scenarios");
    const auto blocks = design.block_ids();
    for (int b : blocks) {
        if (b < 1 || b > 9) throw DataError("design block ids must lie in [1,9]");
        if (design.block(b).size() > 4) throw DataError("design blocks may hold at most 4 scenarios");
    }
    std::mt19937_64 rng(config.seed);
    // Income bracket weights from the sample marginals, split at $75k.
    const std::array<double, 3> low_w{103.0, 144.0, 171.0};
    const std::array<double, 3> high_w{78.0, 97.0, 73.0};
    const int width = static_cast<int>(std::to_string(config.n_respondents).size());

    ChoiceDataset data;
    data.provenance = "synthetic population seed=" + std::to_string(config.seed);
    for (std::size_t n = 0; n < config.n_respondents; ++n) {
        char id[32];
        std::snprintf(id, sizeof(id), "S%0*zu", width, n + 1);
        Respondent r;
        r.id = id;
        const int block = blocks[static_cast<std::size_t>(uniform_open01(rng) * static_cast<double>(blocks.size())) %
                                 blocks.size()];
        const double bill = detail::sample_bill(config.bill, rng);
        const bool ch = uniform_open01(rng) < config.children_flag_rate;
        const bool low = uniform_open01(rng) < config.income_split_rate;
        r.household_size = ch ? 4 : 2;
        r.children_count = ch ? 1 : 0;
        r.income = static_cast<IncomeBracket>(low ? 1 + detail::sample_weighted(low_w, rng)
                                                  : 4 + detail::sample_weighted(high_w, rng));
        r.age = std::floor(18.0 + 75.0 * uniform_open01(rng));
        r.gender = uniform_open01(rng) < 0.549 ? "female" : "male";
        int k = 0;
        for (const auto& s : design.block(block)) {
            ChoiceObservation o;
            o.respondent_id = r.id;
            o.block_id = block;
            o.scenario_index = ++k;
            o.dt_days = s.dt_days;
            o.wt_days = s.wt_days;
            o.bill_base = bill;
            o.pct_increase = s.pct_increase;
            o.cost_final = bill * (1.0 + s.pct_increase);
            data.observations.push_back(o);
        }
        data.respondents.push_back(std::move(r));
    }
    canonicalize(data);
    return data;
}

/// Bernoulli draws on the logit purchase probability; panel specs share one
/// xi ~ N(0, sigma_xi^2) across each respondent's scenarios.
inline ChoiceDataset simulate_choices(const ChoiceDataset& skeleton, const UtilitySpec& spec,
                                      const ParameterVector& truth, std::uint64_t seed) {
    check_params(spec, truth);
    ChoiceDataset out = skeleton;
    out.provenance += "; choices simulated from " + spec.label() + " seed=" + std::to_string(seed);
    std::mt19937_64 rng(seed);
    std::size_t j = 0;
    for (const auto& r : out.respondents) {
        const int ch = r.children_flag().value_or(0);
        const double xi = spec.has_panel_effect ? truth.sigma_xi.value_or(0.0) * standard_normal(rng) : 0.0;
        for (; j < out.observations.size() && out.observations[j].respondent_id == r.id; ++j) {
            auto& o = out.observations[j];
            const double vp = systematic_utility(spec, truth, Alternative::Purchase, o, ch, xi);
            const double vw = systematic_utility(spec, truth, Alternative::Wait, o, ch, 0.0);
            o.chose_purchase = uniform_open01(rng) < logit_probability(vp, vw);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct ParameterRecovery {
    std::string name;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double mean_se = 0.0;
    double empirical_sd = 0.0;
    /// Share of replications whose +-2 SE interval covers the truth.
    double coverage = 0.0;
    std::size_t n_with_se = 0;
};

struct RecoveryReport {
    std::string spec_name;
    std::size_t replications = 0;
    std::size_t converged = 0;
    std::size_t failures = 0;
    double convergence_rate = 0.0;
    std::vector<ParameterRecovery> parameters;
    std::vector<EstimationResult> fits;
};

struct RecoveryOptions {
    FitOptions fit;
    /// Replications run concurrently; each fit then uses one thread.
    unsigned workers = 1;
};

inline RecoveryReport recovery_experiment(const UtilitySpec& spec, const ParameterVector& truth,
                                          const PopulationConfig& config, const Design& design,
                                          const DrawConfig& draws, std::size_t n_replications,
                                          const RecoveryOptions& options = {}) {
    check_params(spec, truth);
    validate(config);
    validate(design);
    if (n_replications < 1) throw ConfigError("need at least one replication");
    std::vector<std::optional<EstimationResult>> fits(n_replications);
    FitOptions fit_opts = options.fit;
    if (options.workers > 1) fit_opts.workers = 1;
    detail::parallel_for(n_replications, options.workers, [&](std::size_t rep) {
        const std::uint64_t rep_seed = mix_seed(config.seed, rep);
        PopulationConfig pc = config;
        pc.seed = mix_seed(rep_seed, 0);
        try {
            const auto data = simulate_choices(generate_population(pc, design), spec, truth, mix_seed(rep_seed, 1));
            DrawConfig dc = draws;
            dc.seed = mix_seed(rep_seed, 2);
            fits[rep] = fit(spec, data, dc, auto_start(spec, data, fit_opts), fit_opts);
        } catch (const std::exception&) {
            fits[rep].reset();
        }
    });

    RecoveryReport rep;
    rep.spec_name = spec.label();
    rep.replications = n_replications;
    const auto layout = param_layout(spec);
    const auto truth_vec = pack(spec, truth);
    std::vector<double> sum(layout.size(), 0.0), sum_sq(layout.size(), 0.0), se_sum(layout.size(), 0.0);
    std::vector<std::size_t> covered(layout.size(), 0), with_se(layout.size(), 0);
    std::size_t ok = 0;
    for (const auto& f : fits) {
        if (!f) {
            ++rep.failures;
            continue;
        }
        if (f->converged) ++rep.converged;
        ++ok;
        for (std::size_t i = 0; i < layout.size(); ++i) {
            sum[i] += f->values[i];
            sum_sq[i] += f->values[i] * f->values[i];
            if (std::isfinite(f->std_errors[i])) {
                ++with_se[i];
                se_sum[i] += f->std_errors[i];
                if (std::abs(f->values[i] - truth_vec[i]) <= 2.0 * f->std_errors[i]) ++covered[i];
            }
        }
        rep.fits.push_back(*f);
    }
    rep.convergence_rate = static_cast<double>(rep.converged) / static_cast<double>(n_replications);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        ParameterRecovery pr;
        pr.name = param_key(layout[i]);
        pr.truth = truth_vec[i];
        pr.n_with_se = with_se[i];
        if (ok > 0) {
            pr.mean_estimate = sum[i] / static_cast<double>(ok);
            pr.bias = pr.mean_estimate - pr.truth;
            const double var = sum_sq[i] / static_cast<double>(ok) - pr.mean_estimate * pr.mean_estimate;
            pr.empirical_sd = ok > 1 ? std::sqrt(std::max(0.0, var) * static_cast<double>(ok) / (ok - 1.0)) : 0.0;
        }
        if (with_se[i] > 0) {
            pr.mean_se = se_sum[i] / static_cast<double>(with_se[i]);
            pr.coverage = static_cast<double>(covered[i]) / static_cast<double>(with_se[i]);
        }
        rep.parameters.push_back(pr);
    }
    return rep;
}

inline nlohmann::json to_json(const RecoveryReport& r) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : r.parameters)
        params.push_back({{"name", p.name},
                          {"truth", p.truth},
                          {"mean_estimate", p.mean_estimate},
                          {"bias", p.bias},
                          {"mean_se", p.mean_se},
                          {"empirical_sd", p.empirical_sd},
                          {"coverage_2se", p.coverage},
                          {"n_with_se", p.n_with_se}});
    return {{"spec", r.spec_name},
            {"replications", r.replications},
            {"converged", r.converged},
            {"failures", r.failures},
            {"convergence_rate", r.convergence_rate},
            {"parameters", params}};
}

} // namespace depcost
