#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "depcost/dataset.hpp"
#include "depcost/draws.hpp"
#include "depcost/error.hpp"
#include "depcost/spec.hpp"

namespace depcost {

/// Purchase probability of the binary logit, overflow-safe.
inline double logit_probability(double v_purchase, double v_wait) {
    const double m = std::max(v_purchase, v_wait);
    const double ep = std::exp(v_purchase - m);
    const double ew = std::exp(v_wait - m);
    return ep / (ep + ew);
}

namespace detail {

/// ln(1 / (1 + e^{-x})) without overflow.
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Run body(i) for i in [0, n) over `workers` threads with static contiguous chunks.
template <class Body> void parallel_for(std::size_t n, unsigned workers, Body&& body) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

struct PanelObservation {
    double cost = 0.0;
    double dt = 0.0;
    double edt = 0.0;
    bool purchase = false;
};

struct PanelRespondent {
    std::string id;
    int ch = 0;
    std::vector<PanelObservation> obs;
};

/// Respondent-grouped view of a dataset, in respondent-id order.
struct Panel {
    std::vector<PanelRespondent> respondents;
    std::size_t n_obs = 0;
};

/// Children-interacted specs drop respondents whose CH flag is unknown.
inline Panel build_panel(const UtilitySpec& spec, const ChoiceDataset& data) {
    Panel panel;
    std::size_t j = 0;
    for (const auto& r : data.respondents) {
        PanelRespondent pr;
        pr.id = r.id;
        const auto ch = r.children_flag();
        const bool usable = !spec.has_children_interaction || ch.has_value();
        pr.ch = ch.value_or(0);
        while (j < data.observations.size() && data.observations[j].respondent_id < r.id) ++j;
        for (; j < data.observations.size() && data.observations[j].respondent_id == r.id; ++j) {
            const auto& o = data.observations[j];
            pr.obs.push_back({o.cost_final, o.dt_days, o.edt_days(), o.chose_purchase});
        }
        if (usable && !pr.obs.empty()) {
            panel.n_obs += pr.obs.size();
            panel.respondents.push_back(std::move(pr));
        }
    }
    return panel;
}

/// (Simulated) log-likelihood of one spec over one panel, with analytic and
/// finite-difference gradients. Per-respondent terms are reduced in
/// respondent order so results do not depend on the worker count.
class LikelihoodModel {
  public:
    LikelihoodModel(UtilitySpec spec, Panel panel, DrawConfig draws = {}, unsigned workers = 1)
        : spec_(std::move(spec)), panel_(std::move(panel)), layout_(param_layout(spec_)),
          draw_config_(draws), workers_(std::max(1u, workers)) {
        if (spec_.has_random_time_coefficient)
            throw ConfigError("random time coefficients are not supported by the estimator");
        if (panel_.respondents.empty()) throw DataError("no respondents available for model " + spec_.label());
        if (spec_.has_panel_effect) draws_ = normal_draws(draw_config_, panel_.respondents.size());
    }

    LikelihoodModel(const UtilitySpec& spec, const ChoiceDataset& data, DrawConfig draws = {}, unsigned workers = 1)
        : LikelihoodModel(spec, build_panel(spec, data), draws, workers) {}

    /// Replace the standard normal draws: `per_respondent` values for each respondent.
    void set_draws(std::vector<double> normals, std::size_t per_respondent) {
        if (per_respondent < 1 || normals.size() != per_respondent * panel_.respondents.size())
            throw ConfigError("draw matrix has the wrong shape");
        draws_ = std::move(normals);
        draw_config_.n_draws = per_respondent;
    }

    const UtilitySpec& spec() const { return spec_; }
    const Panel& panel() const { return panel_; }
    const std::vector<Param>& layout() const { return layout_; }
    std::size_t dimension() const { return layout_.size(); }
    std::size_t n_obs() const { return panel_.n_obs; }
    std::size_t n_respondents() const { return panel_.respondents.size(); }
    const DrawConfig& draw_config() const { return draw_config_; }
    void set_workers(unsigned w) { workers_ = std::max(1u, w); }

    double loglik(const std::vector<double>& theta) const { return evaluate(theta, nullptr); }

    double loglik(const ParameterVector& p) const {
        check_params(spec_, p);
        return loglik(pack(spec_, p));
    }

    double loglik_and_gradient(const std::vector<double>& theta, std::vector<double>& grad) const {
        return evaluate(theta, &grad);
    }

    std::vector<double> gradient(const std::vector<double>& theta) const {
        std::vector<double> g;
        evaluate(theta, &g);
        return g;
    }

    /// Central differences with step `rel_step * max(1, |theta_i|)`.
    std::vector<double> gradient_fd(const std::vector<double>& theta, double rel_step = 1e-6) const {
        std::vector<double> g(theta.size());
        std::vector<double> x = theta;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = rel_step * std::max(1.0, std::abs(theta[i]));
            x[i] = theta[i] + h;
            const double up = loglik(x);
            x[i] = theta[i] - h;
            const double down = loglik(x);
            x[i] = theta[i];
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericalError("non-finite objective in finite-difference stencil");
            g[i] = (up - down) / (2.0 * h);
        }
        return g;
    }

  private:
    struct Coefs {
        double asc, beta_c, beta_t, delta, sigma;
        TimeTransform f;
        int i_delta = -1, i_shape = -1, i_sigma = -1;
    };

    Coefs decode(const std::vector<double>& theta) const {
        if (theta.size() != layout_.size()) throw ConfigError("parameter count mismatch for " + spec_.label());
        Coefs c{0, 0, 0, 0, 0, spec_.transform};
        for (std::size_t i = 0; i < layout_.size(); ++i) {
            const double v = theta[i];
            switch (layout_[i]) {
            case Param::ASC: c.asc = v; break;
            case Param::BetaC: c.beta_c = v; break;
            case Param::BetaT: c.beta_t = v; break;
            case Param::DeltaCHT:
                c.delta = v;
                c.i_delta = static_cast<int>(i);
                break;
            case Param::Tau:
                c.f.tau = v;
                c.i_shape = static_cast<int>(i);
                break;
            case Param::BetaTExp:
                c.f.beta_T = v;
                c.i_shape = static_cast<int>(i);
                break;
            case Param::SigmaXi:
                c.sigma = v;
                c.i_sigma = static_cast<int>(i);
                break;
            }
        }
        return c;
    }

    // Utility difference V_p - V_w without the panel term, and its partials.
    void obs_terms(const Coefs& c, int ch, const PanelObservation& o, double& d, double* x) const {
        const double fdt = transform_time(o.dt, c.f);
        const double fedt = transform_time(o.edt, c.f);
        const double coef = c.beta_t + (c.i_delta >= 0 ? c.delta * ch : 0.0);
        d = c.asc + c.beta_c * o.cost + coef * (fdt - fedt);
        if (!x) return;
        x[0] = 1.0;
        x[1] = o.cost;
        x[2] = fdt - fedt;
        if (c.i_delta >= 0) x[c.i_delta] = ch * (fdt - fedt);
        if (c.i_shape >= 0)
            x[c.i_shape] = coef * (transform_time_shape_derivative(o.dt, c.f) - transform_time_shape_derivative(o.edt, c.f));
        if (c.i_sigma >= 0) x[c.i_sigma] = 0.0;
    }

    double respondent_term(const Coefs& c, std::size_t n, double* grad) const {
        const auto& r = panel_.respondents[n];
        const std::size_t k = layout_.size();
        const std::size_t t_count = r.obs.size();
        std::vector<double> base(t_count);
        std::vector<double> xs(grad ? t_count * k : 0);
        for (std::size_t t = 0; t < t_count; ++t) obs_terms(c, r.ch, r.obs[t], base[t], grad ? &xs[t * k] : nullptr);

        if (!spec_.has_panel_effect) {
            double ll = 0.0;
            if (grad) std::fill(grad, grad + k, 0.0);
            for (std::size_t t = 0; t < t_count; ++t) {
                const double s = r.obs[t].purchase ? 1.0 : -1.0;
                ll += detail::log_sigmoid(s * base[t]);
                if (grad) {
                    const double resid = (r.obs[t].purchase ? 1.0 : 0.0) - detail::sigmoid(base[t]);
                    for (std::size_t j = 0; j < k; ++j) grad[j] += resid * xs[t * k + j];
                }
            }
            return ll;
        }

        const std::size_t n_draws = draw_config_.n_draws;
        const double* z = &draws_[n * n_draws];
        const double scale = std::abs(c.sigma);
        const double sign = c.sigma < 0.0 ? -1.0 : 1.0;
        std::vector<double> s(n_draws);
        std::vector<double> g(grad ? n_draws * k : 0, 0.0);
        for (std::size_t d = 0; d < n_draws; ++d) {
            const double xi = scale * z[d];
            double acc = 0.0;
            double resid_sum = 0.0;
            for (std::size_t t = 0; t < t_count; ++t) {
                const double v = base[t] + xi;
                acc += detail::log_sigmoid(r.obs[t].purchase ? v : -v);
                if (grad) {
                    const double resid = (r.obs[t].purchase ? 1.0 : 0.0) - detail::sigmoid(v);
                    resid_sum += resid;
                    for (std::size_t j = 0; j < k; ++j) g[d * k + j] += resid * xs[t * k + j];
                }
            }
            s[d] = acc;
            if (grad) g[d * k + c.i_sigma] = resid_sum * sign * z[d];
        }
        const double m = *std::max_element(s.begin(), s.end());
        double total = 0.0;
        for (std::size_t d = 0; d < n_draws; ++d) {
            s[d] = std::exp(s[d] - m);
            total += s[d];
        }
        if (grad) {
            std::fill(grad, grad + k, 0.0);
            for (std::size_t d = 0; d < n_draws; ++d) {
                const double w = s[d] / total;
                for (std::size_t j = 0; j < k; ++j) grad[j] += w * g[d * k + j];
            }
        }
        return m + std::log(total) - std::log(static_cast<double>(n_draws));
    }

    double evaluate(const std::vector<double>& theta, std::vector<double>* grad) const {
        const Coefs c = decode(theta);
        const std::size_t n = panel_.respondents.size();
        const std::size_t k = layout_.size();
        std::vector<double> ll(n);
        std::vector<double> partial(grad ? n * k : 0);
        std::vector<char> failed(n, 0);
        detail::parallel_for(n, workers_, [&](std::size_t i) {
            try {
                ll[i] = respondent_term(c, i, grad ? &partial[i * k] : nullptr);
            } catch (const NumericalError&) {
                failed[i] = 1;
            }
        });
        if (std::find(failed.begin(), failed.end(), 1) != failed.end())
            throw NumericalError("log-likelihood undefined: time transform domain violation");
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += ll[i];
        if (grad) {
            grad->assign(k, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < k; ++j) (*grad)[j] += partial[i * k + j];
        }
        return total;
    }

    UtilitySpec spec_;
    Panel panel_;
    std::vector<Param> layout_;
    DrawConfig draw_config_;
    unsigned workers_;
    std::vector<double> draws_;
};

inline double loglik_mnl(const UtilitySpec& spec, const ParameterVector& params, const ChoiceDataset& data) {
    if (spec.has_panel_effect) {
        // Drop the panel term and evaluate the conditional logit on the shared coefficients.
        UtilitySpec fixed = spec;
        fixed.has_panel_effect = false;
        ParameterVector p = params;
        p.sigma_xi.reset();
        return loglik_mnl(fixed, p, data);
    }
    check_params(spec, params);
    if (data.observations.empty()) throw DataError("empty dataset");
    return LikelihoodModel(spec, data).loglik(params);
}

inline double simulated_loglik(const UtilitySpec& spec, const ParameterVector& params, const ChoiceDataset& data,
                               const DrawConfig& draws, unsigned workers = 1) {
    if (!spec.has_panel_effect) throw ConfigError("model " + spec.label() + " has no panel effect; use loglik_mnl");
    validate(draws);
    check_params(spec, params);
    if (data.observations.empty()) throw DataError("empty dataset");
    return LikelihoodModel(spec, data, draws, workers).loglik(params);
}

enum class GradientMethod { Analytic, FiniteDifference };

/// Gradient in packed parameter order (see param_layout).
inline std::vector<double> gradient(const UtilitySpec& spec, const ParameterVector& params, const ChoiceDataset& data,
                                    const DrawConfig& draws = {}, GradientMethod method = GradientMethod::Analytic) {
    check_params(spec, params);
    LikelihoodModel model(spec, data, draws);
    const auto theta = pack(spec, params);
    const double f = model.loglik(theta);
    if (!std::isfinite(f)) throw NumericalError("objective not finite at the requested point");
    return method == GradientMethod::Analytic ? model.gradient(theta) : model.gradient_fd(theta);
}

} // namespace depcost
