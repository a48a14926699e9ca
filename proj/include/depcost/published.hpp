#pragma once

#include "depcost/spec.hpp"

namespace depcost {

namespace detail {
inline ParameterVector base(double asc, double beta_c, double beta_t) {
    ParameterVector p;
    p.asc = asc;
    p.beta_c = beta_c;
    p.beta_t = beta_t;
    return p;
}
} // namespace detail

/// Published point estimates for each model family, in the utility
/// parameterization of make_spec().
inline ParameterVector published_estimates(ModelName m) {
    ParameterVector p;
    switch (m) {
    case ModelName::MNL1: p = detail::base(-1.0031, -0.0025, -0.1826); break;
    case ModelName::MNL2:
        p = detail::base(-0.9638, -0.0027, -0.1425);
        p.delta_cht = -0.0901;
        break;
    case ModelName::ML1:
        p = detail::base(-1.3630, -0.0042, -0.2653);
        p.sigma_xi = 1.7445;
        break;
    case ModelName::ML2:
        p = detail::base(-1.3982, -0.0040, -0.2273);
        p.delta_cht = -0.0831;
        p.sigma_xi = 1.7059;
        break;
    case ModelName::ML3:
        p = detail::base(-1.3854, -0.0039, -0.1493);
        p.tau = 1.2756;
        p.sigma_xi = 1.7530;
        break;
    case ModelName::ML4:
        p = detail::base(-1.3599, -0.0039, -0.1285);
        p.delta_cht = -0.0477;
        p.tau = 1.2707;
        p.sigma_xi = 1.7172;
        break;
    case ModelName::ML5:
        p = detail::base(-1.3357, -0.0040, -3.7373);
        p.beta_T = 0.0464;
        p.sigma_xi = 1.7488;
        break;
    case ModelName::ML6:
        p = detail::base(-1.3143, -0.0039, -2.8366);
        p.delta_cht = -1.0510;
        p.beta_T = 0.0501;
        p.sigma_xi = 1.7136;
        break;
    case ModelName::MNL1Low: p = detail::base(-1.2295, -0.0022, -0.1969); break;
    case ModelName::MNL1High: p = detail::base(-0.6166, -0.0030, -0.1605); break;
    }
    return p;
}

/// Published final log-likelihood and adjusted rho-square (for comparison only).
struct PublishedFit {
    double ll_final;
    double adj_rho_sq;
    int n_obs;
    int n_respondents;
};

inline PublishedFit published_fit(ModelName m) {
    switch (m) {
    case ModelName::MNL1: return {-1494.71, 0.271, 2720, 680};
    case ModelName::MNL2: return {-1485.10, 0.272, 2720, 680};
    case ModelName::ML1: return {-1371.70, 0.200, 2720, 680};
    case ModelName::ML2: return {-1370.05, 0.198, 2720, 680};
    case ModelName::ML3: return {-1370.61, 0.207, 2720, 680};
    case ModelName::ML4: return {-1368.10, 0.207, 2720, 680};
    case ModelName::ML5: return {-1370.71, 0.205, 2720, 680};
    case ModelName::ML6: return {-1368.98, 0.208, 2720, 680};
    case ModelName::MNL1Low: return {-891.63, 0.261, 1672, 418};
    case ModelName::MNL1High: return {-570.50, 0.313, 992, 248};
    }
    return {0, 0, 0, 0};
}

} // namespace depcost
