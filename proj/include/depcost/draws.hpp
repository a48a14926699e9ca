#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "depcost/error.hpp"

namespace depcost {

inline bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    for (std::uint64_t d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

/// Radical inverse of `index` (>= 1) in `base`.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double result = 0.0;
    double scale = 1.0 / static_cast<double>(base);
    while (index > 0) {
        result += static_cast<double>(index % base) * scale;
        index /= base;
        scale /= static_cast<double>(base);
    }
    return result;
}

/// Halton points for indices skip+1 .. skip+count. All values lie in (0,1).
inline std::vector<double> halton_sequence(std::size_t count, std::uint64_t base, std::uint64_t skip = 0) {
    if (!is_prime(base)) throw ConfigError("Halton base " + std::to_string(base) + " is not prime");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = radical_inverse(skip + i + 1, base);
    return out;
}

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc, giving close to full double precision.
inline double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        if (u == 0.0) return -std::numeric_limits<double>::infinity();
        if (u == 1.0) return std::numeric_limits<double>::infinity();
        throw NumericalError("normal quantile argument outside [0,1]");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double lo = 0.02425;
    double x = 0.0;
    if (u < lo) {
        const double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - lo) {
        const double q = u - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
    const double g = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - g / (1.0 + 0.5 * x * g);
}

/// Uniform in (0,1) from the top 53 bits of a 64-bit engine output.
/// Portable across standard libraries, unlike std::uniform_real_distribution.
inline double uniform_open01(std::mt19937_64& rng) {
    for (;;) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}

inline double standard_normal(std::mt19937_64& rng) { return normal_quantile(uniform_open01(rng)); }

/// splitmix64 finalizer; derives independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

enum class DrawGenerator { Halton, PseudoRandom };

struct DrawConfig {
    std::size_t n_draws = 500;
    DrawGenerator generator = DrawGenerator::Halton;
    std::uint64_t base = 2;
    std::uint64_t skip = 50;
    std::uint64_t seed = 1;
};

inline void validate(const DrawConfig& c) {
    if (c.n_draws < 1) throw ConfigError("n_draws must be at least 1");
    if (c.generator == DrawGenerator::Halton && !is_prime(c.base))
        throw ConfigError("Halton base " + std::to_string(c.base) + " is not prime");
}

/// Standard normal draws, `n_draws` per respondent, row-major by respondent.
/// Halton: respondent n takes consecutive block n of one stream after `skip`.
inline std::vector<double> normal_draws(const DrawConfig& c, std::size_t n_respondents) {
    validate(c);
    const std::size_t total = c.n_draws * n_respondents;
    std::vector<double> out(total);
    if (c.generator == DrawGenerator::Halton) {
        for (std::size_t i = 0; i < total; ++i) out[i] = normal_quantile(radical_inverse(c.skip + i + 1, c.base));
    } else {
        std::mt19937_64 rng(c.seed);
        for (auto& x : out) x = standard_normal(rng);
    }
    return out;
}

} // namespace depcost
