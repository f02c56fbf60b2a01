#pragma once

// Two-part precipitation distribution: a point mass at zero with
// probability pi0 and a log-normal law for positive amounts.

#include "rmwarn/numeric.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace rmwarn {

struct TwoPartDist {
    double pi0 = 0.0;    // probability of exactly zero
    double mu = 0.0;     // log-scale location of wet amounts
    double sigma = 1.0;  // log-scale spread, > 0

    bool valid() const { return pi0 >= 0.0 && pi0 <= 1.0 && sigma > 0.0 && std::isfinite(mu); }
};

inline double cdf(const TwoPartDist& d, double x) {
    if (x < 0.0) return 0.0;
    if (x == 0.0) return d.pi0;
    return d.pi0 + (1.0 - d.pi0) * normal_cdf((std::log(x) - d.mu) / d.sigma);
}

inline double exceedance(const TwoPartDist& d, double threshold) { return 1.0 - cdf(d, threshold); }

inline double mean(const TwoPartDist& d) { return (1.0 - d.pi0) * std::exp(d.mu + 0.5 * d.sigma * d.sigma); }

// Returns 0 for p <= pi0.
inline double quantile(const TwoPartDist& d, double p) {
    if (p <= d.pi0) return 0.0;
    const double q = (p - d.pi0) / (1.0 - d.pi0);
    return std::exp(d.mu + d.sigma * normal_quantile(q));
}

inline std::vector<double> sample(const TwoPartDist& d, std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& x : out) {
        const double u = uniform01(rng);
        const double z = standard_normal(rng);
        x = u < d.pi0 ? 0.0 : std::exp(d.mu + d.sigma * z);
    }
    return out;
}

// Negative log density with respect to (point mass at 0) + Lebesgue on (0, inf).
inline double negative_log_likelihood(const TwoPartDist& d, double y) {
    if (y <= 0.0) return -std::log(d.pi0);
    const double z = (std::log(y) - d.mu) / d.sigma;
    return -std::log1p(-d.pi0) + std::log(y) + std::log(d.sigma) + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * z * z;
}

namespace detail {

// Integral of f(x) dx over x = exp(mu + sigma z), z in [a, b], on fixed
// Gauss-Legendre panels of width <= 0.5 in z.
template <class F>
double integrate_log_space(F f, double a, double b, const TwoPartDist& d) {
    if (!(b > a)) return 0.0;
    const int panels = static_cast<int>(std::ceil((b - a) / 0.5));
    const double h = (b - a) / panels;
    auto g = [&](double z) {
        const double lx = d.mu + d.sigma * z;
        return f(z, lx) * d.sigma;  // f returns its value already multiplied by exp(lx)
    };
    double total = 0.0;
    for (int i = 0; i < panels; ++i)
        total += boost::math::quadrature::gauss<double, 20>::integrate(g, a + i * h, a + (i + 1) * h);
    return total;
}

}  // namespace detail

// Continuous ranked probability score, integral of (F(x) - 1{x >= y})^2 dx,
// split at y and integrated in standardized log space. Below z = -12 the
// wet CDF is taken as zero (error below 1e-32 relative); above, the
// integration runs until (1 - F)^2 x has decayed by e^-50.
inline double crps(const TwoPartDist& d, double y) {
    if (y < 0.0) y = 0.0;
    if (d.pi0 >= 1.0) return y;
    constexpr double z_lo = -12.0;
    const double x_lo = std::exp(d.mu + d.sigma * z_lo);
    const double z_hi_tail = 0.5 * d.sigma + std::sqrt(0.25 * d.sigma * d.sigma + 50.0);
    const double wet = 1.0 - d.pi0;

    auto below = [&](double z, double lx) {
        const double f = d.pi0 + wet * normal_cdf(z);
        return f * f * std::exp(lx);
    };
    auto above = [&](double z, double lx) {
        // log of (1 - F)^2 x, stable far in the tail
        const double tail = 0.5 * std::erfc(z / std::numbers::sqrt2);
        if (tail <= 0.0) return 0.0;
        return std::exp(2.0 * (std::log(wet) + std::log(tail)) + lx);
    };

    if (y <= x_lo) {
        return d.pi0 * d.pi0 * y + wet * wet * (x_lo - y) + detail::integrate_log_space(above, z_lo, z_hi_tail, d);
    }
    const double z_y = (std::log(y) - d.mu) / d.sigma;
    if (z_y > z_hi_tail) {
        // F = 1 to within e^-50 between the tail cutoff and y.
        const double x_hi = std::exp(d.mu + d.sigma * z_hi_tail);
        return d.pi0 * d.pi0 * x_lo + detail::integrate_log_space(below, z_lo, z_hi_tail, d) + (y - x_hi);
    }
    const double lower = d.pi0 * d.pi0 * x_lo + detail::integrate_log_space(below, z_lo, z_y, d);
    const double upper = detail::integrate_log_space(above, z_y, z_hi_tail, d);
    return std::max(0.0, lower + upper);
}

// Point forecast m as a degenerate distribution.
inline double crps_point(double m, double y) { return std::abs(y - m); }

}  // namespace rmwarn
