#include "rmwarn/forecast_dist.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace rmwarn;

namespace {

// Sample-based CRPS: E|X - y| - 0.5 E|X - X'| over n independent pairs.
struct McCrps {
    double value;
    double se;
};

McCrps mc_crps(const TwoPartDist& d, double y, std::size_t n, std::uint64_t seed) {
    const auto x = sample(d, seed, n);
    const auto x2 = sample(d, seed + 1, n);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::abs(x[i] - y) - 0.5 * std::abs(x[i] - x2[i]);
        s += v;
        s2 += v * v;
    }
    const double m = s / static_cast<double>(n);
    const double var = (s2 / static_cast<double>(n) - m * m) * static_cast<double>(n) / static_cast<double>(n - 1);
    return {m, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace

TEST(Cdf, Support) {
    const TwoPartDist d{0.3, 0.0, 1.0};
    EXPECT_EQ(cdf(d, -1.0), 0.0);
    EXPECT_EQ(cdf(d, 0.0), 0.3);
    EXPECT_NEAR(cdf(d, 1.0), 0.65, 1e-15);
}

TEST(Cdf, NonDecreasing) {
    Rng rng(1);
    const TwoPartDist d{0.2, 0.5, 1.3};
    std::vector<double> xs(1000);
    for (auto& x : xs) x = 50.0 * uniform01(rng) * uniform01(rng);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_LE(cdf(d, xs[i - 1]), cdf(d, xs[i]));
}

TEST(Quantile, Cases) {
    const TwoPartDist d{0.3, 0.0, 1.0};
    EXPECT_EQ(quantile(d, 0.15), 0.0);
    EXPECT_NEAR(quantile(d, 0.65), 1.0, 1e-12);
}

TEST(Quantile, MatchesBisection) {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const TwoPartDist d{0.9 * uniform01(rng), standard_normal(rng), 0.1 + 2.0 * uniform01(rng)};
        const double p = d.pi0 + (1.0 - d.pi0) * (0.001 + 0.998 * uniform01(rng));
        double lo = 0.0, hi = 1.0;
        while (cdf(d, hi) < p) hi *= 2.0;
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            (cdf(d, mid) < p ? lo : hi) = mid;
        }
        const double q = quantile(d, p);
        EXPECT_NEAR(q, 0.5 * (lo + hi), 1e-9 * std::max(1.0, q));
        EXPECT_NEAR(cdf(d, q), p, 1e-10);
    }
}

TEST(Sample, Degenerate) {
    for (double x : sample({1.0, 0.0, 1.0}, 3, 1000)) EXPECT_EQ(x, 0.0);
    for (double x : sample({0.0, 0.0, 1.0}, 3, 1000)) EXPECT_GT(x, 0.0);
}

TEST(Sample, ZeroFractionAndLogMoments) {
    const TwoPartDist d{0.4, 0.7, 0.6};
    const std::size_t n = 100000;
    const auto xs = sample(d, 4, n);
    std::vector<double> logs;
    std::size_t zeros = 0;
    for (double x : xs) {
        if (x == 0.0) ++zeros;
        else logs.push_back(std::log(x));
    }
    const double se = std::sqrt(0.4 * 0.6 / static_cast<double>(n));
    EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(n), 0.4, 3.0 * se);
    EXPECT_NEAR(mean_of(logs), 0.7, 0.01);
    EXPECT_NEAR(sd_of(logs), 0.6, 0.01);
    EXPECT_EQ(sample(d, 4, 10), sample(d, 4, 10));
}

TEST(Crps, PointMassAtZero) {
    EXPECT_NEAR(crps({1.0, 0.0, 1.0}, 2.0), 2.0, 1e-8);
    EXPECT_EQ(crps({1.0, 0.0, 1.0}, 0.0), 0.0);
    EXPECT_EQ(crps_point(1.5, 4.0), 2.5);
}

TEST(Crps, NarrowLogNormalApproachesPointMass) {
    for (double m : {0.5, 2.0, 10.0}) {
        const TwoPartDist d{0.0, std::log(m), 1e-3};
        for (double y : {0.0, 1.0, 7.5}) EXPECT_NEAR(crps(d, y), std::abs(y - m), 2e-3 * m);
    }
}

TEST(Crps, PointMassLimitFarFromMedian) {
    for (double m : {0.5, 3.0})
        for (double y : {0.0, 1.0, 10.0, 1e4}) EXPECT_NEAR(crps({0.0, std::log(m), 1e-9}, y), std::abs(y - m), 1e-8);
}

TEST(Crps, MatchesMonteCarloReferenceCase) {
    const TwoPartDist d{0.3, 0.5, 0.8};
    const auto mc = mc_crps(d, 1.7, 1000000, 10);
    EXPECT_NEAR(crps(d, 1.7), mc.value, 3.0 * mc.se);
}

TEST(Crps, NonNegativeAndPositiveForSpread) {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const TwoPartDist d{uniform01(rng), 2.0 * standard_normal(rng), 0.05 + 2.5 * uniform01(rng)};
        const double y = uniform01(rng) < 0.3 ? 0.0 : std::exp(2.0 * standard_normal(rng));
        const double c = crps(d, y);
        EXPECT_GE(c, 0.0);
        if (d.pi0 < 0.999) {
            EXPECT_GT(c, 0.0);
        }
    }
}

TEST(Crps, ProprietySmoke) {
    const TwoPartDist truth{0.4, 0.3, 0.9};
    const auto ys = sample(truth, 6, 4000);
    auto expected = [&](const TwoPartDist& d) {
        double s = 0.0;
        for (double y : ys) s += crps(d, y);
        return s / static_cast<double>(ys.size());
    };
    const double best = expected(truth);
    for (const TwoPartDist& alt : {TwoPartDist{0.25, 0.3, 0.9}, TwoPartDist{0.55, 0.3, 0.9}, TwoPartDist{0.4, -0.2, 0.9},
                                   TwoPartDist{0.4, 0.8, 0.9}, TwoPartDist{0.4, 0.3, 0.5}, TwoPartDist{0.4, 0.3, 1.5}})
        EXPECT_LT(best, expected(alt));
}

TEST(Nll, Values) {
    EXPECT_EQ(negative_log_likelihood({1.0, 0.0, 1.0}, 0.0), 0.0);
    EXPECT_NEAR(negative_log_likelihood({0.5, 0.0, 1.0}, 0.0), std::log(2.0), 1e-15);
    EXPECT_NEAR(mean({0.0, 0.0, 1.0}), std::exp(0.5), 1e-15);
}
