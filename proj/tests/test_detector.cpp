#include "rmwarn/detector.hpp"
#include "rmwarn/experiment.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rmwarn;

namespace {

DefectSeries defects(std::vector<double> r) {
    DefectSeries d;
    d.r = std::move(r);
    return d;
}

std::vector<double> half_normal(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> r(n);
    for (auto& x : r) x = std::abs(standard_normal(rng));
    return r;
}

// R_t computed directly as sum_{k<=t} prod_{j=k..t} Lambda_j.
std::vector<double> sr_by_products(const std::vector<double>& lam) {
    std::vector<double> out(lam.size());
    for (std::size_t t = 0; t < lam.size(); ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k <= t; ++k) {
            double p = 1.0;
            for (std::size_t j = k; j <= t; ++j) p *= lam[j];
            s += p;
        }
        out[t] = s;
    }
    return out;
}

}  // namespace

TEST(Defect, ZeroTrajectoryGivesZeroDefect) {
    const auto m = RmModel::initialized({CellKind::elman, 1, 3, 2, {1}}, 1);
    HiddenTrajectory traj{Eigen::MatrixXd::Zero(3, 6)};
    const auto d = defect_series(traj, m);
    ASSERT_EQ(d.r.size(), 5u);
    for (double r : d.r) EXPECT_EQ(r, 0.0);
}

TEST(Defect, IdentityProjectorHandCase) {
    const auto m = RmModel::initialized({CellKind::elman, 1, 1, 2, {1}}, 1);
    HiddenTrajectory traj{Eigen::MatrixXd(1, 2)};
    traj.h << 0.0, 3.0;
    const auto d = defect_series(traj, m);
    EXPECT_EQ(d.r, std::vector<double>{3.0});
}

TEST(Defect, MatchesNaiveNorm) {
    auto m = RmModel::initialized({CellKind::gru, 2, 4, 2, {1}}, 2);
    Rng rng(3);
    for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] = 0.4 * standard_normal(rng);
    HiddenTrajectory traj{Eigen::MatrixXd(4, 30)};
    for (Eigen::Index i = 0; i < traj.h.size(); ++i) traj.h.data()[i] = standard_normal(rng);
    const auto d = defect_series(traj, m);
    for (Eigen::Index t = 0; t + 1 < 30; ++t) {
        const Eigen::VectorXd g = projector_apply(m, traj.h.col(t + 1));
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += (traj.h(i, t) - g[i]) * (traj.h(i, t) - g[i]);
        EXPECT_NEAR(d.r[static_cast<std::size_t>(t)], std::sqrt(s), 1e-12);
    }
}

TEST(Defect, SingleStateRejected) {
    const auto m = RmModel::initialized({CellKind::elman, 1, 2, 2, {1}}, 1);
    EXPECT_THROW(defect_series(HiddenTrajectory{Eigen::MatrixXd::Zero(2, 1)}, m), NumericError);
}

TEST(NullStats, ConstantDefectIsDegenerate) {
    EXPECT_THROW(estimate_null(defects(std::vector<double>(500, 0.7))), CalibrationError);
}

TEST(NullStats, TooFewDefects) {
    EXPECT_THROW(estimate_null(defects(half_normal(99, 1))), CalibrationError);
    EXPECT_NO_THROW(estimate_null(defects(half_normal(100, 1))));
}

TEST(NullStats, ZeroSensitivityGivesZeroNormalizer) {
    const auto cal = estimate_null(defects(half_normal(1000, 2)), 0.0);
    EXPECT_EQ(cal.global.psi0, 0.0);
    EXPECT_EQ(likelihood_ratio(10.0, cal), 1.0);
}

TEST(NullStats, NormalizerMatchesLogMeanExp) {
    const auto r = half_normal(10000, 3);
    for (double eta : {0.5, 1.0, 2.0}) {
        const auto cal = estimate_null(defects(r), eta);
        double mu = 0.0;
        for (double x : r) mu += x;
        mu /= static_cast<double>(r.size());
        double ss = 0.0;
        for (double x : r) ss += (x - mu) * (x - mu);
        const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
        double e = 0.0;
        for (double x : r) e += std::exp(eta * std::max(0.0, (x - mu) / sd));
        EXPECT_NEAR(cal.global.mu0, mu, 1e-12);
        EXPECT_NEAR(cal.global.sigma0, sd, 1e-12);
        EXPECT_NEAR(cal.global.psi0, std::log(e / static_cast<double>(r.size())), 1e-12);
    }
}

TEST(NullStats, MonthlyFitsEachCalendarMonth) {
    // The same 40 values in every month, so each month matches a direct fit of them.
    const auto base = half_normal(40, 4);
    DefectSeries d;
    for (int m = 1; m <= 12; ++m)
        for (std::size_t i = 0; i < base.size(); ++i) {
            d.r.push_back(base[i]);
            d.times.push_back(std::chrono::sys_days{std::chrono::year{2001} / m / 1} + std::chrono::days{i % 28});
        }
    const auto cal = estimate_null(d, 1.0, true);
    const auto direct = fit_null_stats(base, 1.0, 30);
    EXPECT_NEAR(cal.global.mu0, direct.mu0, 1e-12);
    for (int m = 1; m <= 12; ++m) {
        EXPECT_NEAR(cal.stats_for(m).mu0, direct.mu0, 1e-12);
        EXPECT_NEAR(cal.stats_for(m).sigma0, direct.sigma0, 1e-12);
        EXPECT_NEAR(cal.stats_for(m).psi0, direct.psi0, 1e-12);
    }
    d.times.pop_back();
    EXPECT_THROW(estimate_null(d, 1.0, true), CalibrationError);
}

TEST(LikelihoodRatio, Cases) {
    NullCalibration cal;
    cal.global = {1.0, 0.5, 0.3};
    EXPECT_NEAR(likelihood_ratio(0.2, cal), std::exp(-0.3), 1e-15);
    EXPECT_NEAR(likelihood_ratio(1.0, cal), std::exp(-0.3), 1e-15);
    cal.global = {0.0, 1.0, 0.0};
    EXPECT_NEAR(likelihood_ratio(1.0, cal), std::exp(1.0), 1e-15);
}

TEST(LikelihoodRatio, UnitMeanOnCalibrationSample) {
    const auto d = defects(half_normal(5000, 5));
    const auto cal = estimate_null(d, 1.3);
    const auto lam = lambda_path(d, cal);
    double s = 0.0;
    for (double l : lam) s += l;
    EXPECT_NEAR(s / static_cast<double>(lam.size()), 1.0, 1e-12);
}

TEST(ShiryaevRoberts, UnitRatioCountsSteps) {
    const std::vector<double> lam(20, 1.0);
    const auto tr = sr_run(lam, 7.5);
    for (std::size_t t = 0; t < lam.size(); ++t) EXPECT_EQ(tr.statistic[t], static_cast<double>(t + 1));
    ASSERT_EQ(tr.alarms.size(), 1u);
    EXPECT_EQ(tr.alarms[0] + 1, 8u);  // ceil(B) steps
}

TEST(ShiryaevRoberts, HandRecursion) {
    const std::vector<double> lam{2.0, 0.5};
    const auto tr = sr_run(lam, 100.0);
    EXPECT_EQ(tr.statistic, (std::vector<double>{2.0, 1.5}));
    EXPECT_TRUE(tr.alarms.empty());
}

TEST(ShiryaevRoberts, MatchesSumOfProducts) {
    Rng rng(6);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> lam(1 + uniform_index(rng, 20));
        for (auto& l : lam) l = std::exp(0.7 * standard_normal(rng));
        const auto tr = sr_run(lam, 1e300);
        const auto ref = sr_by_products(lam);
        for (std::size_t t = 0; t < lam.size(); ++t) EXPECT_NEAR(tr.statistic[t], ref[t], 1e-10 * ref[t]);
    }
}

TEST(ShiryaevRoberts, AlarmDependsOnlyOnPrefix) {
    Rng rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> lam(60);
        for (auto& l : lam) l = std::exp(standard_normal(rng));
        const auto full = sr_run(lam, 30.0);
        if (full.alarms.empty()) continue;
        const std::size_t tau = full.alarms[0];
        std::vector<double> altered(lam.begin(), lam.begin() + static_cast<long>(tau) + 1);
        for (int k = 0; k < 10; ++k) altered.push_back(1e-3 * uniform01(rng));
        EXPECT_EQ(sr_run(altered, 30.0).alarms.front(), tau);
    }
}

TEST(ShiryaevRoberts, ResetAndRefractory) {
    const std::vector<double> lam(30, 1.0);
    const auto tr = sr_run(lam, 5.0, {true, 3});
    EXPECT_EQ(tr.alarms, (std::vector<std::size_t>{4, 9, 14, 19, 24, 29}));
    EXPECT_THROW(sr_run(lam, 0.0), ConfigError);
}

TEST(Calibration, UnitRatioHitsTarget) {
    const FunctionSource src{[](Rng&) { return 1.0; }};
    const auto th = calibrate_threshold(src, 100.0, 100, 1);
    EXPECT_GT(th.b_star, 99.0);
    EXPECT_LE(th.b_star, 100.0);
    EXPECT_TRUE(th.converged);
    const auto one = calibrate_threshold(src, 1.0, 100, 1);
    EXPECT_EQ(sr_run(std::vector<double>(5, 1.0), one.b_star).alarms.front(), 0u);
}

TEST(Calibration, ExactLikelihoodRatioOnFreshSample) {
    // Lambda ~ Exp(1) has unit mean, as an exact likelihood ratio does under the null.
    const FunctionSource src{[](Rng& r) { return -std::log1p(-uniform01(r)); }};
    const double target = 200.0;
    const auto th = calibrate_threshold(src, target, 400, 2);
    EXPECT_LE(th.ci_lo, th.b_star);
    EXPECT_GE(th.ci_hi, th.b_star);
    Rng rng(99);
    double sum = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        double R = 0.0;
        std::size_t t = 0;
        do {
            R = (1.0 + R) * -std::log1p(-uniform01(rng));
            ++t;
        } while (R < th.b_star);
        sum += static_cast<double>(t);
    }
    EXPECT_NEAR(sum / n, target, 0.1 * target);
}

TEST(Calibration, ArlNonDecreasingInThreshold) {
    Rng rng(8);
    FirstPassageTable table;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> lam(300);
        for (auto& l : lam) l = std::exp(standard_normal(rng) - 0.5);
        table.add(running_max(sr_run(lam, 1e300).statistic));
    }
    const auto idx = table.all();
    double prev = 0.0;
    for (double b : table.candidates()) {
        const double a = table.arl(b, idx);
        EXPECT_GE(a, prev);
        prev = a;
    }
}

TEST(Calibration, RejectsSmallBootstrap) {
    const FunctionSource src{[](Rng&) { return 1.0; }};
    EXPECT_THROW(calibrate_threshold(src, 100.0, 99, 1), ConfigError);
    EXPECT_THROW(calibrate_threshold(src, 0.5, 100, 1), ConfigError);
}

TEST(Calibration, Deterministic) {
    const FunctionSource src{[](Rng& r) { return std::exp(standard_normal(r) - 0.5); }};
    const auto a = calibrate_threshold(src, 50.0, 100, 3);
    const auto b = calibrate_threshold(src, 50.0, 100, 3);
    EXPECT_EQ(a.b_star, b.b_star);
    EXPECT_EQ(a.ci_lo, b.ci_lo);
    EXPECT_EQ(a.ci_hi, b.ci_hi);
}

TEST(Cusum, NeutralScoreNeverAlarms) {
    const std::vector<double> spi(500, 0.0);
    const auto tr = cusum_run(spi, 0.5, 3.0, Direction::drought);
    EXPECT_TRUE(tr.alarms.empty());
    for (double s : tr.statistic) EXPECT_EQ(s, 0.0);
}

TEST(Cusum, SteadyDeficitAlarmsAtTwiceH) {
    const std::vector<double> spi(100, -1.0);
    const auto tr = cusum_run(spi, 0.5, 4.0, Direction::drought);
    ASSERT_EQ(tr.alarms.size(), 1u);
    EXPECT_EQ(tr.alarms[0] + 1, 8u);
}

TEST(Cusum, MatchesNaive) {
    Rng rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> x(100);
        for (auto& v : x) v = standard_normal(rng) - 0.3;
        for (auto dir : {Direction::drought, Direction::flood}) {
            const auto tr = cusum_run(x, 0.25, 3.0, dir);
            double S = 0.0;
            std::optional<std::size_t> first;
            for (std::size_t t = 0; t < x.size(); ++t) {
                S = std::max(0.0, S + (dir == Direction::drought ? -x[t] : x[t]) - 0.25);
                EXPECT_NEAR(tr.statistic[t], S, 1e-12);
                if (!first && S >= 3.0) first = t + 1;
            }
            EXPECT_EQ(tr.first_passage(), first);
        }
    }
}

TEST(ThresholdRule, Cases) {
    const std::vector<double> dry(120, 0.0);
    EXPECT_EQ(threshold_run(dry, 90, 10.0, Direction::drought).first_passage(), std::optional<std::size_t>{90});
    const std::vector<double> wet(120, 1.0);
    EXPECT_FALSE(threshold_run(wet, 90, 10.0, Direction::drought).first_passage());
    std::vector<double> burst(40, 0.0);
    burst[20] = 80.0;
    EXPECT_EQ(threshold_run(burst, 24, 50.0, Direction::flood).first_passage(), std::optional<std::size_t>{24});
}

TEST(ThresholdRule, MatchesNaive) {
    Rng rng(10);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> p(150);
        for (auto& v : p) v = uniform01(rng) < 0.3 ? 10.0 * uniform01(rng) : 0.0;
        const auto tr = threshold_run(p, 10, 8.0, Direction::drought, {true, 5});
        std::vector<std::size_t> ref;
        std::size_t quiet = 0;
        for (std::size_t t = 9; t < p.size(); ++t) {
            double s = 0.0;
            for (std::size_t j = t - 9; j <= t; ++j) s += p[j];
            if (s < 8.0 && t >= quiet) {
                ref.push_back(t);
                quiet = t + 6;
            }
        }
        EXPECT_EQ(tr.alarms, ref);
    }
}

namespace {

AlarmTrace trace_with(std::vector<std::size_t> alarms, std::size_t length) {
    AlarmTrace t;
    t.alarms = std::move(alarms);
    t.statistic.assign(length, 0.0);
    return t;
}

}  // namespace

TEST(Evaluation, HandCounted) {
    const std::vector<AlarmTrace> events{trace_with({95}, 200), trace_with({10, 130}, 200), trace_with({}, 200)};
    const std::vector<std::size_t> onsets{100, 120, 100};
    const std::vector<AlarmTrace> nulls{trace_with({50}, 400), trace_with({}, 400)};
    const auto rep = evaluate_detector(events, onsets, nulls, 10);
    EXPECT_EQ(rep.n_detected, 2u);
    EXPECT_NEAR(rep.detection_rate, 2.0 / 3.0, 1e-15);
    ASSERT_TRUE(rep.mean_lead);
    EXPECT_EQ(*rep.mean_lead, (5.0 + -10.0) / 2.0);
    EXPECT_EQ(rep.n_alarms, 4u);
    ASSERT_TRUE(rep.far);
    EXPECT_EQ(*rep.far, 0.25);
    EXPECT_EQ(rep.arl0, (51.0 + 400.0) / 2.0);
    EXPECT_TRUE(rep.arl0_censored);
    EXPECT_FALSE(rep.leads[2]);
}

TEST(Evaluation, NoEventsIsDataError) {
    EXPECT_THROW(evaluate_detector({}, {}, {}, 10), DataError);
}

namespace {

struct AblationFixture {
    InputLayout layout{{"s0", "s1"}, {"P", "Omega"}};
    Eigen::MatrixXd inputs;

    AblationFixture() : inputs(8, 60) {
        Rng rng(11);
        for (Eigen::Index t = 0; t < inputs.cols(); ++t)
            for (Eigen::Index r = 0; r < inputs.rows(); ++r) inputs(r, t) = r % 2 ? 1.0 : standard_normal(rng);
    }
};

}  // namespace

TEST(Ablation, ZeroModelGivesZero) {
    AblationFixture f;
    const RmModel m({CellKind::gru, 8, 4, 2, {1}});
    EXPECT_EQ(ablate_channel(m, f.inputs, f.layout, "P", 10, 50), 0.0);
}

TEST(Ablation, UnknownChannel) {
    AblationFixture f;
    const auto m = RmModel::initialized({CellKind::gru, 8, 4, 2, {1}}, 1);
    EXPECT_THROW(ablate_channel(m, f.inputs, f.layout, "T2m", 10, 50), LookupError);
}

TEST(Ablation, DominantChannelCarriesAllSensitivity) {
    AblationFixture f;
    for (auto cell : {CellKind::elman, CellKind::gru}) {
        auto m = RmModel::initialized({cell, 8, 6, 2, {1}}, 12);
        Rng rng(13);
        for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] += 0.3 * standard_normal(rng);
        const auto dom = with_dominant_channel(m, f.layout, "Omega");
        EXPECT_EQ(ablate_channel(dom, f.inputs, f.layout, "P", 10, 50), 0.0);
        EXPECT_NE(ablate_channel(dom, f.inputs, f.layout, "Omega", 10, 50), 0.0);
    }
}
