#include "rmwarn/synth.hpp"
#include "rmwarn/verification.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rmwarn;

namespace {

SynthConfig small(std::uint64_t seed, int steps = 2000) {
    SynthConfig c;
    c.seed = seed;
    c.steps = steps;
    c.n_sites = 3;
    return c;
}

// Compares every value and mask over time indices [t0, t1).
bool same_over(const MeteoSeries& a, const MeteoSeries& b, std::size_t t0, std::size_t t1) {
    for (std::size_t s = 0; s < a.n_sites(); ++s)
        for (std::size_t t = t0; t < t1; ++t)
            for (std::size_t c = 0; c < a.n_channels(); ++c)
                if (a.value(s, t, c) != b.value(s, t, c) || a.observed(s, t, c) != b.observed(s, t, c)) return false;
    return true;
}

double mean_precip(const MeteoSeries& m, std::size_t t0, std::size_t t1) {
    double s = 0.0;
    for (std::size_t t = t0; t < t1; ++t)
        for (std::size_t i = 0; i < m.n_sites(); ++i) s += m.value(i, t, 0);
    return s / static_cast<double>((t1 - t0) * m.n_sites());
}

ChangeSpec drought(int onset, double mult) {
    ChangeSpec c;
    c.kind = ChangeKind::drought;
    c.onset = onset;
    c.wet_prob_multiplier = mult;
    return c;
}

ChangeSpec flood(int onset) {
    ChangeSpec c;
    c.kind = ChangeKind::flood;
    c.onset = onset;
    return c;
}

}  // namespace

TEST(Climatology, ShapeAndSchema) {
    const auto m = gen_climatology(small(1));
    EXPECT_EQ(m.n_sites(), 3u);
    EXPECT_EQ(m.n_times(), 2000u);
    EXPECT_EQ(m.channels(), (std::vector<std::string>{"P", "T", "q", "Omega"}));
    EXPECT_EQ(m.step(), std::chrono::seconds(86400));
    EXPECT_NO_THROW(m.validate());
}

TEST(Climatology, Deterministic) {
    const auto a = gen_climatology(small(7)), b = gen_climatology(small(7)), c = gen_climatology(small(8));
    EXPECT_TRUE(same_over(a, b, 0, a.n_times()));
    EXPECT_FALSE(same_over(a, c, 0, a.n_times()));
}

TEST(Climatology, WetFractionNearConfigured) {
    auto cfg = small(2, 3653);
    cfg.n_sites = 1;
    const auto m = gen_climatology(cfg);
    std::size_t wet = 0;
    for (std::size_t t = 0; t < m.n_times(); ++t) wet += m.value(0, t, 0) > 0.0;
    // Persistence 0.7 inflates the variance of the wet fraction by (1 + rho) / (1 - rho).
    const double se = std::sqrt(0.3 * 0.7 / 3653.0 * (1.7 / 0.3));
    EXPECT_NEAR(static_cast<double>(wet) / 3653.0, 0.3, 4.0 * se);
}

TEST(Climatology, NearbySitesCorrelated) {
    const auto m = gen_climatology(small(3, 3000));
    std::vector<double> a, b;
    for (std::size_t t = 0; t < m.n_times(); ++t) {
        a.push_back(m.value(0, t, 3));
        b.push_back(m.value(1, t, 3));
    }
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) sab += (a[t] - ma) * (b[t] - mb);
    EXPECT_GT(sab / static_cast<double>(a.size() - 1) / (sd_of(a) * sd_of(b)), 0.5);
}

TEST(Climatology, SiteZeroAtCenter) {
    const auto cfg = small(1);
    const auto sites = synth_sites(cfg);
    EXPECT_EQ(sites[0].lat, cfg.center_lat);
    EXPECT_EQ(sites[0].lon, cfg.center_lon);
    for (const auto& s : sites) EXPECT_LE(great_circle_km(sites[0], s), cfg.site_spread_km + 1e-9);
}

TEST(Inject, UnitMultiplierLeavesSeriesUnchanged) {
    const auto cfg = small(4);
    const auto inj = inject(cfg, drought(500, 1.0));
    EXPECT_TRUE(same_over(inj.series, gen_climatology(cfg), 0, cfg.steps));
}

TEST(Inject, PrefixIdenticalBeforeChange) {
    const auto cfg = small(5);
    const auto clim = gen_climatology(cfg);
    EXPECT_TRUE(same_over(inject(cfg, drought(800, 0.2)).series, clim, 0, 800));
    auto f = flood(800);
    EXPECT_TRUE(same_over(inject(cfg, f).series, clim, 0, static_cast<std::size_t>(800 - f.precursor_lead)));
}

TEST(Inject, DroughtLowersPrecipitationOverSeeds) {
    int lower = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto cfg = small(100 + seed, 730);
        const auto m = inject(cfg, drought(365, 0.2)).series;
        lower += mean_precip(m, 365, 730) < mean_precip(m, 0, 365);
    }
    EXPECT_EQ(lower, 100);
}

TEST(Inject, FloodOnsetRecoveredByRule) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cfg = small(200 + seed, 1000);
        cfg.unit = StepUnit::hour;
        const auto spec = flood(600);
        const auto inj = inject(cfg, spec);
        EXPECT_GE(inj.true_onset, static_cast<std::size_t>(spec.onset - spec.precursor_lead));
        EXPECT_LE(inj.true_onset, static_cast<std::size_t>(spec.onset + spec.burst_steps - 1));
        const auto onsets = flood_onset(inj.series.path(0, 0), static_cast<std::size_t>(spec.rule_window), spec.rule_threshold);
        EXPECT_NE(std::find(onsets.begin(), onsets.end(), inj.true_onset), onsets.end());
    }
}

TEST(Inject, RejectsInvalidChange) {
    const auto cfg = small(1, 100);
    EXPECT_THROW(inject(cfg, drought(100, 0.5)), ConfigError);
    EXPECT_THROW(inject(cfg, drought(10, 0.0)), ConfigError);
    EXPECT_THROW(inject(cfg, flood(99)), ConfigError);
    EXPECT_THROW(inject(cfg, flood(2)), ConfigError);
}

TEST(Synth, RejectsInvalidConfig) {
    auto cfg = small(1);
    cfg.p_wet = 1.0;
    EXPECT_THROW(gen_climatology(cfg), ConfigError);
    cfg = small(1);
    cfg.n_sites = 0;
    EXPECT_THROW(gen_climatology(cfg), ConfigError);
}

TEST(Manifest, RecordsOnset) {
    const auto cfg = small(9, 300);
    const auto inj = inject(cfg, drought(120, 0.3));
    std::ostringstream os;
    write_manifest(os, cfg, &inj);
    EXPECT_NE(os.str().find("change = drought\n"), std::string::npos);
    EXPECT_NE(os.str().find("true_onset = 120\n"), std::string::npos);
    std::ostringstream none;
    write_manifest(none, cfg, nullptr);
    EXPECT_NE(none.str().find("change = none\n"), std::string::npos);
}
