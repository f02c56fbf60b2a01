#pragma once

// Synthetic hydrometeorology with known climatology and plantable changes.
//
// Occurrence is a regional two-state Markov chain whose stationary wet
// probability follows a seasonal cycle; wet amounts are log-normal with
// exp(-d/L) spatial correlation. Covariates:
//   T      seasonal cycle, cooler when wet
//   q      seasonal cycle plus a slow moisture store fed by rain
//   Omega  raised when wet
// each with regional AR(1) and site-level correlated noise.
//
// Changes are planted inside the generator: every random stream draws the
// same number of values per step regardless of state, so an injected series
// is bitwise identical to the climatology before the change takes effect.

#include "rmwarn/error.hpp"
#include "rmwarn/numeric.hpp"
#include "rmwarn/timeseries.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace rmwarn {

enum class StepUnit { hour, day };

struct SynthConfig {
    int n_sites = 5;
    int steps = 5000;
    StepUnit unit = StepUnit::day;
    TimePoint start = std::chrono::sys_days{std::chrono::year{2000} / 1 / 1};
    double center_lat = 25.0;
    double center_lon = 121.5;
    double site_spread_km = 15.0;

    double seasonal_amplitude = 0.5;  // relative modulation of p_wet
    double p_wet = 0.3;
    double persistence = 0.7;          // lag-1 autocorrelation of occurrence
    double mu_w = 1.0;                 // log-mm
    double sigma_w = 1.0;
    double decorrelation_km = 20.0;

    double temp_mean = 22.0, temp_season = 6.0, temp_wet_shift = -2.0, temp_sd = 1.0;
    double q_mean = 12.0, q_season = 3.0, q_wet_shift = 3.0, q_memory = 0.9, q_sd = 0.5;
    double omega_wet_shift = 2.0, omega_sd = 1.0;
    double noise_memory = 0.5;     // AR(1) coefficient of the regional noise
    double regional_share = 0.7;   // variance share of regional vs site noise

    std::uint64_t seed = 1;

    double steps_per_year() const { return unit == StepUnit::day ? 365.25 : 365.25 * 24.0; }
    std::chrono::seconds step() const { return std::chrono::seconds(unit == StepUnit::day ? 86400 : 3600); }

    void validate() const {
        if (n_sites < 1) throw ConfigError("synth: n_sites must be >= 1");
        if (steps < 2) throw ConfigError("synth: steps must be >= 2");
        if (p_wet < 0.0 || p_wet >= 1.0) throw ConfigError("synth: p_wet must lie in [0, 1)");
        if (!(sigma_w > 0.0)) throw ConfigError("synth: sigma_w must be positive");
        if (persistence < 0.0 || persistence >= 1.0) throw ConfigError("synth: persistence must lie in [0, 1)");
        if (seasonal_amplitude < 0.0 || seasonal_amplitude >= 1.0) throw ConfigError("synth: seasonal amplitude must lie in [0, 1)");
        if (!(decorrelation_km > 0.0)) throw ConfigError("synth: decorrelation length must be positive");
        if (q_memory < 0.0 || q_memory >= 1.0 || noise_memory < 0.0 || noise_memory >= 1.0)
            throw ConfigError("synth: memory coefficients must lie in [0, 1)");
        if (regional_share < 0.0 || regional_share > 1.0) throw ConfigError("synth: regional share must lie in [0, 1]");
    }
};

enum class ChangeKind { drought, flood };

struct ChangeSpec {
    ChangeKind kind = ChangeKind::drought;
    int onset = 0;  // step index

    // drought
    double wet_prob_multiplier = 1.0;
    double wet_amount_multiplier = 1.0;  // scales the mean wet amount
    double covariate_anomaly = 0.0;      // q down, T up, in noise-sd units
    int ramp_steps = 30;

    // flood
    int burst_steps = 3;
    double burst_total_mm = 60.0;
    int precursor_lead = 4;
    double precursor_amplitude = 3.0;  // Omega and q, in noise-sd units
    int rule_window = 3;
    double rule_threshold = 50.0;

    void validate(int steps) const {
        if (onset < 0 || onset >= steps) throw ConfigError("change: onset outside the series");
        if (!(wet_prob_multiplier > 0.0) || !(wet_amount_multiplier > 0.0)) throw ConfigError("change: multipliers must be positive");
        if (ramp_steps < 1) throw ConfigError("change: ramp_steps must be >= 1");
        if (kind == ChangeKind::flood) {
            if (burst_steps < 1 || !(burst_total_mm > 0.0)) throw ConfigError("change: burst must be positive");
            if (precursor_lead < 0 || onset < precursor_lead) throw ConfigError("change: precursor starts before the series");
            if (onset + burst_steps > steps) throw ConfigError("change: burst runs past the series end");
            if (rule_window < 1) throw ConfigError("change: rule window must be >= 1");
        }
    }
};

inline std::string to_string(ChangeKind k) { return k == ChangeKind::drought ? "drought" : "flood"; }

struct Injected {
    MeteoSeries series;
    std::size_t true_onset = 0;
    ChangeSpec spec;
};

inline std::vector<Site> synth_sites(const SynthConfig& cfg) {
    // Deterministic sunflower layout: site 0 at the center.
    std::vector<Site> sites;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < cfg.n_sites; ++i) {
        const double r = cfg.n_sites > 1 ? cfg.site_spread_km * std::sqrt(static_cast<double>(i) / (cfg.n_sites - 1)) : 0.0;
        const double a = golden * i;
        const double dlat = r * std::cos(a) / 111.195;
        const double dlon = r * std::sin(a) / (111.195 * std::cos(cfg.center_lat * std::numbers::pi / 180.0));
        char id[16];
        std::snprintf(id, sizeof id, "S%02d", i + 1);
        sites.push_back({id, cfg.center_lat + dlat, cfg.center_lon + dlon});
    }
    return sites;
}

namespace detail {

inline MeteoSeries generate(const SynthConfig& cfg, const ChangeSpec* change) {
    cfg.validate();
    if (change) change->validate(cfg.steps);
    const auto sites = synth_sites(cfg);
    const int S = cfg.n_sites;
    std::vector<TimePoint> times(static_cast<std::size_t>(cfg.steps));
    for (int t = 0; t < cfg.steps; ++t) times[static_cast<std::size_t>(t)] = cfg.start + cfg.step() * t;
    MeteoSeries out(sites, times, {"P", "T", "q", "Omega"}, {"mm", "degC", "g/kg", "1e-5/s"});

    Eigen::MatrixXd corr(S, S);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) corr(i, j) = std::exp(-great_circle_km(sites[i], sites[j]) / cfg.decorrelation_km);
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(corr).matrixL();

    Rng occ(mix_seed(cfg.seed, 1)), amt(mix_seed(cfg.seed, 2)), noise(mix_seed(cfg.seed, 3));
    auto correlated = [&](Rng& rng) {
        Eigen::VectorXd e(S);
        for (int i = 0; i < S; ++i) e[i] = standard_normal(rng);
        return Eigen::VectorXd(L * e);
    };

    const bool drought = change && change->kind == ChangeKind::drought;
    const bool flood = change && change->kind == ChangeKind::flood;
    const double rho = cfg.persistence;
    const double w_reg = std::sqrt(cfg.regional_share), w_site = std::sqrt(1.0 - cfg.regional_share);
    const double ar_inno = std::sqrt(1.0 - cfg.noise_memory * cfg.noise_memory);
    bool wet = uniform01(occ) < cfg.p_wet;
    double store = wet ? cfg.q_wet_shift : 0.0;
    std::array<double, 3> regional{standard_normal(noise), standard_normal(noise), standard_normal(noise)};

    for (int t = 0; t < cfg.steps; ++t) {
        const auto tt = static_cast<std::size_t>(t);
        const double season = std::sin(2.0 * std::numbers::pi * t / cfg.steps_per_year());

        double p = std::clamp(cfg.p_wet * (1.0 + cfg.seasonal_amplitude * season), 0.0, 1.0);
        double log_amount_shift = 0.0;
        if (drought && t >= change->onset) {
            p *= change->wet_prob_multiplier;
            p = std::min(p, 1.0);
            log_amount_shift = std::log(change->wet_amount_multiplier);
        }
        const double p_stay = wet ? p + rho * (1.0 - p) : p * (1.0 - rho);
        wet = uniform01(occ) < p_stay;

        const Eigen::VectorXd za = correlated(amt);
        double burst = 0.0;
        if (flood && t >= change->onset && t < change->onset + change->burst_steps) {
            wet = true;
            burst = change->burst_total_mm / change->burst_steps;
        }
        store = cfg.q_memory * store + (1.0 - cfg.q_memory) * (wet ? cfg.q_wet_shift : 0.0);

        std::array<Eigen::VectorXd, 3> site_noise;
        for (int c = 0; c < 3; ++c) {
            regional[static_cast<std::size_t>(c)] = cfg.noise_memory * regional[static_cast<std::size_t>(c)] + ar_inno * standard_normal(noise);
            site_noise[static_cast<std::size_t>(c)] = correlated(noise);
        }

        double precursor = 0.0;
        if (flood && change->precursor_lead + change->burst_steps > 0) {
            const int first = change->onset - change->precursor_lead;
            if (t >= first && t < change->onset + change->burst_steps)
                precursor = change->precursor_amplitude *
                            std::min(1.0, static_cast<double>(t - first + 1) / std::max(1, change->precursor_lead));
        }
        double anomaly = 0.0;
        if (drought && t >= change->onset && change->covariate_anomaly != 0.0)
            anomaly = change->covariate_anomaly * std::min(1.0, static_cast<double>(t - change->onset + 1) / change->ramp_steps);

        for (int s = 0; s < S; ++s) {
            const auto ss = static_cast<std::size_t>(s);
            auto nz = [&](int c) { return w_reg * regional[static_cast<std::size_t>(c)] + w_site * site_noise[static_cast<std::size_t>(c)][s]; };
            const double P = (wet ? std::exp(cfg.mu_w + log_amount_shift + cfg.sigma_w * za[s]) : 0.0) + burst;
            double T = cfg.temp_mean + cfg.temp_season * season + (wet ? cfg.temp_wet_shift : 0.0) + cfg.temp_sd * nz(0);
            double q = cfg.q_mean + cfg.q_season * season + store + cfg.q_sd * nz(1);
            double om = (wet ? cfg.omega_wet_shift : 0.0) + cfg.omega_sd * nz(2);
            if (precursor != 0.0) {
                q += precursor * cfg.q_sd;
                om += precursor * cfg.omega_sd;
            }
            if (anomaly != 0.0) {
                q -= anomaly * cfg.q_sd;
                T += anomaly * cfg.temp_sd;
            }
            out.set(ss, tt, 0, P);
            out.set(ss, tt, 1, T);
            out.set(ss, tt, 2, q);
            out.set(ss, tt, 3, om);
        }
    }
    return out;
}

}  // namespace detail

inline MeteoSeries gen_climatology(const SynthConfig& cfg) { return detail::generate(cfg, nullptr); }

// Flood onsets follow the exceedance rule on the target (first) site,
// searched from the start of the precursor ramp.
inline Injected inject(const SynthConfig& cfg, const ChangeSpec& spec) {
    Injected out{detail::generate(cfg, &spec), static_cast<std::size_t>(spec.onset), spec};
    if (spec.kind == ChangeKind::flood) {
        const auto sums = rolling_sum(out.series.path(0, 0), static_cast<std::size_t>(spec.rule_window));
        std::size_t t = static_cast<std::size_t>(spec.onset - spec.precursor_lead);
        while (t < sums.size() && !(sums[t] > spec.rule_threshold)) ++t;
        if (t == sums.size()) throw NumericError("inject: burst does not trigger the flood rule");
        out.true_onset = t;
    }
    return out;
}

inline void write_manifest(std::ostream& out, const SynthConfig& cfg, const Injected* inj) {
    out << "seed = " << cfg.seed << '\n';
    out << "steps = " << cfg.steps << '\n';
    out << "step_unit = " << (cfg.unit == StepUnit::day ? "day" : "hour") << '\n';
    out << "n_sites = " << cfg.n_sites << '\n';
    if (!inj) {
        out << "change = none\n";
        return;
    }
    const auto& s = inj->spec;
    out << "change = " << to_string(s.kind) << '\n';
    out << "onset = " << s.onset << '\n';
    out << "true_onset = " << inj->true_onset << '\n';
    out << "true_onset_time = " << format_time(inj->series.times()[inj->true_onset]) << '\n';
    if (s.kind == ChangeKind::drought) {
        out << "wet_prob_multiplier = " << format_double(s.wet_prob_multiplier) << '\n';
        out << "wet_amount_multiplier = " << format_double(s.wet_amount_multiplier) << '\n';
        out << "covariate_anomaly = " << format_double(s.covariate_anomaly) << '\n';
        out << "ramp_steps = " << s.ramp_steps << '\n';
    } else {
        out << "burst_steps = " << s.burst_steps << '\n';
        out << "burst_total_mm = " << format_double(s.burst_total_mm) << '\n';
        out << "precursor_lead = " << s.precursor_lead << '\n';
        out << "precursor_amplitude = " << format_double(s.precursor_amplitude) << '\n';
        out << "rule_window = " << s.rule_window << '\n';
        out << "rule_threshold = " << format_double(s.rule_threshold) << '\n';
    }
}

}  // namespace rmwarn
