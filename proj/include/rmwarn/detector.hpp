#pragma once

// Residual-driven Shiryaev-Roberts detection.
//
// The backward-coherence defect r_t = ||h_t - g(h_{t+1})|| is standardized
// against a null (mu0, sigma0), clipped to its positive excursion z_t, and
// turned into a pseudo-likelihood ratio Lambda_t = exp(eta z_t - psi0) whose
// null mean is one. R_t = (1 + R_{t-1}) Lambda_t alarms at the first
// R_t >= B, with B chosen by Monte Carlo so the mean null run length hits a
// target ARL0. CUSUM and raw threshold rules are provided as baselines.

#include "rmwarn/error.hpp"
#include "rmwarn/features.hpp"
#include "rmwarn/numeric.hpp"
#include "rmwarn/rnn.hpp"
#include "rmwarn/timeseries.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmwarn {

// r[t] pairs h_t with h_{t+1}; it becomes computable once h_{t+1} exists, so
// times[t] is the time of step t + 1 (one step of latency).
struct DefectSeries {
    std::vector<TimePoint> times;
    std::vector<double> r;
};

inline DefectSeries defect_series(const HiddenTrajectory& traj, const RmModel& model,
                                  std::span<const TimePoint> times = {}) {
    const Eigen::Index T = traj.length();
    if (T < 2) throw NumericError("defect_series: need at least two states");
    DefectSeries out;
    out.r.resize(static_cast<std::size_t>(T - 1));
    for (Eigen::Index t = 0; t + 1 < T; ++t)
        out.r[static_cast<std::size_t>(t)] = (traj.h.col(t) - projector_apply(model, traj.h.col(t + 1))).norm();
    if (!times.empty()) {
        if (static_cast<Eigen::Index>(times.size()) != T) throw DataError("defect_series: times misaligned");
        out.times.assign(times.begin() + 1, times.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Null calibration

struct NullStats {
    double mu0 = 0.0;
    double sigma0 = 1.0;
    double psi0 = 0.0;
};

struct NullCalibration {
    NullStats global;
    double eta = 1.0;
    bool monthly = false;
    std::array<NullStats, 12> by_month{};  // used when monthly

    const NullStats& stats_for(int month) const {
        return monthly && month >= 1 && month <= 12 ? by_month[static_cast<std::size_t>(month - 1)] : global;
    }
};

inline NullStats fit_null_stats(std::span<const double> r, double eta, std::size_t min_n) {
    if (r.size() < min_n)
        throw CalibrationError("null calibration: need at least " + std::to_string(min_n) + " defects, got " +
                               std::to_string(r.size()));
    NullStats s;
    s.mu0 = mean_of(r);
    s.sigma0 = sd_of(r);
    // Relative floor: a constant sample leaves rounding-level spread.
    if (!(s.sigma0 > 1e-12 * std::max(1.0, std::abs(s.mu0))) || !std::isfinite(s.sigma0))
        throw CalibrationError("null calibration: degenerate defect spread");
    std::vector<double> ez(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) ez[i] = eta * std::max(0.0, (r[i] - s.mu0) / s.sigma0);
    s.psi0 = log_sum_exp_mean(ez);
    return s;
}

// Global null needs >= 100 defects; monthly mode >= 30 per calendar month.
inline NullCalibration estimate_null(const DefectSeries& clim, double eta = 1.0, bool monthly = false) {
    NullCalibration cal;
    cal.eta = eta;
    cal.monthly = monthly;
    cal.global = fit_null_stats(clim.r, eta, 100);
    if (monthly) {
        if (clim.times.size() != clim.r.size()) throw CalibrationError("monthly null needs defect timestamps");
        std::array<std::vector<double>, 12> parts;
        for (std::size_t i = 0; i < clim.r.size(); ++i) parts[static_cast<std::size_t>(month_of(clim.times[i]) - 1)].push_back(clim.r[i]);
        for (std::size_t m = 0; m < 12; ++m) cal.by_month[m] = fit_null_stats(parts[m], eta, 30);
    }
    return cal;
}

inline double standardized_excursion(double r, const NullStats& s) { return std::max(0.0, (r - s.mu0) / s.sigma0); }

inline double likelihood_ratio(double r, const NullCalibration& cal, int month = 0) {
    const auto& s = cal.stats_for(month);
    return std::exp(cal.eta * standardized_excursion(r, s) - s.psi0);
}

inline std::vector<double> lambda_path(const DefectSeries& d, const NullCalibration& cal) {
    std::vector<double> out(d.r.size());
    const bool dated = d.times.size() == d.r.size();
    for (std::size_t i = 0; i < d.r.size(); ++i) out[i] = likelihood_ratio(d.r[i], cal, dated ? month_of(d.times[i]) : 0);
    return out;
}

// ---------------------------------------------------------------------------
// Alarm traces

struct AlarmOptions {
    bool reset_after_alarm = false;  // false: record the first passage only
    std::size_t refractory = 0;      // steps after an alarm during which no new alarm fires
};

struct AlarmTrace {
    std::string detector;
    std::vector<double> statistic;    // per step
    std::vector<std::size_t> alarms;  // 0-based step indices
    double threshold = 0.0;

    // 1-based first passage time, if any.
    std::optional<std::size_t> first_passage() const {
        if (alarms.empty()) return std::nullopt;
        return alarms.front() + 1;
    }
};

// R_0 = 0, R_t = (1 + R_{t-1}) Lambda_t, alarm at R_t >= B.
inline AlarmTrace sr_run(std::span<const double> lambda, double B, AlarmOptions opt = {}) {
    if (!(B > 0.0)) throw ConfigError("sr_run: threshold must be positive");
    AlarmTrace out{"sr", {}, {}, B};
    out.statistic.resize(lambda.size());
    double R = 0.0;
    std::size_t quiet_until = 0;
    for (std::size_t t = 0; t < lambda.size(); ++t) {
        R = (1.0 + R) * lambda[t];
        out.statistic[t] = R;
        if (R >= B && t >= quiet_until && (opt.reset_after_alarm || out.alarms.empty())) {
            out.alarms.push_back(t);
            if (opt.reset_after_alarm) {
                R = 0.0;
                quiet_until = t + 1 + opt.refractory;
            }
        }
    }
    return out;
}

enum class Direction { drought, flood };

// One-sided CUSUM. Drought direction accumulates -score - k, flood direction
// score - k. NaN scores leave S unchanged.
inline AlarmTrace cusum_run(std::span<const double> score, double k, double h, Direction dir, AlarmOptions opt = {}) {
    if (k < 0.0) throw ConfigError("cusum_run: reference k must be >= 0");
    if (!(h > 0.0)) throw ConfigError("cusum_run: threshold must be positive");
    AlarmTrace out{"cusum", {}, {}, h};
    out.statistic.resize(score.size());
    double S = 0.0;
    std::size_t quiet_until = 0;
    for (std::size_t t = 0; t < score.size(); ++t) {
        if (!std::isnan(score[t])) {
            const double x = dir == Direction::drought ? -score[t] : score[t];
            S = std::max(0.0, S + x - k);
        }
        out.statistic[t] = S;
        if (S >= h && t >= quiet_until && (opt.reset_after_alarm || out.alarms.empty())) {
            out.alarms.push_back(t);
            if (opt.reset_after_alarm) {
                S = 0.0;
                quiet_until = t + 1 + opt.refractory;
            }
        }
    }
    return out;
}

// Trailing-window accumulation rule: drought alarms when the sum falls below
// threshold, flood when it rises above.
inline AlarmTrace threshold_run(std::span<const double> precip, std::size_t window, double threshold, Direction dir,
                                AlarmOptions opt = {}) {
    AlarmTrace out{dir == Direction::drought ? "deficit" : "exceedance", rolling_sum(precip, window), {}, threshold};
    std::size_t quiet_until = 0;
    for (std::size_t t = 0; t < out.statistic.size(); ++t) {
        const double s = out.statistic[t];
        const bool fire = !std::isnan(s) && (dir == Direction::drought ? s < threshold : s > threshold);
        if (fire && t >= quiet_until && (opt.reset_after_alarm || out.alarms.empty())) {
            out.alarms.push_back(t);
            quiet_until = t + 1 + opt.refractory;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo threshold calibration

// Running maxima of per-segment statistic paths. A threshold B is first
// passed at the first index whose running max reaches B, so mean run length
// is non-decreasing in B by construction.
class FirstPassageTable {
public:
    void add(std::vector<double> running_max) { paths_.push_back(std::move(running_max)); }
    std::size_t size() const { return paths_.size(); }
    std::vector<double>& path(std::size_t i) { return paths_[i]; }
    const std::vector<double>& path(std::size_t i) const { return paths_[i]; }

    // Run length for segment i; censored segments contribute their length.
    double run_length(std::size_t i, double B) const {
        const auto& p = paths_[i];
        const auto it = std::lower_bound(p.begin(), p.end(), B);
        return static_cast<double>(it - p.begin()) + (it == p.end() ? 0.0 : 1.0);
    }
    bool censored(std::size_t i, double B) const { return paths_[i].empty() || paths_[i].back() < B; }

    // Mean run length over a multiset of segment indices.
    double arl(double B, std::span<const std::size_t> idx) const {
        double s = 0.0;
        for (auto i : idx) s += run_length(i, B);
        return s / static_cast<double>(idx.size());
    }

    std::vector<double> candidates() const {
        std::vector<double> c;
        for (const auto& p : paths_) c.insert(c.end(), p.begin(), p.end());
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
        return c;
    }

    // Largest candidate B with ARL(B) <= target (bisection over the sorted candidates).
    double solve(double target, std::span<const double> cand, std::span<const std::size_t> idx) const {
        std::size_t lo = 0, hi = cand.size();  // invariant: arl(cand[lo]) <= target, arl(cand[hi]) > target
        if (cand.empty() || arl(cand[0], idx) > target) throw CalibrationError("calibration: target below minimum run length");
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (arl(cand[mid], idx) <= target) lo = mid;
            else hi = mid;
        }
        return cand[lo];
    }

    std::vector<std::size_t> all() const {
        std::vector<std::size_t> idx(paths_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }

private:
    std::vector<std::vector<double>> paths_;
};

inline std::vector<double> running_max(std::span<const double> xs) {
    std::vector<double> out(xs.size());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isnan(xs[i])) m = std::max(m, xs[i]);
        out[i] = m;
    }
    return out;
}

struct SrThreshold {
    double b_star = 0.0;
    double target_arl0 = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int n_boot = 0;
    std::uint64_t seed = 0;
    double achieved_arl0 = 0.0;  // on the calibration sample
    std::size_t n_censored = 0;  // segments with no passage at b_star (length used as lower bound)
    bool converged = false;      // achieved ARL0 within 2% of the target
};

// Null Lambda source: circular block bootstrap over a climatology Lambda path.
class BlockBootstrapSource {
public:
    BlockBootstrapSource(std::vector<double> lambda, std::size_t block_len)
        : lambda_(std::move(lambda)), block_len_(std::min(block_len, lambda_.size())) {
        if (lambda_.empty() || block_len_ == 0) throw CalibrationError("bootstrap source: empty climatology");
    }
    void append(Rng& rng, std::vector<double>& out, std::size_t count) const {
        while (count > 0) {
            const std::size_t s = uniform_index(rng, lambda_.size());
            for (std::size_t j = 0; j < block_len_ && count > 0; ++j, --count) out.push_back(lambda_[(s + j) % lambda_.size()]);
        }
    }

private:
    std::vector<double> lambda_;
    std::size_t block_len_;
};

// Any callable-backed source, e.g. an iid generator in tests.
template <class F>
struct FunctionSource {
    F draw;  // double(Rng&)
    void append(Rng& rng, std::vector<double>& out, std::size_t count) const {
        for (std::size_t i = 0; i < count; ++i) out.push_back(draw(rng));
    }
};

struct CalibrationOptions {
    std::size_t initial_length = 0;  // 0: 3 * target
    double max_length_factor = 50.0; // segments stop extending at this multiple of the target
    double max_censored_fraction = 0.05;
    int n_ci = -1;                   // CI resamples; -1: n_boot
};

// Chooses B* so that the mean first-passage time of the SR statistic over
// n_boot null segments matches target_arl0. Segments whose statistic has not
// reached the current candidate are extended by further draws from the
// source. The 95% interval is a percentile bootstrap over segment resamples.
template <class Source>
SrThreshold calibrate_threshold(const Source& source, double target_arl0, int n_boot, std::uint64_t seed,
                                CalibrationOptions opt = {}) {
    if (n_boot < 100) throw ConfigError("calibrate_threshold: n_boot must be >= 100");
    if (!(target_arl0 >= 1.0)) throw ConfigError("calibrate_threshold: target ARL0 must be >= 1");
    const std::size_t chunk = opt.initial_length ? opt.initial_length : static_cast<std::size_t>(std::ceil(3.0 * target_arl0));
    const auto max_len = static_cast<std::size_t>(std::ceil(opt.max_length_factor * target_arl0));

    struct Segment {
        Rng rng;
        double R = 0.0;
        double max = -std::numeric_limits<double>::infinity();
    };
    std::vector<Segment> segs;
    FirstPassageTable table;
    std::vector<double> buf;
    auto extend = [&](std::size_t i, std::size_t count) {
        buf.clear();
        source.append(segs[i].rng, buf, count);
        auto& p = table.path(i);
        for (double lam : buf) {
            segs[i].R = (1.0 + segs[i].R) * lam;
            segs[i].max = std::max(segs[i].max, segs[i].R);
            p.push_back(segs[i].max);
        }
    };
    for (int i = 0; i < n_boot; ++i) {
        segs.push_back({Rng(mix_seed(seed, static_cast<std::uint64_t>(i))), 0.0, -std::numeric_limits<double>::infinity()});
        table.add({});
        extend(static_cast<std::size_t>(i), chunk);
    }

    const auto idx = table.all();
    double b_star = 0.0;
    while (true) {
        const auto cand = table.candidates();
        b_star = table.solve(target_arl0, cand, idx);
        // The passage at the next candidate must also be observed for b_star to be exact.
        const auto next = std::upper_bound(cand.begin(), cand.end(), b_star);
        const double probe = next == cand.end() ? b_star : *next;
        bool extended = false;
        for (std::size_t i = 0; i < segs.size(); ++i)
            if (table.censored(i, probe) && table.path(i).size() < max_len) {
                extend(i, std::min(chunk, max_len - table.path(i).size()));
                extended = true;
            }
        if (!extended) break;
    }

    SrThreshold out;
    // ARL0(B) is a step function; when ties leave no candidate within 2%,
    // take the bracketing candidate nearer the target.
    const auto cand = table.candidates();
    if (const auto next = std::upper_bound(cand.begin(), cand.end(), b_star); next != cand.end()) {
        const double below = target_arl0 - table.arl(b_star, idx);
        if (below / target_arl0 > 0.02 && table.arl(*next, idx) - target_arl0 < below) b_star = *next;
    }
    out.b_star = b_star;
    out.target_arl0 = target_arl0;
    out.n_boot = n_boot;
    out.seed = seed;
    out.achieved_arl0 = table.arl(b_star, idx);
    out.converged = std::abs(out.achieved_arl0 - target_arl0) / target_arl0 <= 0.02;
    for (std::size_t i = 0; i < segs.size(); ++i) out.n_censored += table.censored(i, b_star) ? 1 : 0;
    if (static_cast<double>(out.n_censored) > opt.max_censored_fraction * static_cast<double>(segs.size()))
        throw CalibrationError("calibration: too many censored segments; the null segments are too short for this target");

    const int n_ci = opt.n_ci < 0 ? n_boot : opt.n_ci;
    std::vector<double> reps;
    Rng ci_rng(mix_seed(seed, 0xC1C1C1C1ULL));
    std::vector<std::size_t> resample(segs.size());
    for (int b = 0; b < n_ci; ++b) {
        for (auto& r : resample) r = uniform_index(ci_rng, segs.size());
        try {
            reps.push_back(table.solve(target_arl0, cand, resample));
        } catch (const CalibrationError&) {
            reps.push_back(cand.front());
        }
    }
    if (!reps.empty()) {
        out.ci_lo = std::min(b_star, empirical_quantile(reps, 0.025));
        out.ci_hi = std::max(b_star, empirical_quantile(reps, 0.975));
    } else {
        out.ci_lo = out.ci_hi = b_star;
    }
    return out;
}

// Calibrates a first-passage threshold on fixed score paths (alarm when
// score >= B). Used for the CUSUM and accumulation baselines.
inline double calibrate_first_passage(const std::vector<std::vector<double>>& score_paths, double target_arl0) {
    FirstPassageTable table;
    for (const auto& p : score_paths) table.add(running_max(p));
    const auto cand = table.candidates();
    std::vector<double> finite;
    for (double c : cand)
        if (std::isfinite(c)) finite.push_back(c);
    return table.solve(target_arl0, finite, table.all());
}

// ---------------------------------------------------------------------------
// Detector evaluation

struct DetectorReport {
    double arl0 = 0.0;            // mean first passage over null segments
    bool arl0_censored = false;   // at least one null segment had no alarm
    std::size_t n_null_censored = 0;
    double detection_rate = 0.0;
    std::optional<double> mean_lead;  // onset - alarm, averaged over detections
    std::optional<double> far;        // false alarms / total alarms
    double miss_rate = 1.0;
    std::size_t n_events = 0;
    std::size_t n_detected = 0;
    std::size_t n_alarms = 0;
    std::size_t n_false_alarms = 0;
    std::vector<std::optional<long>> leads;  // per event
};

// Event traces are paired with reference onsets (same time base as each
// trace). An alarm within +/- window of the onset detects it; the earliest
// such alarm sets the lead. FAR is null-trace alarms over all alarms.
inline DetectorReport evaluate_detector(std::span<const AlarmTrace> event_traces, std::span<const std::size_t> onsets,
                                        std::span<const AlarmTrace> null_traces, std::size_t window) {
    if (event_traces.size() != onsets.size()) throw DataError("evaluate_detector: traces and onsets misaligned");
    if (event_traces.empty()) throw DataError("evaluate_detector: no events to evaluate");
    DetectorReport rep;
    rep.n_events = event_traces.size();
    double lead_sum = 0.0;
    for (std::size_t e = 0; e < event_traces.size(); ++e) {
        const auto onset = static_cast<long>(onsets[e]);
        std::optional<long> lead;
        for (auto a : event_traces[e].alarms) {
            ++rep.n_alarms;
            const long diff = onset - static_cast<long>(a);
            if (std::abs(diff) <= static_cast<long>(window) && !lead) lead = diff;
        }
        rep.leads.push_back(lead);
        if (lead) {
            ++rep.n_detected;
            lead_sum += static_cast<double>(*lead);
        }
    }
    double run_sum = 0.0;
    for (const auto& tr : null_traces) {
        rep.n_alarms += tr.alarms.size();
        rep.n_false_alarms += tr.alarms.size();
        if (auto fp = tr.first_passage()) {
            run_sum += static_cast<double>(*fp);
        } else {
            run_sum += static_cast<double>(tr.statistic.size());
            ++rep.n_null_censored;
        }
    }
    rep.arl0 = null_traces.empty() ? kNaN : run_sum / static_cast<double>(null_traces.size());
    rep.arl0_censored = rep.n_null_censored > 0;
    rep.detection_rate = static_cast<double>(rep.n_detected) / static_cast<double>(rep.n_events);
    rep.miss_rate = 1.0 - rep.detection_rate;
    if (rep.n_detected) rep.mean_lead = lead_sum / static_cast<double>(rep.n_detected);
    if (rep.n_alarms) rep.far = static_cast<double>(rep.n_false_alarms) / static_cast<double>(rep.n_alarms);
    return rep;
}

// ---------------------------------------------------------------------------
// Leave-one-channel-out attribution

// Fractional reduction of the peak defect within [from, to) when the given
// input rows are replaced by their climatological mean (zero after
// standardization) over the whole input sequence.
inline double ablate_rows(const RmModel& model, const Eigen::MatrixXd& inputs, std::span<const Eigen::Index> rows,
                          std::size_t from, std::size_t to) {
    auto peak = [&](const Eigen::MatrixXd& x) {
        const auto d = defect_series(forward_pass(model, x).trajectory, model);
        double p = 0.0;
        for (std::size_t t = from; t < std::min(to, d.r.size()); ++t) p = std::max(p, d.r[t]);
        return p;
    };
    const double base = peak(inputs);
    Eigen::MatrixXd ablated = inputs;
    for (auto r : rows) {
        if (r < 0 || r >= inputs.rows()) throw LookupError("ablate: input row out of range");
        ablated.row(r).setZero();
    }
    if (!(base > 0.0)) return 0.0;
    return (base - peak(ablated)) / base;
}

inline double ablate_channel(const RmModel& model, const Eigen::MatrixXd& inputs, const InputLayout& layout,
                             const std::string& channel, std::size_t from, std::size_t to) {
    const auto rows = layout.value_rows(channel);
    return ablate_rows(model, inputs, rows, from, to);
}

}  // namespace rmwarn
