#pragma once

// Planted-change experiment: train on synthetic climatology, calibrate SR
// and baselines to a common ARL0 on null data, then score all detectors on
// freshly generated event segments with known change points.

#include "rmwarn/commands.hpp"
#include "rmwarn/detector.hpp"
#include "rmwarn/synth.hpp"
#include "rmwarn/verification.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rmwarn {

struct PlantedSetup {
    RunConfig run;        // model, training and detector settings; run.synth is the climatology
    ChangeSpec change;    // onset is overwritten per segment
    int spinup = 100;     // steps before detectors start (hidden-state and accumulation warm-up)
    int pre_onset = 200;  // detector steps before the change
    int post_onset = 365;
    int null_length = 0;  // 0: 4 * target ARL0
    int n_events = 100;
    int n_null = 100;     // per set; one set calibrates baselines, another measures ARL0
    int accumulation = 90;
    double cusum_k = 0.5;
    std::uint64_t seed_offset = 1'000'000;  // separates segment seeds from the training seed
};

struct SegmentSignals {
    std::vector<double> lambda;  // SR input from the detector start
    std::vector<double> precip;  // target-site P from the detector start, with spin-up history prepended
    std::vector<double> spi;     // from the detector start
    std::size_t history = 0;     // leading precip entries before the detector start
};

struct PlantedResult {
    DetectorReport sr, cusum, threshold;
    std::string threshold_name;
    double cusum_h = 0.0, threshold_value = 0.0;
    Calibration calibration;
    std::vector<std::optional<std::size_t>> reference_onsets;  // detector-relative; nullopt: no reference onset
    std::vector<bool> sr_detected, threshold_detected;
    TrainResult trained;
    Prepared prepared;
    std::vector<Eigen::MatrixXd> event_inputs;  // kept for attribution
    std::vector<std::size_t> event_change;      // change onset, absolute index in the segment
};

namespace detail {

inline std::vector<double> target_precip(const MeteoSeries& s, std::size_t site, const std::string& channel) {
    return s.path(site, s.channel_index(channel));
}

}  // namespace detail

class PlantedExperiment {
public:
    explicit PlantedExperiment(PlantedSetup setup) : s_(std::move(setup)) {}

    const PlantedSetup& setup() const { return s_; }

    SynthConfig segment_config(std::uint64_t seed, int steps) const {
        auto c = s_.run.synth;
        c.seed = seed;
        c.steps = steps;
        return c;
    }

    SegmentSignals signals(const MeteoSeries& series, const RmModel& model, const Prepared& p, const SpiCalibration* spi_cal,
                           const NullCalibration& null, Eigen::MatrixXd* inputs_out = nullptr) const {
        const auto inputs = inputs_for(s_.run, series, p.stats);
        if (inputs_out) *inputs_out = inputs;
        const auto d = model_defects(model, inputs, series.times());
        SegmentSignals out;
        const auto start = static_cast<std::size_t>(s_.spinup);
        DefectSeries tail;
        // r[i] becomes available at step i + 1.
        for (std::size_t i = start - 1; i < d.r.size(); ++i) {
            tail.r.push_back(d.r[i]);
            tail.times.push_back(d.times[i]);
        }
        out.lambda = lambda_path(tail, null);
        const auto site = series.site_index(resolve_target(s_.run, series));
        out.precip = detail::target_precip(series, site, s_.run.target_channel);
        out.history = start;
        if (spi_cal) {
            const auto acc = rolling_sum(out.precip, static_cast<std::size_t>(s_.accumulation));
            const auto full = spi(acc, series.times(), *spi_cal, s_.accumulation).spi;
            out.spi.assign(full.begin() + static_cast<std::ptrdiff_t>(start), full.end());
        }
        return out;
    }

    bool drought() const { return s_.change.kind == ChangeKind::drought; }

    struct GeneratorSource {
        const PlantedExperiment* exp;
        const RmModel* model;
        const Prepared* prepared;
        const NullCalibration* null;
        int chunk;
        void append(Rng& rng, std::vector<double>& out, std::size_t count) const {
            while (count > 0) {
                const auto seed = rng();
                const auto series = gen_climatology(exp->segment_config(seed, exp->s_.spinup + chunk));
                const auto lam = exp->signals(series, *model, *prepared, nullptr, *null).lambda;
                const auto n = std::min(count, lam.size());
                out.insert(out.end(), lam.begin(), lam.begin() + static_cast<std::ptrdiff_t>(n));
                count -= n;
            }
        }
    };

    // Detector-start-relative accumulation path (NaN during spin-up).
    std::vector<double> accumulation_path(const SegmentSignals& sig, std::size_t window) const {
        const auto acc = rolling_sum(sig.precip, window);
        return {acc.begin() + static_cast<std::ptrdiff_t>(sig.history), acc.end()};
    }

    std::size_t threshold_window() const {
        return drought() ? static_cast<std::size_t>(s_.accumulation) : static_cast<std::size_t>(s_.change.rule_window);
    }

    PlantedResult run() const {
        const auto& cfg = s_.run;
        PlantedResult res;
        const auto window = static_cast<std::size_t>(cfg.detection_window);
        const AlarmOptions opt{true, window};

        // 1. train and calibrate on the climatology
        res.prepared = prepare(cfg, gen_climatology(cfg.synth));
        const auto& p = res.prepared;
        res.trained = fit_model(cfg, training_data(p, cfg), cfg.seed);
        const auto& model = res.trained.model;
        // The generator is the null source: fresh climatology chunks, each
        // with its own spin-up, rather than a bootstrap of one validation fold.
        res.calibration.null = estimate_null(validation_defects(p, model), cfg.eta, cfg.monthly_null);
        const auto chunk = static_cast<int>(std::ceil(3.0 * cfg.target_arl0));
        const GeneratorSource source{this, &model, &p, &res.calibration.null, chunk};
        res.calibration.threshold = calibrate_threshold(source, cfg.target_arl0, cfg.n_boot, cfg.seed);
        const double B = res.calibration.threshold.b_star;

        std::optional<SpiCalibration> spi_cal;
        if (drought()) {
            const auto P = detail::target_precip(p.raw, p.target, cfg.target_channel);
            spi_cal = fit_spi(rolling_sum(P, static_cast<std::size_t>(s_.accumulation)), p.raw.times(), p.raw.times().front(),
                              p.split.train_end);
        }
        const SpiCalibration* spi_ptr = spi_cal ? &*spi_cal : nullptr;

        // 2. null segments: baseline calibration set and ARL0 evaluation set
        const int null_len = s_.null_length ? s_.null_length : static_cast<int>(std::ceil(4.0 * cfg.target_arl0));
        auto null_signals = [&](int set, int i) {
            const auto seed = cfg.seed + s_.seed_offset * static_cast<std::uint64_t>(set) + static_cast<std::uint64_t>(i);
            return signals(gen_climatology(segment_config(seed, s_.spinup + null_len)), model, p, spi_ptr, res.calibration.null);
        };
        std::vector<std::vector<double>> cusum_scores, threshold_scores;
        for (int i = 0; i < s_.n_null; ++i) {
            const auto sig = null_signals(1, i);
            if (drought()) {
                cusum_scores.push_back(cusum_run(sig.spi, s_.cusum_k, 1.0, Direction::drought).statistic);
                auto acc = accumulation_path(sig, threshold_window());
                for (auto& a : acc) a = -a;
                threshold_scores.push_back(std::move(acc));
            } else {
                std::vector<double> z(sig.precip.begin() + static_cast<std::ptrdiff_t>(sig.history), sig.precip.end());
                cusum_scores.push_back(cusum_run(z, s_.cusum_k, 1.0, Direction::flood).statistic);
                threshold_scores.push_back(accumulation_path(sig, threshold_window()));
            }
        }
        res.cusum_h = calibrate_first_passage(cusum_scores, cfg.target_arl0);
        // Deficit alarms fire on acc < c; the calibrated rule is acc <= -B, hence the nextafter.
        const double b_thr = calibrate_first_passage(threshold_scores, cfg.target_arl0);
        res.threshold_value = drought() ? std::nextafter(-b_thr, std::numeric_limits<double>::infinity())
                                        : std::nextafter(b_thr, -std::numeric_limits<double>::infinity());
        res.threshold_name = drought() ? "deficit" : "exceedance";
        if (res.cusum_h <= 0.0) res.cusum_h = std::numeric_limits<double>::min();

        auto run_all = [&](const SegmentSignals& sig, std::vector<AlarmTrace>& sr, std::vector<AlarmTrace>& cu,
                           std::vector<AlarmTrace>& th) {
            sr.push_back(sr_run(sig.lambda, B, opt));
            const Direction dir = drought() ? Direction::drought : Direction::flood;
            if (drought()) {
                cu.push_back(cusum_run(sig.spi, s_.cusum_k, res.cusum_h, dir, opt));
            } else {
                std::vector<double> z(sig.precip.begin() + static_cast<std::ptrdiff_t>(sig.history), sig.precip.end());
                cu.push_back(cusum_run(z, s_.cusum_k, res.cusum_h, dir, opt));
            }
            const auto acc = accumulation_path(sig, threshold_window());
            AlarmTrace t{res.threshold_name, acc, {}, res.threshold_value};
            std::size_t quiet = 0;
            for (std::size_t i = 0; i < acc.size(); ++i) {
                const bool fire = !std::isnan(acc[i]) && (drought() ? acc[i] < res.threshold_value : acc[i] > res.threshold_value);
                if (fire && i >= quiet) {
                    t.alarms.push_back(i);
                    quiet = i + 1 + window;
                }
            }
            th.push_back(std::move(t));
        };

        std::vector<AlarmTrace> sr_null, cu_null, th_null;
        for (int i = 0; i < s_.n_null; ++i) run_all(null_signals(2, i), sr_null, cu_null, th_null);

        // 3. events
        std::vector<AlarmTrace> sr_ev, cu_ev, th_ev;
        std::vector<std::size_t> onsets;
        const int steps = s_.spinup + s_.pre_onset + s_.post_onset;
        for (int e = 0; e < s_.n_events; ++e) {
            const auto seed = cfg.seed + 3 * s_.seed_offset + static_cast<std::uint64_t>(e);
            auto spec = s_.change;
            spec.onset = s_.spinup + s_.pre_onset;
            const auto inj = inject(segment_config(seed, steps), spec);
            Eigen::MatrixXd inputs;
            const auto sig = signals(inj.series, model, p, spi_ptr, res.calibration.null, &inputs);
            std::optional<std::size_t> ref;
            if (drought()) {
                for (std::size_t t = static_cast<std::size_t>(s_.pre_onset); t + 1 < sig.spi.size(); ++t)
                    if (sig.spi[t] < -1.0 && sig.spi[t + 1] < -1.0) {
                        ref = t;
                        break;
                    }
            } else {
                ref = inj.true_onset - static_cast<std::size_t>(s_.spinup);
            }
            res.reference_onsets.push_back(ref);
            res.event_inputs.push_back(std::move(inputs));
            res.event_change.push_back(static_cast<std::size_t>(spec.onset));
            if (!ref) continue;
            onsets.push_back(*ref);
            run_all(sig, sr_ev, cu_ev, th_ev);
        }
        if (onsets.empty()) throw DataError("planted experiment: no event produced a reference onset");
        res.sr = evaluate_detector(sr_ev, onsets, sr_null, window);
        res.cusum = evaluate_detector(cu_ev, onsets, cu_null, window);
        res.threshold = evaluate_detector(th_ev, onsets, th_null, window);
        for (const auto& l : res.sr.leads) res.sr_detected.push_back(l.has_value());
        for (const auto& l : res.threshold.leads) res.threshold_detected.push_back(l.has_value());
        return res;
    }

private:
    PlantedSetup s_;
};

// Copy of `model` whose cell sees only `channel`: input weights on every
// other channel's value rows are zeroed. Mask rows are left alone.
inline RmModel with_dominant_channel(const RmModel& model, const InputLayout& layout, const std::string& channel) {
    RmModel out = model;
    layout.value_rows(channel);
    const std::vector<Slot> inputs = model.cell_kind() == CellKind::elman ? std::vector<Slot>{Slot::Wz}
                                                                           : std::vector<Slot>{Slot::Wz, Slot::Wr, Slot::Wn};
    for (const auto& c : layout.channels) {
        if (c == channel) continue;
        for (auto row : layout.value_rows(c))
            for (auto s : inputs) out.m(s).col(row).setZero();
    }
    return out;
}

// P(deficit-only detections >= c | discordant pairs) under equal detection
// rates: exact one-sided McNemar test.
inline double mcnemar_one_sided(const std::vector<bool>& a, const std::vector<bool>& b) {
    int a_only = 0, b_only = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && !b[i]) ++a_only;
        if (!a[i] && b[i]) ++b_only;
    }
    if (a_only + b_only == 0) return 1.0;
    return binomial_upper_tail(b_only, a_only + b_only, 0.5);
}

// One-sided sign test of positive values against zero (ties dropped).
inline double sign_test_positive(const std::vector<double>& xs) {
    int pos = 0, neg = 0;
    for (double x : xs) {
        if (x > 0) ++pos;
        else if (x < 0) ++neg;
    }
    if (pos + neg == 0) return 1.0;
    return binomial_upper_tail(pos, pos + neg, 0.5);
}

inline void write_detector_report(std::ostream& out, const std::string& kind, const std::vector<std::pair<std::string, DetectorReport>>& rows) {
    out << "detector,event_kind,arl0,arl0_censored,detection_rate,mean_lead,far,miss_rate,n_events\n";
    for (const auto& [name, r] : rows)
        out << name << ',' << kind << ',' << csv_number(r.arl0) << ',' << (r.arl0_censored ? 1 : 0) << ','
            << csv_number(r.detection_rate) << ',' << csv_number(r.mean_lead.value_or(kNaN)) << ','
            << csv_number(r.far.value_or(kNaN)) << ',' << csv_number(r.miss_rate) << ',' << r.n_events << '\n';
}

}  // namespace rmwarn
