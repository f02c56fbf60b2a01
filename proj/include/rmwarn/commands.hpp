#pragma once

// Command implementations behind the rmwarn executable. Each command reads
// a RunConfig, writes its outputs under an output directory, and returns the
// in-memory result for tests.

#include "rmwarn/checkpoint.hpp"
#include "rmwarn/config.hpp"
#include "rmwarn/detector.hpp"
#include "rmwarn/features.hpp"
#include "rmwarn/forecast_dist.hpp"
#include "rmwarn/rnn.hpp"
#include "rmwarn/synth.hpp"
#include "rmwarn/timeseries.hpp"
#include "rmwarn/verification.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rmwarn {

namespace fs = std::filesystem;

inline std::string csv_number(double v) { return std::isnan(v) ? "NA" : format_double(v); }

inline std::ofstream open_output(const fs::path& path) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// Data preparation

struct Prepared {
    MeteoSeries raw;
    MeteoSeries standardized;
    ChannelStats stats;
    SplitSpec split;
    NeighborhoodSet neighborhood;
    InputLayout layout;
    std::size_t target = 0;  // site index of the target in `raw`
    Eigen::MatrixXd inputs;  // input_dim x T
    Eigen::MatrixXd targets; // leads x T, raw units
};

inline SplitSpec resolve_split(const RunConfig& cfg, const MeteoSeries& series) {
    SplitSpec split;
    split.excluded_windows = cfg.exclude;
    if (cfg.train_end) {
        split.train_end = *cfg.train_end;
        split.val_end = *cfg.val_end;
    } else {
        const auto T = series.n_times();
        const auto a = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(T)));
        const auto b = static_cast<std::size_t>(std::floor((cfg.train_fraction + cfg.val_fraction) * static_cast<double>(T)));
        if (a < 2 || b <= a || b >= T) throw ConfigError("split: series too short for the configured fractions");
        split.train_end = series.times()[a - 1];
        split.val_end = series.times()[b - 1];
    }
    split.validate(series);
    return split;
}

inline std::string resolve_target(const RunConfig& cfg, const MeteoSeries& series) {
    if (!cfg.target_site.empty()) return cfg.target_site;
    if (series.n_sites() == 0) throw DataError("series has no sites");
    return series.sites().front().id;
}

// Inputs for an arbitrary series using already-fitted statistics.
inline Eigen::MatrixXd inputs_for(const RunConfig& cfg, const MeteoSeries& raw, const ChannelStats& stats, InputLayout* layout_out = nullptr) {
    const auto standardized = apply_stats(raw, stats);
    const auto nb = build_neighborhood(raw, resolve_target(cfg, raw), cfg.radius_km);
    const auto layout = make_layout(raw, nb, cfg.channels);
    if (layout_out) *layout_out = layout;
    return build_inputs(standardized, nb, layout);
}

inline Prepared prepare(const RunConfig& cfg, MeteoSeries raw) {
    Prepared p;
    p.raw = std::move(raw);
    p.raw.validate();
    p.split = resolve_split(cfg, p.raw);
    std::tie(p.standardized, p.stats) = standardize(p.raw, p.split);
    p.neighborhood = build_neighborhood(p.raw, resolve_target(cfg, p.raw), cfg.radius_km);
    p.target = p.neighborhood.member_indices.front();
    p.layout = make_layout(p.raw, p.neighborhood, cfg.channels);
    p.inputs = build_inputs(p.standardized, p.neighborhood, p.layout);
    p.targets = build_targets(p.raw, p.target, cfg.target_channel, cfg.leads);
    return p;
}

inline Prepared prepare(const RunConfig& cfg) {
    if (cfg.data.empty()) throw ConfigError("config does not name a data file");
    if (!fs::exists(cfg.data)) throw ConfigError("data file not found: " + cfg.data);
    if (!cfg.detect_data.empty() && !fs::exists(cfg.detect_data)) throw ConfigError("detect_data file not found: " + cfg.detect_data);
    std::vector<std::string> schema = cfg.channels;
    if (std::find(schema.begin(), schema.end(), cfg.target_channel) == schema.end()) schema.push_back(cfg.target_channel);
    return prepare(cfg, load_series(cfg.data, schema));
}

inline std::size_t count_through(const std::vector<TimePoint>& times, TimePoint t) {
    return static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
}

// Training-fold columns; targets whose issue or verification time leaves the
// training fold are masked.
inline TrainData training_data(const Prepared& p, const RunConfig& cfg) {
    const auto& times = p.raw.times();
    const auto n = count_through(times, p.split.train_end);
    TrainData d{p.inputs.leftCols(static_cast<Eigen::Index>(n)), p.targets.leftCols(static_cast<Eigen::Index>(n))};
    for (std::size_t l = 0; l < cfg.leads.size(); ++l)
        for (std::size_t t = 0; t < n; ++t) {
            const auto v = t + static_cast<std::size_t>(cfg.leads[l]);
            if (!p.split.in_train(times[t]) || v >= n || !p.split.in_train(times[v]))
                d.targets(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t)) = kNaN;
        }
    return d;
}

inline ModelShape model_shape(const RunConfig& cfg, int input_dim) {
    ModelShape s;
    s.cell = cfg.cell;
    s.input_dim = input_dim;
    s.hidden_dim = cfg.hidden_dim;
    s.head_hidden = cfg.head_hidden;
    s.leads = cfg.leads;
    return s;
}

inline TrainResult fit_model(const RunConfig& cfg, const TrainData& data, std::uint64_t seed) {
    auto model = RmModel::initialized(model_shape(cfg, static_cast<int>(data.inputs.rows())), seed);
    init_output_bias(model, data.targets);
    auto tc = cfg.train;
    tc.seed = seed;
    return train(std::move(model), data, tc);
}

// ---------------------------------------------------------------------------
// synth

inline Injected cmd_synth(const RunConfig& cfg, const fs::path& out) {
    validate(cfg);
    Injected result;
    if (cfg.change) {
        result = inject(cfg.synth, *cfg.change);
    } else {
        result.series = gen_climatology(cfg.synth);
    }
    auto data = open_output(out / "series.csv");
    write_series(data, result.series);
    auto manifest = open_output(out / "manifest.txt");
    write_manifest(manifest, cfg.synth, cfg.change ? &result : nullptr);
    return result;
}

// ---------------------------------------------------------------------------
// train

inline void write_loss_log(std::ostream& out, const std::vector<EpochLog>& log) {
    out << "epoch,L_task,L_RM,lambda\n";
    for (const auto& e : log)
        out << e.epoch << ',' << format_double(e.task) << ',' << format_double(e.rm) << ',' << format_double(e.lambda) << '\n';
}

inline TrainResult cmd_train(const RunConfig& cfg, const fs::path& out) {
    validate(cfg);
    const auto p = prepare(cfg);
    auto result = fit_model(cfg, training_data(p, cfg), cfg.seed);
    fs::create_directories(out);
    save_checkpoint((out / "model.ckpt").string(), result.model);
    auto log = open_output(out / "loss_log.csv");
    write_loss_log(log, result.log);
    return result;
}

// ---------------------------------------------------------------------------
// calibrate

struct Calibration {
    NullCalibration null;
    SrThreshold threshold;
};

inline void write_calibration(const fs::path& dir, const Calibration& c) {
    auto rep = open_output(dir / "calibration.csv");
    const auto& t = c.threshold;
    rep << "target_arl0,B_star,ci_lo,ci_hi,n_boot,seed\n";
    rep << format_double(t.target_arl0) << ',' << format_double(t.b_star) << ',' << format_double(t.ci_lo) << ','
        << format_double(t.ci_hi) << ',' << t.n_boot << ',' << t.seed << '\n';
    auto null = open_output(dir / "null.csv");
    null << "month,mu0,sigma0,psi0,eta\n";
    auto row = [&](int m, const NullStats& s) {
        null << m << ',' << format_double(s.mu0) << ',' << format_double(s.sigma0) << ',' << format_double(s.psi0) << ','
             << format_double(c.null.eta) << '\n';
    };
    row(0, c.null.global);
    if (c.null.monthly)
        for (int m = 1; m <= 12; ++m) row(m, c.null.by_month[static_cast<std::size_t>(m - 1)]);
}

// `path` is the calibration.csv written by cmd_calibrate; null.csv sits beside it.
inline Calibration read_calibration(const fs::path& path) {
    Calibration c;
    auto read_rows = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw DataError("cannot open " + p.string());
        std::string line;
        std::getline(in, line);
        std::vector<std::vector<std::string>> rows;
        while (std::getline(in, line))
            if (!line.empty()) rows.push_back(split_csv_line(line));
        return rows;
    };
    auto num = [](const std::string& s) {
        const auto v = parse_double(s);
        if (!v) throw ParseError(0, "calibration: bad number '" + s + "'");
        return *v;
    };
    const auto rep = read_rows(path);
    if (rep.size() != 1 || rep[0].size() != 6) throw SchemaError("calibration.csv: expected one row of six fields");
    c.threshold.target_arl0 = num(rep[0][0]);
    c.threshold.b_star = num(rep[0][1]);
    c.threshold.ci_lo = num(rep[0][2]);
    c.threshold.ci_hi = num(rep[0][3]);
    c.threshold.n_boot = static_cast<int>(num(rep[0][4]));
    c.threshold.seed = std::stoull(rep[0][5]);
    const auto null = read_rows(path.parent_path() / "null.csv");
    if (null.empty()) throw SchemaError("null.csv: no rows");
    for (const auto& r : null) {
        if (r.size() != 5) throw SchemaError("null.csv: expected five fields");
        const int m = static_cast<int>(num(r[0]));
        const NullStats s{num(r[1]), num(r[2]), num(r[3])};
        c.null.eta = num(r[4]);
        if (m == 0) c.null.global = s;
        else if (m >= 1 && m <= 12) {
            c.null.monthly = true;
            c.null.by_month[static_cast<std::size_t>(m - 1)] = s;
        } else throw SchemaError("null.csv: bad month");
    }
    return c;
}

inline DefectSeries model_defects(const RmModel& model, const Eigen::MatrixXd& inputs, const std::vector<TimePoint>& times) {
    const auto fwd = forward_pass(model, inputs);
    return defect_series(fwd.trajectory, model, times);
}

// Defects whose input step and availability step both fall in the validation fold.
inline DefectSeries validation_defects(const Prepared& p, const RmModel& model) {
    const auto defects = model_defects(model, p.inputs, p.raw.times());
    DefectSeries val;
    for (std::size_t i = 0; i < defects.r.size(); ++i)
        if (p.split.in_val(defects.times[i]) && p.split.in_val(p.raw.times()[i])) {
            val.r.push_back(defects.r[i]);
            val.times.push_back(defects.times[i]);
        }
    return val;
}

// Null statistics come from the validation fold; the SR threshold is
// calibrated on block-bootstrapped validation Lambda paths.
inline Calibration calibrate_model(const RunConfig& cfg, const Prepared& p, const RmModel& model) {
    const auto val = validation_defects(p, model);
    Calibration c;
    c.null = estimate_null(val, cfg.eta, cfg.monthly_null);
    BlockBootstrapSource source(lambda_path(val, c.null), static_cast<std::size_t>(cfg.block_len));
    c.threshold = calibrate_threshold(source, cfg.target_arl0, cfg.n_boot, cfg.seed);
    return c;
}

inline Calibration cmd_calibrate(const RunConfig& cfg, const RmModel& model, const fs::path& out) {
    validate(cfg);
    const auto p = prepare(cfg);
    auto c = calibrate_model(cfg, p, model);
    write_calibration(out, c);
    return c;
}

// ---------------------------------------------------------------------------
// detect

struct DetectResult {
    std::vector<TimePoint> times;  // defect availability times within the detection range
    std::vector<double> r;
    AlarmTrace trace;
};

inline DetectResult cmd_detect(const RunConfig& cfg, const RmModel& model, const Calibration& cal, const fs::path& out) {
    validate(cfg);
    const auto p = prepare(cfg);
    MeteoSeries series;
    Eigen::MatrixXd inputs;
    std::size_t first = 0;  // first defect index fed to the detector
    if (cfg.detect_data.empty()) {
        series = p.raw;
        inputs = p.inputs;
        first = count_through(series.times(), p.split.val_end) - 1;
    } else {
        std::vector<std::string> schema = cfg.channels;
        if (std::find(schema.begin(), schema.end(), cfg.target_channel) == schema.end()) schema.push_back(cfg.target_channel);
        series = load_series(cfg.detect_data, schema);
        series.validate();
        inputs = inputs_for(cfg, series, p.stats);
    }
    if (inputs.rows() != model.input_dim()) throw DataError("detect: input layout does not match the checkpoint");
    const auto defects = model_defects(model, inputs, series.times());
    DetectResult res;
    DefectSeries window;
    for (std::size_t i = first; i < defects.r.size(); ++i) {
        window.r.push_back(defects.r[i]);
        window.times.push_back(defects.times[i]);
    }
    const auto lambda = lambda_path(window, cal.null);
    res.trace = sr_run(lambda, cal.threshold.b_star, {true, static_cast<std::size_t>(cfg.detection_window)});
    res.times = window.times;
    res.r = window.r;

    auto trace = open_output(out / "trace.csv");
    trace << "time,r_t,R_t,B\n";
    for (std::size_t i = 0; i < res.r.size(); ++i)
        trace << format_time(res.times[i]) << ',' << format_double(res.r[i]) << ',' << format_double(res.trace.statistic[i]) << ','
              << format_double(cal.threshold.b_star) << '\n';
    auto alarms = open_output(out / "alarms.csv");
    alarms << "detector,time,statistic,threshold,event_kind\n";
    for (auto a : res.trace.alarms)
        alarms << "sr," << format_time(res.times[a]) << ',' << format_double(res.trace.statistic[a]) << ','
               << format_double(cal.threshold.b_star) << ',' << cfg.event_kind << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// evaluate

struct MetricValue {
    std::string metric;
    int lead = 0;
    std::string model;
    double value = 0.0;
};

struct MetricSummary {
    std::string metric;
    int lead = 0;
    std::string model;
    double mean = 0.0;
    double sd = 0.0;
    int n = 0;
};

inline void write_metrics(std::ostream& out, const std::vector<MetricSummary>& rows) {
    out << "metric,lead,model,mean,sd,n_replications\n";
    for (const auto& r : rows)
        out << r.metric << ',' << r.lead << ',' << r.model << ',' << csv_number(r.mean) << ',' << csv_number(r.sd) << ',' << r.n << '\n';
}

// Two-part fit to the target-site training climatology.
inline TwoPartDist climatology_dist(const Eigen::MatrixXd& train_targets, int lead_row) {
    std::vector<double> logs;
    std::size_t dry = 0, n = 0;
    for (Eigen::Index t = 0; t < train_targets.cols(); ++t) {
        const double y = train_targets(lead_row, t);
        if (std::isnan(y)) continue;
        ++n;
        if (y <= 0.0) ++dry;
        else logs.push_back(std::log(y));
    }
    if (n == 0 || logs.size() < 2) throw EmptyBatchError("climatology: too few training targets");
    return {static_cast<double>(dry) / static_cast<double>(n), mean_of(logs), std::max(sd_of(logs), 1e-3)};
}

inline void add_event_scores(std::vector<MetricValue>& out, const std::string& model, int lead, double thr,
                             const std::vector<double>& prob, const std::vector<double>& obs) {
    const std::string tag = format_double(thr);
    out.push_back({"brier_" + tag, lead, model, brier(prob, obs, thr)});
    std::vector<bool> fb, ob;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (std::isnan(prob[i]) || std::isnan(obs[i])) continue;
        fb.push_back(prob[i] > 0.5);
        ob.push_back(obs[i] > thr);
    }
    const auto pf = pod_far(fb, ob);
    out.push_back({"pod_" + tag, lead, model, pf.pod.value_or(kNaN)});
    out.push_back({"far_" + tag, lead, model, pf.far.value_or(kNaN)});
}

// Test-fold forecast scores for the model, persistence and climatology.
inline std::vector<MetricValue> forecast_metrics(const RunConfig& cfg, const Prepared& p, const RmModel& model,
                                                 const Eigen::MatrixXd& train_targets) {
    const auto& times = p.raw.times();
    const auto fwd = forward_pass(model, p.inputs);
    const auto T = times.size();
    const auto target_c = p.raw.channel_index(cfg.target_channel);
    std::vector<MetricValue> out;
    for (std::size_t l = 0; l < cfg.leads.size(); ++l) {
        const int lead = cfg.leads[l];
        const auto clim = climatology_dist(train_targets, static_cast<int>(l));
        std::vector<double> obs, m_mean, m_pt, pers, clim_mean, m_crps, p_crps, c_crps;
        std::vector<std::vector<double>> m_prob(cfg.thresholds.size()), p_prob(cfg.thresholds.size()), c_prob(cfg.thresholds.size());
        for (std::size_t t = 0; t < T; ++t) {
            const auto v = t + static_cast<std::size_t>(lead);
            if (v >= T || !p.split.in_test(times[t]) || !p.split.in_test(times[v])) continue;
            const double y = p.targets(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t));
            if (std::isnan(y)) continue;
            const auto& d = fwd.dist[l][t];
            const double now = p.raw.observed(p.target, t, target_c) ? p.raw.value(p.target, t, target_c) : kNaN;
            obs.push_back(y);
            m_mean.push_back(mean(d));
            pers.push_back(now);
            clim_mean.push_back(mean(clim));
            m_crps.push_back(crps(d, y));
            p_crps.push_back(std::isnan(now) ? kNaN : crps_point(now, y));
            c_crps.push_back(crps(clim, y));
            for (std::size_t k = 0; k < cfg.thresholds.size(); ++k) {
                const double thr = cfg.thresholds[k];
                m_prob[k].push_back(exceedance(d, thr));
                p_prob[k].push_back(std::isnan(now) ? kNaN : (now > thr ? 1.0 : 0.0));
                c_prob[k].push_back(exceedance(clim, thr));
            }
        }
        if (obs.empty()) throw EmptyBatchError("evaluate: no verifiable test-fold targets");
        auto mean_skip_nan = [](const std::vector<double>& xs) {
            double s = 0.0;
            std::size_t n = 0;
            for (double x : xs)
                if (!std::isnan(x)) {
                    s += x;
                    ++n;
                }
            return n ? s / static_cast<double>(n) : kNaN;
        };
        const std::vector<std::pair<std::string, const std::vector<double>*>> point{
            {"rmrnn", &m_mean}, {"persistence", &pers}, {"climatology", &clim_mean}};
        const std::vector<const std::vector<double>*> crps_of{&m_crps, &p_crps, &c_crps};
        const std::vector<const std::vector<std::vector<double>>*> prob_of{&m_prob, &p_prob, &c_prob};
        for (std::size_t k = 0; k < point.size(); ++k) {
            const auto& name = point[k].first;
            out.push_back({"rmse", lead, name, rmse(*point[k].second, obs)});
            out.push_back({"mae", lead, name, mae(*point[k].second, obs)});
            out.push_back({"crps", lead, name, mean_skip_nan(*crps_of[k])});
            for (std::size_t j = 0; j < cfg.thresholds.size(); ++j)
                add_event_scores(out, name, lead, cfg.thresholds[j], (*prob_of[k])[j], obs);
        }
    }

    // SPI-3 error of forecast-mean accumulations (first lead), when the
    // training fold spans enough years to fit the index.
    try {
        const int lead = cfg.leads.front();
        std::vector<double> obs_path(T, kNaN), fc_path(T, kNaN);
        for (std::size_t t = 0; t < T; ++t) {
            if (p.raw.observed(p.target, t, target_c)) obs_path[t] = p.raw.value(p.target, t, target_c);
            if (t >= static_cast<std::size_t>(lead)) fc_path[t] = mean(fwd.dist[0][t - static_cast<std::size_t>(lead)]);
        }
        const auto obs_acc = rolling_sum(obs_path, 90);
        const auto fc_acc = rolling_sum(fc_path, 90);
        const auto cal = fit_spi(obs_acc, times, times.front(), p.split.train_end);
        const auto so = spi(obs_acc, times, cal, 90);
        const auto sf = spi(fc_acc, times, cal, 90);
        std::vector<double> a, b;
        for (std::size_t t = 0; t < T; ++t)
            if (p.split.in_test(times[t])) {
                a.push_back(sf.spi[t]);
                b.push_back(so.spi[t]);
            }
        out.push_back({"spi3_rmse", lead, "rmrnn", spi3_rmse(a, b)});
    } catch (const CalibrationError&) {
    } catch (const EmptyBatchError&) {
    }
    return out;
}

inline std::vector<MetricSummary> summarize(const std::vector<std::vector<MetricValue>>& runs) {
    std::vector<MetricSummary> out;
    if (runs.empty()) return out;
    for (std::size_t k = 0; k < runs.front().size(); ++k) {
        const auto& proto = runs.front()[k];
        std::vector<double> xs;
        for (const auto& run : runs) {
            if (run.size() != runs.front().size() || run[k].metric != proto.metric || run[k].model != proto.model)
                throw NumericError("replicate: metric layout differs between replications");
            if (!std::isnan(run[k].value)) xs.push_back(run[k].value);
        }
        MetricSummary s{proto.metric, proto.lead, proto.model, kNaN, kNaN, static_cast<int>(runs.size())};
        if (!xs.empty()) {
            s.mean = mean_of(xs);
            s.sd = xs.size() > 1 ? sd_of(xs) : 0.0;
        }
        out.push_back(s);
    }
    return out;
}

inline std::vector<MetricSummary> cmd_evaluate(const RunConfig& cfg, const RmModel& model, const fs::path& out) {
    validate(cfg);
    const auto p = prepare(cfg);
    const auto rows = summarize({forecast_metrics(cfg, p, model, training_data(p, cfg).targets)});
    auto f = open_output(out / "metrics.csv");
    write_metrics(f, rows);
    return rows;
}

// ---------------------------------------------------------------------------
// replicate

// Runs job(i) for i in [0, n) on `workers` threads. Results land in index
// order, so aggregation does not depend on scheduling.
template <class Result>
std::vector<Result> run_indexed(int n, int workers, const std::function<Result(int)>& job) {
    std::vector<Result> results(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                results[static_cast<std::size_t>(i)] = job(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int k = std::max(1, std::min(workers, n));
    std::vector<std::thread> pool;
    for (int w = 1; w < k; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return results;
}

// Replication i trains from seed + i on a purged-block bootstrap of the
// training fold and scores the untouched test fold.
inline std::vector<MetricValue> replicate_once(const RunConfig& cfg, const Prepared& p, const TrainData& train, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(train.inputs.cols());
    const auto train_times = std::vector<TimePoint>(p.raw.times().begin(), p.raw.times().begin() + static_cast<std::ptrdiff_t>(n));
    const auto purged = purged_mask(train_times, cfg.exclude, static_cast<std::size_t>(cfg.purge_gap));
    const auto starts = valid_block_starts(purged, static_cast<std::size_t>(cfg.block_len));
    if (starts.empty()) throw ConfigError("replicate: no valid bootstrap block in the training fold");
    Rng rng(mix_seed(seed, 0xB007));
    TrainData boot{Eigen::MatrixXd(train.inputs.rows(), static_cast<Eigen::Index>(n)),
                   Eigen::MatrixXd(train.targets.rows(), static_cast<Eigen::Index>(n))};
    for (std::size_t t = 0; t < n;) {
        const auto s = starts[uniform_index(rng, starts.size())];
        for (std::size_t j = 0; j < static_cast<std::size_t>(cfg.block_len) && t < n; ++j, ++t) {
            const auto src = static_cast<Eigen::Index>((s + j) % n);
            boot.inputs.col(static_cast<Eigen::Index>(t)) = train.inputs.col(src);
            boot.targets.col(static_cast<Eigen::Index>(t)) = train.targets.col(src);
        }
    }
    const auto fitted = fit_model(cfg, boot, seed);
    return forecast_metrics(cfg, p, fitted.model, train.targets);
}

inline std::vector<MetricSummary> cmd_replicate(const RunConfig& cfg, int workers, const fs::path& out) {
    validate(cfg);
    const auto p = prepare(cfg);
    const auto train = training_data(p, cfg);
    const auto runs = run_indexed<std::vector<MetricValue>>(cfg.replications, workers, [&](int i) {
        return replicate_once(cfg, p, train, cfg.seed + static_cast<std::uint64_t>(i));
    });
    const auto rows = summarize(runs);
    auto f = open_output(out / "replicate.csv");
    write_metrics(f, rows);
    return rows;
}

}  // namespace rmwarn
