#pragma once

// Run configuration: a flat `key = value` file with `#` comments. Unknown
// keys and out-of-range values are rejected at parse time. Relative paths
// resolve against the directory holding the config file.

#include "rmwarn/detector.hpp"
#include "rmwarn/error.hpp"
#include "rmwarn/rnn.hpp"
#include "rmwarn/synth.hpp"
#include "rmwarn/timeseries.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <charconv>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rmwarn {

struct RunConfig {
    // data
    std::string data;           // MeteoSeries CSV; empty for cmd_synth
    std::string detect_data;    // optional series for cmd_detect; default: test fold of `data`
    std::vector<std::string> channels{"P", "T", "q", "Omega"};
    std::string target_channel = "P";
    std::string target_site;    // default: first site
    double radius_km = 25.0;
    std::optional<TimePoint> train_end, val_end;
    double train_fraction = 0.6;  // used when train_end / val_end are absent
    double val_fraction = 0.2;
    std::vector<TimeWindow> exclude;

    // model
    CellKind cell = CellKind::elman;
    int hidden_dim = 32;
    int head_hidden = 16;
    std::vector<int> leads{1};

    // training
    TrainConfig train;

    // detector
    double eta = 1.0;
    double target_arl0 = 1000.0;
    int n_boot = 1000;
    bool monthly_null = false;
    int block_len = 30;
    int detection_window = 90;
    std::string event_kind = "drought";

    // evaluation
    std::vector<double> thresholds{10.0, 20.0};

    // replication
    int replications = 1000;
    int purge_gap = 30;

    // synthetic data
    SynthConfig synth;
    std::optional<ChangeSpec> change;

    std::uint64_t seed = 1;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');)
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d || !std::isfinite(*d)) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return *d;
}

inline long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline TimePoint to_time(const std::string& key, const std::string& v) {
    const auto t = parse_time(v);
    if (!t) throw ConfigError(key + ": bad timestamp '" + v + "'");
    return *t;
}

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& v, const std::filesystem::path& base) {
    using namespace detail;
    auto path = [&] { return std::filesystem::path(v).is_absolute() ? v : (base / v).lexically_normal().string(); };
    auto i = [&] { return static_cast<int>(to_int(key, v)); };
    auto d = [&] { return to_double(key, v); };
    auto change = [&]() -> ChangeSpec& {
        if (!cfg.change) cfg.change.emplace();
        return *cfg.change;
    };

    if (key == "data") cfg.data = path();
    else if (key == "detect_data") cfg.detect_data = path();
    else if (key == "channels") cfg.channels = split_list(v);
    else if (key == "target_channel") cfg.target_channel = v;
    else if (key == "target_site") cfg.target_site = v;
    else if (key == "radius_km") cfg.radius_km = d();
    else if (key == "train_end") cfg.train_end = to_time(key, v);
    else if (key == "val_end") cfg.val_end = to_time(key, v);
    else if (key == "train_fraction") cfg.train_fraction = d();
    else if (key == "val_fraction") cfg.val_fraction = d();
    else if (key == "exclude") {
        cfg.exclude.clear();
        for (const auto& w : split_list(v)) {
            const auto slash = w.find('/');
            if (slash == std::string::npos) throw ConfigError("exclude: expected start/end, got '" + w + "'");
            cfg.exclude.push_back({to_time(key, w.substr(0, slash)), to_time(key, w.substr(slash + 1))});
        }
    }
    else if (key == "cell_kind") {
        try {
            cfg.cell = parse_cell_kind(v);
        } catch (const std::exception&) {
            throw ConfigError("cell_kind: expected elman or gru, got '" + v + "'");
        }
    }
    else if (key == "hidden_dim") cfg.hidden_dim = i();
    else if (key == "head_hidden") cfg.head_hidden = i();
    else if (key == "leads") {
        cfg.leads.clear();
        for (const auto& s : split_list(v)) cfg.leads.push_back(static_cast<int>(to_int(key, s)));
    }
    else if (key == "epochs") cfg.train.epochs = i();
    else if (key == "warmup") cfg.train.warmup = i();
    else if (key == "lambda0") cfg.train.lambda0 = d();
    else if (key == "gamma") cfg.train.gamma = d();
    else if (key == "learning_rate") cfg.train.learning_rate = d();
    else if (key == "clip_norm") cfg.train.clip_norm = d();
    else if (key == "rm_window") cfg.train.rm_window = i();
    else if (key == "seq_len") cfg.train.seq_len = i();
    else if (key == "point_weight") cfg.train.point_weight = d();
    else if (key == "eta") cfg.eta = d();
    else if (key == "target_arl0") cfg.target_arl0 = d();
    else if (key == "n_boot") cfg.n_boot = i();
    else if (key == "monthly_null") cfg.monthly_null = to_bool(key, v);
    else if (key == "block_len") cfg.block_len = i();
    else if (key == "detection_window") cfg.detection_window = i();
    else if (key == "event_kind") cfg.event_kind = v;
    else if (key == "thresholds") {
        cfg.thresholds.clear();
        for (const auto& s : split_list(v)) cfg.thresholds.push_back(to_double(key, s));
    }
    else if (key == "replications") cfg.replications = i();
    else if (key == "purge_gap") cfg.purge_gap = i();
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "synth.n_sites") cfg.synth.n_sites = i();
    else if (key == "synth.steps") cfg.synth.steps = i();
    else if (key == "synth.unit") {
        if (v == "day") cfg.synth.unit = StepUnit::day;
        else if (v == "hour") cfg.synth.unit = StepUnit::hour;
        else throw ConfigError("synth.unit: expected day or hour");
    }
    else if (key == "synth.start") cfg.synth.start = to_time(key, v);
    else if (key == "synth.center_lat") cfg.synth.center_lat = d();
    else if (key == "synth.center_lon") cfg.synth.center_lon = d();
    else if (key == "synth.site_spread_km") cfg.synth.site_spread_km = d();
    else if (key == "synth.seasonal_amplitude") cfg.synth.seasonal_amplitude = d();
    else if (key == "synth.p_wet") cfg.synth.p_wet = d();
    else if (key == "synth.persistence") cfg.synth.persistence = d();
    else if (key == "synth.mu_w") cfg.synth.mu_w = d();
    else if (key == "synth.sigma_w") cfg.synth.sigma_w = d();
    else if (key == "synth.decorrelation_km") cfg.synth.decorrelation_km = d();
    else if (key == "change.kind") {
        if (v == "none") cfg.change.reset();
        else if (v == "drought") change().kind = ChangeKind::drought;
        else if (v == "flood") change().kind = ChangeKind::flood;
        else throw ConfigError("change.kind: expected none, drought or flood");
    }
    else if (key == "change.onset") change().onset = i();
    else if (key == "change.wet_prob_multiplier") change().wet_prob_multiplier = d();
    else if (key == "change.wet_amount_multiplier") change().wet_amount_multiplier = d();
    else if (key == "change.covariate_anomaly") change().covariate_anomaly = d();
    else if (key == "change.ramp_steps") change().ramp_steps = i();
    else if (key == "change.burst_steps") change().burst_steps = i();
    else if (key == "change.burst_total_mm") change().burst_total_mm = d();
    else if (key == "change.precursor_lead") change().precursor_lead = i();
    else if (key == "change.precursor_amplitude") change().precursor_amplitude = d();
    else if (key == "change.rule_window") change().rule_window = i();
    else if (key == "change.rule_threshold") change().rule_threshold = d();
    else throw ConfigError("unknown config key '" + key + "'");
}

inline void validate(const RunConfig& cfg) {
    cfg.train.validate();
    cfg.synth.validate();
    if (cfg.change) cfg.change->validate(cfg.synth.steps);
    if (cfg.channels.empty()) throw ConfigError("channels: at least one channel required");
    if (!(cfg.radius_km >= 0.0)) throw ConfigError("radius_km must be >= 0");
    if (cfg.hidden_dim < 1 || cfg.head_hidden < 1) throw ConfigError("hidden sizes must be >= 1");
    if (cfg.leads.empty()) throw ConfigError("leads: at least one lead required");
    for (int l : cfg.leads)
        if (l < 1) throw ConfigError("leads must be >= 1");
    if (!(cfg.train_fraction > 0.0) || !(cfg.val_fraction > 0.0) || cfg.train_fraction + cfg.val_fraction >= 1.0)
        throw ConfigError("train_fraction and val_fraction must be positive and sum below 1");
    if (cfg.train_end.has_value() != cfg.val_end.has_value()) throw ConfigError("train_end and val_end go together");
    if (!(cfg.eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(cfg.target_arl0 >= 1.0)) throw ConfigError("target_arl0 must be >= 1");
    if (cfg.n_boot < 100) throw ConfigError("n_boot must be >= 100");
    if (cfg.block_len < 1) throw ConfigError("block_len must be >= 1");
    if (cfg.detection_window < 0) throw ConfigError("detection_window must be >= 0");
    if (cfg.event_kind != "drought" && cfg.event_kind != "flood") throw ConfigError("event_kind: expected drought or flood");
    if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
    if (cfg.purge_gap < 0) throw ConfigError("purge_gap must be >= 0");
}

inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base = ".") {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), base);
    }
    cfg.synth.seed = cfg.seed;
    return cfg;
}

inline void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.synth.seed = seed;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_config(in, std::filesystem::path(path).parent_path());
}

}  // namespace rmwarn
