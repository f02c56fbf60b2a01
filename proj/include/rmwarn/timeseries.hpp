#pragma once

// Multi-site, multi-channel observation series: CSV ingestion, spatial
// neighbourhoods, training-fold standardization, chronological splits and
// purged-block bootstrap resampling.

#include "rmwarn/error.hpp"
#include "rmwarn/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rmwarn {

using TimePoint = std::chrono::sys_seconds;

inline constexpr double kEarthRadiusKm = 6371.0088;

// ---------------------------------------------------------------------------
// Time helpers

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DDTHH:MM:SS" with an
// optional trailing 'Z'. Everything is UTC.
inline std::optional<TimePoint> parse_time(std::string_view s) {
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
    int parts[6] = {0, 1, 1, 0, 0, 0};
    const char seps[6] = {'-', '-', 'T', ':', ':', '\0'};
    std::size_t pos = 0;
    int n = 0;
    for (; n < 6 && pos < s.size(); ++n) {
        const char* first = s.data() + pos;
        const char* last = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(first, last, parts[n]);
        if (ec != std::errc{} || ptr == first) return std::nullopt;
        pos = static_cast<std::size_t>(ptr - s.data());
        if (pos == s.size()) {
            ++n;
            break;
        }
        const char sep = s[pos];
        if (!(sep == seps[n] || (n == 2 && sep == ' '))) return std::nullopt;
        ++pos;
    }
    if (pos != s.size() || n < 3) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{parts[0]}, month{static_cast<unsigned>(parts[1])},
                             day{static_cast<unsigned>(parts[2])}};
    if (!ymd.ok() || parts[3] > 23 || parts[4] > 59 || parts[5] > 60) return std::nullopt;
    return sys_days{ymd} + hours{parts[3]} + minutes{parts[4]} + seconds{parts[5]};
}

inline std::string format_time(TimePoint t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

// Calendar month 1..12.
inline int month_of(TimePoint t) {
    using namespace std::chrono;
    return static_cast<int>(static_cast<unsigned>(year_month_day{floor<days>(t)}.month()));
}

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        std::string field{line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)};
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(std::move(field));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Domain types

struct Site {
    std::string id;
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees

    bool operator==(const Site&) const = default;
};

struct TimeWindow {
    TimePoint start;
    TimePoint end;  // inclusive
    bool contains(TimePoint t) const { return t >= start && t <= end; }
};

class MeteoSeries {
public:
    MeteoSeries() = default;

    MeteoSeries(std::vector<Site> sites, std::vector<TimePoint> times, std::vector<std::string> channels,
                std::vector<std::string> units = {})
        : sites_(std::move(sites)), times_(std::move(times)), channels_(std::move(channels)), units_(std::move(units)) {
        if (units_.empty()) units_.assign(channels_.size(), "");
        if (units_.size() != channels_.size()) throw SchemaError("units/channels length mismatch");
        values_.assign(sites_.size() * times_.size() * channels_.size(), 0.0);
        mask_.assign(values_.size(), 0);
    }

    std::size_t n_sites() const { return sites_.size(); }
    std::size_t n_times() const { return times_.size(); }
    std::size_t n_channels() const { return channels_.size(); }

    const std::vector<Site>& sites() const { return sites_; }
    const std::vector<TimePoint>& times() const { return times_; }
    const std::vector<std::string>& channels() const { return channels_; }
    const std::vector<std::string>& units() const { return units_; }

    double value(std::size_t s, std::size_t t, std::size_t c) const { return values_[index(s, t, c)]; }
    bool observed(std::size_t s, std::size_t t, std::size_t c) const { return mask_[index(s, t, c)] != 0; }

    void set(std::size_t s, std::size_t t, std::size_t c, double v) {
        values_[index(s, t, c)] = v;
        mask_[index(s, t, c)] = 1;
    }
    void set_missing(std::size_t s, std::size_t t, std::size_t c) {
        values_[index(s, t, c)] = 0.0;
        mask_[index(s, t, c)] = 0;
    }

    std::size_t channel_index(std::string_view name) const {
        for (std::size_t c = 0; c < channels_.size(); ++c)
            if (channels_[c] == name) return c;
        throw LookupError("unknown channel '" + std::string(name) + "'");
    }
    bool has_channel(std::string_view name) const {
        return std::find(channels_.begin(), channels_.end(), name) != channels_.end();
    }
    std::size_t site_index(std::string_view id) const {
        for (std::size_t s = 0; s < sites_.size(); ++s)
            if (sites_[s].id == id) return s;
        throw LookupError("unknown site '" + std::string(id) + "'");
    }

    // Fixed sampling step; zero for series shorter than two.
    std::chrono::seconds step() const {
        return times_.size() < 2 ? std::chrono::seconds{0} : times_[1] - times_[0];
    }

    // Number of samples at or before t.
    std::size_t count_until(TimePoint t) const {
        return static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
    }

    void validate() const {
        std::map<std::string, int> seen;
        for (const auto& site : sites_) {
            if (!(site.lat >= -90.0 && site.lat <= 90.0)) throw SchemaError("site " + site.id + ": latitude out of range");
            if (!(site.lon >= -180.0 && site.lon <= 180.0))
                throw SchemaError("site " + site.id + ": longitude out of range");
            if (seen[site.id]++) throw SchemaError("duplicate site id " + site.id);
        }
        for (std::size_t t = 1; t < times_.size(); ++t) {
            if (times_[t] <= times_[t - 1]) throw SchemaError("times not strictly increasing at " + format_time(times_[t]));
            if (times_[t] - times_[t - 1] != step()) throw SchemaError("irregular time step at " + format_time(times_[t]));
        }
        if (has_channel("P")) {
            const auto p = channel_index("P");
            for (std::size_t s = 0; s < n_sites(); ++s)
                for (std::size_t t = 0; t < n_times(); ++t)
                    if (observed(s, t, p) && !(value(s, t, p) >= 0.0))
                        throw SchemaError("negative precipitation at site " + sites_[s].id + ", " + format_time(times_[t]));
        }
    }

    // Sub-series over time indices [t0, t1).
    MeteoSeries slice(std::size_t t0, std::size_t t1) const {
        t1 = std::min(t1, n_times());
        MeteoSeries out(sites_, {times_.begin() + static_cast<std::ptrdiff_t>(t0), times_.begin() + static_cast<std::ptrdiff_t>(t1)},
                        channels_, units_);
        for (std::size_t s = 0; s < n_sites(); ++s)
            for (std::size_t t = t0; t < t1; ++t)
                for (std::size_t c = 0; c < n_channels(); ++c)
                    if (observed(s, t, c)) out.set(s, t - t0, c, value(s, t, c));
        return out;
    }

    // Average over a set of sites of one channel; NaN where any member is missing.
    std::vector<double> site_mean(std::span<const std::size_t> site_ids, std::size_t c) const {
        std::vector<double> out(n_times(), 0.0);
        for (std::size_t t = 0; t < n_times(); ++t) {
            double acc = 0.0;
            for (auto s : site_ids) {
                if (!observed(s, t, c)) {
                    acc = kNaN;
                    break;
                }
                acc += value(s, t, c);
            }
            out[t] = acc / static_cast<double>(site_ids.size());
        }
        return out;
    }

    std::vector<double> path(std::size_t s, std::size_t c) const {
        std::vector<double> out(n_times());
        for (std::size_t t = 0; t < n_times(); ++t) out[t] = observed(s, t, c) ? value(s, t, c) : kNaN;
        return out;
    }

    bool operator==(const MeteoSeries&) const = default;

private:
    std::size_t index(std::size_t s, std::size_t t, std::size_t c) const {
        return (s * times_.size() + t) * channels_.size() + c;
    }

    std::vector<Site> sites_;
    std::vector<TimePoint> times_;
    std::vector<std::string> channels_;
    std::vector<std::string> units_;
    std::vector<double> values_;
    std::vector<std::uint8_t> mask_;
};

struct NeighborhoodSet {
    Site target;
    std::vector<Site> members;
    std::vector<std::size_t> member_indices;  // into MeteoSeries::sites(); target first
    double radius_km = 0.0;
};

struct SplitSpec {
    TimePoint train_end;
    TimePoint val_end;
    std::vector<TimeWindow> excluded_windows;

    bool excluded(TimePoint t) const {
        return std::any_of(excluded_windows.begin(), excluded_windows.end(),
                           [t](const TimeWindow& w) { return w.contains(t); });
    }
    bool in_train(TimePoint t) const { return t <= train_end && !excluded(t); }
    bool in_val(TimePoint t) const { return t > train_end && t <= val_end && !excluded(t); }
    bool in_test(TimePoint t) const { return t > val_end && !excluded(t); }

    void validate(const MeteoSeries& series) const {
        if (!(train_end < val_end)) throw ConfigError("split: train_end must precede val_end");
        if (series.n_times() == 0 || !(val_end < series.times().back()))
            throw ConfigError("split: val_end must precede the last time of the series");
        for (const auto& w : excluded_windows)
            if (w.end < w.start) throw ConfigError("split: excluded window ends before it starts");
    }
};

struct ChannelStats {
    std::vector<std::string> channels;
    std::vector<double> mean;
    std::vector<double> sd;
};

// ---------------------------------------------------------------------------
// CSV ingestion

inline MeteoSeries load_series(std::istream& in, const std::vector<std::string>& schema) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(1, "empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 5 || header[0] != "time" || header[1] != "site_id" || header[2] != "lat" || header[3] != "lon")
        throw ParseError(1, "header must start with time,site_id,lat,lon and list at least one channel");

    std::vector<std::string> file_channels, file_units;
    for (std::size_t i = 4; i < header.size(); ++i) {
        std::string name = header[i], unit;
        if (const auto lb = name.find('['); lb != std::string::npos && name.back() == ']') {
            unit = name.substr(lb + 1, name.size() - lb - 2);
            name = name.substr(0, lb);
        }
        file_channels.push_back(name);
        file_units.push_back(unit);
    }
    std::vector<std::string> channels = schema.empty() ? file_channels : schema;
    std::vector<std::size_t> column_of;
    std::vector<std::string> units;
    for (const auto& ch : channels) {
        const auto it = std::find(file_channels.begin(), file_channels.end(), ch);
        if (it == file_channels.end()) throw SchemaError("channel '" + ch + "' missing from header");
        const auto k = static_cast<std::size_t>(it - file_channels.begin());
        column_of.push_back(4 + k);
        units.push_back(file_units[k]);
    }

    struct Row {
        std::size_t time_idx;
        std::size_t site_idx;
        std::vector<std::optional<double>> values;
    };
    std::vector<Row> rows;
    std::vector<TimePoint> times;
    std::vector<Site> sites;
    std::map<std::string, std::size_t> site_lookup;
    std::vector<std::vector<char>> seen;  // per time, per site

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        const auto t = parse_time(fields[0]);
        if (!t) throw ParseError(line_no, "bad timestamp '" + fields[0] + "'");
        const auto lat = parse_double(fields[2]);
        const auto lon = parse_double(fields[3]);
        if (!lat || !lon) throw ParseError(line_no, "bad coordinates");

        if (times.empty() || *t > times.back()) {
            times.push_back(*t);
            seen.emplace_back(sites.size(), 0);
        } else if (*t < times.back()) {
            throw SchemaError("line " + std::to_string(line_no) + ": timestamps not monotone");
        }
        auto [it, inserted] = site_lookup.emplace(fields[1], sites.size());
        if (inserted) {
            sites.push_back({fields[1], *lat, *lon});
            for (auto& v : seen) v.push_back(0);
        } else if (sites[it->second].lat != *lat || sites[it->second].lon != *lon) {
            throw SchemaError("line " + std::to_string(line_no) + ": coordinates of site " + fields[1] + " changed");
        }
        auto& flag = seen.back()[it->second];
        if (flag) throw SchemaError("line " + std::to_string(line_no) + ": duplicated timestamp for site " + fields[1]);
        flag = 1;

        Row row{times.size() - 1, it->second, {}};
        for (auto col : column_of) {
            if (fields[col].empty()) {
                row.values.emplace_back(std::nullopt);
                continue;
            }
            const auto v = parse_double(fields[col]);
            if (!v) throw ParseError(line_no, "bad number '" + fields[col] + "'");
            row.values.emplace_back(*v);
        }
        rows.push_back(std::move(row));
    }

    MeteoSeries series(std::move(sites), std::move(times), std::move(channels), std::move(units));
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.values.size(); ++c)
            if (row.values[c] && std::isfinite(*row.values[c])) series.set(row.site_idx, row.time_idx, c, *row.values[c]);
    series.validate();
    return series;
}

inline MeteoSeries load_series(const std::string& path, const std::vector<std::string>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_series(in, schema);
}

inline void write_series(std::ostream& out, const MeteoSeries& series) {
    out << "time,site_id,lat,lon";
    for (std::size_t c = 0; c < series.n_channels(); ++c) {
        out << ',' << series.channels()[c];
        if (!series.units()[c].empty()) out << '[' << series.units()[c] << ']';
    }
    out << '\n';
    for (std::size_t t = 0; t < series.n_times(); ++t) {
        const auto stamp = format_time(series.times()[t]);
        for (std::size_t s = 0; s < series.n_sites(); ++s) {
            const auto& site = series.sites()[s];
            out << stamp << ',' << site.id << ',' << format_double(site.lat) << ',' << format_double(site.lon);
            for (std::size_t c = 0; c < series.n_channels(); ++c) {
                out << ',';
                if (series.observed(s, t, c)) out << format_double(series.value(s, t, c));
            }
            out << '\n';
        }
    }
}

inline void write_series(const std::string& path, const MeteoSeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_series(out, series);
}

// ---------------------------------------------------------------------------
// Spatial neighbourhood

inline double great_circle_km(const Site& a, const Site& b) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * deg;
    const double dlon = (b.lon - a.lon) * deg;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    const double h = s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Members ordered target first, then by series order. Boundary distances count as inside.
inline NeighborhoodSet build_neighborhood(const MeteoSeries& series, std::string_view target_id, double radius_km) {
    const auto target_idx = series.site_index(target_id);
    NeighborhoodSet out;
    out.target = series.sites()[target_idx];
    out.radius_km = radius_km;
    out.members.push_back(out.target);
    out.member_indices.push_back(target_idx);
    for (std::size_t s = 0; s < series.n_sites(); ++s) {
        if (s == target_idx) continue;
        if (great_circle_km(out.target, series.sites()[s]) <= radius_km) {
            out.members.push_back(series.sites()[s]);
            out.member_indices.push_back(s);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization (statistics from the training fold only)

inline std::pair<MeteoSeries, ChannelStats> standardize(const MeteoSeries& series, const SplitSpec& split) {
    ChannelStats stats;
    stats.channels = series.channels();
    for (std::size_t c = 0; c < series.n_channels(); ++c) {
        std::vector<double> xs;
        for (std::size_t s = 0; s < series.n_sites(); ++s)
            for (std::size_t t = 0; t < series.n_times(); ++t)
                if (split.in_train(series.times()[t]) && series.observed(s, t, c)) xs.push_back(series.value(s, t, c));
        if (xs.size() < 2)
            throw DegenerateChannelError("channel '" + series.channels()[c] + "' has fewer than 2 training values");
        const double m = mean_of(xs);
        const double sd = sd_of(xs);
        if (!(sd > 0.0)) throw DegenerateChannelError("channel '" + series.channels()[c] + "' is constant on the training fold");
        stats.mean.push_back(m);
        stats.sd.push_back(sd);
    }
    MeteoSeries out = series;
    for (std::size_t s = 0; s < series.n_sites(); ++s)
        for (std::size_t t = 0; t < series.n_times(); ++t)
            for (std::size_t c = 0; c < series.n_channels(); ++c)
                if (series.observed(s, t, c)) out.set(s, t, c, (series.value(s, t, c) - stats.mean[c]) / stats.sd[c]);
    return {std::move(out), std::move(stats)};
}

// Applies existing statistics (e.g. to a resampled or held-out series).
inline MeteoSeries apply_stats(const MeteoSeries& series, const ChannelStats& stats) {
    MeteoSeries out = series;
    for (std::size_t c = 0; c < series.n_channels(); ++c) {
        const auto k = static_cast<std::size_t>(
            std::find(stats.channels.begin(), stats.channels.end(), series.channels()[c]) - stats.channels.begin());
        if (k == stats.channels.size()) throw LookupError("no statistics for channel " + series.channels()[c]);
        for (std::size_t s = 0; s < series.n_sites(); ++s)
            for (std::size_t t = 0; t < series.n_times(); ++t)
                if (series.observed(s, t, c)) out.set(s, t, c, (series.value(s, t, c) - stats.mean[k]) / stats.sd[k]);
    }
    return out;
}

inline MeteoSeries invert_standardize(const MeteoSeries& series, const ChannelStats& stats) {
    MeteoSeries out = series;
    for (std::size_t c = 0; c < series.n_channels(); ++c)
        for (std::size_t s = 0; s < series.n_sites(); ++s)
            for (std::size_t t = 0; t < series.n_times(); ++t)
                if (series.observed(s, t, c)) out.set(s, t, c, series.value(s, t, c) * stats.sd[c] + stats.mean[c]);
    return out;
}

// ---------------------------------------------------------------------------
// Purged-block bootstrap

struct BootstrapSample {
    MeteoSeries series;
    std::vector<std::size_t> source_index;  // provenance of every output step
};

// Marks indices within purge_gap of any excluded window.
inline std::vector<char> purged_mask(const std::vector<TimePoint>& times, std::span<const TimeWindow> excluded,
                                     std::size_t purge_gap) {
    const std::size_t n = times.size();
    std::vector<char> purged(n, 0);
    for (const auto& w : excluded) {
        const auto lo = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), w.start) - times.begin());
        const auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), w.end) - times.begin());
        if (lo == hi && (lo == 0 || lo == n)) continue;  // entirely outside the series
        const std::size_t a = lo > purge_gap ? lo - purge_gap : 0;
        const std::size_t b = std::min(n, hi + purge_gap);
        for (std::size_t i = a; i < b; ++i) purged[i] = 1;
    }
    return purged;
}

// Block starts whose circular block of block_len steps avoids every purged index.
inline std::vector<std::size_t> valid_block_starts(std::span<const char> purged, std::size_t block_len) {
    const std::size_t n = purged.size();
    std::vector<std::size_t> starts;
    if (block_len == 0 || block_len > n) return starts;
    const bool any_purged = std::any_of(purged.begin(), purged.end(), [](char c) { return c != 0; });
    if (!any_purged) {
        starts.resize(n);
        for (std::size_t i = 0; i < n; ++i) starts[i] = i;
        return starts;
    }
    // Run length of clean indices ending at each position, on the doubled (circular) sequence.
    std::vector<std::size_t> clean_run(2 * n, 0);
    for (std::size_t i = 0; i < 2 * n; ++i)
        clean_run[i] = purged[i % n] ? 0 : (i ? clean_run[i - 1] : 0) + 1;
    for (std::size_t s = 0; s < n; ++s)
        if (clean_run[s + block_len - 1] >= block_len) starts.push_back(s);
    return starts;
}

inline BootstrapSample purged_block_bootstrap(const MeteoSeries& series, std::span<const TimeWindow> excluded,
                                              std::size_t block_len, std::size_t purge_gap, std::uint64_t seed) {
    const std::size_t n = series.n_times();
    if (block_len < 1) throw ConfigError("bootstrap: block_len must be >= 1");
    if (block_len > n) throw ConfigError("bootstrap: block_len exceeds series length");
    const auto purged = purged_mask(series.times(), excluded, purge_gap);
    const auto starts = valid_block_starts(purged, block_len);
    if (starts.empty()) throw ConfigError("bootstrap: no valid block start outside purged regions");

    Rng rng(seed);
    BootstrapSample out;
    out.source_index.reserve(n);
    while (out.source_index.size() < n) {
        const std::size_t s = starts[uniform_index(rng, starts.size())];
        for (std::size_t j = 0; j < block_len && out.source_index.size() < n; ++j) out.source_index.push_back((s + j) % n);
    }
    // Output keeps the original time axis; only the contents are resampled.
    out.series = MeteoSeries(series.sites(), series.times(), series.channels(), series.units());
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t s = 0; s < series.n_sites(); ++s)
            for (std::size_t c = 0; c < series.n_channels(); ++c)
                if (series.observed(s, out.source_index[t], c)) out.series.set(s, t, c, series.value(s, out.source_index[t], c));
    return out;
}

// ---------------------------------------------------------------------------
// Trailing accumulation

inline MeteoSeries accumulate(const MeteoSeries& series, std::string_view channel, std::size_t window) {
    if (window < 1) throw ConfigError("accumulate: window must be >= 1");
    const auto c = series.channel_index(channel);
    MeteoSeries out(series.sites(), series.times(), {std::string(channel) + "_sum" + std::to_string(window)},
                    {series.units()[c]});
    for (std::size_t s = 0; s < series.n_sites(); ++s) {
        for (std::size_t t = window - 1; t < series.n_times(); ++t) {
            double sum = 0.0;
            bool complete = true;
            for (std::size_t j = t + 1 - window; j <= t && complete; ++j) {
                complete = series.observed(s, j, c);
                sum += series.value(s, j, c);
            }
            if (complete) out.set(s, t, 0, sum);
        }
    }
    return out;
}

// Trailing sum of a plain path; NaN during spin-up and wherever a contributor is NaN.
inline std::vector<double> rolling_sum(std::span<const double> xs, std::size_t window) {
    std::vector<double> out(xs.size(), kNaN);
    if (window < 1) throw ConfigError("rolling_sum: window must be >= 1");
    // Direct summation keeps all-dry windows exactly zero.
    for (std::size_t t = window - 1; t < xs.size(); ++t) {
        double sum = 0.0;
        for (std::size_t j = t + 1 - window; j <= t; ++j) sum += xs[j];
        out[t] = sum;
    }
    return out;
}

}  // namespace rmwarn
