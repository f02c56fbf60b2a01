#pragma once

// Forecast and event verification: error scores, Brier, contingency-table
// scores, the Standardized Precipitation Index and onset extraction.

#include "rmwarn/error.hpp"
#include "rmwarn/numeric.hpp"
#include "rmwarn/timeseries.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace rmwarn {

// NaN in either argument drops the pair.
inline double rmse(std::span<const double> pred, std::span<const double> obs) {
    if (pred.size() != obs.size()) throw DataError("rmse: misaligned inputs");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::isnan(pred[i]) || std::isnan(obs[i])) continue;
        s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
        ++n;
    }
    if (n == 0) throw EmptyBatchError("rmse: no observed pairs");
    return std::sqrt(s / static_cast<double>(n));
}

inline double mae(std::span<const double> pred, std::span<const double> obs) {
    if (pred.size() != obs.size()) throw DataError("mae: misaligned inputs");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::isnan(pred[i]) || std::isnan(obs[i])) continue;
        s += std::abs(pred[i] - obs[i]);
        ++n;
    }
    if (n == 0) throw EmptyBatchError("mae: no observed pairs");
    return s / static_cast<double>(n);
}

// Mean (p - 1{obs > threshold})^2.
inline double brier(std::span<const double> prob, std::span<const double> obs, double threshold) {
    if (prob.size() != obs.size()) throw DataError("brier: misaligned inputs");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (std::isnan(prob[i]) || std::isnan(obs[i])) continue;
        if (prob[i] < 0.0 || prob[i] > 1.0) throw DataError("brier: probability outside [0, 1]");
        const double o = obs[i] > threshold ? 1.0 : 0.0;
        s += (prob[i] - o) * (prob[i] - o);
        ++n;
    }
    if (n == 0) throw EmptyBatchError("brier: no observed pairs");
    return s / static_cast<double>(n);
}

struct ContingencyTable {
    long hits = 0;
    long misses = 0;
    long false_alarms = 0;
    long correct_negatives = 0;
};

// POD and FAR are nullopt when their denominator vanishes.
struct PodFar {
    std::optional<double> pod;
    std::optional<double> far;
    ContingencyTable table;
};

inline PodFar pod_far(const std::vector<bool>& forecast, const std::vector<bool>& observed) {
    if (forecast.size() != observed.size()) throw DataError("pod_far: misaligned inputs");
    PodFar out;
    auto& tab = out.table;
    for (std::size_t i = 0; i < forecast.size(); ++i) {
        if (forecast[i] && observed[i]) ++tab.hits;
        else if (!forecast[i] && observed[i]) ++tab.misses;
        else if (forecast[i] && !observed[i]) ++tab.false_alarms;
        else ++tab.correct_negatives;
    }
    if (tab.hits + tab.misses > 0) out.pod = static_cast<double>(tab.hits) / static_cast<double>(tab.hits + tab.misses);
    if (tab.hits + tab.false_alarms > 0)
        out.far = static_cast<double>(tab.false_alarms) / static_cast<double>(tab.hits + tab.false_alarms);
    return out;
}

// ---------------------------------------------------------------------------
// Standardized Precipitation Index

struct GammaFit {
    double shape = 1.0;
    double scale = 1.0;
    double q = 0.0;  // probability of a zero accumulation
};

struct SpiCalibration {
    std::array<GammaFit, 12> by_month{};  // index = calendar month - 1
};

struct SpiSeries {
    std::vector<TimePoint> times;
    std::vector<double> spi;  // NaN during spin-up or where the accumulation is missing
    int window = 90;          // accumulation window in steps
    SpiCalibration calibration;
};

inline constexpr double kSpiClamp = 1e-6;

// Thom's closed-form maximum-likelihood approximation.
inline GammaFit fit_gamma_thom(std::span<const double> positive) {
    if (positive.size() < 2) throw CalibrationError("gamma fit: fewer than two positive accumulations");
    double sum = 0.0, sum_log = 0.0;
    for (double x : positive) {
        sum += x;
        sum_log += std::log(x);
    }
    const double n = static_cast<double>(positive.size());
    const double m = sum / n;
    const double A = std::log(m) - sum_log / n;
    if (!(A > 1e-12)) throw CalibrationError("gamma fit: degenerate (constant) sample");
    GammaFit fit;
    fit.shape = (1.0 + std::sqrt(1.0 + 4.0 * A / 3.0)) / (4.0 * A);
    fit.scale = m / fit.shape;
    return fit;
}

// Per-calendar-month calibration on accumulations whose time falls in [from, to].
// Requires at least five years of span.
inline SpiCalibration fit_spi(std::span<const double> accum, std::span<const TimePoint> times, TimePoint from, TimePoint to) {
    if (accum.size() != times.size()) throw DataError("spi: misaligned inputs");
    std::array<std::vector<double>, 12> positive;
    std::array<std::size_t, 12> zeros{}, total{};
    std::optional<TimePoint> first, last;
    for (std::size_t i = 0; i < accum.size(); ++i) {
        if (times[i] < from || times[i] > to || std::isnan(accum[i])) continue;
        if (!first) first = times[i];
        last = times[i];
        const auto m = static_cast<std::size_t>(month_of(times[i]) - 1);
        ++total[m];
        if (accum[i] > 0.0) positive[m].push_back(accum[i]);
        else ++zeros[m];
    }
    using namespace std::chrono;
    if (!first || *last - *first < days{5 * 365})
        throw CalibrationError("spi: calibration period must span at least five years");
    SpiCalibration cal;
    for (std::size_t m = 0; m < 12; ++m) {
        if (positive[m].empty()) throw CalibrationError("spi: month " + std::to_string(m + 1) + " is all dry");
        cal.by_month[m] = fit_gamma_thom(positive[m]);
        cal.by_month[m].q = static_cast<double>(zeros[m]) / static_cast<double>(total[m]);
    }
    return cal;
}

inline double spi_value(const GammaFit& fit, double accum) {
    const double g = accum > 0.0 ? gamma_p(fit.shape, accum / fit.scale) : 0.0;
    const double H = std::clamp(fit.q + (1.0 - fit.q) * g, kSpiClamp, 1.0 - kSpiClamp);
    return normal_quantile(H);
}

inline SpiSeries spi(std::span<const double> accum, std::span<const TimePoint> times, const SpiCalibration& cal, int window) {
    SpiSeries out;
    out.times.assign(times.begin(), times.end());
    out.window = window;
    out.calibration = cal;
    out.spi.resize(accum.size(), kNaN);
    for (std::size_t i = 0; i < accum.size(); ++i)
        if (!std::isnan(accum[i])) out.spi[i] = spi_value(cal.by_month[static_cast<std::size_t>(month_of(times[i]) - 1)], accum[i]);
    return out;
}

// Fit on [from, to] and transform the whole path.
inline SpiSeries spi(std::span<const double> accum, std::span<const TimePoint> times, TimePoint from, TimePoint to,
                     int window = 90) {
    return spi(accum, times, fit_spi(accum, times, from, to), window);
}

// Within each contiguous dry period (maximal run of SPI < 0), the onset is the
// first index t with SPI < -1 at both t and t + 1.
inline std::vector<std::size_t> spi_onset(std::span<const double> spi_values) {
    std::vector<std::size_t> onsets;
    bool found_in_period = false;
    for (std::size_t t = 0; t < spi_values.size(); ++t) {
        const double v = spi_values[t];
        if (std::isnan(v) || v >= 0.0) {
            found_in_period = false;
            continue;
        }
        if (!found_in_period && v < -1.0 && t + 1 < spi_values.size() && spi_values[t + 1] < -1.0) {
            onsets.push_back(t);
            found_in_period = true;
        }
    }
    return onsets;
}

inline std::vector<std::size_t> spi_onset(const SpiSeries& s) { return spi_onset(std::span<const double>(s.spi)); }

// First step of each contiguous episode where the trailing window sum exceeds threshold.
inline std::vector<std::size_t> flood_onset(std::span<const double> precip, std::size_t window, double threshold) {
    const auto sums = rolling_sum(precip, window);
    std::vector<std::size_t> onsets;
    bool inside = false;
    for (std::size_t t = 0; t < sums.size(); ++t) {
        const bool exceed = !std::isnan(sums[t]) && sums[t] > threshold;
        if (exceed && !inside) onsets.push_back(t);
        inside = exceed;
    }
    return onsets;
}

inline double spi3_rmse(std::span<const double> forecast_spi, std::span<const double> observed_spi) {
    return rmse(forecast_spi, observed_spi);
}

}  // namespace rmwarn
