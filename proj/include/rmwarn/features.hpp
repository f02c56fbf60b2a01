#pragma once

// Network input and target assembly from a neighborhood of sites.
//
// Each (member site, channel) pair contributes two input rows: the
// standardized value (0 where missing) and an observed flag. Members are in
// neighborhood order, target first.

#include "rmwarn/error.hpp"
#include "rmwarn/numeric.hpp"
#include "rmwarn/timeseries.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace rmwarn {

struct InputLayout {
    std::vector<std::string> sites;
    std::vector<std::string> channels;

    int input_dim() const { return static_cast<int>(2 * sites.size() * channels.size()); }
    Eigen::Index value_row(std::size_t member, std::size_t channel) const {
        return static_cast<Eigen::Index>(2 * (member * channels.size() + channel));
    }
    Eigen::Index mask_row(std::size_t member, std::size_t channel) const { return value_row(member, channel) + 1; }

    std::vector<Eigen::Index> value_rows(const std::string& channel) const {
        std::size_t c = 0;
        while (c < channels.size() && channels[c] != channel) ++c;
        if (c == channels.size()) throw LookupError("unknown channel '" + channel + "'");
        std::vector<Eigen::Index> rows;
        for (std::size_t m = 0; m < sites.size(); ++m) rows.push_back(value_row(m, c));
        return rows;
    }
};

inline InputLayout make_layout(const MeteoSeries& series, const NeighborhoodSet& nb, const std::vector<std::string>& channels) {
    InputLayout layout;
    for (auto i : nb.member_indices) layout.sites.push_back(series.sites()[i].id);
    for (const auto& c : channels) {
        series.channel_index(c);
        layout.channels.push_back(c);
    }
    if (layout.channels.empty()) throw ConfigError("no input channels selected");
    return layout;
}

// `standardized` must share site and channel order with the series the
// neighborhood was built on.
inline Eigen::MatrixXd build_inputs(const MeteoSeries& standardized, const NeighborhoodSet& nb, const InputLayout& layout) {
    const auto T = static_cast<Eigen::Index>(standardized.n_times());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(layout.input_dim(), T);
    for (std::size_t m = 0; m < nb.member_indices.size(); ++m) {
        const auto s = nb.member_indices[m];
        for (std::size_t c = 0; c < layout.channels.size(); ++c) {
            const auto ci = standardized.channel_index(layout.channels[c]);
            for (Eigen::Index t = 0; t < T; ++t) {
                const auto tt = static_cast<std::size_t>(t);
                if (!standardized.observed(s, tt, ci)) continue;
                x(layout.value_row(m, c), t) = standardized.value(s, tt, ci);
                x(layout.mask_row(m, c), t) = 1.0;
            }
        }
    }
    return x;
}

// targets(l, t) = raw channel value at site, time t + leads[l]; NaN when
// missing or beyond the end of the series.
inline Eigen::MatrixXd build_targets(const MeteoSeries& raw, std::size_t site, const std::string& channel,
                                     const std::vector<int>& leads) {
    const auto ci = raw.channel_index(channel);
    const auto T = raw.n_times();
    Eigen::MatrixXd y(static_cast<Eigen::Index>(leads.size()), static_cast<Eigen::Index>(T));
    for (std::size_t l = 0; l < leads.size(); ++l)
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t u = t + static_cast<std::size_t>(leads[l]);
            y(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(t)) =
                u < T && raw.observed(site, u, ci) ? raw.value(site, u, ci) : kNaN;
        }
    return y;
}

}  // namespace rmwarn
