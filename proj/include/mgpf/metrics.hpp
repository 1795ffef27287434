#pragma once

// Baselines (regression calibration + IDW) and the evaluation suite.

#include "mgpf/types.hpp"

#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mgpf::metrics {

// Weighted mean with weights d^-power. A target at distance 0 from a known
// site takes that site's value (the first one, if several coincide).
[[nodiscard]] std::vector<double> idw_interpolate(std::span<const Location> known,
                                                  std::span<const double> values,
                                                  std::span<const Location> targets,
                                                  double power = 2.0);

struct PointMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double bias = 0.0;  // mean(pred - truth)
};
[[nodiscard]] PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth);

struct IntervalMetrics {
    double coverage = 0.0;
    double width = 0.0;
    double interval_score = 0.0;
    double crps = 0.0;  // NaN when only intervals were given
};

// Interval score of the central (1 - alpha) interval:
// (u - l) + 2/alpha (l - y)+ + 2/alpha (y - u)+.
[[nodiscard]] double interval_score(double lower, double upper, double truth, double alpha);

// Sample CRPS: mean|X - y| - 1/2 mean over distinct pairs |X - X'|.
[[nodiscard]] double crps_sample(std::span<const double> draws, double truth);

// From intervals only.
[[nodiscard]] IntervalMetrics interval_metrics(std::span<const double> lower,
                                               std::span<const double> upper,
                                               std::span<const double> truth, double level = 0.95);

// From draws: draws[k] holds the sample for target k. Intervals are the
// equal-tailed empirical quantiles.
[[nodiscard]] IntervalMetrics interval_metrics(const std::vector<std::vector<double>>& draws,
                                               std::span<const double> truth, double level = 0.95);

// (l2 - l1) / l1 * 100.
[[nodiscard]] double ci_percent_diff(double l2, double l1);

// RMSE over predictions at sites within `radius` of `center` against the
// reference value.
[[nodiscard]] double pseudo_rmse(std::span<const Location> sites, std::span<const double> pred,
                                 const Location& center, double reference, double radius);

// One row per (method, timepoint); summary rows use timepoint "ALL".
struct MetricRow {
    std::string method;
    std::string timepoint;
    PointMetrics point;
    IntervalMetrics interval;
    double pseudo_rmse = std::numeric_limits<double>::quiet_NaN();
    double ci_pct_diff = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    // Unweighted mean of the per-timepoint rows of each method.
    [[nodiscard]] std::vector<MetricRow> summary() const;
    void write_csv(std::ostream& out) const;
};

}  // namespace mgpf::metrics
