#include "mgpf/metrics.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/filter.hpp"
#include "mgpf/simd/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace mgpf::metrics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> idw_interpolate(std::span<const Location> known, std::span<const double> values,
                                    std::span<const Location> targets, double power) {
    if (known.empty()) throw ValidationError("idw_interpolate needs at least one known site");
    if (known.size() != values.size()) throw ValidationError("idw_interpolate: sites and values differ in length");
    if (!(power > 0.0)) throw ValidationError("idw_interpolate: power must be > 0");
    std::vector<double> xs(known.size());
    std::vector<double> ys(known.size());
    for (std::size_t k = 0; k < known.size(); ++k) {
        xs[k] = known[k].x;
        ys[k] = known[k].y;
    }
    std::vector<double> d(known.size());
    std::vector<double> out(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        simd::distances_to(targets[t].x, targets[t].y, xs, ys, d);
        double num = 0.0;
        double den = 0.0;
        bool exact = false;
        for (std::size_t k = 0; k < d.size(); ++k) {
            if (d[k] == 0.0) {
                out[t] = values[k];
                exact = true;
                break;
            }
            const double w = std::pow(d[k], -power);
            num += w * values[k];
            den += w;
        }
        if (!exact) out[t] = num / den;
    }
    return out;
}

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth) {
    if (pred.empty()) throw ValidationError("point_metrics: empty input");
    if (pred.size() != truth.size()) throw ValidationError("point_metrics: lengths differ");
    double se = 0.0;
    double ae = 0.0;
    double b = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double e = pred[k] - truth[k];
        se += e * e;
        ae += std::fabs(e);
        b += e;
    }
    const auto n = static_cast<double>(pred.size());
    return {std::sqrt(se / n), ae / n, b / n};
}

double interval_score(double lower, double upper, double truth, double alpha) {
    if (!(lower <= upper)) throw ValidationError("interval_score: lower > upper");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("interval_score: alpha outside (0, 1)");
    return (upper - lower) + 2.0 / alpha * std::max(lower - truth, 0.0) +
           2.0 / alpha * std::max(truth - upper, 0.0);
}

double crps_sample(std::span<const double> draws, double truth) {
    const std::size_t n = draws.size();
    if (n == 0) throw ValidationError("crps_sample: no draws");
    const double term1 = simd::abs_diff_sum(draws, truth) / static_cast<double>(n);
    if (n == 1) return term1;
    std::vector<double> s(draws.begin(), draws.end());
    std::sort(s.begin(), s.end());
    // sum_{i<j} |x_j - x_i| = sum_k (2k - n - 1) x_(k), k = 1..n
    double pair_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        pair_sum += (2.0 * static_cast<double>(k + 1) - static_cast<double>(n) - 1.0) * s[k];
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return term1 - 0.5 * pair_sum / pairs;
}

IntervalMetrics interval_metrics(std::span<const double> lower, std::span<const double> upper,
                                 std::span<const double> truth, double level) {
    if (lower.size() != upper.size() || lower.size() != truth.size() || lower.empty()) {
        throw ValidationError("interval_metrics: inputs must be nonempty and of equal length");
    }
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval_metrics: level outside (0, 1)");
    const double alpha = 1.0 - level;
    IntervalMetrics m;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (!(lower[k] <= upper[k])) {
            throw ValidationError(fmt::format("interval_metrics: malformed interval at target {}", k));
        }
        if (truth[k] >= lower[k] && truth[k] <= upper[k]) m.coverage += 1.0;
        m.width += upper[k] - lower[k];
        m.interval_score += interval_score(lower[k], upper[k], truth[k], alpha);
    }
    const auto n = static_cast<double>(truth.size());
    m.coverage /= n;
    m.width /= n;
    m.interval_score /= n;
    m.crps = kNaN;
    return m;
}

IntervalMetrics interval_metrics(const std::vector<std::vector<double>>& draws, std::span<const double> truth,
                                 double level) {
    if (draws.size() != truth.size() || draws.empty()) {
        throw ValidationError("interval_metrics: draws and truth must be nonempty and of equal length");
    }
    std::vector<double> lo(truth.size());
    std::vector<double> hi(truth.size());
    double crps = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        lo[k] = filter::empirical_quantile(draws[k], 0.5 * (1.0 - level));
        hi[k] = filter::empirical_quantile(draws[k], 0.5 * (1.0 + level));
        crps += crps_sample(draws[k], truth[k]);
    }
    IntervalMetrics m = interval_metrics(lo, hi, truth, level);
    m.crps = crps / static_cast<double>(truth.size());
    return m;
}

double ci_percent_diff(double l2, double l1) {
    if (!(l1 > 0.0)) throw ValidationError("ci_percent_diff: l1 must be > 0");
    return (l2 - l1) / l1 * 100.0;
}

double pseudo_rmse(std::span<const Location> sites, std::span<const double> pred, const Location& center,
                   double reference, double radius) {
    if (sites.size() != pred.size()) throw ValidationError("pseudo_rmse: sites and predictions differ in length");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < sites.size(); ++k) {
        if (std::hypot(sites[k].x - center.x, sites[k].y - center.y) <= radius) {
            se += (pred[k] - reference) * (pred[k] - reference);
            ++n;
        }
    }
    if (n == 0) throw ValidationError("pseudo_rmse: no site within the radius");
    return std::sqrt(se / static_cast<double>(n));
}

std::vector<MetricRow> MetricReport::summary() const {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const MetricRow*>> by_method;
    for (const auto& r : rows) {
        if (!by_method.contains(r.method)) order.push_back(r.method);
        by_method[r.method].push_back(&r);
    }
    // NaN entries (metric not computed for that row) are skipped.
    auto mean_of = [](const std::vector<const MetricRow*>& v, auto field) {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto* r : v) {
            const double x = field(*r);
            if (std::isnan(x)) continue;
            s += x;
            ++n;
        }
        return n > 0 ? s / static_cast<double>(n) : kNaN;
    };
    std::vector<MetricRow> out;
    for (const auto& m : order) {
        const auto& v = by_method[m];
        MetricRow s;
        s.method = m;
        s.timepoint = "ALL";
        s.point.rmse = mean_of(v, [](const MetricRow& r) { return r.point.rmse; });
        s.point.mae = mean_of(v, [](const MetricRow& r) { return r.point.mae; });
        s.point.bias = mean_of(v, [](const MetricRow& r) { return r.point.bias; });
        s.interval.coverage = mean_of(v, [](const MetricRow& r) { return r.interval.coverage; });
        s.interval.width = mean_of(v, [](const MetricRow& r) { return r.interval.width; });
        s.interval.interval_score = mean_of(v, [](const MetricRow& r) { return r.interval.interval_score; });
        s.interval.crps = mean_of(v, [](const MetricRow& r) { return r.interval.crps; });
        s.pseudo_rmse = mean_of(v, [](const MetricRow& r) { return r.pseudo_rmse; });
        s.ci_pct_diff = mean_of(v, [](const MetricRow& r) { return r.ci_pct_diff; });
        for (const auto* r : v) s.n += r->n;
        out.push_back(s);
    }
    return out;
}

void MetricReport::write_csv(std::ostream& out) const {
    out << "method,timepoint,n,rmse,mae,bias,crps,coverage,width,interval_score,pseudo_rmse,ci_pct_diff\n";
    auto write = [&out](const MetricRow& r) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.method, r.timepoint, r.n, r.point.rmse,
                           r.point.mae, r.point.bias, r.interval.crps, r.interval.coverage, r.interval.width,
                           r.interval.interval_score, r.pseudo_rmse, r.ci_pct_diff);
    };
    for (const auto& r : rows) write(r);
    for (const auto& r : summary()) write(r);
}

}  // namespace mgpf::metrics
