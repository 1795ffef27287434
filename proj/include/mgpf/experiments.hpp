#pragma once

// Simulation studies: the advection-diffusion study with two synthetic
// networks, the GP-plus-point-source study with preferential sampling, and
// the observation-model training-range study.

#include "mgpf/filter.hpp"
#include "mgpf/metrics.hpp"
#include "mgpf/simulator.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mgpf::exp {

using Progress = std::function<void(const std::string&)>;

// --- advection-diffusion study -------------------------------------------

struct S5Config {
    sim::PlumeConfig plume;
    int train_steps = 400;
    int n1 = 100;
    int n2 = 100;
    int eval_stride = 2;  // evaluation grid = cropped lattice, every k-th node
    filter::ChainConfig chain;
    std::uint64_t seed = 1;
    int workers = 1;

    // 71 x 71 lattice, 200 steps, 160 training steps.
    [[nodiscard]] static S5Config reduced();
    void validate() const;
};

struct S5MethodSummary {
    metrics::PointMetrics point;       // pooled over test steps and grid nodes
    metrics::IntervalMetrics interval; // pooled likewise
    double rmse_quadrant = 0.0;        // nodes inside [0, 0.5]^2
    double rmse_outside = 0.0;         // remaining nodes
};

struct S5Result {
    metrics::MetricReport report;  // one row per (method, test step)
    std::map<std::string, S5MethodSummary> summary;  // "mgpf", "net1", "net2"
    std::vector<std::string> warnings;
};

[[nodiscard]] S5Result run_s5(const S5Config& cfg, const Progress& progress = {});

// --- GP plus point sources -----------------------------------------------

struct S6ExperimentConfig {
    sim::S6Config data;
    int datasets = 10;
    filter::ChainConfig chain;
    std::uint64_t seed = 1;
    double pseudo_radius = 0.2;
    double idw_power = 2.0;
    int workers = 1;

    void validate() const;
};

struct S6Result {
    // Grid bias and RMSE pooled over datasets, timepoints and grid sites.
    std::map<std::string, metrics::PointMetrics> grid_point;  // "mgpf", "a", "b"
    // Mean percent difference of CI length, two networks vs one.
    double ci_sites_a = 0.0;  // at network-A sites, vs the A-only filter
    double ci_sites_b = 0.0;
    double ci_grid_a = 0.0;   // at grid sites, vs the A-only filter
    double ci_grid_b = 0.0;
    // Pseudo-RMSE against the reference value, pooled over in-radius grid
    // points and network sites, then split by target type.
    double pseudo_rmse_mgpf = 0.0;
    double pseudo_rmse_idw = 0.0;
    double pseudo_sites_mgpf = 0.0;
    double pseudo_sites_idw = 0.0;
    double pseudo_grid_mgpf = 0.0;
    double pseudo_grid_idw = 0.0;
    std::size_t timepoints = 0;
    std::vector<std::string> warnings;

    [[nodiscard]] double ci_sites_mean() const { return 0.5 * (ci_sites_a + ci_sites_b); }
    [[nodiscard]] double ci_grid_mean() const { return 0.5 * (ci_grid_a + ci_grid_b); }
};

// Filter input for one S6 timepoint. Networks use the generating models.
[[nodiscard]] filter::FilterInput s6_filter_input(const sim::S6Dataset& ds, std::size_t t, bool use_a,
                                                  bool use_b);
[[nodiscard]] obs::ObsModelParams linear_model(const sim::LinearHetModel& m);

// Regression calibration at each network's sites, IDW per network, averaged
// over networks with at least one site.
[[nodiscard]] std::vector<double> regcal_idw(const filter::FilterInput& input,
                                             const std::vector<Location>& targets, double power);

[[nodiscard]] S6Result run_s6(const S6ExperimentConfig& cfg, const Progress& progress = {});

// --- training range -------------------------------------------------------

struct RangeConfig {
    int n_train = 2000;
    int n_test = 100;
    double x_max = 240.0;           // test range [0, x_max]
    double narrow_fraction = 1.0 / 3.0;
    double tau2_intercept = 1.0;    // true tau2 = intercept + slope * x
    double tau2_slope = 2.0;
    // Concentrations are hi * Beta(1, x_skew) on each range; 1 is uniform.
    double x_skew = 1.0;
    double rh_lo = 30.0;
    double rh_hi = 90.0;
    double high_x_quantile = 0.9;   // tau2 compared at this fraction of x_max
    std::uint64_t seed = 1;

    void validate() const;
};

struct RangeResult {
    double tau2_true_high = 0.0;
    double tau2_full_high = 0.0;
    double tau2_narrow_high = 0.0;
    double rmse_full = 0.0;    // inversion RMSE on the test set
    double rmse_narrow = 0.0;
    obs::ObsModelParams full;
    obs::ObsModelParams narrow;

    [[nodiscard]] double tau2_ratio() const { return tau2_narrow_high / tau2_full_high; }
    [[nodiscard]] double rmse_change() const { return std::abs(rmse_narrow - rmse_full) / rmse_full; }
};

[[nodiscard]] RangeResult run_range_experiment(const RangeConfig& cfg);

}  // namespace mgpf::exp
