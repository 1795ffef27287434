#pragma once

// Synthetic ground truth and low-cost data.
//
// Two generators: a stochastic advection-diffusion plume model on a square
// lattice (fields are later cropped to the unit square and rescaled to
// [3, 253]), and a GP-plus-point-source model with optional preferential
// placement of one network.

#include "mgpf/random.hpp"
#include "mgpf/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mgpf::sim {

struct Wind {
    double vx = 0.0;
    double vy = 0.0;
};

// vx = 0.2 + 0.4 sin(2 pi t / 40), vy = 0.09 + 0.2 cos(2 pi t / 60)
[[nodiscard]] Wind wind(double t);

// Square lattice over [lo, hi]^2 with n points per axis.
struct Lattice {
    double lo = -0.2;
    double hi = 1.2;
    int n = 141;

    [[nodiscard]] double dx() const { return (hi - lo) / (n - 1); }
    [[nodiscard]] double coord(int i) const { return lo + i * dx(); }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(n) * n; }
};

// Values stored row by row: value(i, j) is at x index i, y index j.
struct FieldGrid {
    Lattice lattice;
    std::vector<double> values;
    int t = 0;

    FieldGrid() = default;
    FieldGrid(const Lattice& lat, double fill);

    [[nodiscard]] double& at(int i, int j) { return values[static_cast<std::size_t>(j) * lattice.n + i]; }
    [[nodiscard]] double at(int i, int j) const {
        return values[static_cast<std::size_t>(j) * lattice.n + i];
    }
};

struct PlumeSource {
    double xs = 0.0;
    double ys = 0.0;
    double sigma_x = 0.1;
    double sigma_y = 0.1;
    double theta = 0.0;
    double amplitude = 1.0;
    int t0 = 1;
    int lifetime = 1;
    double diffusion = 0.005;
    // B_s on the lattice (footprint times irregularity) and its maximum.
    std::vector<double> footprint;
    double footprint_max = 0.0;

    // Linear fade factor (1 - (t - t0)/L) inside [t0, t0 + L], else 0.
    [[nodiscard]] double fade(int t) const;
    [[nodiscard]] bool active(int t) const { return fade(t) > 0.0; }
};

struct PlumeConfig {
    Lattice lattice;
    double dt = 0.01;
    double decay = 10.0;
    int steps = 500;
    int initial_sources = 5;
    int spawn_every = 10;
    double cluster_prob = 0.2;
    double cluster_lo = 0.1;
    double cluster_hi = 0.3;
    double crop_margin = 0.02;
    double local_scale_lo = 0.06;
    double local_scale_hi = 0.1;
    double regional_scale_lo = 1.2;
    double regional_scale_hi = 2.4;
    double diffusion_lo = 0.005;
    double diffusion_hi = 0.01;
    double irregularity_amp = 0.3;
    double irregularity_freq = 3.0;
    double irregularity_noise = 0.1;
    int xi_smoothing_passes = 3;
    // Split each step into enough sub-steps to keep the explicit update
    // monotone. With false the scheme runs one Euler step per time step.
    bool stable_substeps = true;

    void validate() const;
};

// Number of sources born at step t: initial_sources at t = 1, one every
// spawn_every steps after that.
[[nodiscard]] int sources_born_at(int t, const PlumeConfig& cfg);

// Heavy-tailed source strength mixture.
[[nodiscard]] double draw_amplitude(Rng& rng);

// Smoothed white noise with mean 0 and unit sd over the lattice.
[[nodiscard]] std::vector<double> irregularity_field(const PlumeConfig& cfg, Rng& rng);

[[nodiscard]] std::vector<PlumeSource> spawn_sources(int t, const PlumeConfig& cfg,
                                                     const std::vector<double>& xi, Rng& rng);

// Per-cell diffusion coefficient sum_s D_s * S_s / max S_s and the source
// field sum_s S_s at step t.
struct Forcing {
    std::vector<double> kappa;
    std::vector<double> source;
};
[[nodiscard]] Forcing forcing_at(int t, const std::vector<PlumeSource>& sources, const Lattice& lat);

// Sub-steps needed so that the centre coefficient of the explicit update
// stays nonnegative.
[[nodiscard]] int stable_substep_count(double kappa_max, const Wind& w, double dt, double dx,
                                       double decay);

// One time step of the explicit upwind advection, masked diffusion, decay and
// source update with edge-copy boundaries. Throws NumericalError if the
// result is not finite.
[[nodiscard]] FieldGrid euler_step(const FieldGrid& field, const Forcing& forcing, const Wind& w,
                                   double dt, double decay, int substeps = 1);

// Cropped square on [0, 1]^2 with coordinates.
struct CroppedField {
    std::vector<double> coords;  // axis coordinates, same for x and y
    std::vector<double> values;  // row by row, value(i, j) at j * n + i
    int t = 0;

    [[nodiscard]] int n() const { return static_cast<int>(coords.size()); }
    [[nodiscard]] double at(int i, int j) const { return values[static_cast<std::size_t>(j) * n() + i]; }
};

// Crop to [0, 1]^2 and rescale linearly to [3, 253]. Throws NumericalError
// on a constant crop.
[[nodiscard]] CroppedField crop_rescale(const FieldGrid& field);

// Bilinear interpolation on the cropped lattice. Points outside are clamped
// to the edge.
[[nodiscard]] double interpolate(const CroppedField& f, const Location& p);

// Runs the whole plume model and returns one cropped, rescaled frame per
// step (t = 1..steps). Frame t is the state after the update driven by the
// step-t wind and sources, starting from an empty field.
[[nodiscard]] std::vector<CroppedField> simulate_plumes(const PlumeConfig& cfg, std::uint64_t seed);

// Median over pixels of the lag-1 autocorrelation of the frame stack.
[[nodiscard]] double median_lag1_autocorrelation(const std::vector<CroppedField>& frames);

void write_field_csv(std::ostream& out, const std::vector<CroppedField>& frames);

// --- synthetic networks ---------------------------------------------------

struct SyntheticNetworkSpec {
    std::string id;
    int n = 100;
    double a = 0.0;
    double b = 1.0;
    double sigma = 1.0;

    void validate() const;
};

struct SyntheticNetwork {
    SyntheticNetworkSpec spec;
    std::vector<Location> sites;
    int colocated = 0;  // index of the site closest to the centroid
};

// Index minimising squared distance to the centroid of `sites`.
[[nodiscard]] int nearest_to_centroid(const std::vector<Location>& sites);

// Network 1 uniform on the unit square; network 2 uniform on the unit square
// minus [0, 0.5)^2.
struct NetworkPair {
    SyntheticNetwork first;
    SyntheticNetwork second;
};
[[nodiscard]] NetworkPair generate_networks_s5(Rng& rng, int n1 = 100, int n2 = 100);

// y = a + b x + N(0, sigma^2), independently per entry.
[[nodiscard]] std::vector<double> synth_obs(const std::vector<double>& truth,
                                            const SyntheticNetworkSpec& spec, Rng& rng);

// --- GP plus point sources ------------------------------------------------

struct S6Config {
    int n_per_network = 30;
    int n_free = 6;  // sites left unrestricted under preferential placement
    int timepoints = 100;
    bool preferential = true;
    double ref_lo = 1.0 / 3.0;
    double ref_hi = 2.0 / 3.0;
    Location source1{0.2, 0.1};
    Location source2{0.9, 0.2};
    // mu_t = mu_min + mu_span * Beta(mu_a, mu_b)
    double mu_min = 2.0;
    double mu_span = 35.0;
    double mu_a = 2.0;
    double mu_b = 5.0;
    // emission = emis_min + emis_span * Beta(emis_a, emis_b)
    double emis_min = 20.0;
    double emis_span = 200.0;
    double emis_a = 2.0;
    double emis_b = 5.0;
    double psi = 30.806;  // exp(-d^2 psi) halves at d = 0.15
    // Correlation at distance sqrt(2) drawn uniformly from [corr_lo, corr_hi].
    double corr_lo = 0.5;
    double corr_hi = 0.9;
    // sigma2 = mu_t * Beta(var_a, var_b); nugget = sigma2 * U(0, nugget_frac)
    double var_a = 2.0;
    double var_b = 5.0;
    double nugget_frac = 0.1;
    double ambient_floor = 2.0;
    double rh_lo = 30.0;
    double rh_hi = 90.0;
    int grid_side = 10;

    void validate() const;
};

struct S6Timepoint {
    double mu = 0.0;
    double sigma2 = 0.0;
    double phi = 0.0;
    double nugget = 0.0;
    double emission1 = 0.0;
    double emission2 = 0.0;
    double reference_value = 0.0;
    std::vector<double> truth_a, truth_b, truth_grid;
    std::vector<double> rh_a, rh_b;
    std::vector<double> y_a, y_b;
};

struct S6Dataset {
    Location reference;
    std::vector<Location> sites_a;
    std::vector<Location> sites_b;
    std::vector<Location> grid;
    std::vector<S6Timepoint> timepoints;
};

// Network sites, restricted to the top-left quadrant [0, 0.5] x [0.5, 1]
// after the first n_free when `preferential`.
[[nodiscard]] std::vector<Location> s6_sites(Rng& rng, const S6Config& cfg, bool preferential);

[[nodiscard]] double s6_local(const Location& s, double z1, double z2, const S6Config& cfg);

// Observation models used to generate S6 readings: y = beta0 + beta1 x +
// beta2 RH with variance alpha0 + alpha1 x.
struct LinearHetModel {
    double beta0, beta1, beta2;
    double alpha0, alpha1;
};
[[nodiscard]] LinearHetModel s6_model_a();
[[nodiscard]] LinearHetModel s6_model_b();

// Network A is always uniform; network B is preferential when cfg.preferential.
[[nodiscard]] S6Dataset generate_s6_dataset(const S6Config& cfg, std::uint64_t seed);

}  // namespace mgpf::sim
