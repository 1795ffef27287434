#pragma once

// Multi-network GP filter for one timepoint.
//
// Latent true concentrations x follow a GP with constant mean mu and
// exponential covariance theta = (sigma2, phi, nugget). Reference sites
// observe x exactly; each low-cost network k observes
// y = a_k(z) + b_k(z) x + eps with eps ~ N(0, tau2_k). Hyperparameters are
// sampled from their marginal posterior (x integrated out), and for every
// retained draw x at the low-cost sites is drawn exactly from the Kalman
// update, then grid sites from the kriging distribution given all sites.

#include "mgpf/gp_core.hpp"
#include "mgpf/obs_model.hpp"
#include "mgpf/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mgpf::filter {

struct NetworkObservations {
    std::string network_id;
    std::vector<std::string> site_ids;
    std::vector<Location> sites;
    std::vector<double> readings;
    std::vector<Covariates> covariates;
    obs::ObsModelParams model;
};

struct FilterInput {
    std::vector<std::string> reference_ids;
    std::vector<Location> reference_sites;
    std::vector<double> reference_values;
    std::vector<NetworkObservations> networks;
    std::vector<std::string> grid_ids;
    std::vector<Location> grid;

    void validate() const;
    [[nodiscard]] std::size_t n_lowcost() const;
    // Low-cost sites stacked network by network, sites in input order. Every
    // vector over low-cost sites uses this order.
    [[nodiscard]] std::vector<Location> lowcost_sites() const;
    [[nodiscard]] Eigen::VectorXd stacked_readings() const;
    [[nodiscard]] Eigen::VectorXd reference_vector() const;
    // Copy without networks that have no active sites.
    [[nodiscard]] FilterInput without_empty_networks() const;
};

// Stacked affine observation operator: y ~ N(offset + gain .* x, diag(noise_var)).
struct AffineObs {
    Eigen::VectorXd offset;
    Eigen::VectorXd gain;
    Eigen::VectorXd noise_var;
    Eigen::VectorXd naive;  // (y - offset) / gain, unclamped
    std::size_t negative_inversions = 0;
};

// Noise variances are evaluated at the naive inversion clamped at 0 and then
// floored per network. Throws NumericalError naming the site when an
// effective gain is below 1e-6 in magnitude.
[[nodiscard]] AffineObs assemble_affine(const FilterInput& input);

// Exact Gaussian posterior of x given y = offset + gain .* x + noise and the
// prior surface. Computed in gain (covariance) form, which only factors
// gain*C*gain' + D and never inverts the prior covariance.
[[nodiscard]] gp::GaussianSurface kalman_update(const AffineObs& obs, const Eigen::VectorXd& y,
                                                const gp::GaussianSurface& prior);

// Log density of the observed (y at low-cost sites, x at reference sites)
// with x at the low-cost sites integrated out.
class MarginalLikelihood {
public:
    explicit MarginalLikelihood(const FilterInput& input);
    MarginalLikelihood(const FilterInput& input, const AffineObs& obs);

    // Everything that depends on theta only; mu enters through two vectors.
    struct ThetaTerms {
        double log_det = 0.0;
        double jitter = 0.0;
        Eigen::VectorXd w_data;  // L^{-1} (y - offset, x_ref)
        Eigen::VectorXd w_gain;  // L^{-1} (gain, 1)
    };

    [[nodiscard]] ThetaTerms terms(const gp::CovParams& theta) const;
    [[nodiscard]] double loglik(double mu, const ThetaTerms& t) const;
    [[nodiscard]] double operator()(double mu, const gp::CovParams& theta) const {
        return loglik(mu, terms(theta));
    }
    [[nodiscard]] Eigen::Index dimension() const { return dist_.rows(); }

    // The joint covariance used by terms(), exposed for tests.
    [[nodiscard]] Eigen::MatrixXd joint_cov(const gp::CovParams& theta) const;

private:
    Eigen::MatrixXd dist_;   // over [low-cost stacked, reference]
    Eigen::VectorXd scale_;  // gain for low-cost rows, 1 for reference rows
    Eigen::VectorXd noise_;  // noise variance, 0 on reference rows
    Eigen::VectorXd data_;   // (y - offset, x_ref)
};

[[nodiscard]] double joint_marginal_loglik(double mu, const gp::CovParams& theta,
                                           const FilterInput& input);

struct PriorSpec {
    double mu_scale = 100.0;   // half-normal scale V
    double sigma2_max = 100.0;
    double nugget_max = 10.0;
    double phi_min = 0.01;
    double phi_max = 10.0;

    void validate() const;
};

// phi bounds such that the correlation between the two farthest sites lies
// in [corr_low, corr_high].
struct PhiBounds {
    double phi_min = 0.0;
    double phi_max = 0.0;
};
[[nodiscard]] PhiBounds phi_bounds_from_geometry(double max_distance, double corr_low = 0.02,
                                                 double corr_high = 0.98);

struct PriorRules {
    // Network whose raw readings set the nugget bound. Without it (or when it
    // has fewer than two active sites) the variance of the pooled naive
    // inversions is used.
    std::optional<std::string> primary_network;
    double sigma2_multiplier = 2.0;
    double mu_scale_multiplier = 10.0;
    double corr_low = 0.02;
    double corr_high = 0.98;
};

[[nodiscard]] PriorSpec derive_prior(const FilterInput& input, const AffineObs& obs,
                                     const PriorRules& rules = {});

struct HyperDraw {
    double mu = 0.0;
    double sigma2 = 1.0;
    double phi = 1.0;
    double nugget = 0.0;

    [[nodiscard]] gp::CovParams cov() const { return {sigma2, phi, nugget}; }
};

struct ChainConfig {
    int iterations = 5000;
    int burn_in = 2000;
    int thin = 3;
    double target_acceptance = 0.30;
    int adapt_batch = 50;
    std::uint64_t seed = 0;
    // Pin hyperparameters: the chain is skipped and every retained draw uses
    // these values.
    std::optional<HyperDraw> fixed;
    // Include the nugget in the predictive variance at grid sites.
    bool grid_nugget = true;
    // Draw grid sites jointly (full conditional covariance) instead of
    // per-site marginals. Per-site summaries are identical in distribution.
    bool joint_grid = false;

    void validate() const;
    [[nodiscard]] int retained() const { return (iterations - burn_in) / thin; }
};

struct PosteriorField {
    std::vector<HyperDraw> hyper;
    Eigen::MatrixXd lowcost_draws;  // draws x low-cost sites (stacked order)
    Eigen::MatrixXd grid_draws;     // draws x grid sites
    std::vector<double> reference_values;
    // Acceptance rates after burn-in for mu, sigma2, phi, nugget.
    std::array<double, 4> acceptance{};
    std::vector<std::string> warnings;
    AffineObs obs;
    PriorSpec prior;

    [[nodiscard]] Eigen::Index n_draws() const { return lowcost_draws.rows(); }
};

// Throws ValidationError without active low-cost sites, NumericalError when
// every proposal is rejected.
[[nodiscard]] PosteriorField mcmc_filter(const FilterInput& input, const PriorSpec& prior,
                                         const ChainConfig& cfg);

struct SiteSummary {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

// Column-wise mean and equal-tailed interval from empirical quantiles
// (linear interpolation between order statistics). Needs >= 100 draws.
[[nodiscard]] std::vector<SiteSummary> predict_summaries(const Eigen::MatrixXd& draws,
                                                         double level = 0.95);

// Same for a single vector of draws (no minimum).
[[nodiscard]] double empirical_quantile(std::vector<double> values, double prob);

}  // namespace mgpf::filter
