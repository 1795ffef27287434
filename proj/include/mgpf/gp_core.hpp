#pragma once

// Exponential-covariance Gaussian process machinery: covariance assembly,
// jittered Cholesky factorization, kriging (conditional) distributions and
// multivariate normal sampling.

#include "mgpf/random.hpp"
#include "mgpf/types.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mgpf::gp {

struct CovParams {
    double sigma2 = 1.0;  // spatial variance
    double phi = 1.0;     // decay, 1/distance
    double nugget = 0.0;  // micro-scale variance at zero distance

    // Throws ValidationError unless sigma2 >= 0, nugget >= 0, phi > 0.
    void validate() const;
};

struct GaussianSurface {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::vector<Location> sites;
};

// sigma2 * exp(-phi * d), plus the nugget iff d == 0 exactly.
[[nodiscard]] double exp_cov(double d, const CovParams& p);

// Euclidean distances, rows indexed by `a`, columns by `b`.
[[nodiscard]] Eigen::MatrixXd distances(std::span<const Location> a, std::span<const Location> b);

// Elementwise sigma2*exp(-phi*d); the nugget goes on the diagonal only when
// `diagonal_nugget` is set (i.e. `d` is a self-distance matrix). Two distinct
// sites at the same coordinates share sigma2 but not the nugget.
[[nodiscard]] Eigen::MatrixXd cov_from_distances(const Eigen::MatrixXd& d, const CovParams& p,
                                                 bool diagonal_nugget);

[[nodiscard]] Eigen::MatrixXd build_cov(std::span<const Location> sites, const CovParams& p);
[[nodiscard]] Eigen::MatrixXd cross_cov(std::span<const Location> a, std::span<const Location> b,
                                        const CovParams& p);

// Cholesky with the bounded jitter policy: on failure add
// 1e-10 * mean(diag), escalating x10 up to 1e-4 * mean(diag), then throw
// NumericalError.
struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;

    [[nodiscard]] double log_det() const;
    [[nodiscard]] Eigen::MatrixXd matrix_l() const { return llt.matrixL(); }
};

[[nodiscard]] Factorization factorize(const Eigen::MatrixXd& a);

// Kriging distribution at `targets` given exact values at `cond_sites`, under
// a constant prior mean. With no conditioning sites this is the prior.
[[nodiscard]] GaussianSurface conditional_gp(double prior_mean, const CovParams& p,
                                             std::span<const Location> cond_sites,
                                             const Eigen::VectorXd& cond_values,
                                             std::span<const Location> targets);

// Draw from N(mean, cov). Uses a pivoted LDL^T so singular (semidefinite)
// covariances are fine; tiny negative pivots from roundoff are clamped to 0.
[[nodiscard]] Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                         Rng& rng);

// log N(x | mean, cov) via factorize().
[[nodiscard]] double log_mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov);

}  // namespace mgpf::gp
