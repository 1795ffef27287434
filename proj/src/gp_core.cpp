#include "mgpf/gp_core.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/simd/kernels.hpp"

#include <cmath>
#include <numbers>

namespace mgpf::gp {

void CovParams::validate() const {
    if (!(sigma2 >= 0.0) || !(nugget >= 0.0) || !(phi > 0.0) || !std::isfinite(sigma2) ||
        !std::isfinite(nugget) || !std::isfinite(phi)) {
        throw ValidationError("covariance parameters require sigma2 >= 0, nugget >= 0, phi > 0");
    }
}

double exp_cov(double d, const CovParams& p) {
    const double c = p.sigma2 * std::exp(-p.phi * d);
    return d == 0.0 ? c + p.nugget : c;
}

Eigen::MatrixXd distances(std::span<const Location> a, std::span<const Location> b) {
    Eigen::VectorXd ax(a.size());
    Eigen::VectorXd ay(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ax[static_cast<Eigen::Index>(i)] = a[i].x;
        ay[static_cast<Eigen::Index>(i)] = a[i].y;
    }
    Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    // Column-major: column j holds distances from b[j] to every site of a.
    for (std::size_t j = 0; j < b.size(); ++j) {
        double* col = d.col(static_cast<Eigen::Index>(j)).data();
        simd::distances_to(b[j].x, b[j].y, {ax.data(), a.size()}, {ay.data(), a.size()},
                           {col, a.size()});
    }
    return d;
}

Eigen::MatrixXd cov_from_distances(const Eigen::MatrixXd& d, const CovParams& p,
                                   bool diagonal_nugget) {
    Eigen::MatrixXd c(d.rows(), d.cols());
    const auto n = static_cast<std::size_t>(d.size());
    simd::exp_decay({d.data(), n}, p.sigma2, p.phi, {c.data(), n});
    if (diagonal_nugget) c.diagonal().array() += p.nugget;
    return c;
}

Eigen::MatrixXd build_cov(std::span<const Location> sites, const CovParams& p) {
    return cov_from_distances(distances(sites, sites), p, true);
}

Eigen::MatrixXd cross_cov(std::span<const Location> a, std::span<const Location> b,
                          const CovParams& p) {
    return cov_from_distances(distances(a, b), p, false);
}

double Factorization::log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Factorization factorize(const Eigen::MatrixXd& a) {
    Factorization f;
    f.llt.compute(a);
    if (f.llt.info() == Eigen::Success) return f;

    const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 0.0;
    if (mean_diag > 0.0 && std::isfinite(mean_diag)) {
        for (double scale = 1e-10; scale <= 1e-4 * 1.0000001; scale *= 10.0) {
            Eigen::MatrixXd jittered = a;
            jittered.diagonal().array() += scale * mean_diag;
            f.llt.compute(jittered);
            if (f.llt.info() == Eigen::Success) {
                f.jitter = scale * mean_diag;
                return f;
            }
        }
    }
    throw NumericalError("ill-conditioned covariance: Cholesky failed after maximum jitter (n=" +
                         std::to_string(a.rows()) + ")");
}

GaussianSurface conditional_gp(double prior_mean, const CovParams& p,
                               std::span<const Location> cond_sites,
                               const Eigen::VectorXd& cond_values,
                               std::span<const Location> targets) {
    if (static_cast<std::size_t>(cond_values.size()) != cond_sites.size()) {
        throw ValidationError("conditional_gp: values and sites differ in length");
    }
    GaussianSurface out;
    out.sites.assign(targets.begin(), targets.end());
    out.cov = build_cov(targets, p);
    out.mean = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(targets.size()), prior_mean);
    if (cond_sites.empty()) return out;

    const Factorization f = factorize(build_cov(cond_sites, p));
    const Eigen::MatrixXd k_ct = cross_cov(cond_sites, targets, p);
    const Eigen::MatrixXd w = f.llt.matrixL().solve(k_ct);  // L^{-1} K(c,t)
    const Eigen::VectorXd centered = cond_values.array() - prior_mean;
    const Eigen::VectorXd z = f.llt.matrixL().solve(centered);
    out.mean.noalias() += w.transpose() * z;
    out.cov.noalias() -= w.transpose() * w;
    return out;
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
    const Eigen::Index n = mean.size();
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = draw_normal(rng);
    if (n == 0) return mean;
    // cov = P^T L D L^T P
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success) throw NumericalError("sample_mvn: LDLT failed");
    const Eigen::VectorXd sd = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Eigen::VectorXd scaled = sd.cwiseProduct(z);
    Eigen::VectorXd lz = ldlt.matrixL() * scaled;
    return mean + (ldlt.transpositionsP().transpose() * lz);
}

double log_mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
    const Factorization f = factorize(cov);
    const Eigen::VectorXd w = f.llt.matrixL().solve(x - mean);
    const double n = static_cast<double>(x.size());
    return -0.5 * (n * std::log(2.0 * std::numbers::pi) + f.log_det() + w.squaredNorm());
}

}  // namespace mgpf::gp
