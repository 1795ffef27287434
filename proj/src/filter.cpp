#include "mgpf/filter.hpp"

#include "mgpf/errors.hpp"
#include "mgpf/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mgpf::filter {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

std::vector<Location> concat(const std::vector<Location>& a, const std::vector<Location>& b) {
    std::vector<Location> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FilterInput

void FilterInput::validate() const {
    if (reference_ids.size() != reference_sites.size() ||
        reference_values.size() != reference_sites.size()) {
        throw ValidationError("reference ids, sites and values differ in length");
    }
    for (double v : reference_values) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("reference values must be finite and >= 0");
        }
    }
    for (const auto& net : networks) {
        const std::size_t n = net.sites.size();
        if (net.site_ids.size() != n || net.readings.size() != n || net.covariates.size() != n) {
            throw ValidationError("network '" + net.network_id +
                                  "': ids, sites, readings and covariates differ in length");
        }
        for (double y : net.readings) {
            if (!std::isfinite(y)) {
                throw ValidationError("network '" + net.network_id + "' has a non-finite reading");
            }
        }
        net.model.validate();
    }
    if (grid_ids.size() != grid.size()) throw ValidationError("grid ids and sites differ in length");
    auto finite_loc = [](const Location& l) { return std::isfinite(l.x) && std::isfinite(l.y); };
    if (!std::all_of(reference_sites.begin(), reference_sites.end(), finite_loc) ||
        !std::all_of(grid.begin(), grid.end(), finite_loc)) {
        throw ValidationError("site coordinates must be finite");
    }
    for (const auto& net : networks) {
        if (!std::all_of(net.sites.begin(), net.sites.end(), finite_loc)) {
            throw ValidationError("site coordinates must be finite");
        }
    }
}

std::size_t FilterInput::n_lowcost() const {
    std::size_t n = 0;
    for (const auto& net : networks) n += net.sites.size();
    return n;
}

std::vector<Location> FilterInput::lowcost_sites() const {
    std::vector<Location> out;
    out.reserve(n_lowcost());
    for (const auto& net : networks) out.insert(out.end(), net.sites.begin(), net.sites.end());
    return out;
}

Eigen::VectorXd FilterInput::stacked_readings() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(n_lowcost()));
    Eigen::Index k = 0;
    for (const auto& net : networks) {
        for (double v : net.readings) y[k++] = v;
    }
    return y;
}

Eigen::VectorXd FilterInput::reference_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(reference_values.data(),
                                             static_cast<Eigen::Index>(reference_values.size()));
}

FilterInput FilterInput::without_empty_networks() const {
    FilterInput out = *this;
    std::erase_if(out.networks, [](const NetworkObservations& n) { return n.sites.empty(); });
    return out;
}

// ---------------------------------------------------------------------------
// Affine observation operator

AffineObs assemble_affine(const FilterInput& input) {
    const auto n = static_cast<Eigen::Index>(input.n_lowcost());
    AffineObs obs;
    obs.offset.resize(n);
    obs.gain.resize(n);
    obs.noise_var.resize(n);
    obs.naive.resize(n);
    Eigen::Index k = 0;
    for (const auto& net : input.networks) {
        for (std::size_t i = 0; i < net.sites.size(); ++i, ++k) {
            const auto& z = net.covariates[i];
            const double a = net.model.offset(z);
            const double b = net.model.gain(z);
            if (!(std::fabs(b) >= obs::kMinGain)) {
                throw NumericalError(fmt::format(
                    "effective gain {} below {} at site '{}' of network '{}'", b, obs::kMinGain,
                    net.site_ids[i], net.network_id));
            }
            const double naive = (net.readings[i] - a) / b;
            obs.offset[k] = a;
            obs.gain[k] = b;
            obs.naive[k] = naive;
            if (naive < 0.0) ++obs.negative_inversions;
            obs.noise_var[k] = obs::eval_obs_model(std::max(naive, 0.0), z, net.model).tau2;
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Kalman update

gp::GaussianSurface kalman_update(const AffineObs& obs, const Eigen::VectorXd& y,
                                  const gp::GaussianSurface& prior) {
    const Eigen::Index n = prior.mean.size();
    if (obs.offset.size() != n || obs.gain.size() != n || obs.noise_var.size() != n || y.size() != n ||
        prior.cov.rows() != n || prior.cov.cols() != n) {
        throw ValidationError("kalman_update: dimension mismatch");
    }
    if ((obs.noise_var.array() < 0.0).any()) {
        throw ValidationError("kalman_update: noise variances must be >= 0");
    }
    // S = B C B' + D, posterior = prior - (BC)' S^{-1} (BC)
    const Eigen::MatrixXd bc = obs.gain.asDiagonal() * prior.cov;
    Eigen::MatrixXd s = bc * obs.gain.asDiagonal();
    s.diagonal() += obs.noise_var;
    const gp::Factorization f = gp::factorize(s);
    const Eigen::MatrixXd v = f.llt.matrixL().solve(bc);
    const Eigen::VectorXd resid =
        y - obs.offset - obs.gain.cwiseProduct(prior.mean);
    const Eigen::VectorXd u = f.llt.matrixL().solve(resid);

    gp::GaussianSurface post;
    post.sites = prior.sites;
    post.mean = prior.mean + v.transpose() * u;
    post.cov = prior.cov - v.transpose() * v;
    post.cov = 0.5 * (post.cov + post.cov.transpose());
    return post;
}

// ---------------------------------------------------------------------------
// Marginal likelihood

MarginalLikelihood::MarginalLikelihood(const FilterInput& input)
    : MarginalLikelihood(input, assemble_affine(input)) {}

MarginalLikelihood::MarginalLikelihood(const FilterInput& input, const AffineObs& obs) {
    const std::vector<Location> sites = concat(input.lowcost_sites(), input.reference_sites);
    const auto ns = static_cast<Eigen::Index>(input.n_lowcost());
    const auto n0 = static_cast<Eigen::Index>(input.reference_sites.size());
    if (obs.gain.size() != ns) throw ValidationError("MarginalLikelihood: observation size mismatch");
    dist_ = gp::distances(sites, sites);
    scale_.resize(ns + n0);
    noise_.resize(ns + n0);
    data_.resize(ns + n0);
    const Eigen::VectorXd y = input.stacked_readings();
    scale_.head(ns) = obs.gain;
    scale_.tail(n0).setOnes();
    noise_.head(ns) = obs.noise_var;
    noise_.tail(n0).setZero();
    data_.head(ns) = y - obs.offset;
    data_.tail(n0) = input.reference_vector();
    if (!data_.allFinite()) throw ValidationError("marginal likelihood: non-finite data");
}

Eigen::MatrixXd MarginalLikelihood::joint_cov(const gp::CovParams& theta) const {
    Eigen::MatrixXd c = gp::cov_from_distances(dist_, theta, true);
    c = scale_.asDiagonal() * c * scale_.asDiagonal();
    c.diagonal() += noise_;
    return c;
}

MarginalLikelihood::ThetaTerms MarginalLikelihood::terms(const gp::CovParams& theta) const {
    if (!std::isfinite(theta.sigma2) || !std::isfinite(theta.phi) || !std::isfinite(theta.nugget)) {
        throw ValidationError("marginal likelihood: non-finite covariance parameters");
    }
    const gp::Factorization f = gp::factorize(joint_cov(theta));
    ThetaTerms t;
    t.log_det = f.log_det();
    t.jitter = f.jitter;
    t.w_data = f.llt.matrixL().solve(data_);
    t.w_gain = f.llt.matrixL().solve(scale_);
    return t;
}

double MarginalLikelihood::loglik(double mu, const ThetaTerms& t) const {
    if (!std::isfinite(mu)) throw ValidationError("marginal likelihood: non-finite mean");
    const double n = static_cast<double>(dist_.rows());
    const double quad = (t.w_data - mu * t.w_gain).squaredNorm();
    return -0.5 * (n * std::log(2.0 * std::numbers::pi) + t.log_det + quad);
}

double joint_marginal_loglik(double mu, const gp::CovParams& theta, const FilterInput& input) {
    input.validate();
    return MarginalLikelihood(input)(mu, theta);
}

// ---------------------------------------------------------------------------
// Priors

void PriorSpec::validate() const {
    if (!(mu_scale > 0.0) || !(sigma2_max > 0.0) || !(nugget_max > 0.0) || !(phi_min > 0.0) ||
        !(phi_max > phi_min) || !std::isfinite(mu_scale) || !std::isfinite(sigma2_max) ||
        !std::isfinite(nugget_max) || !std::isfinite(phi_max)) {
        throw ValidationError("prior bounds must be positive and finite with phi_min < phi_max");
    }
}

PhiBounds phi_bounds_from_geometry(double max_distance, double corr_low, double corr_high) {
    if (!(max_distance > 0.0)) throw ValidationError("phi bounds need a positive site diameter");
    if (!(0.0 < corr_low && corr_low < corr_high && corr_high < 1.0)) {
        throw ValidationError("phi bounds need 0 < corr_low < corr_high < 1");
    }
    return {-std::log(corr_high) / max_distance, -std::log(corr_low) / max_distance};
}

PriorSpec derive_prior(const FilterInput& input, const AffineObs& obs, const PriorRules& rules) {
    const std::vector<Location> sites = concat(input.lowcost_sites(), input.reference_sites);
    double dmax = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        for (std::size_t j = i + 1; j < sites.size(); ++j) {
            dmax = std::max(dmax, std::hypot(sites[i].x - sites[j].x, sites[i].y - sites[j].y));
        }
    }
    if (!(dmax > 0.0)) dmax = 1.0;
    const PhiBounds pb = phi_bounds_from_geometry(dmax, rules.corr_low, rules.corr_high);

    std::vector<double> naive(obs.naive.data(), obs.naive.data() + obs.naive.size());
    if (naive.size() < 2) {
        naive.insert(naive.end(), input.reference_values.begin(), input.reference_values.end());
    }
    const double v_naive = sample_variance(naive);

    double v_nugget = v_naive;
    if (rules.primary_network) {
        for (const auto& net : input.networks) {
            if (net.network_id == *rules.primary_network && net.readings.size() >= 2) {
                v_nugget = sample_variance(net.readings);
            }
        }
    }
    constexpr double kMinBound = 1e-3;
    PriorSpec p;
    p.sigma2_max = std::max(rules.sigma2_multiplier * v_naive, kMinBound);
    p.nugget_max = std::max(v_nugget, kMinBound);
    p.mu_scale = std::max(rules.mu_scale_multiplier * std::sqrt(v_naive), kMinBound);
    p.phi_min = pb.phi_min;
    p.phi_max = pb.phi_max;
    return p;
}

void ChainConfig::validate() const {
    if (iterations <= 0 || burn_in < 0 || burn_in >= iterations || thin <= 0 || retained() < 1) {
        throw ValidationError("chain config needs iterations > burn_in >= 0 and thin >= 1");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0) || adapt_batch <= 0) {
        throw ValidationError("chain config: bad adaptation settings");
    }
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

// Unconstrained coordinates: mu (reflected at 0), log sigma2, logit-scaled
// phi, log nugget.
struct Coords {
    std::array<double, 4> u{};
};

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

HyperDraw to_hyper(const Coords& c, const PriorSpec& p) {
    HyperDraw h;
    h.mu = c.u[0];
    h.sigma2 = std::exp(c.u[1]);
    h.phi = p.phi_min + (p.phi_max - p.phi_min) * sigmoid(c.u[2]);
    h.nugget = std::exp(c.u[3]);
    return h;
}

// Log prior in the unconstrained coordinates, Jacobians included.
double log_prior(const Coords& c, const PriorSpec& p) {
    const HyperDraw h = to_hyper(c, p);
    if (h.mu < 0.0 || h.sigma2 >= p.sigma2_max || h.nugget >= p.nugget_max) return kNegInf;
    const double s = sigmoid(c.u[2]);
    if (!(s > 0.0 && s < 1.0)) return kNegInf;
    const double lp_mu = -0.5 * (h.mu / p.mu_scale) * (h.mu / p.mu_scale);
    return lp_mu + c.u[1] + c.u[3] + std::log(s) + std::log1p(-s);
}

struct ChainState {
    Coords coords;
    MarginalLikelihood::ThetaTerms terms;
    double loglik = kNegInf;
    double logprior = kNegInf;
};

class Sampler {
public:
    Sampler(const MarginalLikelihood& lik, const PriorSpec& prior, const ChainConfig& cfg, Rng& rng)
        : lik_(lik), prior_(prior), cfg_(cfg), rng_(rng) {}

    void initialize(const Coords& start, std::array<double, 4> scales) {
        log_scale_ = {std::log(scales[0]), std::log(scales[1]), std::log(scales[2]), std::log(scales[3])};
        state_.coords = start;
        state_.terms = lik_.terms(to_hyper(start, prior_).cov());
        state_.loglik = lik_.loglik(start.u[0], state_.terms);
        state_.logprior = log_prior(start, prior_);
        if (!std::isfinite(state_.loglik + state_.logprior)) {
            throw NumericalError("MCMC starting point has zero posterior density");
        }
    }

    void step(bool adapting) {
        for (int c = 0; c < 4; ++c) update(c, adapting);
        ++iter_;
        if (adapting && iter_ % cfg_.adapt_batch == 0) {
            ++batches_;
            const double delta = std::min(0.25, 1.0 / std::sqrt(static_cast<double>(batches_)));
            for (int c = 0; c < 4; ++c) {
                const double rate = static_cast<double>(batch_accept_[c]) / cfg_.adapt_batch;
                log_scale_[c] += rate > cfg_.target_acceptance ? delta : -delta;
                batch_accept_[c] = 0;
            }
        }
    }

    [[nodiscard]] const ChainState& state() const { return state_; }

    void reset_counters() {
        accepted_.fill(0);
        attempted_.fill(0);
    }

    [[nodiscard]] std::array<double, 4> acceptance() const {
        std::array<double, 4> r{};
        for (int c = 0; c < 4; ++c) {
            r[c] = attempted_[c] > 0 ? static_cast<double>(accepted_[c]) / attempted_[c] : 0.0;
        }
        return r;
    }

private:
    void update(int c, bool adapting) {
        Coords prop = state_.coords;
        prop.u[c] += std::exp(log_scale_[c]) * draw_normal(rng_);
        if (c == 0) prop.u[0] = std::fabs(prop.u[0]);
        ++attempted_[c];

        const double lp = log_prior(prop, prior_);
        // Always consume one uniform so the stream does not depend on
        // early rejections.
        const double log_u = std::log(draw_uniform(rng_, 0.0, 1.0));
        if (!std::isfinite(lp)) return;

        double ll = kNegInf;
        MarginalLikelihood::ThetaTerms terms;
        const bool theta_changed = c != 0;
        try {
            if (theta_changed) {
                terms = lik_.terms(to_hyper(prop, prior_).cov());
                ll = lik_.loglik(prop.u[0], terms);
            } else {
                ll = lik_.loglik(prop.u[0], state_.terms);
            }
        } catch (const NumericalError&) {
            return;
        }
        if (!std::isfinite(ll)) return;
        if (log_u < (ll + lp) - (state_.loglik + state_.logprior)) {
            state_.coords = prop;
            state_.loglik = ll;
            state_.logprior = lp;
            if (theta_changed) state_.terms = std::move(terms);
            ++accepted_[c];
            if (adapting) ++batch_accept_[c];
        }
    }

    const MarginalLikelihood& lik_;
    const PriorSpec& prior_;
    const ChainConfig& cfg_;
    Rng& rng_;
    ChainState state_;
    std::array<double, 4> log_scale_{};
    std::array<long, 4> accepted_{};
    std::array<long, 4> attempted_{};
    std::array<int, 4> batch_accept_{};
    long iter_ = 0;
    long batches_ = 0;
};

Coords starting_point(const AffineObs& obs, const FilterInput& input, const PriorSpec& prior) {
    std::vector<double> pooled(obs.naive.data(), obs.naive.data() + obs.naive.size());
    pooled.insert(pooled.end(), input.reference_values.begin(), input.reference_values.end());
    double m = 0.0;
    for (double v : pooled) m += v;
    m /= static_cast<double>(pooled.size());
    const double var = sample_variance(pooled);

    Coords c;
    c.u[0] = std::min(std::max(m, 1e-3), 3.0 * prior.mu_scale);
    c.u[1] = std::log(std::clamp(0.5 * var, 1e-3 * prior.sigma2_max, 0.5 * prior.sigma2_max));
    c.u[2] = 0.0;
    c.u[3] = std::log(std::clamp(0.1 * var, 1e-3 * prior.nugget_max, 0.5 * prior.nugget_max));
    return c;
}

// Per-draw predictive machinery with precomputed distances.
class Predictor {
public:
    Predictor(const FilterInput& input, const AffineObs& obs, const ChainConfig& cfg)
        : obs_(obs), cfg_(cfg), y_(input.stacked_readings()), x0_(input.reference_vector()) {
        const auto lowcost = input.lowcost_sites();
        const auto& ref = input.reference_sites;
        const auto all = concat(lowcost, ref);
        ns_ = static_cast<Eigen::Index>(lowcost.size());
        n0_ = static_cast<Eigen::Index>(ref.size());
        ng_ = static_cast<Eigen::Index>(input.grid.size());
        d_all_ = gp::distances(all, all);
        if (ng_ > 0) {
            d_grid_all_ = gp::distances(input.grid, all);
            if (cfg.joint_grid) d_grid_ = gp::distances(input.grid, input.grid);
            grid_ref_.assign(input.grid.size(), -1);
            for (std::size_t g = 0; g < input.grid.size(); ++g) {
                for (std::size_t r = 0; r < ref.size(); ++r) {
                    if (input.grid[g] == ref[r]) {
                        grid_ref_[g] = static_cast<int>(r);
                        break;
                    }
                }
            }
        }
    }

    void draw(const HyperDraw& h, Rng& rng, Eigen::Ref<Eigen::VectorXd> lowcost_out,
              Eigen::Ref<Eigen::VectorXd> grid_out) const {
        const gp::CovParams theta = h.cov();
        const Eigen::MatrixXd k_all = gp::cov_from_distances(d_all_, theta, true);

        // Prior of x at low-cost sites given the reference values.
        gp::GaussianSurface prior;
        prior.mean = Eigen::VectorXd::Constant(ns_, h.mu);
        prior.cov = k_all.topLeftCorner(ns_, ns_);
        if (n0_ > 0) {
            const gp::Factorization f0 = gp::factorize(k_all.bottomRightCorner(n0_, n0_));
            const Eigen::MatrixXd w = f0.llt.matrixL().solve(k_all.bottomLeftCorner(n0_, ns_));
            const Eigen::VectorXd z = f0.llt.matrixL().solve((x0_.array() - h.mu).matrix());
            prior.mean.noalias() += w.transpose() * z;
            prior.cov.noalias() -= w.transpose() * w;
        }
        const gp::GaussianSurface post = kalman_update(obs_, y_, prior);
        lowcost_out = gp::sample_mvn(post.mean, post.cov, rng);

        if (ng_ == 0) return;
        Eigen::VectorXd values(ns_ + n0_);
        values.head(ns_) = lowcost_out;
        values.tail(n0_) = x0_;
        const gp::Factorization f = gp::factorize(k_all);
        const Eigen::MatrixXd k_ag = gp::cov_from_distances(d_grid_all_, theta, false).transpose();
        const Eigen::MatrixXd w = f.llt.matrixL().solve(k_ag);
        const Eigen::VectorXd z = f.llt.matrixL().solve((values.array() - h.mu).matrix());
        const Eigen::VectorXd mean = (w.transpose() * z).array() + h.mu;
        const double prior_var = theta.sigma2 + (cfg_.grid_nugget ? theta.nugget : 0.0);

        if (cfg_.joint_grid) {
            Eigen::MatrixXd cov = gp::cov_from_distances(d_grid_, theta, false);
            cov.diagonal().setConstant(prior_var);
            cov.noalias() -= w.transpose() * w;
            grid_out = gp::sample_mvn(mean, cov, rng);
        } else {
            for (Eigen::Index g = 0; g < ng_; ++g) {
                const double var = std::max(prior_var - w.col(g).squaredNorm(), 0.0);
                grid_out[g] = mean[g] + std::sqrt(var) * draw_normal(rng);
            }
        }
        for (Eigen::Index g = 0; g < ng_; ++g) {
            const int r = grid_ref_[static_cast<std::size_t>(g)];
            if (r >= 0) grid_out[g] = x0_[r];
        }
    }

private:
    const AffineObs& obs_;
    const ChainConfig& cfg_;
    Eigen::VectorXd y_;
    Eigen::VectorXd x0_;
    Eigen::Index ns_ = 0;
    Eigen::Index n0_ = 0;
    Eigen::Index ng_ = 0;
    Eigen::MatrixXd d_all_;
    Eigen::MatrixXd d_grid_all_;
    Eigen::MatrixXd d_grid_;
    std::vector<int> grid_ref_;
};

}  // namespace

PosteriorField mcmc_filter(const FilterInput& raw_input, const PriorSpec& prior,
                           const ChainConfig& cfg) {
    raw_input.validate();
    cfg.validate();
    prior.validate();
    const FilterInput input = raw_input.without_empty_networks();
    if (input.n_lowcost() == 0) throw ValidationError("mcmc_filter needs at least one active low-cost site");

    PosteriorField field;
    field.obs = assemble_affine(input);
    field.prior = prior;
    field.reference_values = input.reference_values;
    Rng rng(cfg.seed);

    const int n_keep = cfg.retained();
    field.hyper.reserve(static_cast<std::size_t>(n_keep));
    if (cfg.fixed) {
        field.hyper.assign(static_cast<std::size_t>(n_keep), *cfg.fixed);
        field.acceptance.fill(1.0);
    } else {
        const MarginalLikelihood lik(input, field.obs);
        Sampler sampler(lik, prior, cfg, rng);
        const Coords start = starting_point(field.obs, input, prior);
        const double mu_step = std::max(1e-3, 0.5 * std::sqrt(std::exp(start.u[1])));
        sampler.initialize(start, {mu_step, 0.5, 0.5, 0.5});
        for (int it = 0; it < cfg.burn_in; ++it) sampler.step(true);
        sampler.reset_counters();
        for (int it = cfg.burn_in; it < cfg.iterations; ++it) {
            sampler.step(false);
            if ((it - cfg.burn_in + 1) % cfg.thin == 0) {
                field.hyper.push_back(to_hyper(sampler.state().coords, prior));
            }
        }
        field.acceptance = sampler.acceptance();
        if (std::all_of(field.acceptance.begin(), field.acceptance.end(),
                        [](double a) { return a == 0.0; })) {
            throw NumericalError("MCMC rejected every proposal after burn-in");
        }
        static constexpr std::array<const char*, 4> names{"mu", "sigma2", "phi", "nugget"};
        for (std::size_t c = 0; c < 4; ++c) {
            if (field.acceptance[c] < 0.05 || field.acceptance[c] > 0.8) {
                field.warnings.push_back(fmt::format("acceptance rate for {} is {:.3f}, outside [0.05, 0.8]",
                                                     names[c], field.acceptance[c]));
            }
        }
    }

    const Predictor predictor(input, field.obs, cfg);
    const auto ns = static_cast<Eigen::Index>(input.n_lowcost());
    const auto ng = static_cast<Eigen::Index>(input.grid.size());
    field.lowcost_draws.resize(n_keep, ns);
    field.grid_draws.resize(n_keep, ng);
    Eigen::VectorXd xs(ns);
    Eigen::VectorXd xg(ng);
    for (int d = 0; d < n_keep; ++d) {
        predictor.draw(field.hyper[static_cast<std::size_t>(d)], rng, xs, xg);
        field.lowcost_draws.row(d) = xs.transpose();
        field.grid_draws.row(d) = xg.transpose();
    }
    return field;
}

// ---------------------------------------------------------------------------
// Summaries

double empirical_quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw ValidationError("quantile probability outside [0, 1]");
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double vlo = values[lo];
    if (hi == lo) return vlo;
    const double vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return vlo + (h - static_cast<double>(lo)) * (vhi - vlo);
}

std::vector<SiteSummary> predict_summaries(const Eigen::MatrixXd& draws, double level) {
    if (draws.rows() < 100) {
        throw ValidationError(fmt::format("predict_summaries needs >= 100 draws, got {}", draws.rows()));
    }
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval level must be in (0, 1)");
    const double lo_p = 0.5 * (1.0 - level);
    const double hi_p = 0.5 * (1.0 + level);
    std::vector<SiteSummary> out(static_cast<std::size_t>(draws.cols()));
    std::vector<double> col(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
        for (Eigen::Index i = 0; i < draws.rows(); ++i) col[static_cast<std::size_t>(i)] = draws(i, j);
        auto& s = out[static_cast<std::size_t>(j)];
        s.mean = draws.col(j).mean();
        s.lower = empirical_quantile(col, lo_p);
        s.upper = empirical_quantile(col, hi_p);
    }
    return out;
}

}  // namespace mgpf::filter
