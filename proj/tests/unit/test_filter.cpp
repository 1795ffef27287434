#include "mgpf/errors.hpp"
#include "mgpf/filter.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mgpf;
using namespace mgpf::filter;

namespace {

const HyperDraw kHyper{10.0, 4.0, 2.0, 0.3};

ChainConfig fixed_chain(std::uint64_t seed, int draws) {
    ChainConfig c;
    c.iterations = draws;
    c.burn_in = 0;
    c.thin = 1;
    c.seed = seed;
    c.fixed = kHyper;
    return c;
}

// Conditional prior of x at low-cost sites given the reference values.
gp::GaussianSurface lowcost_prior(const FilterInput& in, const HyperDraw& h) {
    const auto sites = in.lowcost_sites();
    return gp::conditional_gp(h.mu, h.cov(), in.reference_sites, in.reference_vector(), sites);
}

NetworkObservations single_site_network(const std::string& id, Location s, double y,
                                        const obs::ObsModelParams& m) {
    NetworkObservations n;
    n.network_id = id;
    n.site_ids = {id + "_0"};
    n.sites = {s};
    n.readings = {y};
    n.covariates = {Covariates{}};
    n.model = m;
    return n;
}

}  // namespace

TEST_SUITE("filter") {

TEST_CASE("assemble_affine stacks networks and plugs in the floored variance") {
    Rng rng(1);
    const auto in = oracle::random_instance(rng, 1, {3, 2}, 0, kHyper);
    const auto obs = assemble_affine(in);
    REQUIRE(obs.gain.size() == 5);
    const Eigen::VectorXd d = oracle::plugin_noise(in);
    Eigen::Index k = 0;
    for (const auto& net : in.networks) {
        for (std::size_t i = 0; i < net.sites.size(); ++i, ++k) {
            CHECK(obs.offset[k] == net.model.beta[0]);
            CHECK(obs.gain[k] == net.model.beta[1]);
            CHECK(obs.naive[k] == doctest::Approx((net.readings[i] - net.model.beta[0]) / net.model.beta[1]));
            CHECK(obs.noise_var[k] == doctest::Approx(d[k]));
        }
    }
}

TEST_CASE("assemble_affine counts negative inversions and rejects tiny gains") {
    FilterInput in;
    in.networks.push_back(single_site_network("a", {0.1, 0.1}, -5.0, oracle::linear_model(0.0, 1.0, 1.0, 0.0)));
    CHECK(assemble_affine(in).negative_inversions == 1);
    in.networks[0].model.beta[1] = 1e-9;
    CHECK_THROWS_AS((void)assemble_affine(in), NumericalError);
}

TEST_CASE("scalar conjugate update") {
    // x ~ N(0, 1), y = x + N(0, 1), y = 2  =>  x | y ~ N(1, 0.5)
    AffineObs obs;
    obs.offset = Eigen::VectorXd::Zero(1);
    obs.gain = Eigen::VectorXd::Ones(1);
    obs.noise_var = Eigen::VectorXd::Ones(1);
    gp::GaussianSurface prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.cov = Eigen::MatrixXd::Identity(1, 1);
    Eigen::VectorXd y(1);
    y << 2.0;
    const auto post = kalman_update(obs, y, prior);
    CHECK(post.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(post.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("kalman_update matches brute-force conditioning") {
    Rng rng(2);
    for (int rep = 0; rep < 25; ++rep) {
        const int n_ref = rep % 3;
        const auto in = oracle::random_instance(rng, n_ref, {2 + rep % 3, 1 + rep % 4}, 0, kHyper);
        const auto obs = assemble_affine(in);
        const auto post = kalman_update(obs, in.stacked_readings(), lowcost_prior(in, kHyper));
        const auto want = oracle::brute_force_posterior(in, kHyper);
        CHECK((post.mean - want.mean).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((post.cov - want.cov).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("kalman_update validates dimensions and variances") {
    AffineObs obs;
    obs.offset = Eigen::VectorXd::Zero(2);
    obs.gain = Eigen::VectorXd::Ones(2);
    obs.noise_var = Eigen::VectorXd::Ones(2);
    gp::GaussianSurface prior;
    prior.mean = Eigen::VectorXd::Zero(3);
    prior.cov = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS((void)kalman_update(obs, Eigen::VectorXd::Zero(2), prior), ValidationError);
    prior.mean = Eigen::VectorXd::Zero(2);
    prior.cov = Eigen::MatrixXd::Identity(2, 2);
    obs.noise_var[1] = -1.0;
    CHECK_THROWS_AS((void)kalman_update(obs, Eigen::VectorXd::Zero(2), prior), ValidationError);
}

TEST_CASE("posterior variance never exceeds the prior variance") {
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const auto in = oracle::random_instance(rng, 1, {4, 3}, 0, kHyper);
        const auto prior = lowcost_prior(in, kHyper);
        const auto post = kalman_update(assemble_affine(in), in.stacked_readings(), prior);
        for (Eigen::Index i = 0; i < post.cov.rows(); ++i) {
            CHECK(post.cov(i, i) <= prior.cov(i, i) + 1e-12);
            CHECK(post.cov(i, i) >= -1e-12);
        }
    }
}

TEST_CASE("two-site marginal likelihood matches the closed form") {
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const double a = draw_uniform(rng, -5.0, 5.0);
        const double b = draw_uniform(rng, 0.5, 2.5);
        const double alpha0 = draw_uniform(rng, 0.1, 3.0);
        FilterInput in;
        in.reference_ids = {"r"};
        in.reference_sites = {{draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1)}};
        in.reference_values = {draw_uniform(rng, 0.0, 30.0)};
        const Location s{draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1)};
        in.networks.push_back(single_site_network(
            "n", s, draw_uniform(rng, 0.0, 40.0), oracle::linear_model(a, b, alpha0, 0.0)));
        const double mu = draw_uniform(rng, 0.0, 30.0);
        const gp::CovParams theta{draw_uniform(rng, 0.1, 20.0), draw_uniform(rng, 0.05, 8.0),
                                  draw_uniform(rng, 0.0, 3.0)};
        const double dist = std::hypot(s.x - in.reference_sites[0].x, s.y - in.reference_sites[0].y);
        const double want = oracle::two_site_loglik(in.networks[0].readings[0], in.reference_values[0], a, b,
                                                    std::max(alpha0, 0.05), dist, mu, theta.sigma2, theta.phi,
                                                    theta.nugget);
        CHECK(joint_marginal_loglik(mu, theta, in) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("marginal likelihood matches the dense density on larger instances") {
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const auto in = oracle::random_instance(rng, 2, {3, 3}, 0, kHyper);
        const MarginalLikelihood lik(in);
        const gp::CovParams theta{3.0, 1.5, 0.2};
        const double mu = 8.0;
        // Dense oracle: y ~ N(a + b mu, B K B' + D), x0 ~ N(mu, K00), jointly.
        std::vector<Location> sites = in.lowcost_sites();
        sites.insert(sites.end(), in.reference_sites.begin(), in.reference_sites.end());
        Eigen::MatrixXd k = oracle::cov_matrix(sites, 3.0, 1.5, 0.2);
        const auto obs = assemble_affine(in);
        const Eigen::Index ns = obs.gain.size();
        Eigen::VectorXd scale = Eigen::VectorXd::Ones(k.rows());
        scale.head(ns) = obs.gain;
        Eigen::MatrixXd s = scale.asDiagonal() * k * scale.asDiagonal();
        s.diagonal().head(ns) += oracle::plugin_noise(in);
        Eigen::VectorXd data(k.rows()), mean(k.rows());
        data.head(ns) = in.stacked_readings() - obs.offset;
        data.tail(2) = in.reference_vector();
        mean = scale * mu;
        CHECK(lik(mu, theta) == doctest::Approx(oracle::log_normal_density(data, mean, s)).epsilon(1e-10));
        CHECK((lik.joint_cov(theta) - s).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("marginal likelihood is invariant to site order within a network") {
    Rng rng(6);
    auto in = oracle::random_instance(rng, 1, {5}, 0, kHyper);
    const gp::CovParams theta{2.0, 3.0, 0.1};
    const double before = joint_marginal_loglik(7.0, theta, in);
    auto& n = in.networks[0];
    std::reverse(n.sites.begin(), n.sites.end());
    std::reverse(n.readings.begin(), n.readings.end());
    std::reverse(n.site_ids.begin(), n.site_ids.end());
    CHECK(joint_marginal_loglik(7.0, theta, in) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("an empty network changes nothing") {
    Rng rng(7);
    auto in = oracle::random_instance(rng, 1, {4}, 3, kHyper);
    NetworkObservations empty;
    empty.network_id = "ghost";
    empty.model = oracle::linear_model(0.0, 1.0, 1.0, 0.0);
    auto with_empty = in;
    with_empty.networks.insert(with_empty.networks.begin(), empty);
    CHECK(with_empty.without_empty_networks().networks.size() == 1);
    const auto c = fixed_chain(3, 100);
    const auto a = mcmc_filter(in, PriorSpec{}, c);
    const auto b = mcmc_filter(with_empty, PriorSpec{}, c);
    CHECK(a.lowcost_draws == b.lowcost_draws);
    CHECK(a.grid_draws == b.grid_draws);
}

TEST_CASE("a reading-free low-cost set is rejected") {
    FilterInput in;
    in.reference_ids = {"r"};
    in.reference_sites = {{0.5, 0.5}};
    in.reference_values = {3.0};
    CHECK_THROWS_AS((void)mcmc_filter(in, PriorSpec{}, fixed_chain(1, 10)), ValidationError);
}

TEST_CASE("input validation") {
    Rng rng(8);
    auto in = oracle::random_instance(rng, 1, {2}, 0, kHyper);
    auto bad = in;
    bad.reference_values[0] = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = in;
    bad.networks[0].readings.pop_back();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = in;
    bad.networks[0].readings[0] = NAN;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("fixed-hyperparameter draws match the oracle within 3 Monte Carlo SEs") {
    Rng rng(9);
    const auto in = oracle::random_instance(rng, 2, {3, 3}, 4, kHyper);
    const int n = 4000;
    const auto field = mcmc_filter(in, PriorSpec{}, fixed_chain(11, n));
    const auto want = oracle::brute_force_posterior(in, kHyper);
    const Eigen::Index ns = field.lowcost_draws.cols();
    for (Eigen::Index j = 0; j < ns + field.grid_draws.cols(); ++j) {
        const Eigen::VectorXd col = j < ns ? Eigen::VectorXd(field.lowcost_draws.col(j))
                                           : Eigen::VectorXd(field.grid_draws.col(j - ns));
        const double se = std::sqrt(want.cov(j, j) / n);
        CHECK(std::fabs(col.mean() - want.mean[j]) < 3.0 * se);
        const double var = (col.array() - col.mean()).square().sum() / (n - 1);
        CHECK(var == doctest::Approx(want.cov(j, j)).epsilon(0.1));
    }
}

TEST_CASE("grid site on a reference site takes the reference value") {
    Rng rng(10);
    auto in = oracle::random_instance(rng, 1, {3}, 0, kHyper);
    in.grid = {in.reference_sites[0], {0.5, 0.5}};
    in.grid_ids = {"on_ref", "free"};
    const auto field = mcmc_filter(in, PriorSpec{}, fixed_chain(2, 50));
    CHECK((field.grid_draws.col(0).array() == in.reference_values[0]).all());
}

TEST_CASE("joint and per-site grid draws agree in distribution") {
    Rng rng(11);
    const auto in = oracle::random_instance(rng, 1, {4}, 3, kHyper);
    auto c = fixed_chain(5, 4000);
    const auto marginal = mcmc_filter(in, PriorSpec{}, c);
    c.joint_grid = true;
    const auto joint = mcmc_filter(in, PriorSpec{}, c);
    for (Eigen::Index g = 0; g < 3; ++g) {
        const double m1 = marginal.grid_draws.col(g).mean();
        const double m2 = joint.grid_draws.col(g).mean();
        const double sd = std::sqrt((marginal.grid_draws.col(g).array() - m1).square().mean());
        CHECK(std::fabs(m1 - m2) < 4.0 * sd * std::sqrt(2.0 / 4000));
    }
}

TEST_CASE("phi bounds from geometry") {
    const auto b = phi_bounds_from_geometry(2.0);
    CHECK(std::exp(-b.phi_min * 2.0) == doctest::Approx(0.98));
    CHECK(std::exp(-b.phi_max * 2.0) == doctest::Approx(0.02));
    CHECK_THROWS_AS((void)phi_bounds_from_geometry(0.0), ValidationError);
    CHECK_THROWS_AS((void)phi_bounds_from_geometry(1.0, 0.5, 0.4), ValidationError);
}

TEST_CASE("derive_prior follows the bound rules") {
    FilterInput in;
    in.reference_ids = {"r"};
    in.reference_sites = {{0.0, 0.0}};
    in.reference_values = {5.0};
    NetworkObservations a;
    a.network_id = "a";
    a.model = oracle::linear_model(0.0, 2.0, 1.0, 0.0);
    a.sites = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    a.site_ids = {"a0", "a1", "a2"};
    a.readings = {2.0, 4.0, 12.0};  // naive 1, 2, 6
    a.covariates.assign(3, Covariates{});
    NetworkObservations p = a;
    p.network_id = "p";
    p.model = oracle::linear_model(0.0, 1.0, 1.0, 0.0);
    p.sites = {{0.5, 0.5}, {0.2, 0.2}};
    p.site_ids = {"p0", "p1"};
    p.readings = {1.0, 3.0};  // naive 1, 3
    p.covariates.assign(2, Covariates{});
    in.networks = {a, p};

    const auto obs = assemble_affine(in);
    const std::vector<double> naive{1, 2, 6, 1, 3};
    const double m = 13.0 / 5.0;
    double v = 0.0;
    for (double x : naive) v += (x - m) * (x - m);
    v /= 4.0;
    PriorRules rules;
    auto prior = derive_prior(in, obs, rules);
    CHECK(prior.sigma2_max == doctest::Approx(2.0 * v));
    CHECK(prior.nugget_max == doctest::Approx(v));
    CHECK(prior.mu_scale == doctest::Approx(10.0 * std::sqrt(v)));
    CHECK(std::exp(-prior.phi_max * std::sqrt(2.0)) == doctest::Approx(0.02));
    CHECK(std::exp(-prior.phi_min * std::sqrt(2.0)) == doctest::Approx(0.98));

    rules.primary_network = "p";
    prior = derive_prior(in, obs, rules);
    CHECK(prior.nugget_max == doctest::Approx(2.0));  // var(1, 3) of raw readings

    // Identical readings floor every bound at 1e-3.
    for (auto& net : in.networks) {
        for (std::size_t i = 0; i < net.readings.size(); ++i) net.readings[i] = net.model.beta[1] * 4.0;
    }
    prior = derive_prior(in, assemble_affine(in), {});
    CHECK(prior.sigma2_max == 1e-3);
    CHECK(prior.nugget_max == 1e-3);
    CHECK(prior.mu_scale == 1e-3);
}

TEST_CASE("prior spec validation") {
    PriorSpec p;
    CHECK_NOTHROW(p.validate());
    p.phi_max = p.phi_min;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("chain config validation and retained count") {
    ChainConfig c;
    CHECK(c.retained() == 1000);
    c.burn_in = c.iterations;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = ChainConfig{};
    c.target_acceptance = 1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("MCMC chain is deterministic for a seed and differs across seeds") {
    Rng rng(12);
    const auto in = oracle::random_instance(rng, 1, {5, 4}, 2, kHyper);
    const auto prior = derive_prior(in, assemble_affine(in));
    ChainConfig c;
    c.iterations = 600;
    c.burn_in = 200;
    c.thin = 2;
    c.seed = 77;
    const auto a = mcmc_filter(in, prior, c);
    const auto b = mcmc_filter(in, prior, c);
    CHECK(a.lowcost_draws == b.lowcost_draws);
    CHECK(a.grid_draws == b.grid_draws);
    REQUIRE(a.hyper.size() == 200);
    for (std::size_t i = 0; i < a.hyper.size(); ++i) CHECK(a.hyper[i].mu == b.hyper[i].mu);
    c.seed = 78;
    const auto d = mcmc_filter(in, prior, c);
    CHECK(a.lowcost_draws != d.lowcost_draws);
}

TEST_CASE("MCMC draws respect the prior support") {
    Rng rng(13);
    const auto in = oracle::random_instance(rng, 2, {6, 6}, 0, kHyper);
    const auto prior = derive_prior(in, assemble_affine(in));
    ChainConfig c;
    c.iterations = 1500;
    c.burn_in = 500;
    c.thin = 2;
    c.seed = 3;
    const auto f = mcmc_filter(in, prior, c);
    for (const auto& h : f.hyper) {
        CHECK(h.mu >= 0.0);
        CHECK(h.sigma2 < prior.sigma2_max);
        CHECK(h.nugget < prior.nugget_max);
        CHECK(h.phi > prior.phi_min);
        CHECK(h.phi < prior.phi_max);
    }
    for (double a : f.acceptance) {
        CHECK(a > 0.0);
        CHECK(a < 1.0);
    }
}

TEST_CASE("MCMC posterior of the mean concentrates near the truth") {
    // Many informative sites: the posterior mean of mu should land near the
    // generating value.
    Rng rng(14);
    const HyperDraw truth{20.0, 4.0, 3.0, 0.2};
    const auto in = oracle::random_instance(rng, 3, {25, 25}, 0, truth);
    const auto prior = derive_prior(in, assemble_affine(in));
    ChainConfig c;
    c.iterations = 3000;
    c.burn_in = 1000;
    c.thin = 2;
    c.seed = 5;
    const auto f = mcmc_filter(in, prior, c);
    double m = 0.0;
    for (const auto& h : f.hyper) m += h.mu;
    m /= static_cast<double>(f.hyper.size());
    CHECK(std::fabs(m - 20.0) < 3.0);
}

TEST_CASE("empirical quantiles interpolate between order statistics") {
    const std::vector<double> v{5.0, 1.0, 3.0, 2.0, 4.0};
    CHECK(empirical_quantile(v, 0.0) == 1.0);
    CHECK(empirical_quantile(v, 1.0) == 5.0);
    CHECK(empirical_quantile(v, 0.5) == 3.0);
    CHECK(empirical_quantile(v, 0.125) == doctest::Approx(1.5));
    CHECK(empirical_quantile({7.0}, 0.3) == 7.0);
    CHECK_THROWS_AS((void)empirical_quantile({}, 0.5), ValidationError);
    CHECK_THROWS_AS((void)empirical_quantile(v, 1.5), ValidationError);
}

TEST_CASE("predict_summaries needs 100 draws and brackets the mean") {
    Eigen::MatrixXd d(100, 2);
    for (int i = 0; i < 100; ++i) {
        d(i, 0) = i;
        d(i, 1) = -i;
    }
    const auto s = predict_summaries(d, 0.9);
    CHECK(s[0].mean == doctest::Approx(49.5));
    CHECK(s[0].lower == doctest::Approx(0.05 * 99));
    CHECK(s[0].upper == doctest::Approx(0.95 * 99));
    CHECK(s[1].lower < s[1].mean);
    CHECK(s[1].mean < s[1].upper);
    CHECK_THROWS_AS((void)predict_summaries(Eigen::MatrixXd(99, 1)), ValidationError);
    CHECK_THROWS_AS((void)predict_summaries(d, 1.0), ValidationError);
}

TEST_CASE("affine operator hand values") {
    FilterInput in;
    obs::ObsModelParams id;
    id.beta = {0.0, 1.0};
    id.variance = {obs::VarianceForm::Homoscedastic, 2.0, 0.0};
    in.networks.push_back(single_site_network("id", {0.1, 0.1}, 3.0, id));
    auto obs = assemble_affine(in);
    CHECK(obs.offset[0] == 0.0);
    CHECK(obs.gain[0] == 1.0);
    CHECK(obs.noise_var[0] == 2.0);

    auto pa = single_site_network("pa", {0.2, 0.2}, 20.0, obs::preset("purpleair-barkjohn"));
    pa.covariates[0].rh = 50.0;
    in.networks = {pa};
    obs = assemble_affine(in);
    CHECK(obs.offset[0] == doctest::Approx(-2.7483).epsilon(1e-12));
    CHECK(obs.gain[0] == 1.9084);

    Rng rng(30);
    in = oracle::random_instance(rng, 0, {2, 3}, 0, kHyper);
    CHECK(assemble_affine(in).gain.size() == 5);
}

TEST_CASE("Kalman limits: uninformative and exact data") {
    Rng rng(31);
    const auto in = oracle::random_instance(rng, 1, {4}, 0, kHyper);
    const auto prior = lowcost_prior(in, kHyper);
    AffineObs obs;
    obs.offset = Eigen::VectorXd::Zero(4);
    obs.gain = Eigen::VectorXd::Ones(4);
    obs.noise_var = Eigen::VectorXd::Constant(4, 1e12);
    const Eigen::VectorXd y = in.stacked_readings();
    auto post = kalman_update(obs, y, prior);
    CHECK((post.mean - prior.mean).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(((post.cov - prior.cov).array() / prior.cov.diagonal().maxCoeff()).abs().maxCoeff() < 1e-4);

    obs.noise_var = Eigen::VectorXd::Constant(4, 1e-12);
    post = kalman_update(obs, y, prior);
    CHECK((post.mean - y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("transparent sensors reduce to the GP density of the readings") {
    Rng rng(32);
    auto in = oracle::random_instance(rng, 0, {5}, 0, kHyper);
    // Identity model with a vanishing variance and no floor.
    obs::ObsModelParams id;
    id.beta = {0.0, 1.0};
    id.variance = {obs::VarianceForm::Homoscedastic, 0.0, 0.0};
    in.networks[0].model = id;
    const gp::CovParams theta{3.0, 2.0, 0.4};
    const Eigen::MatrixXd k = oracle::cov_matrix(in.lowcost_sites(), 3.0, 2.0, 0.4);
    const Eigen::VectorXd y = in.stacked_readings();
    const double want = oracle::log_normal_density(y, Eigen::VectorXd::Constant(5, 6.0), k);
    CHECK(joint_marginal_loglik(6.0, theta, in) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("three-site likelihood against an entry-by-entry oracle") {
    Rng rng(33);
    for (int rep = 0; rep < 20; ++rep) {
        const auto in = oracle::random_instance(rng, 1, {1, 1}, 0, kHyper);
        const gp::CovParams theta{draw_uniform(rng, 0.5, 6), draw_uniform(rng, 0.3, 5), draw_uniform(rng, 0, 1)};
        const double mu = draw_uniform(rng, 0, 20);
        // order: low-cost n0, low-cost n1, reference
        const std::vector<Location> s{in.networks[0].sites[0], in.networks[1].sites[0], in.reference_sites[0]};
        const double b[3] = {in.networks[0].model.beta[1], in.networks[1].model.beta[1], 1.0};
        const double a[3] = {in.networks[0].model.beta[0], in.networks[1].model.beta[0], 0.0};
        const Eigen::VectorXd d = oracle::plugin_noise(in);
        Eigen::MatrixXd c(3, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                c(i, j) = b[i] * b[j] * oracle::exp_cov(s[i], s[j], theta.sigma2, theta.phi, theta.nugget, i == j);
            }
        }
        c(0, 0) += d[0];
        c(1, 1) += d[1];
        Eigen::VectorXd z(3), m(3);
        z << in.networks[0].readings[0], in.networks[1].readings[0], in.reference_values[0];
        for (int i = 0; i < 3; ++i) m[i] = a[i] + b[i] * mu;
        CHECK(joint_marginal_loglik(mu, theta, in) ==
              doctest::Approx(oracle::log_normal_density(z, m, c)).epsilon(1e-10));
    }
}

TEST_CASE("Gaussian scaling identity of the marginal likelihood") {
    Rng rng(34);
    auto in = oracle::random_instance(rng, 2, {3, 2}, 0, kHyper);
    for (auto& net : in.networks) {
        net.model.variance = {obs::VarianceForm::Homoscedastic, 0.8, 0.0};
        net.model.var_floor = 0.0;
    }
    const double mu = 9.0;
    const gp::CovParams theta{2.0, 1.7, 0.3};
    const double base = joint_marginal_loglik(mu, theta, in);
    const double c = 3.7;
    // Scale the centred data by sqrt(c) and every variance by c.
    auto scaled = in;
    for (auto& net : scaled.networks) {
        const double a = net.model.beta[0];
        const double b = net.model.beta[1];
        for (double& y : net.readings) y = a + b * mu + std::sqrt(c) * (y - a - b * mu);
        net.model.variance.alpha0 *= c;
    }
    for (double& v : scaled.reference_values) v = mu + std::sqrt(c) * (v - mu);
    const double n = 7.0;
    const double got = joint_marginal_loglik(mu, {c * theta.sigma2, theta.phi, c * theta.nugget}, scaled);
    CHECK(got == doctest::Approx(base - 0.5 * n * std::log(c)).epsilon(1e-10));
}

TEST_CASE("precise identity network dominates the posterior") {
    Rng rng(35);
    auto in = oracle::random_instance(rng, 0, {6}, 0, kHyper);
    obs::ObsModelParams id;
    id.beta = {0.0, 1.0};
    id.variance = {obs::VarianceForm::Homoscedastic, 1e-6, 0.0};
    in.networks[0].model = id;
    const auto f = mcmc_filter(in, PriorSpec{}, fixed_chain(4, 500));
    const auto s = predict_summaries(f.lowcost_draws);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Eigen::VectorXd col = f.lowcost_draws.col(static_cast<Eigen::Index>(i));
        const double sd = std::sqrt((col.array() - col.mean()).square().mean());
        CHECK(std::fabs(s[i].mean - in.networks[0].readings[i]) <= 2.0 * sd + 1e-9);
    }
}

TEST_CASE("reference site in the grid without the grid nugget is exact") {
    Rng rng(36);
    auto in = oracle::random_instance(rng, 1, {3}, 0, kHyper);
    in.grid = {in.reference_sites[0]};
    in.grid_ids = {"g"};
    auto c = fixed_chain(6, 200);
    c.grid_nugget = false;
    const auto f = mcmc_filter(in, PriorSpec{}, c);
    const auto s = predict_summaries(f.grid_draws);
    CHECK(s[0].mean == doctest::Approx(in.reference_values[0]));
    CHECK(s[0].upper - s[0].lower < 1e-6);
}

TEST_CASE("95% intervals cover GP-generated truth") {
    // 20 sites (2 reference, 18 low-cost), 100 independent timepoints.
    Rng rng(37);
    int covered = 0;
    int total = 0;
    for (int t = 0; t < 100; ++t) {
        const HyperDraw truth{draw_uniform(rng, 5.0, 20.0), draw_uniform(rng, 1.0, 6.0),
                              draw_uniform(rng, 1.0, 4.0), draw_uniform(rng, 0.05, 0.5)};
        Eigen::VectorXd x;
        const auto in = oracle::random_instance(rng, 2, {9, 9}, 0, truth, &x);
        const auto prior = derive_prior(in, assemble_affine(in));
        ChainConfig cfg;
        cfg.iterations = 2000;
        cfg.burn_in = 800;
        cfg.thin = 4;
        cfg.seed = derive_seed(5, static_cast<std::uint64_t>(t));
        const auto f = mcmc_filter(in, prior, cfg);
        const auto s = predict_summaries(f.lowcost_draws);
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double xi = x[static_cast<Eigen::Index>(2 + i)];
            covered += (xi >= s[i].lower && xi <= s[i].upper) ? 1 : 0;
            ++total;
        }
    }
    MESSAGE("coverage ", static_cast<double>(covered) / total);
    CHECK(static_cast<double>(covered) / total >= 0.90);
}

TEST_CASE("summary hand cases") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(100, 1, 3.0);
    const auto s = predict_summaries(c);
    CHECK(s[0].mean == 3.0);
    CHECK(s[0].lower == 3.0);
    CHECK(s[0].upper == 3.0);

    Rng rng(38);
    Eigen::MatrixXd n(100000, 2);
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        n(i, 0) = draw_normal(rng);
        n(i, 1) = draw_uniform(rng, 0.0, 1.0);
    }
    const auto q = predict_summaries(n, 0.95);
    CHECK(std::fabs(q[0].lower + 1.96) < 0.02);
    CHECK(std::fabs(q[0].upper - 1.96) < 0.02);
    const auto h = predict_summaries(n, 0.5);
    CHECK(std::fabs(h[1].lower - 0.25) < 0.01);
    CHECK(std::fabs(h[1].upper - 0.75) < 0.01);
}

}  // TEST_SUITE
