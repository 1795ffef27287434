#include "mgpf/errors.hpp"
#include "mgpf/experiments.hpp"
#include "mgpf/metrics.hpp"
#include "mgpf/random.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mgpf;
using namespace mgpf::metrics;

TEST_SUITE("metrics") {

TEST_CASE("IDW hand values") {
    const std::vector<Location> k{{0.0, 0.0}, {2.0, 0.0}};
    const std::vector<double> v{0.0, 10.0};
    const std::vector<Location> mid{{1.0, 0.0}};
    CHECK(idw_interpolate(k, v, mid)[0] == doctest::Approx(5.0));

    const std::vector<Location> k2{{1.0, 0.0}, {-2.0, 0.0}};
    const std::vector<double> v2{2.0, 8.0};
    const std::vector<Location> origin{{0.0, 0.0}};
    CHECK(idw_interpolate(k2, v2, origin, 2.0)[0] == doctest::Approx(3.2));
    CHECK(idw_interpolate(k2, v2, k2)[1] == 8.0);
}

TEST_CASE("IDW stays within the range of the known values") {
    Rng rng(1);
    std::vector<Location> k(12), t(40);
    std::vector<double> v(12);
    for (auto& l : k) l = {draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1)};
    for (auto& l : t) l = {draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1)};
    for (auto& x : v) x = draw_uniform(rng, -5, 5);
    const auto out = idw_interpolate(k, v, t, 2.0);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    for (double x : out) {
        CHECK(x >= *lo);
        CHECK(x <= *hi);
    }
    CHECK_THROWS_AS((void)idw_interpolate({}, {}, t), ValidationError);
    CHECK_THROWS_AS((void)idw_interpolate(k, v, t, 0.0), ValidationError);
}

TEST_CASE("point metrics") {
    const std::vector<double> t{1.0, 1.0};
    const std::vector<double> p{0.0, 2.0};
    const auto m = point_metrics(p, t);
    CHECK(m.rmse == 1.0);
    CHECK(m.mae == 1.0);
    CHECK(m.bias == 0.0);
    const auto z = point_metrics(t, t);
    CHECK(z.rmse == 0.0);
    CHECK(z.mae == 0.0);
    CHECK(z.bias == 0.0);
    const std::vector<double> plus{2.0, 2.0};
    const auto o = point_metrics(plus, t);
    CHECK(o.rmse == 1.0);
    CHECK(o.mae == 1.0);
    CHECK(o.bias == 1.0);
    CHECK_THROWS_AS((void)point_metrics(p, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("interval score") {
    CHECK(interval_score(1.0, 3.0, 2.0, 0.05) == 2.0);
    CHECK(interval_score(1.0, 3.0, 4.0, 0.05) == doctest::Approx(2.0 + 40.0));
    CHECK(interval_score(1.0, 3.0, 0.5, 0.1) == doctest::Approx(2.0 + 10.0));
    CHECK(interval_score(2.0, 2.0, 2.0, 0.05) == 0.0);
    CHECK_THROWS_AS((void)interval_score(3.0, 1.0, 2.0, 0.05), ValidationError);
}

TEST_CASE("degenerate interval at the truth") {
    const std::vector<double> x{5.0};
    const auto m = interval_metrics(x, x, x);
    CHECK(m.coverage == 1.0);
    CHECK(m.width == 0.0);
    CHECK(m.interval_score == 0.0);
    CHECK(std::isnan(m.crps));
    const auto d = interval_metrics(std::vector<std::vector<double>>{{5.0, 5.0, 5.0}}, x);
    CHECK(d.crps == 0.0);
}

TEST_CASE("sample CRPS matches the pairwise definition") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> d(57);
        for (auto& v : d) v = draw_normal(rng, 1.0, 2.0);
        const double y = draw_normal(rng, 0.0, 2.0);
        double t1 = 0.0, t2 = 0.0;
        for (double a : d) t1 += std::fabs(a - y);
        t1 /= 57.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (std::size_t j = i + 1; j < d.size(); ++j) t2 += std::fabs(d[i] - d[j]);
        }
        t2 /= 57.0 * 56.0 / 2.0;
        CHECK(crps_sample(d, y) == doctest::Approx(t1 - 0.5 * t2).epsilon(1e-12));
    }
    const std::vector<double> one{3.0};
    CHECK(crps_sample(one, 1.0) == 2.0);
}

TEST_CASE("sample CRPS of a standard normal at zero") {
    Rng rng(3);
    std::vector<double> d(100000);
    for (auto& v : d) v = draw_normal(rng);
    const double want = (std::sqrt(2.0) - 1.0) / std::sqrt(M_PI);
    CHECK(want == doctest::Approx(0.2337).epsilon(1e-3));
    CHECK(std::fabs(crps_sample(d, 0.0) - want) < 0.01);
    CHECK(std::fabs(crps_sample(d, 1.3) - oracle::crps_normal(0.0, 1.0, 1.3)) < 0.01);
}

TEST_CASE("interval metrics from draws use empirical quantiles") {
    Rng rng(4);
    std::vector<std::vector<double>> draws(200, std::vector<double>(2000));
    std::vector<double> truth(200);
    for (std::size_t k = 0; k < 200; ++k) {
        for (auto& v : draws[k]) v = draw_normal(rng);
        truth[k] = draw_normal(rng);
    }
    const auto m = interval_metrics(draws, truth);
    CHECK(m.coverage == doctest::Approx(0.95).epsilon(0.05));
    CHECK(m.width == doctest::Approx(2.0 * 1.96).epsilon(0.03));
    CHECK(m.crps == doctest::Approx(1.0 / std::sqrt(M_PI)).epsilon(0.1));
}

TEST_CASE("CI percent difference") {
    CHECK(ci_percent_diff(90.0, 100.0) == doctest::Approx(-10.0));
    CHECK(ci_percent_diff(100.0, 100.0) == 0.0);
    CHECK(ci_percent_diff(200.0, 100.0) == doctest::Approx(100.0));
    CHECK_THROWS_AS((void)ci_percent_diff(1.0, 0.0), ValidationError);
}

TEST_CASE("pseudo-RMSE") {
    const Location c{0.5, 0.5};
    const std::vector<Location> one{{0.55, 0.5}};
    const std::vector<double> exact{7.0};
    CHECK(pseudo_rmse(one, exact, c, 7.0, 0.1) == 0.0);
    const std::vector<Location> two{{0.5, 0.55}, {0.45, 0.5}, {0.9, 0.9}};
    const std::vector<double> p{8.0, 6.0, 100.0};
    CHECK(pseudo_rmse(two, p, c, 7.0, 0.1) == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)pseudo_rmse(two, p, {5.0, 5.0}, 7.0, 0.1), ValidationError);
}

TEST_CASE("metric report summary averages per-timepoint rows") {
    MetricReport r;
    MetricRow a;
    a.method = "m";
    a.timepoint = "1";
    a.point = {1.0, 1.0, 0.5};
    a.n = 3;
    MetricRow b = a;
    b.timepoint = "2";
    b.point = {3.0, 2.0, -0.5};
    b.n = 4;
    r.rows = {a, b};
    const auto s = r.summary();
    REQUIRE(s.size() == 1);
    CHECK(s[0].timepoint == "ALL");
    CHECK(s[0].point.rmse == 2.0);
    CHECK(s[0].point.bias == 0.0);
    CHECK(s[0].n == 7);
    CHECK(std::isnan(s[0].pseudo_rmse));
    std::ostringstream os;
    r.write_csv(os);
    const std::string csv = os.str();
    CHECK(csv.rfind("method,timepoint,n,rmse", 0) == 0);
    CHECK(csv.find("m,ALL,7,2,") != std::string::npos);
}

TEST_CASE("regression-calibration IDW averages networks") {
    // Two identity-like networks whose inversions are known exactly.
    filter::FilterInput in;
    filter::NetworkObservations a;
    a.network_id = "a";
    a.model = oracle::linear_model(1.0, 2.0, 1.0, 0.0);
    a.sites = {{0.0, 0.0}};
    a.site_ids = {"a0"};
    a.readings = {1.0 + 2.0 * 10.0};  // inverts to 10
    a.covariates = {Covariates{}};
    filter::NetworkObservations b = a;
    b.network_id = "b";
    b.model = oracle::linear_model(0.0, 1.0, 1.0, 0.0);
    b.sites = {{1.0, 0.0}};
    b.site_ids = {"b0"};
    b.readings = {20.0};
    in.networks = {a, b};
    const std::vector<Location> t{{0.5, 0.0}, {0.0, 0.0}};
    const auto out = exp::regcal_idw(in, t, 2.0);
    // Each network has one site, so each IDW map is constant.
    CHECK(out[0] == doctest::Approx(15.0));
    CHECK(out[1] == doctest::Approx(15.0));
}

}  // TEST_SUITE
