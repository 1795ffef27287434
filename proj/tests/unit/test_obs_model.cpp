#include "mgpf/errors.hpp"
#include "mgpf/obs_model.hpp"
#include "mgpf/random.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>

using namespace mgpf;
using namespace mgpf::obs;

namespace {

CollocatedSeries make_series(Rng& rng, int n, const std::vector<double>& beta, bool with_rh,
                             double noise_sd) {
    CollocatedSeries s;
    for (int i = 0; i < n; ++i) {
        const double x = draw_uniform(rng, 0.0, 50.0);
        Covariates z;
        z.rh = draw_uniform(rng, 20.0, 90.0);
        double y = beta[0] + beta[1] * x;
        if (with_rh) y += beta[2] * z.rh;
        y += draw_normal(rng, 0.0, noise_sd);
        s.x.push_back(x);
        s.y.push_back(y);
        s.z.push_back(z);
    }
    return s;
}

}  // namespace

TEST_SUITE("obs_model") {

TEST_CASE("PurpleAir preset carries the published coefficients") {
    const auto p = preset("purpleair-barkjohn");
    REQUIRE(p.beta.size() == 3);
    CHECK(p.beta[0] == -10.9733);
    CHECK(p.beta[1] == 1.9084);
    CHECK(p.beta[2] == 0.1645);
    CHECK(p.variance.form == VarianceForm::LogLinear);
    CHECK(p.variance.alpha0 == 0.4973);
    CHECK(p.variance.alpha1 == 0.8802);
    CHECK(p.spec.covariates == std::vector<std::string>{"rh"});
    CHECK(p.spec.interactions.empty());
}

TEST_CASE("SEARCH preset carries the published coefficients") {
    const auto p = preset("search-baltimore");
    const std::vector<double> want{-0.9756, 1.0789, 0.0422, -0.0357, 0.4086, -0.0030, 0.0058, -0.0736};
    CHECK(p.beta == want);
    CHECK(p.variance.alpha0 == -1.2136);
    CHECK(p.variance.alpha1 == 1.1774);
    CHECK(p.spec.interactions.size() == 3);
    CHECK_THROWS_AS((void)preset("nope"), ValidationError);
    CHECK(preset_names().size() == 2);
}

TEST_CASE("PurpleAir offset at RH 50") {
    const auto p = preset("purpleair-barkjohn");
    Covariates z;
    z.rh = 50.0;
    CHECK(p.offset(z) == doctest::Approx(-2.7483).epsilon(1e-12));
    CHECK(p.gain(z) == 1.9084);
    const auto e = eval_obs_model(10.0, z, p);
    CHECK(e.mean == doctest::Approx(-2.7483 + 19.084));
    CHECK(e.tau2 == doctest::Approx(std::exp(0.4973 + 0.8802 * std::log(11.0))));
}

TEST_CASE("SEARCH gain picks up the interactions") {
    const auto p = preset("search-baltimore");
    Covariates z{60.0, 20.0, 1.0};
    CHECK(p.gain(z) == doctest::Approx(1.0789 - 0.0030 * 60 + 0.0058 * 20 - 0.0736));
    CHECK(p.offset(z) == doctest::Approx(-0.9756 + 0.0422 * 60 - 0.0357 * 20 + 0.4086));
}

TEST_CASE("OLS is exact on noise-free data") {
    Rng rng(1);
    const auto s = make_series(rng, 40, {-3.0, 1.7, 0.05}, true, 0.0);
    RegressionSpec spec;
    spec.covariates = {"rh"};
    const auto fit = fit_regression(s, spec);
    CHECK(fit.beta[0] == doctest::Approx(-3.0).epsilon(1e-9));
    CHECK(fit.beta[1] == doctest::Approx(1.7).epsilon(1e-9));
    CHECK(fit.beta[2] == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0));
    CHECK(fit.residual_variance < 1e-20);
}

TEST_CASE("OLS matches normal equations") {
    Rng rng(2);
    const auto s = make_series(rng, 200, {1.0, 2.0, -0.1}, true, 3.0);
    RegressionSpec spec;
    spec.covariates = {"rh"};
    const auto fit = fit_regression(s, spec);
    Eigen::MatrixXd X(200, 3);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = s.x[i];
        X(i, 2) = s.z[i].rh;
        y[i] = s.y[i];
    }
    const Eigen::VectorXd b = (X.transpose() * X).inverse() * X.transpose() * y;
    for (int k = 0; k < 3; ++k) CHECK(fit.beta[k] == doctest::Approx(b[k]).epsilon(1e-8));
}

TEST_CASE("rank deficiency names the collinear column") {
    CollocatedSeries s;
    for (int i = 0; i < 10; ++i) {
        s.x.push_back(i);
        s.y.push_back(2.0 * i);
        Covariates z;
        z.rh = 50.0;  // constant, collinear with the intercept
        s.z.push_back(z);
    }
    RegressionSpec spec;
    spec.covariates = {"rh"};
    try {
        (void)fit_regression(s, spec);
        FAIL("expected a rank-deficiency error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("rank deficient") != std::string::npos);
        CHECK((msg.find("rh") != std::string::npos || msg.find("intercept") != std::string::npos));
    }
}

TEST_CASE("too few rows is a validation error") {
    CollocatedSeries s;
    s.x = {1.0, 2.0};
    s.y = {1.0, 2.0};
    s.z = {Covariates{}, Covariates{}};
    CHECK_THROWS_AS((void)fit_regression(s, RegressionSpec{}), ValidationError);
}

TEST_CASE("regression spec validation") {
    RegressionSpec s;
    s.covariates = {"humidity"};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.covariates = {"rh"};
    s.interactions = {"temp"};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.interactions = {"rh"};
    CHECK_NOTHROW(s.validate());
    CHECK(s.n_coefficients() == 4);
}

TEST_CASE("weighted fit matches the weighted normal equations") {
    Rng rng(3);
    const auto s = make_series(rng, 100, {2.0, 1.5, 0.0}, false, 2.0);
    std::vector<double> w(100);
    for (auto& v : w) v = draw_uniform(rng, 0.1, 3.0);
    const auto fit = fit_weighted(s, RegressionSpec{}, w);
    Eigen::MatrixXd X(100, 2);
    Eigen::VectorXd y(100);
    Eigen::VectorXd W(100);
    for (int i = 0; i < 100; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = s.x[i];
        y[i] = s.y[i];
        W[i] = w[i];
    }
    const Eigen::MatrixXd xtw = X.transpose() * W.asDiagonal();
    const Eigen::VectorXd b = (xtw * X).inverse() * xtw * y;
    CHECK(fit.beta[0] == doctest::Approx(b[0]).epsilon(1e-8));
    CHECK(fit.beta[1] == doctest::Approx(b[1]).epsilon(1e-8));
    std::vector<double> bad(100, 1.0);
    bad[3] = 0.0;
    CHECK_THROWS_AS((void)fit_weighted(s, RegressionSpec{}, bad), ValidationError);
}

TEST_CASE("GLS refit uses inverse-variance weights") {
    Rng rng(4);
    const auto s = make_series(rng, 80, {0.5, 1.2, 0.0}, false, 1.0);
    const VarianceModel vm{VarianceForm::LinearClamped, 0.5, 0.2};
    const auto gls = gls_refit(s, vm, 0.1, RegressionSpec{});
    std::vector<double> w;
    for (double x : s.x) w.push_back(1.0 / std::max(0.5 + 0.2 * x, 0.1));
    const auto wls = fit_weighted(s, RegressionSpec{}, w);
    CHECK(gls.beta[0] == doctest::Approx(wls.beta[0]).epsilon(1e-12));
    CHECK(gls.beta[1] == doctest::Approx(wls.beta[1]).epsilon(1e-12));
    const VarianceModel zero{VarianceForm::Homoscedastic, 0.0, 0.0};
    CHECK_THROWS_AS((void)gls_refit(s, zero, 0.0, RegressionSpec{}), ValidationError);
}

TEST_CASE("variance forms evaluate as documented") {
    CHECK(VarianceModel{VarianceForm::LogLinear, 0.3, 0.8}.tau2(4.0) ==
          doctest::Approx(std::exp(0.3 + 0.8 * std::log(5.0))));
    CHECK(VarianceModel{VarianceForm::LinearClamped, 1.0, 2.0}.tau2(3.0) == 7.0);
    CHECK(VarianceModel{VarianceForm::LinearClamped, 1.0, -2.0}.tau2(3.0) == 0.0);
    CHECK(VarianceModel{VarianceForm::Homoscedastic, 2.5, 9.0}.tau2(100.0) == 2.5);
    CHECK(parse_variance_form("log_linear") == VarianceForm::LogLinear);
    CHECK(to_string(VarianceForm::LinearClamped) == "linear_clamped");
    CHECK_THROWS_AS((void)parse_variance_form("quadratic"), ValidationError);
}

TEST_CASE("variance floor applies in evaluation") {
    auto p = preset("purpleair-barkjohn");
    p.variance = {VarianceForm::LinearClamped, -5.0, 0.0};
    p.var_floor = 0.7;
    CHECK(eval_obs_model(3.0, Covariates{}, p).tau2 == 0.7);
}

TEST_CASE("log-linear variance fit is exact on constructed residuals") {
    // |r| = exp((a0 + a1 log(x+1)) / 2) puts every point on the line.
    std::vector<double> x, r;
    for (int i = 0; i < 30; ++i) {
        x.push_back(i * 2.0);
        const double v = std::exp(0.4 + 0.9 * std::log(x.back() + 1.0));
        r.push_back((i % 2 ? 1.0 : -1.0) * std::sqrt(v));
    }
    const auto m = fit_variance_model(r, x, VarianceForm::LogLinear);
    CHECK(m.alpha0 == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(m.alpha1 == doctest::Approx(0.9).epsilon(1e-10));

    const auto h = fit_variance_model(r, x, VarianceForm::Homoscedastic);
    double mean_sq = 0.0;
    for (double v : r) mean_sq += v * v;
    CHECK(h.alpha0 == doctest::Approx(mean_sq / 30.0));

    std::vector<double> zeros(5, 0.0), xs(5, 1.0);
    CHECK_THROWS_AS((void)fit_variance_model(zeros, xs, VarianceForm::LogLinear), NumericalError);
}

TEST_CASE("log-linear variance is monotone in x for a positive slope") {
    const VarianceModel m{VarianceForm::LogLinear, 0.4973, 0.8802};
    double prev = m.tau2(0.0);
    for (double x = 0.5; x < 500.0; x += 0.5) {
        const double v = m.tau2(x);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("inversion returns the unclamped estimate and flags negatives") {
    const auto p = preset("purpleair-barkjohn");
    Covariates z;
    z.rh = 50.0;
    const auto inv = invert_obs_model(-2.7483 + 1.9084 * 12.0, z, p);
    CHECK(inv.estimate == doctest::Approx(12.0));
    CHECK_FALSE(inv.negative);
    const auto neg = invert_obs_model(-10.0, z, p);
    CHECK(neg.estimate < 0.0);
    CHECK(neg.negative);
}

TEST_CASE("inversion with a vanishing gain is a numerical error") {
    auto p = preset("search-baltimore");
    // Choose rh so that b(z) = 0 with temp = weekend = 0.
    Covariates z{1.0789 / 0.0030, 0.0, 0.0};
    CHECK(std::fabs(p.gain(z)) < 1e-6);
    CHECK_THROWS_AS((void)invert_obs_model(5.0, z, p), NumericalError);
}

TEST_CASE("eval then invert round-trips") {
    Rng rng(5);
    const auto p = preset("search-baltimore");
    for (int i = 0; i < 100; ++i) {
        Covariates z{draw_uniform(rng, 20, 90), draw_uniform(rng, 0, 35), static_cast<double>(i % 2)};
        const double x = draw_uniform(rng, 0.0, 80.0);
        const auto e = eval_obs_model(x, z, p);
        CHECK(invert_obs_model(e.mean, z, p).estimate == doctest::Approx(x).epsilon(1e-10));
    }
}

TEST_CASE("drop_incomplete removes rows with missing needed values") {
    CollocatedSeries s;
    s.x = {1.0, NAN, 3.0, 4.0};
    s.y = {1.0, 2.0, 3.0, 4.0};
    s.z = {Covariates{50, NAN, 0}, Covariates{50, 1, 0}, Covariates{NAN, 1, 0}, Covariates{50, 1, 0}};
    s.time = {"a", "b", "c", "d"};
    RegressionSpec spec;
    spec.covariates = {"rh"};
    CollocatedSeries copy = s;
    CHECK(drop_incomplete(copy, spec) == 2);
    CHECK(copy.time == std::vector<std::string>{"a", "d"});
    // temp is not used, so its NaN does not matter; with temp it does.
    spec.covariates = {"rh", "temp"};
    CHECK(drop_incomplete(s, spec) == 3);
}

TEST_CASE("training pipeline recovers a heteroscedastic model") {
    Rng rng(6);
    CollocatedSeries s;
    for (int i = 0; i < 4000; ++i) {
        const double x = draw_uniform(rng, 0.0, 60.0);
        Covariates z;
        z.rh = draw_uniform(rng, 30.0, 90.0);
        const double sd = std::sqrt(std::exp(0.2 + 0.7 * std::log(x + 1.0)));
        s.x.push_back(x);
        s.y.push_back(-4.0 + 1.6 * x + 0.1 * z.rh + draw_normal(rng, 0.0, sd));
        s.z.push_back(z);
    }
    TrainingOptions opt;
    opt.spec.covariates = {"rh"};
    const auto rep = train_obs_model(s, s, opt);
    CHECK(rep.params.beta[1] == doctest::Approx(1.6).epsilon(0.02));
    CHECK(rep.params.beta[2] == doctest::Approx(0.1).epsilon(0.2));
    // log(r^2) has mean log(sigma^2) - 1.27 for Gaussian r; the slope is unbiased.
    CHECK(rep.params.variance.alpha1 == doctest::Approx(0.7).epsilon(0.1));
    CHECK(rep.params.var_floor == doctest::Approx(rep.ols_residual_variance));
    CHECK(rep.rows_used_mean == 4000);
}

TEST_CASE("JSON round-trip preserves the model") {
    auto p = preset("search-baltimore");
    p.var_floor = 0.3;
    const auto q = from_json(to_json(p));
    CHECK(q.beta == p.beta);
    CHECK(q.spec.covariates == p.spec.covariates);
    CHECK(q.spec.interactions == p.spec.interactions);
    CHECK(q.variance.form == p.variance.form);
    CHECK(q.variance.alpha0 == p.variance.alpha0);
    CHECK(q.variance.alpha1 == p.variance.alpha1);
    CHECK(q.var_floor == 0.3);

    const auto path = (std::filesystem::temp_directory_path() / "mgpf_unit_model.json").string();
    save_model(p, path);
    CHECK(load_model(path).beta == p.beta);
    std::filesystem::remove(path);

    auto bad = to_json(p);
    bad["beta"] = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_AS((void)from_json(bad), ValidationError);
}

TEST_CASE("model validation") {
    auto p = preset("purpleair-barkjohn");
    p.beta[1] = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = preset("purpleair-barkjohn");
    p.var_floor = -1.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("noiseless PurpleAir-form data recovers the generating coefficients") {
    Rng rng(20);
    const auto s = make_series(rng, 60, {-10.97, 1.91, 0.16}, true, 0.0);
    RegressionSpec spec;
    spec.covariates = {"rh"};
    const auto fit = fit_regression(s, spec);
    CHECK(std::fabs(fit.beta[0] + 10.97) < 1e-8);
    CHECK(std::fabs(fit.beta[1] - 1.91) < 1e-8);
    CHECK(std::fabs(fit.beta[2] - 0.16) < 1e-8);
}

TEST_CASE("identity sensor and constant readings") {
    CollocatedSeries s;
    for (int i = 0; i < 10; ++i) {
        s.x.push_back(i * 1.5);
        s.y.push_back(i * 1.5);
        s.z.push_back({});
    }
    auto fit = fit_regression(s, RegressionSpec{});
    CHECK(std::fabs(fit.beta[0]) < 1e-12);
    CHECK(fit.beta[1] == doctest::Approx(1.0));
    for (auto& y : s.y) y = 4.0;
    fit = fit_regression(s, RegressionSpec{});
    CHECK(fit.beta[0] == doctest::Approx(4.0));
    CHECK(std::fabs(fit.beta[1]) < 1e-12);
}

TEST_CASE("constant-variance residuals give a flat log-variance slope") {
    Rng rng(21);
    std::vector<double> r, x;
    for (int i = 0; i < 100000; ++i) {
        x.push_back(draw_uniform(rng, 0.0, 100.0));
        r.push_back(draw_normal(rng, 0.0, 2.0));
    }
    const auto m = fit_variance_model(r, x, VarianceForm::LogLinear);
    CHECK(std::fabs(m.alpha1) < 0.05);
}

TEST_CASE("SEARCH variance at x = 10") {
    const auto p = preset("search-baltimore");
    CHECK(p.variance.tau2(10.0) == doctest::Approx(std::exp(-1.2136 + 1.1774 * std::log(11.0))));
    CHECK(p.variance.tau2(10.0) == doctest::Approx(5.00).epsilon(0.01));
}

TEST_CASE("homoscedastic fit on unit residuals") {
    const std::vector<double> r{1, -1, 1, -1, 1};
    const std::vector<double> x{1, 2, 3, 4, 5};
    const auto m = fit_variance_model(r, x, VarianceForm::Homoscedastic);
    CHECK(m.alpha0 == 1.0);
    CHECK(m.alpha1 == 0.0);
}

TEST_CASE("equal weights leave OLS unchanged") {
    Rng rng(22);
    const auto s = make_series(rng, 50, {1.0, 2.0, 0.0}, false, 1.0);
    const auto ols = fit_regression(s, RegressionSpec{});
    const std::vector<double> two(50, 2.0);
    const auto w = fit_weighted(s, RegressionSpec{}, two);
    CHECK(w.beta[0] == doctest::Approx(ols.beta[0]).epsilon(1e-12));
    CHECK(w.beta[1] == doctest::Approx(ols.beta[1]).epsilon(1e-12));
    const auto h = gls_refit(s, {VarianceForm::Homoscedastic, 3.0, 0.0}, 0.0, RegressionSpec{});
    CHECK(h.beta[1] == doctest::Approx(ols.beta[1]).epsilon(1e-12));
}

TEST_CASE("GLS slope varies less than OLS under heteroscedastic noise") {
    Rng rng(23);
    const VarianceModel truth{VarianceForm::LinearClamped, 0.1, 2.0};
    std::vector<double> ols, gls;
    for (int rep = 0; rep < 200; ++rep) {
        CollocatedSeries s;
        for (int i = 0; i < 100; ++i) {
            const double x = draw_uniform(rng, 0.0, 50.0);
            s.x.push_back(x);
            s.y.push_back(1.0 + 1.5 * x + draw_normal(rng, 0.0, std::sqrt(truth.tau2(x))));
            s.z.push_back({});
        }
        ols.push_back(fit_regression(s, RegressionSpec{}).beta[1]);
        gls.push_back(gls_refit(s, truth, 0.0, RegressionSpec{}).beta[1]);
    }
    auto sd = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    CHECK(sd(gls) <= sd(ols));
}

TEST_CASE("evaluation and inversion hand values") {
    const auto pa = preset("purpleair-barkjohn");
    Covariates z;
    z.rh = 50.0;
    CHECK(eval_obs_model(10.0, z, pa).mean == doctest::Approx(16.3357).epsilon(1e-12));
    CHECK(invert_obs_model(16.3357, z, pa).estimate == doctest::Approx(10.0).epsilon(1e-12));

    const auto se = preset("search-baltimore");
    CHECK(eval_obs_model(0.0, Covariates{0.0, 0.0, 0.0}, se).mean == doctest::Approx(-0.9756));

    ObsModelParams id;
    id.beta = {0.0, 1.0};
    id.variance = {VarianceForm::Homoscedastic, 1.0, 0.0};
    const auto e = eval_obs_model(3.5, Covariates{}, id);
    CHECK(e.mean == 3.5);
    CHECK(e.tau2 == 1.0);
    CHECK(invert_obs_model(7.0, Covariates{}, id).estimate == 7.0);
}

}  // TEST_SUITE
