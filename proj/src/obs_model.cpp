#include "mgpf/obs_model.hpp"

#include "mgpf/errors.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mgpf::obs {

std::string_view to_string(VarianceForm f) noexcept {
    switch (f) {
        case VarianceForm::LogLinear: return "log_linear";
        case VarianceForm::LinearClamped: return "linear_clamped";
        case VarianceForm::Homoscedastic: return "homoscedastic";
    }
    return "unknown";
}

VarianceForm parse_variance_form(std::string_view s) {
    if (s == "log_linear") return VarianceForm::LogLinear;
    if (s == "linear_clamped") return VarianceForm::LinearClamped;
    if (s == "homoscedastic") return VarianceForm::Homoscedastic;
    throw ValidationError("unknown variance form '" + std::string(s) +
                          "' (expected log_linear, linear_clamped or homoscedastic)");
}

void RegressionSpec::validate() const {
    for (const auto& c : covariates) {
        if (!is_known_covariate(c)) throw ValidationError("unknown covariate '" + c + "'");
        if (std::count(covariates.begin(), covariates.end(), c) > 1) {
            throw ValidationError("covariate listed twice: '" + c + "'");
        }
    }
    for (const auto& c : interactions) {
        if (std::find(covariates.begin(), covariates.end(), c) == covariates.end()) {
            throw ValidationError("interaction '" + c + "' is not among the covariates");
        }
        if (std::count(interactions.begin(), interactions.end(), c) > 1) {
            throw ValidationError("interaction listed twice: '" + c + "'");
        }
    }
}

double VarianceModel::tau2(double x) const {
    switch (form) {
        case VarianceForm::LogLinear: return std::exp(alpha0 + alpha1 * std::log(x + 1.0));
        case VarianceForm::LinearClamped: return std::max(0.0, alpha0 + alpha1 * x);
        case VarianceForm::Homoscedastic: return alpha0;
    }
    return alpha0;
}

void ObsModelParams::validate() const {
    spec.validate();
    if (beta.size() != spec.n_coefficients()) {
        throw ValidationError("observation model has " + std::to_string(beta.size()) +
                              " coefficients, expected " + std::to_string(spec.n_coefficients()));
    }
    for (double b : beta) {
        if (!std::isfinite(b)) throw ValidationError("observation model coefficient is not finite");
    }
    if (beta[1] == 0.0) throw ValidationError("observation model slope beta1 must be nonzero");
    if (!(var_floor >= 0.0) || !std::isfinite(var_floor)) {
        throw ValidationError("variance floor must be finite and >= 0");
    }
    if (!std::isfinite(variance.alpha0) || !std::isfinite(variance.alpha1)) {
        throw ValidationError("variance model coefficients must be finite");
    }
    if (variance.form == VarianceForm::Homoscedastic && variance.alpha0 < 0.0) {
        throw ValidationError("homoscedastic variance must be >= 0");
    }
}

double ObsModelParams::offset(const Covariates& z) const {
    double a = beta[0];
    for (std::size_t i = 0; i < spec.covariates.size(); ++i) {
        a += beta[2 + i] * covariate_value(z, spec.covariates[i]);
    }
    return a;
}

double ObsModelParams::gain(const Covariates& z) const {
    double b = beta[1];
    const std::size_t base = 2 + spec.covariates.size();
    for (std::size_t i = 0; i < spec.interactions.size(); ++i) {
        b += beta[base + i] * covariate_value(z, spec.interactions[i]);
    }
    return b;
}

void CollocatedSeries::validate() const {
    if (y.size() != x.size() || z.size() != x.size() || (!time.empty() && time.size() != x.size())) {
        throw ValidationError("collocated series columns differ in length");
    }
}

std::size_t drop_incomplete(CollocatedSeries& data, const RegressionSpec& spec) {
    data.validate();
    std::size_t kept = 0;
    const bool has_time = !data.time.empty();
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool ok = std::isfinite(data.x[i]) && std::isfinite(data.y[i]);
        for (const auto& c : spec.covariates) ok = ok && std::isfinite(covariate_value(data.z[i], c));
        if (!ok) continue;
        data.x[kept] = data.x[i];
        data.y[kept] = data.y[i];
        data.z[kept] = data.z[i];
        if (has_time) data.time[kept] = data.time[i];
        ++kept;
    }
    const std::size_t dropped = data.size() - kept;
    data.x.resize(kept);
    data.y.resize(kept);
    data.z.resize(kept);
    if (has_time) data.time.resize(kept);
    return dropped;
}

namespace {

std::vector<std::string> column_names(const RegressionSpec& spec) {
    std::vector<std::string> names{"intercept", "x"};
    for (const auto& c : spec.covariates) names.push_back(c);
    for (const auto& c : spec.interactions) names.push_back("x*" + c);
    return names;
}

Eigen::MatrixXd design_matrix(const CollocatedSeries& data, const RegressionSpec& spec) {
    const auto n = static_cast<Eigen::Index>(data.size());
    const auto p = static_cast<Eigen::Index>(spec.n_coefficients());
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& z = data.z[static_cast<std::size_t>(i)];
        const double x = data.x[static_cast<std::size_t>(i)];
        Eigen::Index col = 0;
        X(i, col++) = 1.0;
        X(i, col++) = x;
        for (const auto& c : spec.covariates) X(i, col++) = covariate_value(z, c);
        for (const auto& c : spec.interactions) X(i, col++) = x * covariate_value(z, c);
    }
    return X;
}

RegressionFit solve_weighted(const CollocatedSeries& data, const RegressionSpec& spec,
                             std::span<const double> weights) {
    spec.validate();
    data.validate();
    const std::size_t p = spec.n_coefficients();
    if (data.size() <= p) {
        throw ValidationError("regression needs more rows (" + std::to_string(data.size()) +
                              ") than coefficients (" + std::to_string(p) + ")");
    }
    const Eigen::MatrixXd X = design_matrix(data, spec);
    const Eigen::Map<const Eigen::VectorXd> y(data.y.data(), static_cast<Eigen::Index>(data.size()));
    Eigen::VectorXd sw = Eigen::VectorXd::Ones(X.rows());
    if (!weights.empty()) {
        if (weights.size() != data.size()) throw ValidationError("weights and data differ in length");
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
                throw ValidationError("regression weights must be finite and positive");
            }
            sw[static_cast<Eigen::Index>(i)] = std::sqrt(weights[i]);
        }
    }
    const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    const Eigen::VectorXd yw = sw.asDiagonal() * y;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < Xw.cols()) {
        const auto names = column_names(spec);
        std::ostringstream msg;
        msg << "design matrix is rank deficient (rank " << qr.rank() << " of " << Xw.cols()
            << "); collinear columns:";
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < Xw.cols(); ++k) {
            msg << ' ' << names[static_cast<std::size_t>(perm[k])];
        }
        throw ValidationError(msg.str());
    }
    const Eigen::VectorXd beta = qr.solve(yw);
    const Eigen::VectorXd resid = y - X * beta;

    RegressionFit fit;
    fit.beta.assign(beta.data(), beta.data() + beta.size());
    fit.residuals.assign(resid.data(), resid.data() + resid.size());
    fit.residual_variance = resid.squaredNorm() / static_cast<double>(resid.size());
    const double ss_tot = (y.array() - y.mean()).square().sum();
    fit.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot : 1.0;
    return fit;
}

// Simple-regression least squares of v on u.
std::pair<double, double> line_fit(const std::vector<double>& u, const std::vector<double>& v) {
    const double n = static_cast<double>(u.size());
    double mu = 0.0;
    double mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= n;
    mv /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        sxx += (u[i] - mu) * (u[i] - mu);
        sxy += (u[i] - mu) * (v[i] - mv);
    }
    if (!(sxx > 0.0)) throw NumericalError("variance model: x has no spread");
    const double slope = sxy / sxx;
    return {mv - slope * mu, slope};
}

}  // namespace

RegressionFit fit_regression(const CollocatedSeries& data, const RegressionSpec& spec) {
    return solve_weighted(data, spec, {});
}

RegressionFit fit_weighted(const CollocatedSeries& data, const RegressionSpec& spec,
                           std::span<const double> weights) {
    return solve_weighted(data, spec, weights);
}

VarianceModel fit_variance_model(std::span<const double> residuals, std::span<const double> x,
                                 VarianceForm form) {
    if (residuals.size() != x.size()) throw ValidationError("residuals and x differ in length");
    if (residuals.size() < 3) throw ValidationError("variance model needs at least 3 observations");
    const bool all_zero =
        std::all_of(residuals.begin(), residuals.end(), [](double r) { return r == 0.0; });
    if (all_zero) throw NumericalError("variance model: all residuals are zero (degenerate variance)");

    VarianceModel m;
    m.form = form;
    switch (form) {
        case VarianceForm::Homoscedastic: {
            double s = 0.0;
            for (double r : residuals) s += r * r;
            m.alpha0 = s / static_cast<double>(residuals.size());
            m.alpha1 = 0.0;
            break;
        }
        case VarianceForm::LogLinear: {
            std::vector<double> u;
            std::vector<double> v;
            for (std::size_t i = 0; i < residuals.size(); ++i) {
                if (residuals[i] == 0.0) continue;
                if (!(x[i] > -1.0)) throw ValidationError("log variance model needs x > -1");
                u.push_back(std::log(x[i] + 1.0));
                v.push_back(std::log(residuals[i] * residuals[i]));
            }
            if (u.size() < 3) throw NumericalError("variance model: fewer than 3 nonzero residuals");
            std::tie(m.alpha0, m.alpha1) = line_fit(u, v);
            break;
        }
        case VarianceForm::LinearClamped: {
            std::vector<double> u(x.begin(), x.end());
            std::vector<double> v;
            v.reserve(residuals.size());
            for (double r : residuals) v.push_back(r * r);
            std::tie(m.alpha0, m.alpha1) = line_fit(u, v);
            break;
        }
    }
    return m;
}

RegressionFit gls_refit(const CollocatedSeries& data, const VarianceModel& var_model,
                        double var_floor, const RegressionSpec& spec) {
    std::vector<double> w(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double t2 = std::max(var_model.tau2(data.x[i]), var_floor);
        if (!(t2 > 0.0)) {
            throw ValidationError("GLS weights need tau2 > 0; set a positive variance floor");
        }
        w[i] = 1.0 / t2;
    }
    return solve_weighted(data, spec, w);
}

ObsEvaluation eval_obs_model(double x, const Covariates& z, const ObsModelParams& p) {
    ObsEvaluation e;
    e.mean = p.offset(z) + p.gain(z) * x;
    e.tau2 = std::max(p.variance.tau2(x), p.var_floor);
    return e;
}

Inversion invert_obs_model(double y, const Covariates& z, const ObsModelParams& p) {
    const double b = p.gain(z);
    if (!(std::fabs(b) >= kMinGain)) {
        throw NumericalError("observation model is not invertible here: effective gain " +
                             std::to_string(b));
    }
    Inversion inv;
    inv.estimate = (y - p.offset(z)) / b;
    inv.negative = inv.estimate < 0.0;
    return inv;
}

TrainingReport train_obs_model(CollocatedSeries mean_window, CollocatedSeries variance_window,
                               const TrainingOptions& opts) {
    opts.spec.validate();
    TrainingReport rep;
    rep.rows_dropped = drop_incomplete(mean_window, opts.spec);
    rep.rows_dropped += drop_incomplete(variance_window, opts.spec);
    rep.rows_used_mean = mean_window.size();
    rep.rows_used_variance = variance_window.size();

    const RegressionFit ols = fit_regression(mean_window, opts.spec);
    rep.ols_residual_variance = ols.residual_variance;

    ObsModelParams params;
    params.spec = opts.spec;
    params.beta = ols.beta;
    params.var_floor = opts.var_floor.value_or(ols.residual_variance);

    // Residuals on the variance window use the mean-window coefficients.
    std::vector<double> resid(variance_window.size());
    for (std::size_t i = 0; i < variance_window.size(); ++i) {
        const auto& z = variance_window.z[i];
        resid[i] = variance_window.y[i] - (params.offset(z) + params.gain(z) * variance_window.x[i]);
    }
    params.variance = fit_variance_model(resid, variance_window.x, opts.form);

    RegressionFit final_fit = ols;
    if (opts.gls && opts.form != VarianceForm::Homoscedastic) {
        final_fit = gls_refit(mean_window, params.variance, params.var_floor, opts.spec);
        params.beta = final_fit.beta;
    }
    rep.r_squared = final_fit.r_squared;
    params.validate();
    rep.params = std::move(params);
    return rep;
}

std::vector<std::string> preset_names() { return {"purpleair-barkjohn", "search-baltimore"}; }

ObsModelParams preset(std::string_view name) {
    ObsModelParams p;
    if (name == "purpleair-barkjohn") {
        p.spec.covariates = {"rh"};
        p.beta = {-10.9733, 1.9084, 0.1645};
        p.variance = {VarianceForm::LogLinear, 0.4973, 0.8802};
    } else if (name == "search-baltimore") {
        p.spec.covariates = {"rh", "temp", "weekend"};
        p.spec.interactions = {"rh", "temp", "weekend"};
        p.beta = {-0.9756, 1.0789, 0.0422, -0.0357, 0.4086, -0.0030, 0.0058, -0.0736};
        p.variance = {VarianceForm::LogLinear, -1.2136, 1.1774};
    } else {
        throw ValidationError("unknown observation-model preset '" + std::string(name) + "'");
    }
    p.var_floor = 0.0;
    p.validate();
    return p;
}

nlohmann::json to_json(const ObsModelParams& p) {
    nlohmann::json j;
    j["beta"] = p.beta;
    j["covariates"] = p.spec.covariates;
    j["interactions"] = p.spec.interactions;
    j["variance_form"] = std::string(to_string(p.variance.form));
    j["alpha0"] = p.variance.alpha0;
    j["alpha1"] = p.variance.alpha1;
    j["var_floor"] = p.var_floor;
    return j;
}

ObsModelParams from_json(const nlohmann::json& j) {
    ObsModelParams p;
    try {
        p.beta = j.at("beta").get<std::vector<double>>();
        p.spec.covariates = j.value("covariates", std::vector<std::string>{});
        p.spec.interactions = j.value("interactions", std::vector<std::string>{});
        p.variance.form = parse_variance_form(j.at("variance_form").get<std::string>());
        p.variance.alpha0 = j.at("alpha0").get<double>();
        p.variance.alpha1 = j.value("alpha1", 0.0);
        p.var_floor = j.value("var_floor", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed observation model: ") + e.what());
    }
    p.validate();
    return p;
}

void save_model(const ObsModelParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write model file " + path);
    out << to_json(p).dump(2) << '\n';
}

ObsModelParams load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("model file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

}  // namespace mgpf::obs
