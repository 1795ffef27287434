#pragma once

// Per-network observation models: y = a(z) + b(z) x + eps, eps ~ N(0, tau2(x)),
// where a(z) = beta0 + z.beta2 and b(z) = beta1 + z.beta3. Training by
// OLS/GLS on collocated series, heteroscedastic variance models, evaluation,
// naive inversion and the built-in presets.

#include "mgpf/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mgpf::obs {

enum class VarianceForm {
    LogLinear,      // log tau2 = alpha0 + alpha1 log(x + 1)
    LinearClamped,  // tau2 = max(0, alpha0 + alpha1 x)
    Homoscedastic,  // tau2 = alpha0
};

[[nodiscard]] std::string_view to_string(VarianceForm f) noexcept;
[[nodiscard]] VarianceForm parse_variance_form(std::string_view s);

// Which covariates enter the regression, and which of those also interact
// with x. Interactions must be a subset of covariates.
struct RegressionSpec {
    std::vector<std::string> covariates;
    std::vector<std::string> interactions;

    void validate() const;
    [[nodiscard]] std::size_t n_coefficients() const {
        return 2 + covariates.size() + interactions.size();
    }
};

struct VarianceModel {
    VarianceForm form = VarianceForm::Homoscedastic;
    double alpha0 = 1.0;
    double alpha1 = 0.0;

    // Unfloored tau2 at concentration x.
    [[nodiscard]] double tau2(double x) const;
};

struct ObsModelParams {
    // (intercept, x, covariates..., x*interactions...)
    std::vector<double> beta;
    RegressionSpec spec;
    VarianceModel variance;
    double var_floor = 0.0;

    void validate() const;
    [[nodiscard]] double offset(const Covariates& z) const;  // a(z)
    [[nodiscard]] double gain(const Covariates& z) const;    // b(z)
};

struct CollocatedSeries {
    std::vector<double> x;  // reference concentration
    std::vector<double> y;  // low-cost reading
    std::vector<Covariates> z;
    std::vector<std::string> time;

    [[nodiscard]] std::size_t size() const { return x.size(); }
    void validate() const;
};

// Removes rows with any non-finite value among x, y and the covariates named
// in `spec`. Returns the number of rows dropped.
std::size_t drop_incomplete(CollocatedSeries& data, const RegressionSpec& spec);

struct RegressionFit {
    std::vector<double> beta;
    std::vector<double> residuals;
    double r_squared = 0.0;
    double residual_variance = 0.0;  // mean squared residual
};

// Ordinary least squares on the design (1, x, z, x*z_interacting).
// Throws ValidationError on too few rows or rank deficiency (naming columns).
[[nodiscard]] RegressionFit fit_regression(const CollocatedSeries& data, const RegressionSpec& spec);

// Weighted least squares; weights are inverse variances (any positive scale).
[[nodiscard]] RegressionFit fit_weighted(const CollocatedSeries& data, const RegressionSpec& spec,
                                         std::span<const double> weights);

// Least-squares fit of the chosen variance form to squared residuals:
// log(r^2) ~ log(x+1) for LogLinear, r^2 ~ x for LinearClamped,
// mean(r^2) for Homoscedastic. Zero residuals are skipped in the log form.
[[nodiscard]] VarianceModel fit_variance_model(std::span<const double> residuals,
                                               std::span<const double> x, VarianceForm form);

// GLS refit of the regression with weights 1/max(tau2(x), floor).
[[nodiscard]] RegressionFit gls_refit(const CollocatedSeries& data, const VarianceModel& var_model,
                                      double var_floor, const RegressionSpec& spec);

struct ObsEvaluation {
    double mean = 0.0;
    double tau2 = 0.0;
};

[[nodiscard]] ObsEvaluation eval_obs_model(double x, const Covariates& z, const ObsModelParams& p);

struct Inversion {
    double estimate = 0.0;
    bool negative = false;  // returned unclamped; flagged for reporting
};

// (y - a(z)) / b(z). Throws NumericalError when |b(z)| < 1e-6.
[[nodiscard]] Inversion invert_obs_model(double y, const Covariates& z, const ObsModelParams& p);

inline constexpr double kMinGain = 1e-6;

// Full training pipeline. The regression and the variance model may come
// from different windows; pass the same series twice for a single window.
struct TrainingOptions {
    RegressionSpec spec;
    VarianceForm form = VarianceForm::LogLinear;
    bool gls = true;                      // refit beta by GLS after the variance fit
    std::optional<double> var_floor;      // default: OLS residual variance of the mean window
};

struct TrainingReport {
    ObsModelParams params;
    double r_squared = 0.0;
    double ols_residual_variance = 0.0;
    std::size_t rows_used_mean = 0;
    std::size_t rows_used_variance = 0;
    std::size_t rows_dropped = 0;
};

[[nodiscard]] TrainingReport train_obs_model(CollocatedSeries mean_window,
                                             CollocatedSeries variance_window,
                                             const TrainingOptions& opts);

// Built-in coefficient tables for the Baltimore networks.
[[nodiscard]] std::vector<std::string> preset_names();
[[nodiscard]] ObsModelParams preset(std::string_view name);

// Structured text (JSON) serialization of fitted models.
[[nodiscard]] nlohmann::json to_json(const ObsModelParams& p);
[[nodiscard]] ObsModelParams from_json(const nlohmann::json& j);
void save_model(const ObsModelParams& p, const std::string& path);
[[nodiscard]] ObsModelParams load_model(const std::string& path);

}  // namespace mgpf::obs
