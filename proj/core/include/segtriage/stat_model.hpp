#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "segtriage/seg_metrics.hpp"
#include "segtriage/uncertainty.hpp"

namespace segtriage {

enum class StatErrorCode { zero_variance, insufficient_data, singular_design, length_mismatch };

const char* to_string(StatErrorCode code) noexcept;

class StatError : public std::runtime_error {
 public:
  StatError(StatErrorCode code, const std::string& message);
  StatErrorCode code() const noexcept { return code_; }

 private:
  StatErrorCode code_;
};

/// Sample Pearson correlation. Requires equal lengths n >= 3 and nonzero variance in both.
double pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);
/// P(T_dof <= t).
double student_t_cdf(double t, double dof);
/// Upper tail P(F_{d1,d2} >= f).
double fisher_f_upper_p(double f, double d1, double d2);

/// Significance stars at 0.1 / 0.05 / 0.01.
std::string significance_stars(double p_value);

struct CorrelationSample {
  ClassUncertaintyVector uncertainty;
  std::vector<double> per_class_dice;
  double mean_dice = 0.0;
  double mean_entropy = 0.0;
};

struct CorrelationReport {
  std::vector<std::optional<double>> per_class_r;  // nullopt: fewer than 3 usable pairs or no variance
  std::vector<std::size_t> per_class_n;
  std::optional<double> image_level_r;
  std::size_t n = 0;
};

CorrelationReport correlation_report(std::span<const CorrelationSample> corpus);

/// Result of one ordinary least squares fit with an intercept.
struct OlsFit {
  std::vector<double> coefficients;  // [intercept, b_1, ..., b_k]
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  std::vector<double> fitted;
  std::vector<double> residuals;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double residual_std_error = 0.0;
  double f_statistic = 0.0;
  double f_p_value = 1.0;
  std::size_t n_observations = 0;
  std::size_t dof_residual = 0;
};

/// Fits y = b0 + X b. `predictors` is n x k, row-major. Throws StatError on n <= k + 1
/// or a rank-deficient design.
OlsFit ols_fit(std::span<const double> predictors, std::size_t k, std::span<const double> y);

struct QualitySample {
  ClassUncertaintyVector uncertainty;
  double mean_dice = 0.0;
};

/// Multiple linear regression of mean Dice on class-wise uncertainties, after backward
/// elimination of insignificant predictors.
struct QualityModel {
  std::vector<std::string> class_names;
  std::vector<std::size_t> included_predictors;  // class indices, ascending
  std::vector<std::size_t> removed_predictors;   // in removal order
  double intercept = 0.0;
  std::vector<double> coefficients;  // aligned with included_predictors
  // The following three are [intercept, included...].
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double residual_std_error = 0.0;
  double f_statistic = 0.0;
  double f_p_value = 1.0;
  std::size_t n_observations = 0;
  std::size_t dof_residual = 0;
  double alpha = 0.05;
  std::vector<double> imputation_means;  // per class

  bool operator==(const QualityModel&) const = default;
};

/// `class_names` may be empty; names then default to "class_<c>".
QualityModel fit_quality_model(std::span<const QualitySample> corpus, double alpha,
                               std::vector<std::string> class_names = {});

/// Estimated mean Dice. Not clamped; see clamp_quality for display.
double predict_quality(const QualityModel& model, const ClassUncertaintyVector& u);
double clamp_quality(double value) noexcept;

std::string model_to_json(const QualityModel& model, int indent = 2);
QualityModel model_from_json(const std::string& text);

/// Regression table with significance stars and standard errors in parentheses.
std::string format_regression_table(const QualityModel& model);
std::string format_correlation_table(const CorrelationReport& report,
                                     const std::vector<std::string>& class_names);

}  // namespace segtriage
