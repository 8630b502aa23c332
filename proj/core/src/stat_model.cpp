#include "segtriage/stat_model.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace segtriage {

namespace {

using nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

json number_to_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::numeric_limits<double>::quiet_NaN();
}

json numbers_to_json(const std::vector<double>& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(number_to_json(x));
  return arr;
}

std::vector<double> numbers_from_json(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number_from_json(x));
  return out;
}

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : "class_" + std::to_string(c);
}

std::string fmt_num(double v, int decimals = 3) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.{}f}", v, decimals);
}

}  // namespace

const char* to_string(StatErrorCode code) noexcept {
  switch (code) {
    case StatErrorCode::zero_variance: return "zero_variance";
    case StatErrorCode::insufficient_data: return "insufficient_data";
    case StatErrorCode::singular_design: return "singular_design";
    case StatErrorCode::length_mismatch: return "length_mismatch";
  }
  return "unknown";
}

StatError::StatError(StatErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatError(StatErrorCode::length_mismatch, "pearson: series lengths differ");
  if (x.size() < 3) throw StatError(StatErrorCode::insufficient_data, "pearson: need at least 3 pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw StatError(StatErrorCode::zero_variance, "pearson: correlation undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double>(dof), t);
}

double student_t_two_sided_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

double fisher_f_upper_p(double f, double d1, double d2) {
  if (std::isinf(f)) return 0.0;
  if (!(f > 0.0)) return 1.0;
  const boost::math::fisher_f_distribution<double> dist(d1, d2);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

CorrelationReport correlation_report(std::span<const CorrelationSample> corpus) {
  if (corpus.size() < 3) {
    throw StatError(StatErrorCode::insufficient_data, "correlation_report: need at least 3 images");
  }
  const std::size_t classes = corpus.front().uncertainty.size();
  CorrelationReport report;
  report.n = corpus.size();
  report.per_class_r.resize(classes);
  report.per_class_n.assign(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> u, d;
    for (const auto& s : corpus) {
      if (s.uncertainty.size() != classes || s.per_class_dice.size() != classes) {
        throw StatError(StatErrorCode::length_mismatch, "correlation_report: class counts differ");
      }
      if (!s.uncertainty.u[c]) continue;
      u.push_back(*s.uncertainty.u[c]);
      d.push_back(s.per_class_dice[c]);
    }
    report.per_class_n[c] = u.size();
    try {
      report.per_class_r[c] = pearson(u, d);
    } catch (const StatError&) {
      // Too few pairs or a constant series: the entry stays unavailable.
    }
  }
  std::vector<double> e, m;
  for (const auto& s : corpus) {
    e.push_back(s.mean_entropy);
    m.push_back(s.mean_dice);
  }
  try {
    report.image_level_r = pearson(e, m);
  } catch (const StatError&) {
  }
  return report;
}

OlsFit ols_fit(std::span<const double> predictors, std::size_t k, std::span<const double> y) {
  const std::size_t n = y.size();
  if (predictors.size() != n * k) {
    throw StatError(StatErrorCode::length_mismatch, "ols_fit: predictor matrix is not n x k");
  }
  const std::size_t p = k + 1;
  if (n <= p) {
    throw StatError(StatErrorCode::insufficient_data,
                    fmt::format("ols_fit: {} observations for {} parameters", n, p));
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = 1.0;
    for (std::size_t j = 0; j < k; ++j) x(r, static_cast<Eigen::Index>(j + 1)) = predictors[i * k + j];
    yv(r) = y[i];
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < static_cast<Eigen::Index>(p)) {
    throw StatError(StatErrorCode::singular_design,
                    fmt::format("ols_fit: design matrix has rank {} < {}", qr.rank(), p));
  }
  const Eigen::VectorXd beta = qr.solve(yv);

  // (X'X)^-1 = P R^-1 R^-T P'
  const auto pi = static_cast<Eigen::Index>(p);
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(pi, pi).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(pi, pi));
  const Eigen::MatrixXd perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * (r_inv * r_inv.transpose()) * perm.transpose();

  OlsFit fit;
  fit.n_observations = n;
  fit.dof_residual = n - p;
  const Eigen::VectorXd fitted = x * beta;
  const Eigen::VectorXd resid = yv - fitted;
  fit.fitted.assign(fitted.data(), fitted.data() + n);
  fit.residuals.assign(resid.data(), resid.data() + n);
  fit.coefficients.assign(beta.data(), beta.data() + p);

  const double ssr = resid.squaredNorm();
  const double y_mean = yv.mean();
  const double sst = (yv.array() - y_mean).square().sum();
  const double dof = static_cast<double>(fit.dof_residual);
  const double sigma2 = ssr / dof;

  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
  fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * (static_cast<double>(n) - 1.0) / dof;
  fit.residual_std_error = std::sqrt(sigma2);

  for (std::size_t j = 0; j < p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double se = std::sqrt(std::max(sigma2 * xtx_inv(jj, jj), 0.0));
    const double coef = fit.coefficients[j];
    double t;
    if (se > 0.0) {
      t = coef / se;
    } else {
      t = coef == 0.0 ? 0.0 : std::copysign(kInf, coef);
    }
    fit.std_errors.push_back(se);
    fit.t_values.push_back(t);
    fit.p_values.push_back(se > 0.0 || coef != 0.0 ? student_t_two_sided_p(t, dof) : 1.0);
  }

  if (k == 0) {
    fit.f_statistic = 0.0;
    fit.f_p_value = 1.0;
  } else if (ssr > 0.0) {
    fit.f_statistic = ((sst - ssr) / static_cast<double>(k)) / sigma2;
    fit.f_p_value = fisher_f_upper_p(fit.f_statistic, static_cast<double>(k), dof);
  } else {
    fit.f_statistic = kInf;
    fit.f_p_value = 0.0;
  }
  return fit;
}

QualityModel fit_quality_model(std::span<const QualitySample> corpus, double alpha,
                               std::vector<std::string> class_names) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("fit_quality_model: alpha must be in (0,1)");
  if (corpus.empty()) throw StatError(StatErrorCode::insufficient_data, "fit_quality_model: empty corpus");
  const std::size_t classes = corpus.front().uncertainty.size();
  const std::size_t n = corpus.size();
  if (n <= classes + 1) {
    throw StatError(StatErrorCode::insufficient_data,
                    fmt::format("fit_quality_model: {} observations for {} predictors plus intercept", n, classes));
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < classes; ++c) class_names.push_back("class_" + std::to_string(c));
  }
  if (class_names.size() != classes) {
    throw StatError(StatErrorCode::length_mismatch, "fit_quality_model: class name count differs");
  }

  QualityModel model;
  model.class_names = std::move(class_names);
  model.alpha = alpha;
  model.imputation_means.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& s : corpus) {
      if (s.uncertainty.size() != classes) {
        throw StatError(StatErrorCode::length_mismatch, "fit_quality_model: class counts differ");
      }
      if (s.uncertainty.u[c]) {
        sum += *s.uncertainty.u[c];
        ++present;
      }
    }
    if (present == 0) {
      throw StatError(StatErrorCode::singular_design,
                      "fit_quality_model: class '" + model.class_names[c] +
                          "' is never predicted, its uncertainty column is not estimable");
    }
    model.imputation_means[c] = sum / static_cast<double>(present);
  }

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = corpus[i].mean_dice;
  auto value = [&](std::size_t i, std::size_t c) {
    const auto& u = corpus[i].uncertainty.u[c];
    return u ? *u : model.imputation_means[c];
  };

  std::vector<std::size_t> included(classes);
  std::iota(included.begin(), included.end(), std::size_t{0});
  OlsFit fit;
  while (true) {
    const std::size_t k = included.size();
    std::vector<double> x(n * k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) x[i * k + j] = value(i, included[j]);
    }
    fit = ols_fit(x, k, y);
    // Backward elimination: drop the single least significant predictor per step.
    std::size_t worst = k;
    double worst_p = -1.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double pv = fit.p_values[j + 1];
      if (pv >= alpha && pv > worst_p) {
        worst = j;
        worst_p = pv;
      }
    }
    if (worst == k) break;
    model.removed_predictors.push_back(included[worst]);
    included.erase(included.begin() + static_cast<std::ptrdiff_t>(worst));
  }

  model.included_predictors = included;
  model.intercept = fit.coefficients[0];
  model.coefficients.assign(fit.coefficients.begin() + 1, fit.coefficients.end());
  model.std_errors = fit.std_errors;
  model.t_values = fit.t_values;
  model.p_values = fit.p_values;
  model.r_squared = fit.r_squared;
  model.adj_r_squared = fit.adj_r_squared;
  model.residual_std_error = fit.residual_std_error;
  model.f_statistic = fit.f_statistic;
  model.f_p_value = fit.f_p_value;
  model.n_observations = fit.n_observations;
  model.dof_residual = fit.dof_residual;
  return model;
}

double predict_quality(const QualityModel& model, const ClassUncertaintyVector& u) {
  double estimate = model.intercept;
  for (std::size_t j = 0; j < model.included_predictors.size(); ++j) {
    const std::size_t c = model.included_predictors[j];
    const double v = (c < u.u.size() && u.u[c]) ? *u.u[c] : model.imputation_means.at(c);
    estimate += model.coefficients[j] * v;
  }
  return estimate;
}

double clamp_quality(double value) noexcept { return std::clamp(value, 0.0, 1.0); }

std::string model_to_json(const QualityModel& m, int indent) {
  json j;
  j["format"] = "segtriage.quality_model";
  j["version"] = 1;
  j["class_names"] = m.class_names;
  j["included_predictors"] = m.included_predictors;
  j["removed_predictors"] = m.removed_predictors;
  j["intercept"] = number_to_json(m.intercept);
  j["coefficients"] = numbers_to_json(m.coefficients);
  j["std_errors"] = numbers_to_json(m.std_errors);
  j["t_values"] = numbers_to_json(m.t_values);
  j["p_values"] = numbers_to_json(m.p_values);
  j["r_squared"] = number_to_json(m.r_squared);
  j["adj_r_squared"] = number_to_json(m.adj_r_squared);
  j["residual_std_error"] = number_to_json(m.residual_std_error);
  j["f_statistic"] = number_to_json(m.f_statistic);
  j["f_p_value"] = number_to_json(m.f_p_value);
  j["n_observations"] = m.n_observations;
  j["dof_residual"] = m.dof_residual;
  j["alpha"] = m.alpha;
  j["imputation_means"] = numbers_to_json(m.imputation_means);
  return j.dump(indent);
}

QualityModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "segtriage.quality_model" || j.value("version", 0) != 1) {
    throw std::invalid_argument("model_from_json: not a version-1 segtriage quality model");
  }
  QualityModel m;
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.included_predictors = j.at("included_predictors").get<std::vector<std::size_t>>();
  m.removed_predictors = j.at("removed_predictors").get<std::vector<std::size_t>>();
  m.intercept = number_from_json(j.at("intercept"));
  m.coefficients = numbers_from_json(j.at("coefficients"));
  m.std_errors = numbers_from_json(j.at("std_errors"));
  m.t_values = numbers_from_json(j.at("t_values"));
  m.p_values = numbers_from_json(j.at("p_values"));
  m.r_squared = number_from_json(j.at("r_squared"));
  m.adj_r_squared = number_from_json(j.at("adj_r_squared"));
  m.residual_std_error = number_from_json(j.at("residual_std_error"));
  m.f_statistic = number_from_json(j.at("f_statistic"));
  m.f_p_value = number_from_json(j.at("f_p_value"));
  m.n_observations = j.at("n_observations").get<std::size_t>();
  m.dof_residual = j.at("dof_residual").get<std::size_t>();
  m.alpha = j.at("alpha").get<double>();
  m.imputation_means = numbers_from_json(j.at("imputation_means"));
  if (m.coefficients.size() != m.included_predictors.size() ||
      m.p_values.size() != m.included_predictors.size() + 1) {
    throw std::invalid_argument("model_from_json: coefficient arrays do not match included predictors");
  }
  for (std::size_t c : m.included_predictors) {
    if (c >= m.imputation_means.size()) throw std::invalid_argument("model_from_json: predictor index out of range");
  }
  return m;
}

std::string format_regression_table(const QualityModel& m) {
  constexpr int kLabel = 22;
  const std::string rule(44, '-');
  std::string out;
  out += fmt::format("{:^44}\n", "Dependent variable: mean Dice");
  out += rule + "\n";
  auto coef_rows = [&](const std::string& label, double coef, double se, double p) {
    out += fmt::format("{:<{}}{:>12}{}\n", label, kLabel, fmt_num(coef), significance_stars(p));
    out += fmt::format("{:<{}}{:>12}\n", "", kLabel, "(" + fmt_num(se) + ")");
  };
  coef_rows("Const", m.intercept, m.std_errors.at(0), m.p_values.at(0));
  for (std::size_t c = 0; c < m.class_names.size(); ++c) {
    const auto it = std::find(m.included_predictors.begin(), m.included_predictors.end(), c);
    if (it == m.included_predictors.end()) {
      out += m.class_names[c] + "\n";
      continue;
    }
    const auto j = static_cast<std::size_t>(it - m.included_predictors.begin());
    coef_rows(m.class_names[c], m.coefficients[j], m.std_errors[j + 1], m.p_values[j + 1]);
  }
  out += rule + "\n";
  out += fmt::format("{:<{}}{:>12}\n", "Observations", kLabel, m.n_observations);
  out += fmt::format("{:<{}}{:>12}\n", "R2", kLabel, fmt_num(m.r_squared));
  out += fmt::format("{:<{}}{:>12}\n", "Adjusted R2", kLabel, fmt_num(m.adj_r_squared));
  out += fmt::format("{:<{}}{:>12} (df = {})\n", "Residual Std. Error", kLabel, fmt_num(m.residual_std_error),
                     m.dof_residual);
  out += fmt::format("{:<{}}{:>12}{} (df = {}; {})\n", "F Statistic", kLabel, fmt_num(m.f_statistic),
                     significance_stars(m.f_p_value), m.included_predictors.size(), m.dof_residual);
  out += rule + "\n";
  out += "Note: *p<0.1; **p<0.05; ***p<0.01\n";
  return out;
}

std::string format_correlation_table(const CorrelationReport& report, const std::vector<std::string>& names) {
  std::string out;
  out += fmt::format("{:<22}{:>12}{:>8}\n", "Class", "Correlation", "n");
  out += std::string(42, '-') + "\n";
  for (std::size_t c = 0; c < report.per_class_r.size(); ++c) {
    const auto& r = report.per_class_r[c];
    out += fmt::format("{:<22}{:>12}{:>8}\n", class_name(names, c), r ? fmt_num(*r) : "n/a",
                       report.per_class_n[c]);
  }
  out += std::string(42, '-') + "\n";
  out += fmt::format("{:<22}{:>12}{:>8}\n", "image mean entropy",
                     report.image_level_r ? fmt_num(*report.image_level_r) : "n/a", report.n);
  return out;
}

}  // namespace segtriage
