#include "segtriage/triage_sim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace segtriage {

namespace {

// Exactly rounded running sum (Shewchuk partials). The result depends only on the
// multiset of addends, so equal retained sets give bit-identical performance.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remainder sits exactly on a tie.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  ExactSum sum;
  for (double x : v) sum.add(x);
  return sum.value() / static_cast<double>(v.size());
}

}  // namespace

const char* to_string(TriagePolicy policy) noexcept {
  switch (policy) {
    case TriagePolicy::uncertainty: return "uncertainty";
    case TriagePolicy::random: return "random";
    case TriagePolicy::oracle: return "oracle";
  }
  return "unknown";
}

std::vector<std::size_t> ascending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

TriageCurve forwarding_curve(TriagePolicy policy, std::span<const double> quality,
                             std::span<const std::size_t> order) {
  const std::size_t n = quality.size();
  if (order.size() != n) throw std::invalid_argument("forwarding_curve: order must cover every image");
  TriageCurve curve{policy, {}};
  curve.points.reserve(n + 1);
  // Scores are static, so forwarding the k lowest equals k rounds of "forward the minimum".
  // Retained sums are built from the tail so each one is exactly rounded.
  curve.points.resize(n + 1);
  const double denom = n == 0 ? 1.0 : static_cast<double>(n);
  ExactSum retained;
  curve.points[n] = {n, 1.0};
  for (std::size_t k = n; k-- > 0;) {
    retained.add(quality[order[k]]);
    curve.points[k] = {k, (static_cast<double>(k) + retained.value()) / denom};
  }
  return curve;
}

double random_baseline(std::span<const double> quality, std::size_t k) {
  const std::size_t n = quality.size();
  if (k > n) throw std::invalid_argument("random_baseline: budget exceeds corpus size");
  if (n == 0 || k == n) return 1.0;
  const double frac = static_cast<double>(k) / static_cast<double>(n);
  return frac + (1.0 - frac) * mean_of(quality);
}

TriageCurve analytic_random_curve(std::span<const double> quality) {
  TriageCurve curve{TriagePolicy::random, {}};
  for (std::size_t k = 0; k <= quality.size(); ++k) curve.points.push_back({k, random_baseline(quality, k)});
  return curve;
}

TriageCurve monte_carlo_random_curve(std::span<const double> quality, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("monte_carlo_random_curve: trials must be >= 1");
  const std::size_t n = quality.size();
  std::vector<double> acc(n + 1, 0.0);
  std::vector<std::size_t> order(n);
  std::mt19937_64 rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto curve = forwarding_curve(TriagePolicy::random, quality, order);
    for (std::size_t k = 0; k <= n; ++k) acc[k] += curve.points[k].performance;
  }
  TriageCurve out{TriagePolicy::random, {}};
  for (std::size_t k = 0; k <= n; ++k) out.points.push_back({k, acc[k] / static_cast<double>(trials)});
  out.points.back().performance = 1.0;
  return out;
}

SimulationResult run_simulation(std::span<const QualitySample> corpus, const SimulationConfig& config,
                                std::vector<std::string> class_names) {
  if (corpus.size() <= config.fit_count) {
    throw std::invalid_argument(fmt::format("run_simulation: corpus of {} images leaves no simulation split "
                                            "after fitting on {}", corpus.size(), config.fit_count));
  }
  const std::size_t predictors = corpus.front().uncertainty.size();
  if (config.fit_count < predictors + 2) {
    throw std::invalid_argument(fmt::format("run_simulation: fit_count {} < predictors + 2 = {}",
                                            config.fit_count, predictors + 2));
  }

  std::vector<std::size_t> shuffled(corpus.size());
  std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  SimulationResult result;
  result.fit_indices.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(config.fit_count));
  result.simulation_indices.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(config.fit_count),
                                   shuffled.end());
  std::sort(result.fit_indices.begin(), result.fit_indices.end());
  std::sort(result.simulation_indices.begin(), result.simulation_indices.end());

  std::vector<QualitySample> fit_split;
  for (std::size_t i : result.fit_indices) fit_split.push_back(corpus[i]);
  result.model = fit_quality_model(fit_split, config.alpha, std::move(class_names));

  for (std::size_t i : result.simulation_indices) {
    result.predicted.push_back(predict_quality(result.model, corpus[i].uncertainty));
    result.true_quality.push_back(corpus[i].mean_dice);
  }

  const auto by_prediction = ascending_order(result.predicted);
  const auto by_truth = ascending_order(result.true_quality);
  result.curves.push_back(forwarding_curve(TriagePolicy::uncertainty, result.true_quality, by_prediction));
  result.curves.push_back(config.random_trials == 0
                              ? analytic_random_curve(result.true_quality)
                              : monte_carlo_random_curve(result.true_quality, config.random_trials,
                                                         config.seed ^ 0x9E3779B97F4A7C15ull));
  result.curves.push_back(forwarding_curve(TriagePolicy::oracle, result.true_quality, by_truth));
  return result;
}

void export_curves(std::span<const TriageCurve> curves, std::ostream& sink) {
  sink << "policy,budget,performance\n";
  for (const auto& curve : curves) {
    for (const auto& p : curve.points) {
      sink << fmt::format("{},{},{}\n", to_string(curve.policy), p.budget, p.performance);
    }
  }
}

std::string curves_to_csv(std::span<const TriageCurve> curves) {
  std::ostringstream out;
  export_curves(curves, out);
  return out.str();
}

std::string simulation_report_json(const SimulationResult& result, const SimulationConfig& config,
                                   std::span<const std::string> image_ids) {
  using nlohmann::json;
  auto id_of = [&](std::size_t i) { return i < image_ids.size() ? image_ids[i] : std::to_string(i); };
  json j;
  j["format"] = "segtriage.simulation_report";
  j["version"] = 1;
  j["config"] = {{"fit_count", config.fit_count},
                 {"seed", config.seed},
                 {"alpha", config.alpha},
                 {"random_baseline", config.random_trials == 0 ? "analytic" : "monte_carlo"},
                 {"random_trials", config.random_trials}};
  j["model"] = json::parse(model_to_json(result.model));
  json fit = json::array(), sim = json::array();
  for (std::size_t i : result.fit_indices) fit.push_back(id_of(i));
  for (std::size_t k = 0; k < result.simulation_indices.size(); ++k) {
    sim.push_back({{"image_id", id_of(result.simulation_indices[k])},
                   {"predicted_mean_dice", result.predicted[k]},
                   {"true_mean_dice", result.true_quality[k]}});
  }
  j["split"] = {{"fit", fit}, {"simulation", sim}};
  json curves = json::array();
  for (const auto& c : result.curves) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back({{"budget", p.budget}, {"performance", p.performance}});
    curves.push_back({{"policy", to_string(c.policy)}, {"points", pts}});
  }
  j["curves"] = curves;
  return j.dump(2);
}

}  // namespace segtriage
