#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "segtriage/stat_model.hpp"

namespace segtriage {

enum class TriagePolicy { uncertainty, random, oracle };

const char* to_string(TriagePolicy policy) noexcept;

struct CurvePoint {
  std::size_t budget = 0;
  double performance = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

/// System performance after forwarding k images to a perfect annotator, for k = 0..n.
struct TriageCurve {
  TriagePolicy policy = TriagePolicy::uncertainty;
  std::vector<CurvePoint> points;

  bool operator==(const TriageCurve&) const = default;
};

struct SimulationConfig {
  std::size_t fit_count = 30;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  /// 0 selects the analytic expectation; otherwise the random curve averages this many
  /// sampled forwarding orders.
  std::size_t random_trials = 0;
};

struct SimulationResult {
  QualityModel model;
  std::vector<std::size_t> fit_indices;         // into the input corpus
  std::vector<std::size_t> simulation_indices;  // into the input corpus
  std::vector<double> predicted;                // per simulation image
  std::vector<double> true_quality;             // per simulation image
  std::vector<TriageCurve> curves;              // uncertainty, random, oracle
};

/// Performance when images are forwarded in `order` (indices into `quality`):
/// perf(k) = (k + sum of retained quality) / n.
TriageCurve forwarding_curve(TriagePolicy policy, std::span<const double> quality,
                             std::span<const std::size_t> order);

/// Indices sorted ascending by score, ties by index.
std::vector<std::size_t> ascending_order(std::span<const double> scores);

/// Expected performance of forwarding a uniformly random subset of size k:
/// k/n + (1 - k/n) * mean(quality).
double random_baseline(std::span<const double> quality, std::size_t k);
TriageCurve analytic_random_curve(std::span<const double> quality);
TriageCurve monte_carlo_random_curve(std::span<const double> quality, std::size_t trials,
                                     std::uint64_t seed);

SimulationResult run_simulation(std::span<const QualitySample> corpus, const SimulationConfig& config,
                                std::vector<std::string> class_names = {});

/// CSV with header `policy,budget,performance`, curves in input order.
void export_curves(std::span<const TriageCurve> curves, std::ostream& sink);
std::string curves_to_csv(std::span<const TriageCurve> curves);

/// JSON report: config, fitted model, split assignment and curves.
std::string simulation_report_json(const SimulationResult& result, const SimulationConfig& config,
                                   std::span<const std::string> image_ids);

}  // namespace segtriage
