#include "segtriage/seg_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segtriage {

namespace {

void require_same_dims(const ClassRaster& a, const ClassRaster& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.values.size() != b.values.size()) {
    throw DimensionMismatch(std::string(what) + ": raster dimensions differ (" +
                            std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                            std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

}  // namespace

MeanProbabilityMap mean_probability(const ProbabilityStack& stack) {
  if (stack.passes() == 0) throw std::invalid_argument("mean_probability: stack has no passes");
  MeanProbabilityMap out{stack.classes(), stack.height(), stack.width(), {}};
  const std::size_t plane = stack.classes() * stack.pixels();
  out.values.assign(plane, 0.0);
  const auto values = stack.values();
  for (std::size_t t = 0; t < stack.passes(); ++t) {
    const float* pass = values.data() + t * plane;
    for (std::size_t i = 0; i < plane; ++i) out.values[i] += pass[i];
  }
  const double inv = 1.0 / static_cast<double>(stack.passes());
  for (double& v : out.values) v *= inv;
  return out;
}

SegmentationMap argmax_segmentation(const MeanProbabilityMap& map) {
  SegmentationMap seg(map.height, map.width);
  seg.source = "argmax of mean probability over MC passes";
  const std::size_t n = map.pixels();
  for (std::size_t px = 0; px < n; ++px) {
    std::size_t best = 0;
    double best_p = map.at(0, px);
    for (std::size_t c = 1; c < map.classes; ++c) {
      // Strict comparison keeps the lowest index on ties.
      if (map.at(c, px) > best_p) {
        best_p = map.at(c, px);
        best = c;
      }
    }
    seg.values[px] = static_cast<std::uint8_t>(best);
  }
  return seg;
}

DiceReport dice_report(const ClassRaster& pred, const ClassRaster& label, const ClassSpec& spec) {
  require_same_dims(pred, label, "dice_report");
  const std::size_t classes = spec.num_classes();
  std::vector<std::size_t> pred_count(classes, 0), label_count(classes, 0), overlap(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const std::size_t p = pred.values[i];
    const std::size_t g = label.values[i];
    if (p >= classes || g >= classes) throw std::out_of_range("dice_report: class index out of range");
    ++pred_count[p];
    ++label_count[g];
    if (p == g) {
      ++overlap[p];
      ++correct;
    }
  }

  DiceReport report;
  report.per_class.resize(classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = pred_count[c] + label_count[c];
    report.per_class[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(overlap[c]) / static_cast<double>(denom);
    sum += report.per_class[c];
  }
  report.mean_dice = sum / static_cast<double>(classes);
  report.pixel_accuracy =
      pred.values.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(pred.values.size());
  return report;
}

ClassWeights class_weights(std::span<const LabelMap> training_labels, const ClassSpec& spec) {
  if (training_labels.empty()) throw std::invalid_argument("class_weights: no training labels");
  const std::size_t classes = spec.num_classes();
  std::vector<std::size_t> counts(classes, 0);
  std::size_t total = 0;
  for (const auto& label : training_labels) {
    for (std::uint8_t v : label.values) {
      if (v >= classes) throw std::out_of_range("class_weights: label value out of range");
      ++counts[v];
    }
    total += label.values.size();
  }
  ClassWeights weights;
  weights.w.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("class_weights: class '" + spec.class_names[c] +
                                  "' never occurs in the training labels");
    }
    weights.w[c] = static_cast<double>(total) / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return weights;
}

double weighted_cross_entropy(const MeanProbabilityMap& map, const ClassRaster& label,
                              const ClassWeights& weights) {
  if (label.height != map.height || label.width != map.width || label.values.size() != map.pixels()) {
    throw DimensionMismatch("weighted_cross_entropy: label dimensions differ from probability map");
  }
  if (weights.w.size() != map.classes) {
    throw DimensionMismatch("weighted_cross_entropy: weight count differs from class count");
  }
  const std::size_t n = map.pixels();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t px = 0; px < n; ++px) {
    const std::size_t g = label.values[px];
    if (g >= map.classes) throw std::out_of_range("weighted_cross_entropy: label value out of range");
    // One-hot g: only the true class contributes.
    const double p = std::clamp(map.at(g, px), kLogClampEpsilon, 1.0);
    sum += weights.w[g] * std::log(p);
  }
  return -sum / static_cast<double>(n);
}

}  // namespace segtriage
