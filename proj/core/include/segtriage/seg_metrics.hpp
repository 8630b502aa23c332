#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "segtriage/bundle.hpp"

namespace segtriage {

/// Per-pixel class probabilities averaged over the MC-dropout passes (C x H x W).
struct MeanProbabilityMap {
  std::size_t classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  std::size_t pixels() const noexcept { return height * width; }
  double at(std::size_t c, std::size_t pixel) const { return values[c * pixels() + pixel]; }
  double& at(std::size_t c, std::size_t pixel) { return values[c * pixels() + pixel]; }
};

/// Predicted class per pixel.
struct SegmentationMap : ClassRaster {
  using ClassRaster::ClassRaster;
  std::string source;
};

struct ClassWeights {
  std::vector<double> w;
};

struct DiceReport {
  std::vector<double> per_class;
  double mean_dice = 0.0;
  double pixel_accuracy = 0.0;
};

MeanProbabilityMap mean_probability(const ProbabilityStack& stack);

/// Ties resolve to the lowest class index.
SegmentationMap argmax_segmentation(const MeanProbabilityMap& map);

/// Per-class Dice 2|P∩G| / (|P|+|G|); a class absent from both rasters scores 1.
/// Mean Dice averages all C classes, background included.
DiceReport dice_report(const ClassRaster& pred, const ClassRaster& label, const ClassSpec& spec);

/// Inverse-frequency weights N_total / (C * N_c). Throws std::invalid_argument when a class
/// never occurs.
ClassWeights class_weights(std::span<const LabelMap> training_labels, const ClassSpec& spec);

inline constexpr double kLogClampEpsilon = 1e-12;

/// -(1/N) sum_i sum_c w_c g_ic log p_ic with p clamped to [1e-12, 1].
double weighted_cross_entropy(const MeanProbabilityMap& map, const ClassRaster& label,
                              const ClassWeights& weights);

}  // namespace segtriage
