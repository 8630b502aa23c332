#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "segtriage/seg_metrics.hpp"

namespace segtriage {

/// Per-pixel predictive entropy (natural log), H x W.
struct UncertaintyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;  // bounds values to [0, ln classes]
  std::vector<double> values;
};

/// Mean entropy over the pixels predicted as each class. An entry is nullopt (absent)
/// exactly when no pixel was predicted as that class.
struct ClassUncertaintyVector {
  std::vector<std::optional<double>> u;
  std::vector<std::size_t> pixel_counts;

  std::size_t size() const noexcept { return u.size(); }
  bool operator==(const ClassUncertaintyVector&) const = default;
};

/// H(p) = -sum_c p_c ln p_c with 0 ln 0 = 0.
double pixel_entropy(std::span<const double> probabilities);

UncertaintyMap entropy_map(const MeanProbabilityMap& map);

ClassUncertaintyVector class_uncertainties(const UncertaintyMap& umap, const ClassRaster& seg,
                                           const ClassSpec& spec);

double image_mean_entropy(const UncertaintyMap& umap);

/// 8-bit grayscale rendering, 255 * H / ln C (brighter = more uncertain).
std::vector<std::uint8_t> entropy_to_gray(const UncertaintyMap& umap);

}  // namespace segtriage
