#include "segtriage/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segtriage {

double pixel_entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p > 0.0) h -= p * std::log(p);
  }
  // Rounding can push a one-hot pixel a hair below zero.
  return std::max(h, 0.0);
}

UncertaintyMap entropy_map(const MeanProbabilityMap& map) {
  UncertaintyMap out{map.height, map.width, map.classes, std::vector<double>(map.pixels())};
  std::vector<double> column(map.classes);
  const double upper = std::log(static_cast<double>(map.classes));
  for (std::size_t px = 0; px < map.pixels(); ++px) {
    for (std::size_t c = 0; c < map.classes; ++c) column[c] = map.at(c, px);
    out.values[px] = std::min(pixel_entropy(column), upper);
  }
  return out;
}

ClassUncertaintyVector class_uncertainties(const UncertaintyMap& umap, const ClassRaster& seg,
                                           const ClassSpec& spec) {
  if (seg.height != umap.height || seg.width != umap.width || seg.values.size() != umap.values.size()) {
    throw DimensionMismatch("class_uncertainties: segmentation and entropy map dimensions differ");
  }
  const std::size_t classes = spec.num_classes();
  std::vector<double> sums(classes, 0.0);
  ClassUncertaintyVector out;
  out.pixel_counts.assign(classes, 0);
  for (std::size_t px = 0; px < seg.values.size(); ++px) {
    const std::size_t c = seg.values[px];
    if (c >= classes) throw std::out_of_range("class_uncertainties: class index out of range");
    sums[c] += umap.values[px];
    ++out.pixel_counts[c];
  }
  out.u.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (out.pixel_counts[c] > 0) out.u[c] = sums[c] / static_cast<double>(out.pixel_counts[c]);
  }
  return out;
}

double image_mean_entropy(const UncertaintyMap& umap) {
  if (umap.values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : umap.values) sum += v;
  return sum / static_cast<double>(umap.values.size());
}

std::vector<std::uint8_t> entropy_to_gray(const UncertaintyMap& umap) {
  std::vector<std::uint8_t> gray(umap.values.size());
  const double scale = umap.classes >= 2 ? 255.0 / std::log(static_cast<double>(umap.classes)) : 0.0;
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(umap.values[i] * scale, 0.0, 255.0)));
  }
  return gray;
}

}  // namespace segtriage
