#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segtriage/bundle.hpp"

namespace segtriage {

enum class ClassLayout { stripes, blobs };

const char* to_string(ClassLayout layout) noexcept;
ClassLayout layout_from_string(const std::string& name);

/// Synthetic corpus with tunable coupling between segmentation error and uncertainty.
///
/// For each image a target mean Dice q is drawn from [quality_lo, quality_hi]; every
/// foreground class gets its own target near q (spread by class_spread) and the
/// corruption count of that class is set so the realized per-class Dice hits it.
/// Each pixel is emitted either "certain" (predicted class probability in [0.9, 0.999])
/// or "uncertain" (near-uniform). With probability `coupling` a pixel is uncertain exactly
/// when it is misclassified; otherwise it is uncertain at an image-level rate drawn
/// independently of q.
struct GeneratorConfig {
  std::size_t num_images = 100;
  std::size_t passes = 5;
  std::size_t classes = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  ClassLayout layout = ClassLayout::stripes;
  double quality_lo = 0.4;
  double quality_hi = 1.0;
  double coupling = 0.9;
  /// Coupling for pixels predicted as background; defaults to `coupling`.
  std::optional<double> background_coupling;
  double class_spread = 0.2;
  double noise_scale = 0.05;
  bool with_source_image = true;
  std::uint64_t seed = 1;
  /// Defaults to "background", "class_1", ...
  std::vector<std::string> class_names;
  std::size_t background_index = 0;
};

void validate_config(const GeneratorConfig& config);
ClassSpec class_spec_for(const GeneratorConfig& config);

struct GeneratedImage {
  Bundle bundle;
  double target_quality = 0.0;
  std::vector<double> class_targets;  // per class; background entry is the implied value
};

/// Deterministic in (config, index): each image uses its own derived sub-seed.
GeneratedImage generate_image(const GeneratorConfig& config, std::size_t index);
std::vector<GeneratedImage> generate_corpus(const GeneratorConfig& config);

LabelMap layout_labels(const GeneratorConfig& config, std::uint64_t seed);

/// Writes <dir>/<image_id>.ubnd for every image plus <dir>/manifest.json.
void write_corpus(const std::filesystem::path& dir, const std::vector<GeneratedImage>& corpus,
                  const GeneratorConfig& config);

std::string config_to_json(const GeneratorConfig& config);

}  // namespace segtriage
