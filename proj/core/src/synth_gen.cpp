#include "segtriage/synth_gen.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace segtriage {

namespace {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

void dirichlet(Rng& rng, double concentration, std::span<double> out) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  double sum = 0.0;
  for (double& v : out) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return;
  }
  for (double& v : out) v /= sum;
}

// Realized per-class Dice and image mean Dice for corruption counts m (FN to background,
// matched by the same number of background pixels flipped to the class).
double implied_mean_dice(const std::vector<std::size_t>& label_counts, const std::vector<std::size_t>& m,
                         std::size_t background, std::vector<double>* per_class) {
  const std::size_t classes = label_counts.size();
  const double l0 = static_cast<double>(label_counts[background]);
  double flipped = 0.0;
  double sum = 0.0;
  std::vector<double> dice(classes, 1.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (c == background) continue;
    flipped += static_cast<double>(m[c]);
    const double l = static_cast<double>(label_counts[c]);
    dice[c] = l > 0.0 ? 1.0 - static_cast<double>(m[c]) / l : 1.0;
  }
  dice[background] = l0 > 0.0 ? std::max(0.0, 1.0 - flipped / l0) : 1.0;
  for (double d : dice) sum += d;
  if (per_class) *per_class = dice;
  return sum / static_cast<double>(classes);
}

void paint_ellipse(LabelMap& label, double cy, double cx, double ry, double rx, std::uint8_t cls) {
  const auto y0 = static_cast<long>(std::floor(cy - ry)), y1 = static_cast<long>(std::ceil(cy + ry));
  const auto x0 = static_cast<long>(std::floor(cx - rx)), x1 = static_cast<long>(std::ceil(cx + rx));
  for (long y = std::max(0L, y0); y <= std::min<long>(static_cast<long>(label.height) - 1, y1); ++y) {
    for (long x = std::max(0L, x0); x <= std::min<long>(static_cast<long>(label.width) - 1, x1); ++x) {
      const double dy = (static_cast<double>(y) - cy) / ry;
      const double dx = (static_cast<double>(x) - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) label.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = cls;
    }
  }
}

const std::uint8_t kSourcePalette[][3] = {
    {70, 70, 70}, {190, 80, 60}, {90, 170, 90}, {80, 110, 200}, {200, 190, 80}, {160, 90, 170},
};

}  // namespace

const char* to_string(ClassLayout layout) noexcept {
  return layout == ClassLayout::stripes ? "stripes" : "blobs";
}

ClassLayout layout_from_string(const std::string& name) {
  if (name == "stripes") return ClassLayout::stripes;
  if (name == "blobs") return ClassLayout::blobs;
  throw std::invalid_argument("unknown layout '" + name + "' (expected stripes or blobs)");
}

void validate_config(const GeneratorConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("generator config: " + m); };
  if (c.passes < 1 || c.height < 1 || c.width < 1) fail("dims must be positive");
  if (c.classes < 2 || c.classes > 255) fail("classes must be in [2, 255]");
  if (c.height * c.width < c.classes) fail("image must have at least one pixel per class");
  if (!(0.0 <= c.quality_lo && c.quality_lo <= c.quality_hi && c.quality_hi <= 1.0)) {
    fail("quality range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(c.coupling >= 0.0 && c.coupling <= 1.0)) fail("coupling must be in [0,1]");
  if (c.background_coupling && !(*c.background_coupling >= 0.0 && *c.background_coupling <= 1.0)) {
    fail("background coupling must be in [0,1]");
  }
  if (!(c.noise_scale >= 0.0)) fail("noise_scale must be >= 0");
  if (!(c.class_spread >= 0.0)) fail("class_spread must be >= 0");
  if (c.background_index >= c.classes) fail("background index out of range");
  if (!c.class_names.empty() && c.class_names.size() != c.classes) fail("class_names must have one entry per class");
}

ClassSpec class_spec_for(const GeneratorConfig& config) {
  ClassSpec spec;
  spec.background_index = config.background_index;
  if (!config.class_names.empty()) {
    spec.class_names = config.class_names;
  } else {
    for (std::size_t c = 0; c < config.classes; ++c) {
      spec.class_names.push_back(c == config.background_index ? "background" : fmt::format("class_{}", c));
    }
  }
  return spec;
}

LabelMap layout_labels(const GeneratorConfig& config, std::uint64_t seed) {
  const std::size_t n = config.height * config.width;
  const std::size_t bg = config.background_index;
  LabelMap label(config.height, config.width, static_cast<std::uint8_t>(bg));
  std::vector<std::size_t> foreground;
  for (std::size_t c = 0; c < config.classes; ++c) {
    if (c != bg) foreground.push_back(c);
  }

  if (config.layout == ClassLayout::stripes) {
    // First half of the row-major pixels is background; the rest is split evenly.
    const std::size_t bg_pixels = std::max<std::size_t>(1, n / 2);
    const std::size_t rest = n - bg_pixels;
    for (std::size_t i = bg_pixels; i < n; ++i) {
      const std::size_t band = (i - bg_pixels) * foreground.size() / rest;
      label.values[i] = static_cast<std::uint8_t>(foreground[band]);
    }
    return label;
  }

  Rng rng(seed);
  const double h = static_cast<double>(config.height), w = static_cast<double>(config.width);
  std::uniform_int_distribution<int> blob_count(1, 3);
  for (std::size_t c : foreground) {
    const int blobs = blob_count(rng);
    for (int b = 0; b < blobs; ++b) {
      paint_ellipse(label, uniform(rng, 0.0, h), uniform(rng, 0.0, w), uniform(rng, 0.06, 0.18) * h + 0.5,
                    uniform(rng, 0.06, 0.18) * w + 0.5, static_cast<std::uint8_t>(c));
    }
  }
  // Every class must occur at least once; overwritten or clipped classes get a single seed pixel.
  std::uniform_int_distribution<std::size_t> pixel(0, n - 1);
  for (int round = 0; round < 64; ++round) {
    std::vector<std::size_t> counts(config.classes, 0);
    for (auto v : label.values) ++counts[v];
    bool missing = false;
    for (std::size_t c = 0; c < config.classes; ++c) {
      if (counts[c] > 0) continue;
      missing = true;
      std::size_t px = pixel(rng);
      for (std::size_t tries = 0; tries < n && counts[label.values[px]] < 2; ++tries) px = (px + 1) % n;
      --counts[label.values[px]];
      label.values[px] = static_cast<std::uint8_t>(c);
      ++counts[c];
    }
    if (!missing) break;
  }
  return label;
}

GeneratedImage generate_image(const GeneratorConfig& config, std::size_t index) {
  validate_config(config);
  const std::uint64_t seed = image_seed(config.seed, index);
  Rng rng(seed);
  const std::size_t classes = config.classes;
  const std::size_t bg = config.background_index;
  const std::size_t n = config.height * config.width;

  GeneratedImage out;
  out.bundle.image_id = fmt::format("img_{:05d}", index);
  out.bundle.class_spec = class_spec_for(config);
  LabelMap label = layout_labels(config, splitmix64(seed));

  std::vector<std::size_t> label_counts(classes, 0);
  std::vector<std::vector<std::size_t>> pixels_of(classes);
  for (std::size_t i = 0; i < n; ++i) {
    ++label_counts[label.values[i]];
    pixels_of[label.values[i]].push_back(i);
  }

  // Per-class targets around q; the shared offset is calibrated so the realized mean Dice
  // (background included) matches q.
  out.target_quality = uniform(rng, config.quality_lo, config.quality_hi);
  std::vector<double> jitter(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (c != bg) jitter[c] = uniform(rng, -config.class_spread, config.class_spread);
  }
  std::vector<std::size_t> m(classes, 0);
  auto counts_for = [&](double base) {
    std::vector<std::size_t> counts(classes, 0);
    std::size_t budget = label_counts[bg];
    for (std::size_t c = 0; c < classes; ++c) {
      if (c == bg) continue;
      const double target = std::clamp(base + jitter[c], 0.0, 1.0);
      const auto want = static_cast<std::size_t>(std::lround((1.0 - target) * static_cast<double>(label_counts[c])));
      counts[c] = std::min(want, budget);
      budget -= counts[c];
    }
    return counts;
  };
  double base = out.target_quality;
  for (int iter = 0; iter < 8; ++iter) {
    m = counts_for(base);
    const double realized = implied_mean_dice(label_counts, m, bg, nullptr);
    base = std::clamp(base + (out.target_quality - realized) * static_cast<double>(classes) /
                                 static_cast<double>(classes - 1),
                      -1.0, 2.0);
  }
  m = counts_for(base);
  implied_mean_dice(label_counts, m, bg, &out.class_targets);

  // Prediction: m[c] label-c pixels become background, m[c] background pixels become c.
  std::vector<std::uint8_t> predicted = label.values;
  std::vector<std::size_t> bg_pool = pixels_of[bg];
  std::shuffle(bg_pool.begin(), bg_pool.end(), rng);
  std::size_t pool_pos = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (c == bg || m[c] == 0) continue;
    auto own = pixels_of[c];
    std::shuffle(own.begin(), own.end(), rng);
    for (std::size_t k = 0; k < m[c]; ++k) predicted[own[k]] = static_cast<std::uint8_t>(bg);
    for (std::size_t k = 0; k < m[c] && pool_pos < bg_pool.size(); ++k) {
      predicted[bg_pool[pool_pos++]] = static_cast<std::uint8_t>(c);
    }
  }

  // Image-level uncertainty rates used by the decoupled share of pixels.
  std::vector<double> free_rate(classes);
  for (double& r : free_rate) r = 1.0 - uniform(rng, config.quality_lo, config.quality_hi);
  const double bg_coupling = config.background_coupling.value_or(config.coupling);
  const double noise = std::min(config.noise_scale, 1.0);

  ProbabilityStack stack(config.passes, classes, config.height, config.width);
  std::vector<double> pass_values(config.passes * classes);
  std::vector<double> scratch(classes);
  std::vector<double> others(classes - 1);
  for (std::size_t px = 0; px < n; ++px) {
    const std::size_t pred = predicted[px];
    const bool wrong = pred != label.values[px];
    const double coupling = pred == bg ? bg_coupling : config.coupling;
    const bool uncertain = uniform(rng, 0.0, 1.0) < coupling ? wrong : uniform(rng, 0.0, 1.0) < free_rate[pred];

    for (std::size_t t = 0; t < config.passes; ++t) {
      std::span<double> p(pass_values.data() + t * classes, classes);
      if (uncertain) {
        dirichlet(rng, 4.0, p);
      } else {
        const double top = uniform(rng, 0.9, 0.999);
        dirichlet(rng, 1.0, others);
        for (std::size_t c = 0, o = 0; c < classes; ++c) p[c] = c == pred ? top : (1.0 - top) * others[o++];
      }
      if (noise > 0.0) {
        dirichlet(rng, 1.0, scratch);
        for (std::size_t c = 0; c < classes; ++c) p[c] = (1.0 - noise) * p[c] + noise * scratch[c];
      }
    }
    // Make the intended class the argmax of the pass mean by swapping it with the current
    // maximum in every pass; sums and the pass distribution shape are unchanged.
    std::fill(scratch.begin(), scratch.end(), 0.0);
    for (std::size_t t = 0; t < config.passes; ++t) {
      for (std::size_t c = 0; c < classes; ++c) scratch[c] += pass_values[t * classes + c];
    }
    const auto best = static_cast<std::size_t>(std::max_element(scratch.begin(), scratch.end()) - scratch.begin());
    if (best != pred) {
      for (std::size_t t = 0; t < config.passes; ++t) {
        std::swap(pass_values[t * classes + best], pass_values[t * classes + pred]);
      }
    }
    for (std::size_t t = 0; t < config.passes; ++t) {
      for (std::size_t c = 0; c < classes; ++c) stack.at(t, c, px) = static_cast<float>(pass_values[t * classes + c]);
    }
  }

  out.bundle.probabilities = std::move(stack);
  if (config.with_source_image) {
    RgbImage img{config.height, config.width, std::vector<std::uint8_t>(n * 3)};
    std::normal_distribution<double> grain(0.0, 12.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& base_rgb = kSourcePalette[label.values[i] % std::size(kSourcePalette)];
      for (int ch = 0; ch < 3; ++ch) {
        img.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::clamp(base_rgb[ch] + grain(rng), 0.0, 255.0));
      }
    }
    out.bundle.source_image = std::move(img);
  }
  out.bundle.label = std::move(label);
  out.bundle.meta["generator"] = "segtriage-synth";
  out.bundle.meta["target_quality"] = fmt::format("{}", out.target_quality);
  out.bundle.meta["seed"] = std::to_string(seed);
  return out;
}

std::vector<GeneratedImage> generate_corpus(const GeneratorConfig& config) {
  validate_config(config);
  std::vector<GeneratedImage> corpus;
  corpus.reserve(config.num_images);
  for (std::size_t i = 0; i < config.num_images; ++i) corpus.push_back(generate_image(config, i));
  return corpus;
}

std::string config_to_json(const GeneratorConfig& c) {
  nlohmann::json j;
  j["num_images"] = c.num_images;
  j["t"] = c.passes;
  j["c"] = c.classes;
  j["h"] = c.height;
  j["w"] = c.width;
  j["layout"] = to_string(c.layout);
  j["quality_range"] = {c.quality_lo, c.quality_hi};
  j["coupling"] = c.coupling;
  j["background_coupling"] = c.background_coupling.value_or(c.coupling);
  j["class_spread"] = c.class_spread;
  j["noise_scale"] = c.noise_scale;
  j["with_source_image"] = c.with_source_image;
  j["seed"] = c.seed;
  j["class_names"] = class_spec_for(c).class_names;
  j["background_index"] = c.background_index;
  return j.dump(2);
}

void write_corpus(const std::filesystem::path& dir, const std::vector<GeneratedImage>& corpus,
                  const GeneratorConfig& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "segtriage.synthetic_manifest";
  manifest["version"] = 1;
  manifest["config"] = nlohmann::json::parse(config_to_json(config));
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : corpus) {
    const std::string file = img.bundle.image_id + ".ubnd";
    write_bundle_file(img.bundle, (dir / file).string());
    images.push_back({{"image_id", img.bundle.image_id},
                      {"file", file},
                      {"target_quality", img.target_quality},
                      {"class_targets", img.class_targets}});
  }
  manifest["images"] = images;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

}  // namespace segtriage
