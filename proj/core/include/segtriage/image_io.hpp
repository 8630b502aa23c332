#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segtriage/bundle.hpp"
#include "segtriage/uncertainty.hpp"

namespace segtriage {

using Rgb = std::array<std::uint8_t, 3>;

/// Class colors indexed by class. Classes beyond the palette wrap around.
struct Palette {
  std::vector<Rgb> colors;

  Rgb color_of(std::size_t cls) const;
};

/// Background black, then red, green, blue, then extras.
Palette default_palette();
/// JSON array of [r, g, b] triples.
Palette palette_from_json(const std::string& text);

/// 8-bit PNG, color type 0 (gray) or 2 (RGB).
std::vector<std::uint8_t> encode_png_gray(std::size_t width, std::size_t height, std::span<const std::uint8_t> gray);
std::vector<std::uint8_t> encode_png_rgb(std::size_t width, std::size_t height, std::span<const std::uint8_t> rgb);

RgbImage colorize_segmentation(const ClassRaster& seg, const Palette& palette);

}  // namespace segtriage
