#include "segtriage/image_io.hpp"

#include <zlib.h>

#include <stdexcept>

#include "json.hpp"

namespace segtriage {

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = ::crc32(0, out.data() + type_pos, static_cast<uInt>(4 + data.size()));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> encode_png(std::size_t width, std::size_t height, int channels,
                                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != width * height * static_cast<std::size_t>(channels)) {
    throw DimensionMismatch("encode_png: pixel buffer does not match dimensions");
  }
  // Filter type 0 per scanline.
  const std::size_t stride = width * static_cast<std::size_t>(channels);
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (stride + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * stride),
               pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("encode_png: deflate failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(width));
  put_u32be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);
  ihdr.push_back(channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace

Rgb Palette::color_of(std::size_t cls) const {
  if (colors.empty()) return {0, 0, 0};
  return colors[cls % colors.size()];
}

Palette default_palette() {
  return Palette{{{0, 0, 0},
                  {255, 0, 0},
                  {0, 255, 0},
                  {0, 0, 255},
                  {255, 255, 0},
                  {255, 0, 255},
                  {0, 255, 255},
                  {255, 128, 0}}};
}

Palette palette_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (!j.is_array() || j.empty()) throw std::invalid_argument("palette: expected a non-empty array of [r,g,b]");
  Palette p;
  for (const auto& entry : j) {
    const auto rgb = entry.get<std::vector<int>>();
    if (rgb.size() != 3) throw std::invalid_argument("palette: each color needs 3 components");
    Rgb color{};
    for (int i = 0; i < 3; ++i) {
      if (rgb[i] < 0 || rgb[i] > 255) throw std::invalid_argument("palette: component outside [0,255]");
      color[i] = static_cast<std::uint8_t>(rgb[i]);
    }
    p.colors.push_back(color);
  }
  return p;
}

std::vector<std::uint8_t> encode_png_gray(std::size_t width, std::size_t height, std::span<const std::uint8_t> gray) {
  return encode_png(width, height, 1, gray);
}

std::vector<std::uint8_t> encode_png_rgb(std::size_t width, std::size_t height, std::span<const std::uint8_t> rgb) {
  return encode_png(width, height, 3, rgb);
}

RgbImage colorize_segmentation(const ClassRaster& seg, const Palette& palette) {
  RgbImage img{seg.height, seg.width, std::vector<std::uint8_t>(seg.values.size() * 3)};
  for (std::size_t i = 0; i < seg.values.size(); ++i) {
    const auto c = palette.color_of(seg.values[i]);
    img.pixels[3 * i] = c[0];
    img.pixels[3 * i + 1] = c[1];
    img.pixels[3 * i + 2] = c[2];
  }
  return img;
}

}  // namespace segtriage
