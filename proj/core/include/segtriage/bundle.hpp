#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "segtriage/error.hpp"

namespace segtriage {

/// Class names of a segmentation task. The class count is names.size().
struct ClassSpec {
  std::vector<std::string> class_names;
  std::size_t background_index = 0;

  std::size_t num_classes() const noexcept { return class_names.size(); }

  bool operator==(const ClassSpec&) const = default;
};

ValidationReport validate(const ClassSpec& spec);

/// H x W raster of class indices, row-major.
struct ClassRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  ClassRaster() = default;
  ClassRaster(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), values(h * w, fill) {}
  ClassRaster(std::size_t h, std::size_t w, std::vector<std::uint8_t> v)
      : height(h), width(w), values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }

  bool operator==(const ClassRaster&) const = default;
};

/// Ground-truth annotation.
struct LabelMap : ClassRaster {
  using ClassRaster::ClassRaster;
  bool operator==(const LabelMap&) const = default;
};

/// H x W x 3 8-bit RGB raster, row-major.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const RgbImage&) const = default;
};

/// T stochastic softmax passes over an H x W image with C classes.
/// Storage order is pass-major, then class, row, column.
class ProbabilityStack {
 public:
  ProbabilityStack() = default;
  ProbabilityStack(std::size_t passes, std::size_t classes, std::size_t height, std::size_t width);
  ProbabilityStack(std::size_t passes, std::size_t classes, std::size_t height, std::size_t width,
                   std::vector<float> values);

  std::size_t passes() const noexcept { return passes_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return height_ * width_; }

  std::size_t index(std::size_t t, std::size_t c, std::size_t pixel) const noexcept {
    return (t * classes_ + c) * pixels() + pixel;
  }
  float at(std::size_t t, std::size_t c, std::size_t pixel) const { return values_[index(t, c, pixel)]; }
  float& at(std::size_t t, std::size_t c, std::size_t pixel) { return values_[index(t, c, pixel)]; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<float> values() noexcept { return values_; }

  bool operator==(const ProbabilityStack&) const = default;

 private:
  std::size_t passes_ = 0;
  std::size_t classes_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

inline constexpr double kProbabilitySumTolerance = 1e-4;

/// One image's Monte-Carlo dropout evidence plus optional annotation.
struct Bundle {
  std::string image_id;
  ClassSpec class_spec;
  ProbabilityStack probabilities;
  std::optional<LabelMap> label;
  std::optional<RgbImage> source_image;
  std::map<std::string, std::string> meta;

  bool operator==(const Bundle&) const = default;
};

/// Checks every bundle invariant; empty report means the bundle is valid.
ValidationReport validate(const Bundle& bundle);

enum class BundleErrorCode {
  bad_magic,
  truncated_header,
  malformed_header,
  version_mismatch,
  truncated_payload,
  trailing_bytes,
  checksum_mismatch,
  invalid_dims,
  invalid_class_spec,
  probability_range,
  probability_sum,
  label_range,
};

const char* to_string(BundleErrorCode code) noexcept;

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrorCode code, ValidationReport report);

  BundleErrorCode code() const noexcept { return code_; }
  const ValidationReport& report() const noexcept { return report_; }

 private:
  BundleErrorCode code_;
  ValidationReport report_;
};

/// Serializes to the UBND1 container. Throws ValidationError on an invalid bundle.
std::vector<std::uint8_t> encode_bundle(const Bundle& bundle);
std::size_t write_bundle(const Bundle& bundle, std::ostream& sink);
void write_bundle_file(const Bundle& bundle, const std::string& path);

/// Parses and validates a UBND1 container. Throws BundleError.
Bundle decode_bundle(std::span<const std::uint8_t> bytes);
Bundle read_bundle(std::istream& source);
Bundle read_bundle_file(const std::string& path);

/// Lists every violated invariant of a serialized bundle without throwing.
ValidationReport validate_bundle(std::span<const std::uint8_t> bytes);
ValidationReport validate_bundle(std::istream& source);

std::vector<std::uint8_t> read_all_bytes(std::istream& source);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace segtriage
