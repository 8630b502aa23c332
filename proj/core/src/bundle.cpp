#include "segtriage/bundle.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace segtriage {

namespace {

using nlohmann::json;

constexpr std::array<std::uint8_t, 6> kMagic{0x55, 0x42, 0x4E, 0x44, 0x31, 0x0A};  // "UBND1\n"
constexpr int kFormatVersion = 1;
constexpr const char* kProbDtype = "f32le";
constexpr std::size_t kMaxClasses = 255;

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc_update(std::uint32_t crc, std::span<const std::uint8_t> bytes) {
  // zlib takes uInt lengths; feed in chunks to stay portable for large payloads.
  constexpr std::size_t kChunk = 1u << 30;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min(kChunk, bytes.size() - offset);
    crc = static_cast<std::uint32_t>(
        ::crc32(crc, bytes.data() + offset, static_cast<uInt>(n)));
    offset += n;
  }
  return crc;
}

// Multiplies sizes, returning nullopt on overflow.
std::optional<std::size_t> checked_product(std::initializer_list<std::uint64_t> factors) {
  std::uint64_t acc = 1;
  for (std::uint64_t f : factors) {
    if (f != 0 && acc > std::numeric_limits<std::uint64_t>::max() / f) return std::nullopt;
    acc *= f;
  }
  if (acc > std::numeric_limits<std::size_t>::max()) return std::nullopt;
  return static_cast<std::size_t>(acc);
}

ValidationIssue issue(BundleErrorCode code, std::string field, std::string message) {
  return ValidationIssue{to_string(code), std::move(field), std::move(message)};
}

// Collects at most one issue per invariant, recording the first offending index and the count.
class IssueCounter {
 public:
  IssueCounter(BundleErrorCode code, std::string field, std::string what)
      : code_(code), field_(std::move(field)), what_(std::move(what)) {}

  void hit(std::size_t index, const std::string& detail) {
    if (count_++ == 0) {
      first_index_ = index;
      first_detail_ = detail;
    }
  }

  void flush(ValidationReport& report) const {
    if (count_ == 0) return;
    std::ostringstream msg;
    msg << what_ << " at index " << first_index_ << " (" << first_detail_ << ")";
    if (count_ > 1) msg << "; " << count_ << " violations in total";
    report.push_back(issue(code_, field_ + "[" + std::to_string(first_index_) + "]", msg.str()));
  }

 private:
  BundleErrorCode code_;
  std::string field_;
  std::string what_;
  std::size_t count_ = 0;
  std::size_t first_index_ = 0;
  std::string first_detail_;
};

void check_probabilities(const ProbabilityStack& stack, ValidationReport& report) {
  IssueCounter range(BundleErrorCode::probability_range, "probabilities",
                     "value not finite or outside [0,1]");
  IssueCounter sum(BundleErrorCode::probability_sum, "probabilities",
                   "class probabilities do not sum to 1 within 1e-4");
  const auto values = stack.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) range.hit(i, "value " + std::to_string(v));
  }
  const std::size_t n = stack.pixels();
  for (std::size_t t = 0; t < stack.passes(); ++t) {
    for (std::size_t px = 0; px < n; ++px) {
      double s = 0.0;
      for (std::size_t c = 0; c < stack.classes(); ++c) s += stack.at(t, c, px);
      if (!(std::abs(s - 1.0) <= kProbabilitySumTolerance)) {
        sum.hit(t * n + px, "pass " + std::to_string(t) + " pixel " + std::to_string(px) +
                                " sums to " + std::to_string(s));
      }
    }
  }
  range.flush(report);
  sum.flush(report);
}

void check_label(const LabelMap& label, std::size_t classes, ValidationReport& report) {
  IssueCounter range(BundleErrorCode::label_range, "label", "label value >= class count");
  for (std::size_t i = 0; i < label.values.size(); ++i) {
    if (label.values[i] >= classes) range.hit(i, "value " + std::to_string(label.values[i]));
  }
  range.flush(report);
}

void check_class_spec(const ClassSpec& spec, ValidationReport& report) {
  for (auto& i : validate(spec)) report.push_back(std::move(i));
}

json header_for(const Bundle& b, std::uint32_t crc) {
  json h;
  h["version"] = kFormatVersion;
  h["image_id"] = b.image_id;
  h["t"] = b.probabilities.passes();
  h["c"] = b.probabilities.classes();
  h["h"] = b.probabilities.height();
  h["w"] = b.probabilities.width();
  h["class_names"] = b.class_spec.class_names;
  h["background_index"] = b.class_spec.background_index;
  h["has_label"] = b.label.has_value();
  h["has_source_image"] = b.source_image.has_value();
  h["prob_dtype"] = kProbDtype;
  h["payload_crc32"] = crc;
  if (!b.meta.empty()) h["meta"] = b.meta;
  return h;
}

std::vector<std::uint8_t> probability_bytes(const ProbabilityStack& stack) {
  const auto values = stack.values();
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (float v : values) put_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

struct ParsedHeader {
  std::string image_id;
  std::size_t t = 0, c = 0, h = 0, w = 0;
  ClassSpec class_spec;
  bool has_label = false;
  bool has_source_image = false;
  std::uint32_t crc = 0;
  std::map<std::string, std::string> meta;
};

template <typename T>
bool get_field(const json& h, const char* key, T& out, ValidationReport& report) {
  auto it = h.find(key);
  if (it == h.end()) {
    report.push_back(issue(BundleErrorCode::malformed_header, key, "missing required header key"));
    return false;
  }
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    report.push_back(issue(BundleErrorCode::malformed_header, key,
                           std::string("wrong type: ") + e.what()));
    return false;
  }
  return true;
}

std::optional<ParsedHeader> parse_header(const json& h, ValidationReport& report) {
  if (!h.is_object()) {
    report.push_back(issue(BundleErrorCode::malformed_header, "header", "header is not a JSON object"));
    return std::nullopt;
  }
  int version = 0;
  if (!get_field(h, "version", version, report)) return std::nullopt;
  if (version != kFormatVersion) {
    report.push_back(issue(BundleErrorCode::version_mismatch, "version",
                           "unsupported version " + std::to_string(version)));
    return std::nullopt;
  }
  ParsedHeader p;
  std::string dtype;
  std::uint64_t t = 0, c = 0, hh = 0, w = 0, bg = 0;
  bool ok = get_field(h, "image_id", p.image_id, report);
  ok &= get_field(h, "t", t, report);
  ok &= get_field(h, "c", c, report);
  ok &= get_field(h, "h", hh, report);
  ok &= get_field(h, "w", w, report);
  ok &= get_field(h, "class_names", p.class_spec.class_names, report);
  ok &= get_field(h, "background_index", bg, report);
  ok &= get_field(h, "has_label", p.has_label, report);
  ok &= get_field(h, "has_source_image", p.has_source_image, report);
  ok &= get_field(h, "prob_dtype", dtype, report);
  ok &= get_field(h, "payload_crc32", p.crc, report);
  if (h.contains("meta")) ok &= get_field(h, "meta", p.meta, report);
  if (!ok) return std::nullopt;
  if (dtype != kProbDtype) {
    report.push_back(issue(BundleErrorCode::malformed_header, "prob_dtype",
                           "unsupported dtype '" + dtype + "'"));
    return std::nullopt;
  }
  if (t < 1 || c < 2 || hh < 1 || w < 1 || c > kMaxClasses) {
    report.push_back(issue(BundleErrorCode::invalid_dims, "dims",
                           "require T>=1, 2<=C<=255, H>=1, W>=1"));
    return std::nullopt;
  }
  p.t = t;
  p.c = c;
  p.h = hh;
  p.w = w;
  p.class_spec.background_index = bg;
  return p;
}

// Shared by decode and validate. Structural failures stop parsing; semantic invariants
// are all collected.
std::optional<Bundle> parse(std::span<const std::uint8_t> bytes, ValidationReport& report) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    report.push_back(issue(BundleErrorCode::bad_magic, "magic", "missing UBND1 magic bytes"));
    return std::nullopt;
  }
  std::size_t pos = kMagic.size();
  if (bytes.size() < pos + 4) {
    report.push_back(issue(BundleErrorCode::truncated_header, "header_length", "file ends before header length"));
    return std::nullopt;
  }
  const std::uint32_t header_len = get_u32le(bytes.data() + pos);
  pos += 4;
  if (bytes.size() - pos < header_len) {
    report.push_back(issue(BundleErrorCode::truncated_header, "header",
                           "header length " + std::to_string(header_len) + " exceeds file size"));
    return std::nullopt;
  }
  json header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len), nullptr,
                            /*allow_exceptions=*/false);
  pos += header_len;
  if (header.is_discarded()) {
    report.push_back(issue(BundleErrorCode::malformed_header, "header", "header is not valid JSON"));
    return std::nullopt;
  }
  auto parsed = parse_header(header, report);
  if (!parsed) return std::nullopt;

  const auto prob_bytes = checked_product({parsed->t, parsed->c, parsed->h, parsed->w, 4});
  const auto label_bytes = parsed->has_label ? checked_product({parsed->h, parsed->w}) : std::size_t{0};
  const auto image_bytes = parsed->has_source_image ? checked_product({parsed->h, parsed->w, 3}) : std::size_t{0};
  if (!prob_bytes || !label_bytes || !image_bytes) {
    report.push_back(issue(BundleErrorCode::invalid_dims, "dims", "payload size overflows"));
    return std::nullopt;
  }
  const std::size_t payload = *prob_bytes + *label_bytes + *image_bytes;
  const std::size_t remaining = bytes.size() - pos;
  if (remaining < payload) {
    report.push_back(issue(BundleErrorCode::truncated_payload, "payload",
                           "expected " + std::to_string(payload) + " payload bytes, found " +
                               std::to_string(remaining)));
    return std::nullopt;
  }
  if (remaining > payload) {
    report.push_back(issue(BundleErrorCode::trailing_bytes, "payload",
                           std::to_string(remaining - payload) + " unexpected bytes after payload"));
    return std::nullopt;
  }

  const auto payload_span = bytes.subspan(pos, payload);
  const std::uint32_t crc = crc_update(0, payload_span);
  if (crc != parsed->crc) {
    report.push_back(issue(BundleErrorCode::checksum_mismatch, "payload_crc32",
                           "payload CRC32 mismatch"));
  }

  Bundle b;
  b.image_id = std::move(parsed->image_id);
  b.class_spec = std::move(parsed->class_spec);
  b.meta = std::move(parsed->meta);

  std::vector<float> probs(*prob_bytes / 4);
  const std::uint8_t* p = payload_span.data();
  for (float& v : probs) {
    v = std::bit_cast<float>(get_u32le(p));
    p += 4;
  }
  b.probabilities = ProbabilityStack(parsed->t, parsed->c, parsed->h, parsed->w, std::move(probs));
  if (parsed->has_label) {
    b.label = LabelMap(parsed->h, parsed->w, std::vector<std::uint8_t>(p, p + *label_bytes));
    p += *label_bytes;
  }
  if (parsed->has_source_image) {
    b.source_image = RgbImage{parsed->h, parsed->w, std::vector<std::uint8_t>(p, p + *image_bytes)};
  }

  for (auto& i : validate(b)) report.push_back(std::move(i));
  return b;
}

BundleErrorCode code_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(BundleErrorCode::label_range); ++i) {
    const auto code = static_cast<BundleErrorCode>(i);
    if (s == to_string(code)) return code;
  }
  return BundleErrorCode::malformed_header;
}

}  // namespace

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (std::size_t i = 0; i < report.size(); ++i) {
    if (i) out << "; ";
    out << report[i].code << " " << report[i].field << ": " << report[i].message;
  }
  return out.str();
}

ValidationError::ValidationError(ValidationReport report)
    : std::runtime_error("validation failed: " + format_report(report)), report_(std::move(report)) {}

ValidationReport validate(const ClassSpec& spec) {
  ValidationReport report;
  const std::size_t c = spec.num_classes();
  if (c < 2 || c > kMaxClasses) {
    report.push_back(issue(BundleErrorCode::invalid_class_spec, "class_names",
                           "need between 2 and 255 classes, got " + std::to_string(c)));
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c; ++i) {
    const auto& name = spec.class_names[i];
    if (name.empty()) {
      report.push_back(issue(BundleErrorCode::invalid_class_spec,
                             "class_names[" + std::to_string(i) + "]", "empty class name"));
    } else if (!seen.insert(name).second) {
      report.push_back(issue(BundleErrorCode::invalid_class_spec,
                             "class_names[" + std::to_string(i) + "]", "duplicate class name '" + name + "'"));
    }
  }
  if (spec.background_index >= c) {
    report.push_back(issue(BundleErrorCode::invalid_class_spec, "background_index",
                           "background index " + std::to_string(spec.background_index) +
                               " out of range"));
  }
  return report;
}

ProbabilityStack::ProbabilityStack(std::size_t passes, std::size_t classes, std::size_t height,
                                   std::size_t width)
    : ProbabilityStack(passes, classes, height, width,
                       std::vector<float>(passes * classes * height * width, 0.0f)) {}

ProbabilityStack::ProbabilityStack(std::size_t passes, std::size_t classes, std::size_t height,
                                   std::size_t width, std::vector<float> values)
    : passes_(passes), classes_(classes), height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != passes * classes * height * width) {
    throw DimensionMismatch("probability stack: value count does not match T*C*H*W");
  }
}

ValidationReport validate(const Bundle& b) {
  ValidationReport report;
  check_class_spec(b.class_spec, report);
  const auto& p = b.probabilities;
  if (p.passes() < 1 || p.classes() < 2 || p.height() < 1 || p.width() < 1) {
    report.push_back(issue(BundleErrorCode::invalid_dims, "probabilities",
                           "require T>=1, C>=2, H>=1, W>=1"));
    return report;
  }
  if (p.classes() != b.class_spec.num_classes()) {
    report.push_back(issue(BundleErrorCode::invalid_dims, "probabilities",
                           "class count " + std::to_string(p.classes()) + " != " +
                               std::to_string(b.class_spec.num_classes()) + " class names"));
  }
  check_probabilities(p, report);
  if (b.label) {
    if (b.label->height != p.height() || b.label->width != p.width() ||
        b.label->values.size() != p.pixels()) {
      report.push_back(issue(BundleErrorCode::invalid_dims, "label", "label dims do not match (H,W)"));
    } else {
      check_label(*b.label, p.classes(), report);
    }
  }
  if (b.source_image) {
    const auto& img = *b.source_image;
    if (img.height != p.height() || img.width != p.width() || img.pixels.size() != p.pixels() * 3) {
      report.push_back(issue(BundleErrorCode::invalid_dims, "source_image",
                             "source image dims do not match (H,W,3)"));
    }
  }
  return report;
}

const char* to_string(BundleErrorCode code) noexcept {
  switch (code) {
    case BundleErrorCode::bad_magic: return "bad_magic";
    case BundleErrorCode::truncated_header: return "truncated_header";
    case BundleErrorCode::malformed_header: return "malformed_header";
    case BundleErrorCode::version_mismatch: return "version_mismatch";
    case BundleErrorCode::truncated_payload: return "truncated_payload";
    case BundleErrorCode::trailing_bytes: return "trailing_bytes";
    case BundleErrorCode::checksum_mismatch: return "checksum_mismatch";
    case BundleErrorCode::invalid_dims: return "invalid_dims";
    case BundleErrorCode::invalid_class_spec: return "invalid_class_spec";
    case BundleErrorCode::probability_range: return "probability_range";
    case BundleErrorCode::probability_sum: return "probability_sum";
    case BundleErrorCode::label_range: return "label_range";
  }
  return "unknown";
}

BundleError::BundleError(BundleErrorCode code, ValidationReport report)
    : std::runtime_error(std::string("bundle error (") + to_string(code) + "): " + format_report(report)),
      code_(code),
      report_(std::move(report)) {}

std::vector<std::uint8_t> encode_bundle(const Bundle& bundle) {
  if (auto report = validate(bundle); !report.empty()) throw ValidationError(std::move(report));

  std::vector<std::uint8_t> payload = probability_bytes(bundle.probabilities);
  if (bundle.label) payload.insert(payload.end(), bundle.label->values.begin(), bundle.label->values.end());
  if (bundle.source_image) {
    payload.insert(payload.end(), bundle.source_image->pixels.begin(), bundle.source_image->pixels.end());
  }
  const std::uint32_t crc = crc_update(0, payload);
  const std::string header = header_for(bundle, crc).dump();
  if (header.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError({{"malformed_header", "header", "header exceeds 4 GiB"}});
  }

  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32le(out, static_cast<std::uint32_t>(header.size()));
  const std::size_t at = out.size();
  out.resize(at + header.size() + payload.size());
  std::memcpy(out.data() + at, header.data(), header.size());
  if (!payload.empty()) std::memcpy(out.data() + at + header.size(), payload.data(), payload.size());
  return out;
}

std::size_t write_bundle(const Bundle& bundle, std::ostream& sink) {
  const auto bytes = encode_bundle(bundle);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw std::runtime_error("write_bundle: stream write failed");
  return bytes.size();
}

void write_bundle_file(const Bundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_bundle(bundle, out);
}

Bundle decode_bundle(std::span<const std::uint8_t> bytes) {
  ValidationReport report;
  auto bundle = parse(bytes, report);
  if (!report.empty()) {
    const auto code = code_from_string(report.front().code);
    throw BundleError(code, std::move(report));
  }
  return std::move(*bundle);
}

Bundle read_bundle(std::istream& source) { return decode_bundle(read_all_bytes(source)); }

Bundle read_bundle_file(const std::string& path) { return decode_bundle(read_file_bytes(path)); }

ValidationReport validate_bundle(std::span<const std::uint8_t> bytes) {
  ValidationReport report;
  parse(bytes, report);
  return report;
}

ValidationReport validate_bundle(std::istream& source) { return validate_bundle(read_all_bytes(source)); }

std::vector<std::uint8_t> read_all_bytes(std::istream& source) {
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>());
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_all_bytes(in);
}

}  // namespace segtriage
