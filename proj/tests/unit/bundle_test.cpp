#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "segtriage/bundle.hpp"
#include "segtriage/synth_gen.hpp"

using namespace segtriage;

namespace {

Bundle minimal_bundle() {
  Bundle b;
  b.image_id = "one";
  b.class_spec = fixture::spec_of(2);
  b.probabilities = ProbabilityStack(1, 2, 1, 1, {1.0f, 0.0f});
  return b;
}

std::uint32_t header_length(const std::vector<std::uint8_t>& bytes) {
  return bytes[6] | (bytes[7] << 8) | (bytes[8] << 16) | (std::uint32_t(bytes[9]) << 24);
}

bool has_code(const ValidationReport& r, const std::string& code) {
  for (const auto& i : r) {
    if (i.code == code) return true;
  }
  return false;
}

}  // namespace

TEST(Bundle, MinimalBundleHasEightPayloadBytes) {
  const auto bytes = encode_bundle(minimal_bundle());
  const std::vector<std::uint8_t> magic{0x55, 0x42, 0x4E, 0x44, 0x31, 0x0A};
  ASSERT_TRUE(std::equal(magic.begin(), magic.end(), bytes.begin()));
  EXPECT_EQ(bytes.size(), 6u + 4u + header_length(bytes) + 8u);
  // 1.0f then 0.0f, little endian.
  const std::vector<std::uint8_t> tail(bytes.end() - 8, bytes.end());
  EXPECT_EQ(tail, (std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3F, 0, 0, 0, 0}));
}

TEST(Bundle, HeaderCarriesRequiredKeys) {
  const auto bytes = encode_bundle(minimal_bundle());
  const std::string header(bytes.begin() + 10, bytes.begin() + 10 + header_length(bytes));
  for (const char* key : {"\"version\":1", "\"image_id\"", "\"t\":1", "\"c\":2", "\"h\":1", "\"w\":1",
                          "\"class_names\"", "\"background_index\"", "\"has_label\":false",
                          "\"has_source_image\":false", "\"prob_dtype\":\"f32le\"", "\"payload_crc32\""}) {
    EXPECT_NE(header.find(key), std::string::npos) << key;
  }
}

TEST(Bundle, RoundTripRandom) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Bundle b = fixture::random_bundle(rng);
    const auto bytes = encode_bundle(b);
    const Bundle back = decode_bundle(bytes);
    ASSERT_EQ(back, b);
    ASSERT_EQ(encode_bundle(back), bytes);
  }
}

TEST(Bundle, StreamRoundTrip) {
  std::mt19937_64 rng(5);
  const Bundle b = fixture::random_bundle(rng);
  std::stringstream ss;
  const auto n = write_bundle(b, ss);
  EXPECT_EQ(n, ss.str().size());
  EXPECT_EQ(read_bundle(ss), b);
}

TEST(Bundle, SyntheticCorpusReserializesIdentically) {
  GeneratorConfig cfg;
  cfg.num_images = 20;
  cfg.height = cfg.width = 16;
  for (const auto& img : generate_corpus(cfg)) {
    const auto bytes = encode_bundle(img.bundle);
    EXPECT_EQ(encode_bundle(decode_bundle(bytes)), bytes);
  }
}

TEST(Bundle, DistinctStructuralErrors) {
  const auto good = encode_bundle(minimal_bundle());
  auto code_of = [](std::vector<std::uint8_t> bytes) {
    try {
      decode_bundle(bytes);
    } catch (const BundleError& e) {
      return std::string(to_string(e.code()));
    }
    return std::string("ok");
  };

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of(bad_magic), "bad_magic");

  EXPECT_EQ(code_of({good.begin(), good.begin() + 8}), "truncated_header");
  EXPECT_EQ(code_of({good.begin(), good.end() - 1}), "truncated_payload");

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(code_of(trailing), "trailing_bytes");

  auto corrupted = good;
  corrupted.back() ^= 0x01;
  EXPECT_EQ(code_of(corrupted), "checksum_mismatch");

  // Rewrite the version field in place (same length keeps the header length valid).
  auto version = good;
  const std::string header(version.begin() + 10, version.begin() + 10 + header_length(version));
  const auto at = header.find("\"version\":1");
  ASSERT_NE(at, std::string::npos);
  version[10 + at + 10] = '2';
  EXPECT_EQ(code_of(version), "version_mismatch");
}

TEST(Bundle, ProbabilitySumViolationRejected) {
  Bundle b = minimal_bundle();
  b.probabilities = ProbabilityStack(1, 2, 1, 2, {0.5f, 1.0f, 0.4f, 0.0f});  // pixel 0 sums to 0.9
  const auto report = validate(b);
  ASSERT_TRUE(has_code(report, "probability_sum"));
  EXPECT_NE(report.front().message.find("pixel 0"), std::string::npos) << report.front().message;
  EXPECT_THROW(encode_bundle(b), ValidationError);
}

TEST(Bundle, ProbabilitySumToleranceIsOneE4) {
  Bundle b = minimal_bundle();
  b.probabilities = ProbabilityStack(1, 2, 1, 1, {0.50004f, 0.5f});
  EXPECT_TRUE(validate(b).empty());
  b.probabilities = ProbabilityStack(1, 2, 1, 1, {0.5002f, 0.5f});
  EXPECT_TRUE(has_code(validate(b), "probability_sum"));
}

TEST(Bundle, SemanticViolationsListed) {
  Bundle b = minimal_bundle();
  b.probabilities = ProbabilityStack(1, 2, 1, 2, {1.5f, 0.0f, -0.5f, 1.0f});
  b.label = LabelMap(1, 2, std::vector<std::uint8_t>{0, 7});
  const auto report = validate(b);
  EXPECT_TRUE(has_code(report, "probability_range"));
  EXPECT_TRUE(has_code(report, "label_range"));

  Bundle dims = minimal_bundle();
  dims.label = LabelMap(2, 2);
  EXPECT_TRUE(has_code(validate(dims), "invalid_dims"));

  Bundle spec = minimal_bundle();
  spec.class_spec.background_index = 5;
  EXPECT_TRUE(has_code(validate(spec), "invalid_class_spec"));
}

TEST(Bundle, ValidateBundleEmptyIffReadSucceeds) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto bytes = encode_bundle(fixture::random_bundle(rng));
    if (i % 2) bytes[rng() % bytes.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    const auto report = validate_bundle(bytes);
    bool read_ok = true;
    try {
      decode_bundle(bytes);
    } catch (const BundleError&) {
      read_ok = false;
    }
    EXPECT_EQ(report.empty(), read_ok);
  }
}

TEST(Bundle, EverySingleBytePayloadCorruptionDetected) {
  std::mt19937_64 rng(17);
  Bundle b = fixture::random_bundle(rng);
  const auto bytes = encode_bundle(b);
  const std::size_t payload_start = 10 + header_length(bytes);
  for (std::size_t i = payload_start; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    ASSERT_FALSE(validate_bundle(bad).empty()) << "byte " << i;
  }
}
