#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "segtriage/synth_gen.hpp"
#include "segtriage/triage_store.hpp"

using namespace segtriage;
namespace fs = std::filesystem;

namespace {

class StoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("segtriage_store_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    GeneratorConfig cfg;
    cfg.num_images = 12;
    cfg.height = cfg.width = 16;
    cfg.background_coupling = 0.0;
    corpus_ = generate_corpus(cfg);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static TriageStore::Clock fixed_clock() {
    return [] { return std::string("2026-01-01T00:00:00Z"); };
  }
  std::vector<std::uint8_t> bytes(std::size_t i) const { return encode_bundle(corpus_[i].bundle); }

  fs::path dir_;
  std::vector<GeneratedImage> corpus_;
};

ServiceErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ServiceError";
  return ServiceErrorCode::bad_request;
}

}  // namespace

TEST_F(StoreTest, IngestScoresAndPersistsBlob) {
  TriageStore store(dir_, fixed_clock());
  const auto item = store.ingest(bytes(0));
  EXPECT_EQ(item.item_id, "item-000001");
  EXPECT_EQ(item.status, ItemStatus::pending);
  EXPECT_FALSE(item.predicted_mean_dice.has_value());
  EXPECT_TRUE(item.true_mean_dice.has_value());
  EXPECT_EQ(item.class_uncertainties.size(), 4u);
  EXPECT_TRUE(fs::exists(dir_ / "blobs" / (item.blob + ".ubnd")));
  EXPECT_EQ(item.blob, sha256_hex(bytes(0)));
}

TEST_F(StoreTest, RejectsInvalidDuplicateAndForeignSpec) {
  TriageStore store(dir_, fixed_clock());
  store.ingest(bytes(0));
  EXPECT_EQ(code_of([&] { store.ingest(bytes(0)); }), ServiceErrorCode::conflict);
  auto bad = bytes(1);
  bad.back() ^= 0xFF;
  try {
    store.ingest(bad);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.code(), ServiceErrorCode::validation_failed);
    EXPECT_EQ(http_status(e.code()), 422);
    EXPECT_NE(e.details_json().find("checksum_mismatch"), std::string::npos);
  }
  Bundle other = corpus_[2].bundle;
  other.class_spec.class_names[1] = "renamed";
  EXPECT_EQ(code_of([&] { store.ingest(encode_bundle(other)); }), ServiceErrorCode::validation_failed);
}

TEST_F(StoreTest, DecisionsFollowStateMachine) {
  TriageStore store(dir_, fixed_clock());
  const auto a = store.ingest(bytes(0));
  const auto b = store.ingest(bytes(1));
  const auto accepted = store.decide(a.item_id, DecisionAction::accept, std::nullopt, "alex");
  EXPECT_EQ(accepted.status, ItemStatus::accepted);
  EXPECT_EQ(accepted.decided_by, "alex");
  EXPECT_EQ(code_of([&] { store.decide(a.item_id, DecisionAction::annotate); }), ServiceErrorCode::invalid_state);
  EXPECT_EQ(code_of([&] { store.decide("item-999999", DecisionAction::accept); }), ServiceErrorCode::not_found);
  EXPECT_EQ(code_of([&] { store.decide(b.item_id, DecisionAction::annotate, std::vector<std::uint8_t>(3, 0)); }),
            ServiceErrorCode::validation_failed);
  EXPECT_EQ(code_of([&] { store.decide(b.item_id, DecisionAction::annotate, std::vector<std::uint8_t>(256, 9)); }),
            ServiceErrorCode::validation_failed);

  // A corrected label equal to the prediction yields perfect Dice.
  std::vector<std::uint8_t> label(256, 0);
  const auto annotated = store.decide(b.item_id, DecisionAction::annotate, label);
  EXPECT_EQ(annotated.status, ItemStatus::annotated);
  ASSERT_TRUE(annotated.corrected_label_blob.has_value());
  EXPECT_TRUE(fs::exists(dir_ / "blobs" / (*annotated.corrected_label_blob + ".label")));
  EXPECT_TRUE(store.queue().empty());
  const auto m = store.metrics();
  EXPECT_EQ(m.total, 2u);
  EXPECT_EQ(m.accepted, 1u);
  EXPECT_EQ(m.annotated, 1u);
}

TEST_F(StoreTest, FitRescoresAndOrdersQueue) {
  TriageStore store(dir_, fixed_clock());
  EXPECT_EQ(code_of([&] { store.fit_model(0.05); }), ServiceErrorCode::insufficient_data);
  for (std::size_t i = 0; i < corpus_.size(); ++i) store.ingest(bytes(i));
  const auto before = store.queue();
  for (std::size_t i = 1; i < before.size(); ++i) EXPECT_LT(before[i - 1].sequence, before[i].sequence);

  const auto version = store.fit_model(0.05);
  EXPECT_EQ(version.version, 1u);
  EXPECT_EQ(version.training_items, corpus_.size());
  const auto q = store.queue();
  ASSERT_EQ(q.size(), corpus_.size());
  for (const auto& item : q) EXPECT_TRUE(item.predicted_mean_dice.has_value());
  for (std::size_t i = 1; i < q.size(); ++i) EXPECT_LE(*q[i - 1].predicted_mean_dice, *q[i].predicted_mean_dice);
  EXPECT_EQ(store.queue(3).size(), 3u);

  // Rescoring changes order only.
  std::set<std::string> ids_before, ids_after;
  for (const auto& i : before) ids_before.insert(i.item_id);
  for (const auto& i : q) ids_after.insert(i.item_id);
  EXPECT_EQ(ids_before, ids_after);

  // New ingests after a fit are scored immediately.
  GeneratorConfig cfg;
  cfg.num_images = 1;
  cfg.height = cfg.width = 16;
  cfg.seed = 77;
  Bundle extra = generate_corpus(cfg)[0].bundle;
  extra.image_id = "late";
  EXPECT_TRUE(store.ingest(encode_bundle(extra)).predicted_mean_dice.has_value());
}

TEST_F(StoreTest, ReplayReproducesSnapshot) {
  std::string snapshot;
  {
    TriageStore store(dir_, fixed_clock());
    for (std::size_t i = 0; i < corpus_.size(); ++i) store.ingest(bytes(i));
    store.decide("item-000002", DecisionAction::accept);
    store.fit_model(0.05);
    store.decide("item-000003", DecisionAction::annotate, std::vector<std::uint8_t>(256, 1));
    snapshot = store.snapshot_json();
  }
  TriageStore again(dir_, fixed_clock());
  EXPECT_EQ(again.snapshot_json(), snapshot);
}

TEST_F(StoreTest, TornTrailingLineIsDropped) {
  std::string snapshot;
  {
    TriageStore store(dir_, fixed_clock());
    store.ingest(bytes(0));
    snapshot = store.snapshot_json();
  }
  {
    std::ofstream log(dir_ / "events.jsonl", std::ios::app);
    log << "{\"type\":\"ingest\",\"item";
  }
  TriageStore again(dir_, fixed_clock());
  EXPECT_EQ(again.snapshot_json(), snapshot);
  again.ingest(bytes(1));
  TriageStore third(dir_, fixed_clock());
  EXPECT_EQ(third.queue().size(), 2u);
}

TEST_F(StoreTest, OverlaysArePng) {
  TriageStore store(dir_, fixed_clock());
  const auto item = store.ingest(bytes(0));
  for (auto kind : {OverlayKind::entropy, OverlayKind::segmentation}) {
    const auto png = store.render_overlay(item.item_id, kind, default_palette());
    ASSERT_GT(png.size(), 8u);
    EXPECT_EQ(png[1], 'P');
  }
  EXPECT_EQ(code_of([&] { overlay_from_string("heat"); }), ServiceErrorCode::bad_request);
}

TEST(Base64, RoundTrip) {
  for (std::size_t n = 0; n < 20; ++n) {
    std::vector<std::uint8_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 37 + 5);
    EXPECT_EQ(base64_decode(base64_encode(v)), v);
  }
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o'}), "Zm9v");
  EXPECT_EQ(sha256_hex(std::vector<std::uint8_t>{}),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
