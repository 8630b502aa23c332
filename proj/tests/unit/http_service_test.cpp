#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "http_server.hpp"
#include "httplib.h"
#include "json.hpp"
#include "segtriage/synth_gen.hpp"

using namespace segtriage;
using nlohmann::json;

namespace {

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("segtriage_http_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    store_ = std::make_unique<TriageStore>(dir_);
    server_ = std::make_unique<TriageHttpServer>(*store_, default_palette());
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 200 && !server_->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
    std::filesystem::remove_all(dir_);
  }

  httplib::Result post_bundle(const Bundle& b) {
    const auto bytes = encode_bundle(b);
    return client_->Post("/v1/bundles", std::string(bytes.begin(), bytes.end()), "application/octet-stream");
  }

  std::filesystem::path dir_;
  std::unique_ptr<TriageStore> store_;
  std::unique_ptr<TriageHttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(HttpTest, ErrorsUseJsonEnvelope) {
  auto res = client_->Post("/v1/bundles", "garbage", "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  const auto body = json::parse(res->body);
  EXPECT_EQ(body["code"], "validation_failed");
  EXPECT_TRUE(body.contains("message"));
  EXPECT_TRUE(body["details"].is_array());

  res = client_->Get("/v1/items/nope");
  EXPECT_EQ(res->status, 404);
  res = client_->Get("/v1/model");
  EXPECT_EQ(res->status, 404);
  res = client_->Get("/v1/queue?limit=abc");
  EXPECT_EQ(res->status, 400);
  res = client_->Post("/v1/items/nope/decision", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, BundleBodyAcceptedRegardlessOfContentType) {
  GeneratorConfig cfg;
  cfg.num_images = 1;
  const auto bytes = encode_bundle(generate_corpus(cfg)[0].bundle);
  ASSERT_GT(bytes.size(), 8192u);
  const auto res = client_->Post("/v1/bundles", std::string(bytes.begin(), bytes.end()), "application/x-www-form-urlencoded");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201) << res->body;
}

TEST_F(HttpTest, IngestDecideFitFlow) {
  GeneratorConfig cfg;
  cfg.num_images = 8;
  cfg.height = cfg.width = 16;
  const auto corpus = generate_corpus(cfg);
  for (const auto& img : corpus) {
    auto res = post_bundle(img.bundle);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 201) << res->body;
  }
  EXPECT_EQ(post_bundle(corpus[0].bundle)->status, 409);

  auto res = client_->Get("/v1/queue?limit=5");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["items"].size(), 5u);

  res = client_->Post("/v1/model/fit", R"({"alpha":0.05})", "application/json");
  ASSERT_EQ(res->status, 200) << res->body;
  res = client_->Get("/v1/model");
  ASSERT_EQ(res->status, 200);
  EXPECT_TRUE(json::parse(res->body).contains("r_squared"));

  const std::string label = base64_encode(std::vector<std::uint8_t>(256, 0));
  res = client_->Post("/v1/items/item-000001/decision",
                      json{{"action", "annotate"}, {"label_base64", label}, {"decided_by", "r"}}.dump(),
                      "application/json");
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(json::parse(res->body)["status"], "annotated");
  res = client_->Post("/v1/items/item-000001/decision", R"({"action":"accept"})", "application/json");
  EXPECT_EQ(res->status, 409);
  res = client_->Post("/v1/items/item-000002/decision", R"({"action":"maybe"})", "application/json");
  EXPECT_EQ(res->status, 400);

  res = client_->Get("/v1/items/item-000002/overlay.png?kind=segmentation");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");

  res = client_->Get("/v1/metrics");
  ASSERT_EQ(res->status, 200);
  const auto m = json::parse(res->body);
  EXPECT_EQ(m["total"], 8);
  EXPECT_EQ(m["counts"]["annotated"], 1);
  EXPECT_EQ(m["counts"]["pending"], 7);
}
