#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "freshcast/nn/model.hpp"
#include "freshcast/service/server.hpp"
#include "synthetic.hpp"

using namespace freshcast;
using namespace freshcast::service;

namespace {

std::vector<std::string> reference_names() { return {kReferenceVegetables.begin(), kReferenceVegetables.end()}; }

// Always answers "tomato, slightly spoiled, day 7.2".
std::shared_ptr<ServiceModel> stub_model() {
  auto m = std::make_shared<ServiceModel>();
  m->model_id = "stub";
  m->input_size = 32;
  m->vegetables = reference_names();
  for (const auto& v : m->vegetables) m->max_day_per_vegetable[v] = 10;
  m->predictor = [](std::span<const PreprocessedImage> imgs) {
    std::vector<double> veg(8, 0.05);
    veg[2] = 0.65;
    return std::vector<PredictionTriple>(imgs.size(), PredictionTriple{veg, {0.2, 0.7, 0.1}, 7.2});
  };
  return m;
}

// Untrained tiny network; responses depend on the image.
std::shared_ptr<ServiceModel> network_model() {
  auto net = std::make_shared<nn::MultiHeadModel<float>>(nn::find_preset("A").spec);
  net->set_training(false);
  auto m = stub_model();
  m->model_id = "mobilenetv2";
  m->predictor = net->as_predictor();
  m->owner = net;
  return m;
}

std::string png_bytes(int vegetable = 2, int size = 48) {
  const auto v = encode_png(fctest::synthetic_image(vegetable, 2, 1, 0, size));
  return {v.begin(), v.end()};
}

class LiveServer : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = svc_.bind_to_any_port();
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { svc_.listen_after_bind(); });
    svc_.wait_until_ready();
  }
  void TearDown() override {
    svc_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  httplib::Result post(const std::string& path, const std::string& image, httplib::MultipartFormDataItems extra = {}) const {
    extra.push_back({"image", image, "upload.png", "image/png"});
    return client().Post(path, extra);
  }

  InferenceService svc_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(ShelfLife, ClampsAtZero) {
  const std::map<std::string, int> max_day{{"tomato", 10}};
  EXPECT_NEAR(remaining_shelf_life(7.2, "tomato", max_day), 2.8, 1e-12);
  EXPECT_EQ(remaining_shelf_life(12.5, "tomato", max_day), 0.0);
  EXPECT_EQ(remaining_shelf_life(-1.0, "tomato", max_day), 11.0);
  EXPECT_THROW(remaining_shelf_life(1.0, "kiwi", max_day), LabelError);
  EXPECT_THROW(remaining_shelf_life(std::nan(""), "tomato", max_day), LabelError);
}

TEST(Service, DirectCallsWithoutSocket) {
  InferenceService svc;
  const auto bytes = png_bytes();
  const std::vector<std::uint8_t> body(bytes.begin(), bytes.end());
  try {
    svc.predict(body);
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status, 503);
  }
  svc.install(stub_model());
  const auto j = svc.predict(body);
  EXPECT_EQ(j["vegetable"]["label"], "tomato");
  EXPECT_NEAR(j["remaining_shelf_life_days"].get<double>(), 2.8, 1e-12);
  try {
    svc.predict({1, 2, 3});
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status, 400);
  }
}

TEST(Service, InstallRunsSelfTest) {
  InferenceService svc;
  auto broken = stub_model();
  broken->predictor = [](std::span<const PreprocessedImage> imgs) {
    return std::vector<PredictionTriple>(imgs.size(), PredictionTriple{std::vector<double>(8, 0.5), {0.2, 0.7, 0.1}, 1.0});
  };
  EXPECT_THROW(svc.install(broken), ConfigError);
  EXPECT_FALSE(svc.loaded());
}

TEST_F(LiveServer, HealthReflectsLoadState) {
  auto r = client().Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  auto j = json::parse(r->body);
  EXPECT_EQ(j["status"], "loading");
  const double up1 = j["uptime"].get<double>();

  svc_.install(stub_model());
  r = client().Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  j = json::parse(r->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["model_id"], "stub");
  EXPECT_EQ(j["schema_version"], "1");
  EXPECT_GE(j["uptime"].get<double>(), up1);
}

TEST_F(LiveServer, PredictSchema) {
  auto r = post("/predict", png_bytes());
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);

  svc_.install(stub_model());
  r = post("/predict", png_bytes());
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  for (const char* k : {"schema_version", "model_id", "vegetable", "spoilage", "day_estimate", "remaining_shelf_life_days", "latency_ms"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["vegetable"]["label"], "tomato");
  EXPECT_EQ(j["spoilage"]["label"], "slightly_spoiled");
  EXPECT_EQ(j["day_estimate"], 7.2);
  EXPECT_NEAR(j["remaining_shelf_life_days"].get<double>(), 2.8, 1e-12);
  double veg = 0, spoil = 0;
  for (const auto& [k, v] : j["vegetable"]["probs"].items()) veg += v.get<double>();
  for (const auto& [k, v] : j["spoilage"]["probs"].items()) spoil += v.get<double>();
  EXPECT_NEAR(veg, 1.0, 1e-6);
  EXPECT_NEAR(spoil, 1.0, 1e-6);
  EXPECT_EQ(j["vegetable"]["probs"].size(), 8u);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(LiveServer, BadRequests) {
  svc_.install(stub_model());
  auto r = post("/predict", "definitely not an image");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_TRUE(json::parse(r->body).contains("error"));
  r = client().Post("/predict", httplib::MultipartFormDataItems{});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  r = post("/explain", png_bytes(), {{"segments", "many", "", ""}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  r = post("/explain", png_bytes(), {{"segments", "20", "", ""}, {"samples", "5", "", ""}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  r = client().Options("/predict");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(LiveServer, ExplainDefaultsAndDeterminism) {
  svc_.install(network_model());
  auto r = post("/explain", png_bytes());
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["params"]["segments"], 50);
  EXPECT_EQ(j["params"]["samples"], 1000);
  EXPECT_EQ(j["params"]["seed"], 0);
  for (const char* h : {"vegetable", "spoilage", "day"}) {
    EXPECT_EQ(j["explanation"]["heads"][h]["weights"].size(), j["explanation"]["n_segments"].get<std::size_t>());
    EXPECT_EQ(j["overlays"][h].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
  }
  const httplib::MultipartFormDataItems fields{{"segments", "10", "", ""}, {"samples", "100", "", ""}, {"seed", "3", "", ""}};
  const auto a = json::parse(post("/explain", png_bytes(), fields)->body);
  const auto b = json::parse(post("/explain", png_bytes(), fields)->body);
  EXPECT_EQ(a["explanation"], b["explanation"]);
  EXPECT_EQ(a["overlays"], b["overlays"]);
  EXPECT_EQ(a["params"]["seed"], 3);
}

TEST_F(LiveServer, ExplainConstantImageWarnsAndTimeoutIs504) {
  svc_.install(stub_model());
  RgbImage flat;
  flat.height = flat.width = 32;
  flat.pixels.assign(32 * 32 * 3, 128);
  const auto png = encode_png(flat);
  auto r = post("/explain", std::string(png.begin(), png.end()));
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["explanation"]["n_segments"], 1);
  EXPECT_FALSE(j["warnings"].empty());

  r = post("/explain", png_bytes(), {{"timeout_ms", "0", "", ""}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 504);
  EXPECT_TRUE(json::parse(r->body).contains("diagnostics"));
}

TEST_F(LiveServer, ConcurrentPredictionsMatchSerialOnes) {
  svc_.install(network_model());
  std::vector<std::string> images;
  std::vector<json> serial;
  for (int v = 0; v < 4; ++v) {
    images.push_back(png_bytes(v));
    serial.push_back(json::parse(post("/predict", images.back())->body));
  }
  std::vector<std::future<json>> futures;
  for (int k = 0; k < 16; ++k)
    futures.push_back(std::async(std::launch::async, [&, k] { return json::parse(post("/predict", images[static_cast<std::size_t>(k % 4)])->body); }));
  for (int k = 0; k < 16; ++k) {
    auto j = futures[static_cast<std::size_t>(k)].get();
    const auto& want = serial[static_cast<std::size_t>(k % 4)];
    EXPECT_EQ(j["vegetable"], want["vegetable"]);
    EXPECT_EQ(j["day_estimate"], want["day_estimate"]);
  }
}
