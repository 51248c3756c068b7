#pragma once

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/prediction.hpp"
#include "freshcast/dataset/sample.hpp"
#include "freshcast/lime/overlay.hpp"
#include "freshcast/service/shelf_life.hpp"
#include "freshcast/train/model_store.hpp"

namespace freshcast::service {

inline constexpr const char* kSchemaVersion = "1";

// What the service needs from a model; any Predictor works (trained model, oracle, stub).
struct ServiceModel {
  std::string model_id;
  int input_size = 32;
  std::vector<std::string> vegetables;
  std::vector<std::string> spoilage_labels{"fresh", "slightly_spoiled", "completely_spoiled"};
  std::map<std::string, int> max_day_per_vegetable;
  Predictor predictor;
  std::shared_ptr<void> owner;  // keeps the backing model alive
};

inline std::shared_ptr<ServiceModel> service_model_from_dir(const std::filesystem::path& dir) {
  auto loaded = train::load_model<float>(dir);
  auto m = std::make_shared<ServiceModel>();
  m->model_id = loaded.record.model_id;
  m->input_size = loaded.model->input_size();
  m->vegetables = loaded.record.vegetables;
  m->max_day_per_vegetable = loaded.record.max_day_per_vegetable;
  m->predictor = loaded.model->as_predictor();
  m->owner = loaded.model;
  return m;
}

struct ServiceConfig {
  std::string cors_origin = "*";
  int explain_segments = 50;
  std::size_t explain_samples = 1000;
  std::uint64_t explain_seed = 0;
  int explain_top_k = 5;
  int explain_timeout_ms = 20000;
};

struct HttpError : Error {
  int status;
  json details;
  HttpError(int s, const std::string& msg, json d = nullptr) : Error(msg), status(s), details(std::move(d)) {}
};

class InferenceService {
 public:
  explicit InferenceService(ServiceConfig config = {}) : config_(std::move(config)), started_(std::chrono::steady_clock::now()) {
    routes();
  }
  ~InferenceService() { stop(); }

  // Installs a model after a probe forward pass succeeds.
  void install(std::shared_ptr<const ServiceModel> model) {
    if (auto problem = self_test(*model)) throw ConfigError("model self-test failed: " + *problem);
    std::lock_guard lock(mutex_);
    model_ = std::move(model);
  }

  bool loaded() const { return current() != nullptr; }

  int bind_to_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  void stop() {
    if (server_.is_running()) server_.stop();
  }

  // Exposed for direct (socket-free) use and tests.
  json predict(const std::vector<std::uint8_t>& body) const {
    const auto model = require_model();
    const auto t0 = std::chrono::steady_clock::now();
    const auto img = decode_request_image(body, model->input_size);
    const auto out = model->predictor(std::span<const PreprocessedImage>(&img, 1));
    if (out.size() != 1) throw HttpError(500, "predictor returned no output");
    auto response = prediction_json(*model, out[0]);
    response["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return response;
  }

  json explain(const std::vector<std::uint8_t>& body, const std::map<std::string, std::string>& fields) const {
    const auto model = require_model();
    const auto img = decode_request_image(body, model->input_size);
    lime::ExplainParams p;
    p.n_segments = field_or(fields, "segments", config_.explain_segments);
    p.n_perturbations = static_cast<std::size_t>(field_or(fields, "samples", static_cast<long>(config_.explain_samples)));
    p.seed = static_cast<std::uint64_t>(field_or(fields, "seed", static_cast<long>(config_.explain_seed)));
    const int timeout_ms = field_or(fields, "timeout_ms", config_.explain_timeout_ms);
    const auto t0 = std::chrono::steady_clock::now();
    p.deadline = t0 + std::chrono::milliseconds(timeout_ms);
    if (p.n_segments < 1) throw HttpError(400, "segments must be >= 1");

    lime::Explanation ex;
    try {
      ex = lime::explain(model->predictor, img, p);
    } catch (const TimeoutError& e) {
      throw HttpError(504, e.what(), {{"segments", p.n_segments}, {"samples", p.n_perturbations}, {"timeout_ms", timeout_ms}});
    } catch (const SamplingError& e) {
      throw HttpError(400, e.what());
    }
    int top_k = field_or(fields, "top_k", config_.explain_top_k);
    top_k = std::clamp(top_k, 0, ex.segments.n_segments);
    const auto base = to_rgb8(img);
    json overlays = json::object();
    for (auto h : lime::kHeads) {
      const auto png = encode_png(lime::render_overlay(base, ex, h, top_k));
      overlays[lime::head_name(h)] =
          "data:image/png;base64," + httplib::detail::base64_encode(std::string(png.begin(), png.end()));
    }
    json response = {{"schema_version", kSchemaVersion},
                     {"model_id", model->model_id},
                     {"params",
                      {{"segments", p.n_segments},
                       {"samples", p.n_perturbations},
                       {"seed", p.seed},
                       {"top_k", top_k},
                       {"timeout_ms", timeout_ms},
                       {"kernel_width", p.kernel_width},
                       {"ridge_lambda", p.ridge_lambda}}},
                     {"explanation", lime::to_json(ex)},
                     {"overlays", overlays},
                     {"warnings", ex.warnings},
                     {"latency_ms", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()}};
    response["targets"] = {{"vegetable", model->vegetables.at(static_cast<std::size_t>(ex.vegetable_class))},
                           {"spoilage", model->spoilage_labels.at(static_cast<std::size_t>(ex.spoilage_class))},
                           {"day_estimate", ex.day_estimate}};
    return response;
  }

  // Returns (status, body).
  std::pair<int, json> health() const {
    const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const auto model = current();
    if (!model) return {503, {{"schema_version", kSchemaVersion}, {"status", "loading"}, {"model_id", nullptr}, {"uptime", uptime}}};
    if (auto problem = self_test(*model))
      return {503, {{"schema_version", kSchemaVersion}, {"status", "unhealthy"}, {"model_id", model->model_id}, {"uptime", uptime}, {"error", *problem}}};
    return {200, {{"schema_version", kSchemaVersion}, {"status", "ok"}, {"model_id", model->model_id}, {"uptime", uptime}}};
  }

  json prediction_json(const ServiceModel& model, const PredictionTriple& t) const {
    if (t.vegetable_probs.size() != model.vegetables.size() || t.spoilage_probs.size() != model.spoilage_labels.size())
      throw HttpError(500, "prediction width does not match model labels");
    json veg_probs = json::object(), spoil_probs = json::object();
    for (std::size_t i = 0; i < t.vegetable_probs.size(); ++i) veg_probs[model.vegetables[i]] = t.vegetable_probs[i];
    for (std::size_t i = 0; i < t.spoilage_probs.size(); ++i) spoil_probs[model.spoilage_labels[i]] = t.spoilage_probs[i];
    const auto& veg = model.vegetables[argmax(t.vegetable_probs)];
    return {{"schema_version", kSchemaVersion},
            {"model_id", model.model_id},
            {"vegetable", {{"label", veg}, {"probs", veg_probs}}},
            {"spoilage", {{"label", model.spoilage_labels[argmax(t.spoilage_probs)]}, {"probs", spoil_probs}}},
            {"day_estimate", t.day_estimate},
            {"remaining_shelf_life_days", remaining_shelf_life(t.day_estimate, veg, model.max_day_per_vegetable)}};
  }

 private:
  std::shared_ptr<const ServiceModel> current() const {
    std::lock_guard lock(mutex_);
    return model_;
  }

  std::shared_ptr<const ServiceModel> require_model() const {
    auto m = current();
    if (!m) throw HttpError(503, "no model loaded");
    return m;
  }

  static PreprocessedImage decode_request_image(const std::vector<std::uint8_t>& body, int size) {
    if (body.empty()) throw HttpError(400, "missing multipart field 'image'");
    try {
      return preprocess(decode_image(body), size);
    } catch (const ImageError& e) {
      throw HttpError(400, std::string("image could not be decoded: ") + e.what());
    }
  }

  template <class V>
  static V field_or(const std::map<std::string, std::string>& fields, const std::string& key, V fallback) {
    auto it = fields.find(key);
    if (it == fields.end() || it->second.empty()) return fallback;
    try {
      std::size_t used = 0;
      const long v = std::stol(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return static_cast<V>(v);
    } catch (const std::exception&) {
      throw HttpError(400, "field '" + key + "' must be an integer");
    }
  }

  std::optional<std::string> self_test(const ServiceModel& model) const {
    try {
      PreprocessedImage probe;
      probe.size = model.input_size;
      probe.pixels.assign(static_cast<std::size_t>(model.input_size) * static_cast<std::size_t>(model.input_size) * 3, 0.5f);
      const auto out = model.predictor(std::span<const PreprocessedImage>(&probe, 1));
      if (out.size() != 1) return "probe returned " + std::to_string(out.size()) + " predictions";
      if (!probabilities_valid(out[0].vegetable_probs) || !probabilities_valid(out[0].spoilage_probs))
        return "probe probabilities are not normalized";
      if (out[0].vegetable_probs.size() != model.vegetables.size()) return "vegetable head width differs from label list";
      if (!std::isfinite(out[0].day_estimate)) return "probe day estimate is not finite";
      return std::nullopt;
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
  }

  static std::map<std::string, std::string> form_fields(const httplib::Request& req) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : req.params) out[k] = v;
    for (const auto& [k, f] : req.files)
      if (k != "image") out[k] = f.content;
    return out;
  }

  static std::vector<std::uint8_t> image_bytes(const httplib::Request& req) {
    if (!req.has_file("image")) return {};
    const auto content = req.get_file_value("image").content;
    return {content.begin(), content.end()};
  }

  void send(httplib::Response& res, int status, const json& body) const {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  void guarded(httplib::Response& res, F&& f) const {
    try {
      send(res, 200, f());
    } catch (const HttpError& e) {
      json body = {{"schema_version", kSchemaVersion}, {"error", e.what()}};
      if (!e.details.is_null()) body["diagnostics"] = e.details;
      send(res, e.status, body);
    } catch (const Error& e) {
      send(res, 422, {{"schema_version", kSchemaVersion}, {"error", e.what()}});
    } catch (const std::exception& e) {
      send(res, 500, {{"schema_version", kSchemaVersion}, {"error", e.what()}});
    }
  }

  void routes() {
    server_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!config_.cors_origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", config_.cors_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      }
    });
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return predict(image_bytes(req)); });
    });
    server_.Post("/explain", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return explain(image_bytes(req), form_fields(req)); });
    });
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      auto [status, body] = health();
      send(res, status, body);
    });
  }

  ServiceConfig config_;
  std::chrono::steady_clock::time_point started_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceModel> model_;
  httplib::Server server_;
};

}  // namespace freshcast::service
