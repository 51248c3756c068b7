#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/prediction.hpp"
#include "freshcast/core/seed.hpp"
#include "freshcast/image/image.hpp"
#include "freshcast/nn/backbones.hpp"
#include "freshcast/nn/checkpoint.hpp"

namespace freshcast::nn {

enum class FusionMode { single, fusion };

struct FusionModelSpec {
  FusionMode mode = FusionMode::single;
  BackboneId classification_backbone = BackboneId::cnn_light;
  std::optional<BackboneId> regression_backbone;
  Variant variant = Variant::tiny;
  int vegetable_classes = 8;
  int spoilage_classes = 3;
  bool hidden_relu = false;  // one dense ReLU layer between fused features and heads
  int hidden_units = 0;      // 0: 32 (tiny) or 256 (full)
  double dropout = 0.0;
  bool pretrained = false;
  std::filesystem::path weights_dir = "weights";
  bool freeze_pretrained = true;
  std::uint64_t seed = 0;

  int resolved_hidden_units() const {
    if (hidden_units > 0) return hidden_units;
    return variant == Variant::tiny ? 32 : 256;
  }

  void validate() const {
    if (mode == FusionMode::fusion && !regression_backbone)
      throw SpecError("fusion mode requires a regression_backbone");
    if (mode == FusionMode::single && regression_backbone)
      throw SpecError("single mode must not name a regression_backbone");
    if (vegetable_classes < 2) throw SpecError("vegetable head needs at least 2 classes");
    if (spoilage_classes < 2) throw SpecError("spoilage head needs at least 2 classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw SpecError("dropout must be in [0,1)");
    if (hidden_units < 0) throw SpecError("hidden_units must be >= 0");
  }
};

inline json to_json(const FusionModelSpec& s) {
  json j;
  j["mode"] = s.mode == FusionMode::single ? "single" : "fusion";
  j["classification_backbone"] = backbone_name(s.classification_backbone);
  j["regression_backbone"] = s.regression_backbone ? json(backbone_name(*s.regression_backbone)) : json(nullptr);
  j["fusion"] = "concat";
  j["variant"] = variant_name(s.variant);
  j["head_sizes"] = {{"vegetable", s.vegetable_classes}, {"spoilage", s.spoilage_classes}, {"day", 1}};
  j["head_activations"] = {"softmax", "softmax", "linear"};
  j["hidden_relu"] = s.hidden_relu;
  j["hidden_units"] = s.resolved_hidden_units();
  j["dropout"] = s.dropout;
  j["pretrained"] = s.pretrained;
  j["weights_dir"] = s.weights_dir.string();
  j["freeze_pretrained"] = s.freeze_pretrained;
  j["seed"] = s.seed;
  return j;
}

inline FusionModelSpec fusion_spec_from_json(const json& j) {
  FusionModelSpec s;
  try {
    const auto mode = j.value("mode", std::string("single"));
    if (mode == "single") s.mode = FusionMode::single;
    else if (mode == "fusion") s.mode = FusionMode::fusion;
    else throw SpecError("unknown mode '" + mode + "'");
    s.classification_backbone = backbone_from_name(j.at("classification_backbone").get<std::string>());
    if (j.contains("regression_backbone") && !j["regression_backbone"].is_null())
      s.regression_backbone = backbone_from_name(j["regression_backbone"].get<std::string>());
    if (j.value("fusion", std::string("concat")) != "concat") throw SpecError("only concat fusion is supported");
    s.variant = variant_from_name(j.value("variant", std::string("tiny")));
    if (j.contains("head_sizes")) {
      const auto& h = j["head_sizes"];
      s.vegetable_classes = h.value("vegetable", 8);
      s.spoilage_classes = h.value("spoilage", 3);
      if (h.value("day", 1) != 1) throw SpecError("day head must have size 1");
    }
    s.hidden_relu = j.value("hidden_relu", false);
    s.hidden_units = j.value("hidden_units", 0);
    s.dropout = j.value("dropout", 0.0);
    s.pretrained = j.value("pretrained", false);
    s.weights_dir = j.value("weights_dir", std::string("weights"));
    s.freeze_pretrained = j.value("freeze_pretrained", true);
    s.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed model spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline std::filesystem::path pretrained_weights_path(const std::filesystem::path& dir, BackboneId id, Variant v) {
  return dir / (backbone_name(id) + "-" + variant_name(v) + ".fcw");
}

template <std::floating_point T>
std::shared_ptr<Backbone<T>> build_backbone(BackboneId id, Variant v, std::mt19937_64& rng) {
  switch (id) {
    case BackboneId::cnn_light: return std::make_shared<CnnLight<T>>(v, rng);
    case BackboneId::cnn_deep_vgg: return std::make_shared<CnnDeepVgg<T>>(v, rng);
    case BackboneId::cnn_deep_res: return std::make_shared<CnnDeepRes<T>>(v, rng);
    case BackboneId::capsule: return std::make_shared<CapsuleNet<T>>(v, rng);
    case BackboneId::vit_distilled: return std::make_shared<VitDistilled<T>>(v, rng);
    case BackboneId::cnn_light_lstm: return std::make_shared<CnnLightLstm<T>>(v, rng);
  }
  throw RegistryError("unregistered backbone");
}

// With `pretrained`, weights come from <weights_dir>/<backbone>-<variant>.fcw.
template <std::floating_point T>
std::shared_ptr<Backbone<T>> build_backbone(BackboneId id, Variant v, bool pretrained, const std::filesystem::path& weights_dir,
                                            std::mt19937_64& rng) {
  auto b = build_backbone<T>(id, v, rng);
  if (pretrained) {
    const auto path = pretrained_weights_path(weights_dir, id, v);
    if (!std::filesystem::exists(path))
      throw WeightsUnavailableError("pretrained weights for " + backbone_name(id) + "/" + variant_name(v) + " not found at " +
                                    path.string());
    load_module(*b, path);
    b->mark_pretrained();
  }
  return b;
}

// Batch of preprocessed images -> [N,3,S,S].
template <std::floating_point T>
Tensor<T> images_to_tensor(std::span<const PreprocessedImage> images, int expected_size) {
  if (images.empty()) throw ShapeError("empty image batch");
  const auto n = static_cast<std::int64_t>(images.size());
  const std::int64_t s = expected_size;
  std::vector<T> data(static_cast<std::size_t>(n * 3 * s * s));
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& img = images[static_cast<std::size_t>(b)];
    if (img.size != expected_size || img.pixels.size() != static_cast<std::size_t>(s * s * 3))
      throw ShapeError("image " + img.source.string() + " is " + std::to_string(img.size) + "px, model expects " +
                       std::to_string(expected_size) + "px");
    for (std::int64_t y = 0; y < s; ++y)
      for (std::int64_t x = 0; x < s; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          data[static_cast<std::size_t>(((b * 3 + c) * s + y) * s + x)] =
              static_cast<T>(img.pixels[static_cast<std::size_t>((y * s + x) * 3 + c)]);
  }
  return Tensor<T>::from({n, 3, s, s}, std::move(data));
}

template <std::floating_point T>
struct HeadOutputs {
  Tensor<T> vegetable_logits;  // [N, V]
  Tensor<T> spoilage_logits;   // [N, 3]
  Tensor<T> day;               // [N, 1]
};

// One or two backbones, concatenated features (classification branch first),
// optional hidden ReLU layer, dropout, then three heads.
// Evaluation-mode forward does not mutate state, so concurrent predict() calls are safe.
template <std::floating_point T>
class MultiHeadModel : public Module<T> {
 public:
  static constexpr bool kConcurrentInference = true;

  explicit MultiHeadModel(FusionModelSpec spec) : spec_(std::move(spec)), dropout_rng_(derive_seed(spec_.seed, "dropout")) {
    spec_.validate();
    const auto cls_id = spec_.classification_backbone;
    std::mt19937_64 cls_rng(derive_seed(spec_.seed, "backbone:" + backbone_name(cls_id)));
    classification_ = this->register_module(
        "classification", build_backbone<T>(cls_id, spec_.variant, spec_.pretrained, spec_.weights_dir, cls_rng));
    std::int64_t fused = probe_dim(*classification_);
    if (spec_.regression_backbone) {
      const auto reg_id = *spec_.regression_backbone;
      const std::string label = "backbone:" + backbone_name(reg_id) + (reg_id == cls_id ? ":regression" : "");
      std::mt19937_64 reg_rng(derive_seed(spec_.seed, label));
      regression_ = this->register_module(
          "regression", build_backbone<T>(reg_id, spec_.variant, spec_.pretrained, spec_.weights_dir, reg_rng));
      if (regression_->info().input_size != classification_->info().input_size)
        throw ConstructionError("branch input sizes differ: " + std::to_string(classification_->info().input_size) +
                                " vs " + std::to_string(regression_->info().input_size));
      fused += probe_dim(*regression_);
    }
    fused_dim_ = fused;

    std::mt19937_64 head_rng(derive_seed(spec_.seed, "heads"));
    std::int64_t head_in = fused_dim_;
    if (spec_.hidden_relu) {
      hidden_ = this->register_module("hidden", std::make_shared<Linear<T>>(fused_dim_, spec_.resolved_hidden_units(), head_rng, true));
      head_in = spec_.resolved_hidden_units();
    }
    vegetable_head_ = this->register_module("vegetable_head", std::make_shared<Linear<T>>(head_in, spec_.vegetable_classes, head_rng));
    spoilage_head_ = this->register_module("spoilage_head", std::make_shared<Linear<T>>(head_in, spec_.spoilage_classes, head_rng));
    day_head_ = this->register_module("day_head", std::make_shared<Linear<T>>(head_in, 1, head_rng));

    if (spec_.freeze_pretrained) {
      if (classification_->pretrained()) classification_->set_trainable(false);
      if (regression_ && regression_->pretrained()) regression_->set_trainable(false);
    }
  }

  const FusionModelSpec& spec() const { return spec_; }
  int input_size() const { return classification_->info().input_size; }
  std::int64_t fused_dim() const { return fused_dim_; }
  Backbone<T>& classification_branch() { return *classification_; }
  Backbone<T>* regression_branch() { return regression_.get(); }

  // Multiplier applied to the day head output (training on days / scale).
  double day_scale() const { return day_scale_; }
  void set_day_scale(double s) { day_scale_ = s; }

  void unfreeze() { this->set_trainable(true); }
  void set_dropout(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw SpecError("dropout must be in [0,1)");
    spec_.dropout = p;
  }

  Tensor<T> fused_features(const Tensor<T>& images) {
    check_input(images);
    auto f = classification_->forward(images);
    if (regression_) {
      auto g = regression_->forward(images);
      if (f.dim(1) + g.dim(1) != fused_dim_)
        throw ConstructionError("fused width " + std::to_string(f.dim(1)) + "+" + std::to_string(g.dim(1)) +
                                " does not match " + std::to_string(fused_dim_));
      f = concat<T>({f, g}, 1);
    }
    return f;
  }

  HeadOutputs<T> forward(const Tensor<T>& images) {
    auto h = fused_features(images);
    if (hidden_) h = relu(hidden_->forward(h));
    if (this->training() && spec_.dropout > 0.0) h = dropout(h, spec_.dropout, dropout_rng_);
    return {vegetable_head_->forward(h), spoilage_head_->forward(h), day_head_->forward(h)};
  }

  std::vector<PredictionTriple> predict(std::span<const PreprocessedImage> images, std::size_t batch = 16) {
    if (this->training()) throw ConfigError("predict() requires evaluation mode");
    NoGradGuard guard;
    std::vector<PredictionTriple> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch) {
      const auto chunk = images.subspan(start, std::min(batch, images.size() - start));
      auto o = forward(images_to_tensor<T>(chunk, input_size()));
      auto vp = softmax(o.vegetable_logits, -1);
      auto sp = softmax(o.spoilage_logits, -1);
      const auto nv = static_cast<std::size_t>(spec_.vegetable_classes);
      const auto ns = static_cast<std::size_t>(spec_.spoilage_classes);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        PredictionTriple t;
        t.vegetable_probs.assign(vp.values().begin() + static_cast<std::ptrdiff_t>(i * nv),
                                 vp.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * nv));
        t.spoilage_probs.assign(sp.values().begin() + static_cast<std::ptrdiff_t>(i * ns),
                                sp.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * ns));
        t.day_estimate = static_cast<double>(o.day.values()[i]) * day_scale_;
        out.push_back(std::move(t));
      }
    }
    return out;
  }

  Predictor as_predictor(std::size_t batch = 16) {
    return [this, batch](std::span<const PreprocessedImage> imgs) { return predict(imgs, batch); };
  }

 private:
  std::int64_t probe_dim(Backbone<T>& b) {
    NoGradGuard guard;
    const std::int64_t s = b.info().input_size;
    auto y = b.forward(Tensor<T>::full({1, 3, s, s}, T(0.5)));
    if (y.rank() != 2 || y.dim(1) != b.info().feature_dim)
      throw ConstructionError(backbone_name(b.info().id) + " produced " + to_string(y.shape()) + ", registry declares " +
                              std::to_string(b.info().feature_dim));
    return y.dim(1);
  }

  void check_input(const Tensor<T>& images) const {
    const std::int64_t s = input_size();
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != s || images.dim(3) != s)
      throw ShapeError("model expects [N,3," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                       to_string(images.shape()));
  }

  FusionModelSpec spec_;
  std::mt19937_64 dropout_rng_;
  std::shared_ptr<Backbone<T>> classification_, regression_;
  std::shared_ptr<Linear<T>> hidden_, vegetable_head_, spoilage_head_, day_head_;
  std::int64_t fused_dim_ = 0;
  double day_scale_ = 1.0;
};

// ---------------------------------------------------------------- configurations A-J

struct ModelPreset {
  char key;
  std::string model_id;
  std::string display_name;
  FusionModelSpec spec;
  double learning_rate;
  int epochs;
};

inline std::vector<ModelPreset> model_presets(Variant v = Variant::tiny) {
  using B = BackboneId;
  auto single = [v](B id, bool hidden, double dropout) {
    FusionModelSpec s;
    s.classification_backbone = id;
    s.variant = v;
    s.hidden_relu = hidden;
    s.dropout = dropout;
    return s;
  };
  auto fusion = [v](B reg, bool hidden, double dropout) {
    FusionModelSpec s;
    s.mode = FusionMode::fusion;
    s.classification_backbone = B::cnn_light;
    s.regression_backbone = reg;
    s.variant = v;
    s.hidden_relu = hidden;
    s.dropout = dropout;
    return s;
  };
  return {
      {'A', "mobilenetv2", "MobileNetV2", single(B::cnn_light, false, 0.3), 1e-4, 25},
      {'B', "mobilenetv2_lstm", "MobileNetV2+LSTM(Fusion)", fusion(B::cnn_light_lstm, false, 0.3), 1e-4, 25},
      {'C', "vgg16", "VGG16", single(B::cnn_deep_vgg, true, 0.3), 1e-4, 10},
      {'D', "resnet50", "ResNet50", single(B::cnn_deep_res, true, 0.3), 1e-4, 10},
      {'E', "mobilenetv2_vgg16", "MobileNetV2+VGG16(Fusion)", fusion(B::cnn_deep_vgg, true, 0.0), 1e-4, 15},
      {'F', "mobilenetv2_resnet50", "MobileNetV2+ResNet50(Fusion)", fusion(B::cnn_deep_res, true, 0.3), 1e-4, 10},
      {'G', "capsule", "Capsule Network", single(B::capsule, true, 0.3), 1e-3, 10},
      {'H', "mobilenetv2_capsule", "MobileNetV2+Capsule(Fusion)", fusion(B::capsule, true, 0.3), 1e-3, 10},
      {'I', "deit", "DeiT Transformer", single(B::vit_distilled, true, 0.0), 1e-4, 5},
      {'J', "mobilenetv2_deit", "MobileNetV2+DeiT Transformer(Fusion)", fusion(B::vit_distilled, true, 0.0), 1e-4, 5},
  };
}

inline ModelPreset find_preset(const std::string& key_or_id, Variant v = Variant::tiny) {
  for (auto& p : model_presets(v))
    if (p.model_id == key_or_id || (key_or_id.size() == 1 && std::toupper(key_or_id[0]) == p.key)) return p;
  throw RegistryError("unknown model preset '" + key_or_id + "'");
}

}  // namespace freshcast::nn
