#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/seed.hpp"
#include "freshcast/dataset/loader.hpp"
#include "freshcast/eval/evaluate.hpp"
#include "freshcast/nn/model.hpp"
#include "freshcast/train/adam.hpp"
#include "freshcast/train/loss.hpp"

namespace freshcast::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  std::string optimizer = "adam";
  std::optional<double> dropout;  // overrides the model spec when set
  LossWeights loss_weights{1, 1, 1};
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool normalize_day = false;  // regress day / max_train_day instead of raw days
  bool unfreeze = false;       // also train pretrained backbones
  bool augment_flip = false;   // random horizontal flips
  bool evaluate_val = true;
  unsigned workers = 1;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
    if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
    for (double w : loss_weights)
      if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must all be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"optimizer", c.optimizer},
          {"dropout", c.dropout ? json(*c.dropout) : json(nullptr)},
          {"loss_weights", c.loss_weights},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"normalize_day", c.normalize_day},
          {"unfreeze", c.unfreeze},
          {"augment_flip", c.augment_flip},
          {"evaluate_val", c.evaluate_val},
          {"workers", c.workers}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.optimizer = j.value("optimizer", c.optimizer);
    if (j.contains("dropout")) c.dropout = j["dropout"].is_null() ? std::nullopt : std::optional<double>(j["dropout"].get<double>());
    if (j.contains("loss_weights")) c.loss_weights = j["loss_weights"].get<LossWeights>();
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.normalize_day = j.value("normalize_day", c.normalize_day);
    c.unfreeze = j.value("unfreeze", c.unfreeze);
    c.augment_flip = j.value("augment_flip", c.augment_flip);
    c.evaluate_val = j.value("evaluate_val", c.evaluate_val);
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

struct EpochRecord {
  int epoch = 0;
  double total = 0.0;
  std::array<double, 3> components{};  // vegetable CE, spoilage CE, day MSE (mean over train batches)
  std::optional<eval::MetricsReport> validation;
};

using TrainHistory = std::vector<EpochRecord>;

inline json to_json(const TrainHistory& h) {
  json arr = json::array();
  for (const auto& e : h)
    arr.push_back({{"epoch", e.epoch},
                   {"total_loss", e.total},
                   {"vegetable_ce", e.components[0]},
                   {"spoilage_ce", e.components[1]},
                   {"day_mse", e.components[2]},
                   {"validation", e.validation ? eval::to_json(*e.validation) : json(nullptr)}});
  return arr;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline PreprocessedImage hflip(const PreprocessedImage& img) {
  PreprocessedImage out = img;
  const auto s = static_cast<std::size_t>(img.size);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.pixels[(y * s + x) * 3 + c] = img.pixels[(y * s + (s - 1 - x)) * 3 + c];
  return out;
}

}  // namespace detail

// Runs exactly config.epochs epochs over `train_data`; the val report uses `val_data` when non-empty.
template <std::floating_point T>
TrainHistory train(nn::MultiHeadModel<T>& model, const std::vector<LabeledImage>& train_data,
                   const std::vector<LabeledImage>& val_data, const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_data.empty()) throw ConfigError("training split is empty");
  if (config.dropout) model.set_dropout(*config.dropout);
  if (config.unfreeze) model.unfreeze();

  double day_scale = 1.0;
  if (config.normalize_day) {
    for (const auto& d : train_data) day_scale = std::max(day_scale, d.day);
  }
  model.set_day_scale(day_scale);

  Adam<T> adam(model.parameters(), config.learning_rate);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::mt19937_64 augment_rng(derive_seed(config.seed, "augment"));
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  eval::EvaluationOptions eval_opt;
  eval_opt.vegetable_classes = model.spec().vegetable_classes;
  eval_opt.spoilage_classes = model.spec().spoilage_classes;

  TrainHistory history;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    model.set_training(true);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    eval::CompensatedSum total, c0, c1, c2;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const auto end = std::min(order.size(), start + bs);
      std::vector<PreprocessedImage> images;
      LabelBatch labels;
      for (std::size_t k = start; k < end; ++k) {
        const auto& d = train_data[order[k]];
        images.push_back(config.augment_flip && std::bernoulli_distribution(0.5)(augment_rng) ? detail::hflip(d.image) : d.image);
        labels.vegetable.push_back(d.vegetable);
        labels.spoilage.push_back(d.spoilage);
        labels.day.push_back(d.day / day_scale);
      }
      auto out = model.forward(nn::images_to_tensor<T>(images, model.input_size()));
      auto loss = multitask_loss(out, labels, config.loss_weights);
      const double value = static_cast<double>(loss.total.item());
      if (!std::isfinite(value))
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start) + " (vegetable CE " + std::to_string(loss.components[0].item()) +
                              ", spoilage CE " + std::to_string(loss.components[1].item()) + ", day MSE " +
                              std::to_string(loss.components[2].item()) + ")");
      adam.zero_grad();
      loss.total.backward();
      adam.step();
      const double w = static_cast<double>(end - start);
      total.add(value * w);
      c0.add(static_cast<double>(loss.components[0].item()) * w);
      c1.add(static_cast<double>(loss.components[1].item()) * w);
      c2.add(static_cast<double>(loss.components[2].item()) * w);
    }
    model.set_training(false);
    adam.zero_grad();

    const double n = static_cast<double>(order.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.components = {c0.value() / n, c1.value() / n, c2.value() / n};
    rec.total = total.value() / n;
    if (config.evaluate_val && !val_data.empty())
      rec.validation = eval::evaluate(model.as_predictor(), val_data, "", "validation", eval_opt);
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.set_training(false);
  return history;
}

template <std::floating_point T>
TrainHistory train(nn::MultiHeadModel<T>& model, const SplitManifest& manifest, const TrainConfig& config,
                   const EpochCallback& on_epoch = {}) {
  const auto train_data = load_split(manifest, Split::train, model.input_size(), config.workers);
  if (train_data.empty()) throw ConfigError("manifest has an empty train split");
  std::vector<LabeledImage> val_data;
  if (config.evaluate_val) val_data = load_split(manifest, Split::val, model.input_size(), config.workers);
  return train(model, train_data, val_data, config, on_epoch);
}

}  // namespace freshcast::train
