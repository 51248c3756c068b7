#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/dataset/split.hpp"
#include "freshcast/nn/checkpoint.hpp"
#include "freshcast/nn/model.hpp"
#include "freshcast/train/trainer.hpp"

namespace freshcast::train {

// Layout of a trained model: <models_dir>/<model_id>/
//   model.json         spec, label names, per-vegetable max day, day scale
//   weights.fcw        parameters and BN running statistics
//   history.json       per-epoch losses and validation reports
//   train_config.json  resolved training configuration
struct ModelRecord {
  std::string model_id;
  nn::FusionModelSpec spec;
  std::vector<std::string> vegetables;
  std::map<std::string, int> max_day_per_vegetable;
  double day_scale = 1.0;
};

inline json to_json(const ModelRecord& r) {
  return {{"format", "freshcast.model/1"},
          {"model_id", r.model_id},
          {"spec", nn::to_json(r.spec)},
          {"vegetables", r.vegetables},
          {"spoilage_classes", {"fresh", "slightly_spoiled", "completely_spoiled"}},
          {"max_day_per_vegetable", r.max_day_per_vegetable},
          {"day_scale", r.day_scale}};
}

inline ModelRecord model_record_from_json(const json& j) {
  try {
    ModelRecord r;
    r.model_id = j.at("model_id").get<std::string>();
    r.spec = nn::fusion_spec_from_json(j.at("spec"));
    r.vegetables = j.at("vegetables").get<std::vector<std::string>>();
    r.max_day_per_vegetable = j.value("max_day_per_vegetable", std::map<std::string, int>{});
    r.day_scale = j.value("day_scale", 1.0);
    if (static_cast<int>(r.vegetables.size()) != r.spec.vegetable_classes)
      throw CheckpointError("model.json lists " + std::to_string(r.vegetables.size()) + " vegetables but the head has " +
                            std::to_string(r.spec.vegetable_classes));
    return r;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed model.json: ") + e.what());
  }
}

inline std::filesystem::path model_dir(const std::filesystem::path& models_dir, const std::string& model_id) {
  return models_dir / model_id;
}

template <std::floating_point T>
void save_model(const std::filesystem::path& dir, const ModelRecord& record, nn::MultiHeadModel<T>& model,
                const TrainHistory& history, const TrainConfig& config, const json& provenance = nullptr) {
  std::filesystem::create_directories(dir);
  auto doc = to_json(record);
  if (!provenance.is_null()) doc["provenance"] = provenance;
  write_json_file(dir / "model.json", doc);
  nn::save_module(model, dir / "weights.fcw");
  write_json_file(dir / "history.json", to_json(history));
  write_json_file(dir / "train_config.json", to_json(config));
}

inline ModelRecord record_for(const std::string& model_id, const nn::FusionModelSpec& spec, const SplitManifest& manifest,
                              double day_scale) {
  return {model_id, spec, manifest.vegetable_names(), manifest.max_day_per_vegetable, day_scale};
}

template <std::floating_point T>
struct LoadedModel {
  ModelRecord record;
  std::shared_ptr<nn::MultiHeadModel<T>> model;
};

// `dir` is a model directory (containing model.json).
template <std::floating_point T = float>
LoadedModel<T> load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "model.json")) throw CheckpointError("no model.json in " + dir.string());
  auto record = model_record_from_json(read_json_file(dir / "model.json"));
  auto spec = record.spec;
  spec.pretrained = false;  // every weight comes from the checkpoint below
  auto model = std::make_shared<nn::MultiHeadModel<T>>(spec);
  nn::load_module(*model, dir / "weights.fcw");
  model->set_day_scale(record.day_scale);
  model->set_training(false);
  return {std::move(record), std::move(model)};
}

}  // namespace freshcast::train
