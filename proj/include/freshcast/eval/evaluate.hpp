#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/prediction.hpp"
#include "freshcast/dataset/loader.hpp"
#include "freshcast/eval/metrics.hpp"

namespace freshcast::eval {

struct MetricsReport {
  std::string model_id;
  std::string dataset_id = "original";  // original | noisy | other
  double vegetable_f1 = 0.0;
  double spoilage_f1 = 0.0;
  double mse = 0.0;
  double smape = 0.0;
  std::optional<long> n_samples;  // absent for literal published values

  void validate() const {
    auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
    if (!in(vegetable_f1, 0, 1) || !in(spoilage_f1, 0, 1)) throw EvaluationError(model_id + ": F1 outside [0,1]");
    if (!(std::isfinite(mse) && mse >= 0)) throw EvaluationError(model_id + ": MSE must be finite and >= 0");
    if (!in(smape, 0, 200)) throw EvaluationError(model_id + ": SMAPE outside [0,200]");
    if (n_samples && *n_samples <= 0) throw EvaluationError(model_id + ": n_samples must be positive");
  }
};

inline json to_json(const MetricsReport& r) {
  return {{"model_id", r.model_id},         {"dataset_id", r.dataset_id}, {"vegetable_f1", r.vegetable_f1},
          {"spoilage_f1", r.spoilage_f1},   {"mse", r.mse},               {"smape", r.smape},
          {"n_samples", r.n_samples ? json(*r.n_samples) : json(nullptr)}};
}

inline MetricsReport metrics_report_from_json(const json& j) {
  try {
    MetricsReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.dataset_id = j.value("dataset_id", std::string("other"));
    r.vegetable_f1 = j.at("vegetable_f1").get<double>();
    r.spoilage_f1 = j.at("spoilage_f1").get<double>();
    r.mse = j.at("mse").get<double>();
    r.smape = j.at("smape").get<double>();
    if (j.contains("n_samples") && !j["n_samples"].is_null()) r.n_samples = j["n_samples"].get<long>();
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed metrics report: ") + e.what());
  }
}

// Accepts a single report object, an array, or {"reports": [...]}.
inline std::vector<MetricsReport> reports_from_json(const json& doc) {
  const json& arr = doc.is_object() && doc.contains("reports") ? doc["reports"] : doc;
  std::vector<MetricsReport> out;
  if (arr.is_array())
    for (const auto& r : arr) out.push_back(metrics_report_from_json(r));
  else
    out.push_back(metrics_report_from_json(arr));
  return out;
}

struct EvaluationOptions {
  int vegetable_classes = 8;
  int spoilage_classes = 3;
  F1Average average = F1Average::macro;
  std::size_t batch = 32;
};

// Classifications by argmax (ties to the lower index).
inline MetricsReport score_predictions(std::span<const PredictionTriple> preds, std::span<const int> vegetable_true,
                                       std::span<const int> spoilage_true, std::span<const double> day_true,
                                       const EvaluationOptions& opt = {}) {
  if (preds.empty()) throw EvaluationError("nothing to evaluate");
  if (preds.size() != vegetable_true.size() || preds.size() != spoilage_true.size() || preds.size() != day_true.size())
    throw EvaluationError("prediction and label counts differ");
  std::vector<int> veg_pred, spoil_pred;
  std::vector<double> day_pred;
  for (const auto& p : preds) {
    veg_pred.push_back(static_cast<int>(argmax(p.vegetable_probs)));
    spoil_pred.push_back(static_cast<int>(argmax(p.spoilage_probs)));
    day_pred.push_back(p.day_estimate);
  }
  MetricsReport r;
  r.vegetable_f1 = macro_f1(vegetable_true, veg_pred, opt.vegetable_classes, opt.average);
  r.spoilage_f1 = macro_f1(spoilage_true, spoil_pred, opt.spoilage_classes, opt.average);
  r.mse = mse(day_true, day_pred);
  r.smape = smape(day_true, day_pred);
  r.n_samples = static_cast<long>(preds.size());
  return r;
}

inline MetricsReport evaluate(const Predictor& predictor, std::span<const LabeledImage> data, const std::string& model_id,
                              const std::string& dataset_id, const EvaluationOptions& opt = {}) {
  if (data.empty()) throw EvaluationError("evaluation split is empty");
  std::vector<PredictionTriple> preds;
  std::vector<int> veg, spoil;
  std::vector<double> day;
  for (std::size_t start = 0; start < data.size(); start += opt.batch) {
    const auto end = std::min(data.size(), start + opt.batch);
    std::vector<PreprocessedImage> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(data[i].image);
    auto out = predictor(batch);
    if (out.size() != batch.size()) throw EvaluationError("predictor returned a different batch size");
    preds.insert(preds.end(), out.begin(), out.end());
  }
  for (const auto& d : data) {
    veg.push_back(d.vegetable);
    spoil.push_back(d.spoilage);
    day.push_back(d.day);
  }
  auto r = score_predictions(preds, veg, spoil, day, opt);
  r.model_id = model_id;
  r.dataset_id = dataset_id;
  r.validate();
  return r;
}

inline MetricsReport evaluate(const Predictor& predictor, const SplitManifest& manifest, Split split, int input_size,
                              const std::string& model_id, const std::string& dataset_id, EvaluationOptions opt = {}) {
  const auto data = load_split(manifest, split, input_size);
  if (data.empty()) throw EvaluationError("split '" + split_name(split) + "' is empty");
  opt.vegetable_classes = static_cast<int>(manifest.vegetable_index.size());
  return evaluate(predictor, data, model_id, dataset_id, opt);
}

}  // namespace freshcast::eval
