#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "freshcast/core/error.hpp"
#include "freshcast/core/prediction.hpp"
#include "freshcast/eval/metrics.hpp"
#include "freshcast/nn/functional.hpp"
#include "freshcast/nn/model.hpp"

namespace freshcast::train {

using LossWeights = std::array<double, 3>;  // vegetable CE, spoilage CE, day MSE

struct LabelBatch {
  std::vector<int> vegetable;
  std::vector<int> spoilage;
  std::vector<double> day;
};

struct LossValue {
  double total = 0.0;
  std::array<double, 3> components{};  // vegetable CE, spoilage CE, day MSE
};

// Probabilities are floored at 1e-12 so a zero on the true class stays finite.
inline constexpr double kProbabilityFloor = 1e-12;

// Loss on already-normalized predictions.
inline LossValue multitask_loss(std::span<const PredictionTriple> pred, const LabelBatch& target, const LossWeights& w = {1, 1, 1}) {
  const auto n = pred.size();
  if (n == 0) throw LabelError("empty batch");
  if (target.vegetable.size() != n || target.spoilage.size() != n || target.day.size() != n)
    throw LabelError("prediction and target batch sizes differ");
  eval::CompensatedSum veg, spoil, day;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pred[i];
    const int v = target.vegetable[i], s = target.spoilage[i];
    if (v < 0 || static_cast<std::size_t>(v) >= p.vegetable_probs.size())
      throw LabelError("vegetable target " + std::to_string(v) + " out of range");
    if (s < 0 || static_cast<std::size_t>(s) >= p.spoilage_probs.size())
      throw LabelError("spoilage target " + std::to_string(s) + " out of range");
    if (!std::isfinite(target.day[i])) throw LabelError("day target is not finite");
    veg.add(-std::log(std::max(p.vegetable_probs[static_cast<std::size_t>(v)], kProbabilityFloor)));
    spoil.add(-std::log(std::max(p.spoilage_probs[static_cast<std::size_t>(s)], kProbabilityFloor)));
    const double d = p.day_estimate - target.day[i];
    day.add(d * d);
  }
  LossValue out;
  const double dn = static_cast<double>(n);
  out.components = {veg.value() / dn, spoil.value() / dn, day.value() / dn};
  out.total = w[0] * out.components[0] + w[1] * out.components[1] + w[2] * out.components[2];
  return out;
}

template <std::floating_point T>
struct TensorLoss {
  nn::Tensor<T> total;
  std::array<nn::Tensor<T>, 3> components;
};

// Differentiable version on raw head outputs (softmax folded into the cross-entropies).
template <std::floating_point T>
TensorLoss<T> multitask_loss(const nn::HeadOutputs<T>& out, const LabelBatch& target, const LossWeights& w = {1, 1, 1}) {
  std::vector<T> day(target.day.begin(), target.day.end());
  auto ce_v = nn::cross_entropy_logits(out.vegetable_logits, target.vegetable);
  auto ce_s = nn::cross_entropy_logits(out.spoilage_logits, target.spoilage);
  auto mse = nn::mse_loss(nn::reshape(out.day, {-1}), std::span<const T>(day));
  auto total = nn::add(nn::add(nn::scale(ce_v, static_cast<T>(w[0])), nn::scale(ce_s, static_cast<T>(w[1]))),
                       nn::scale(mse, static_cast<T>(w[2])));
  return {total, {ce_v, ce_s, mse}};
}

}  // namespace freshcast::train
