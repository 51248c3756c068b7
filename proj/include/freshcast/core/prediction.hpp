#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "freshcast/image/image.hpp"

namespace freshcast {

// Output of one forward pass for one image.
struct PredictionTriple {
  std::vector<double> vegetable_probs;
  std::vector<double> spoilage_probs;
  double day_estimate = 0.0;
};

// Ties go to the lower index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline bool probabilities_valid(std::span<const double> p, double tol = 1e-6) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

// Anything that maps a batch of preprocessed images to predictions, in order:
// a trained model, an oracle, or a synthetic black box.
using Predictor = std::function<std::vector<PredictionTriple>(std::span<const PreprocessedImage>)>;

}  // namespace freshcast
