#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "freshcast/core/error.hpp"

namespace freshcast::eval {

// Neumaier-compensated running sum; result independent of summation order to ~1 ulp.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

enum class F1Average { macro, weighted };

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a == 0 || b == 0) throw EvaluationError(std::string(what) + ": empty input");
  if (a != b) throw EvaluationError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace detail

// Per-class F1 = 2TP / (2TP + FP + FN); a class absent from both truth and
// prediction scores 0 and still counts in the macro mean.
inline std::vector<double> per_class_f1(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  detail::check_lengths(y_true.size(), y_pred.size(), "f1");
  if (n_classes < 1) throw EvaluationError("f1: n_classes must be positive");
  std::vector<long> tp(static_cast<std::size_t>(n_classes)), fp(tp.size()), fn(tp.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw EvaluationError("f1: label outside [0," + std::to_string(n_classes) + ")");
    if (t == p) ++tp[static_cast<std::size_t>(t)];
    else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  std::vector<double> f1(tp.size(), 0.0);
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const long denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) f1[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

inline double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, int n_classes,
                       F1Average average = F1Average::macro) {
  const auto f1 = per_class_f1(y_true, y_pred, n_classes);
  CompensatedSum s;
  if (average == F1Average::macro) {
    for (double f : f1) s.add(f);
    return s.value() / static_cast<double>(n_classes);
  }
  std::vector<long> support(f1.size());
  for (int t : y_true) ++support[static_cast<std::size_t>(t)];
  for (std::size_t c = 0; c < f1.size(); ++c) s.add(f1[c] * static_cast<double>(support[c]));
  return s.value() / static_cast<double>(y_true.size());
}

inline double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  detail::check_lengths(y_true.size(), y_pred.size(), "mse");
  CompensatedSum s;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_pred[i] - y_true[i];
    s.add(d * d);
  }
  return s.value() / static_cast<double>(y_true.size());
}

// Symmetric MAPE in percent, range [0, 200]. A term with both values zero counts as 0.
inline double smape(std::span<const double> y_true, std::span<const double> y_pred) {
  detail::check_lengths(y_true.size(), y_pred.size(), "smape");
  CompensatedSum s;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double denom = std::abs(y_true[i]) + std::abs(y_pred[i]);
    if (denom > 0.0) s.add(2.0 * std::abs(y_pred[i] - y_true[i]) / denom);
  }
  return 100.0 * s.value() / static_cast<double>(y_true.size());
}

}  // namespace freshcast::eval
