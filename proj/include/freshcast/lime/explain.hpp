#pragma once

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/prediction.hpp"
#include "freshcast/lime/segment.hpp"

namespace freshcast::lime {

enum class Head { vegetable, spoilage, day };
inline constexpr std::array<Head, 3> kHeads{Head::vegetable, Head::spoilage, Head::day};

inline std::string head_name(Head h) {
  switch (h) {
    case Head::vegetable: return "vegetable";
    case Head::spoilage: return "spoilage";
    case Head::day: return "day";
  }
  return "?";
}

inline Head head_from_name(const std::string& s) {
  for (auto h : kHeads)
    if (head_name(h) == s) return h;
  throw ConfigError("unknown head '" + s + "' (expected vegetable|spoilage|day)");
}

// n x n_segments on/off matrix, row-major.
struct MaskMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> on;

  bool at(std::size_t r, std::size_t c) const { return on[r * cols + c] != 0; }
};

inline std::array<float, 3> mean_color(const PreprocessedImage& img) {
  std::array<double, 3> acc{};
  const std::size_t n = img.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) acc[c] += img.pixels[i * 3 + c];
  return {static_cast<float>(acc[0] / static_cast<double>(n)), static_cast<float>(acc[1] / static_cast<double>(n)),
          static_cast<float>(acc[2] / static_cast<double>(n))};
}

// Row 0 keeps every segment; other entries are fair coin flips.
inline MaskMatrix sample_masks(int n_segments, std::size_t n, std::uint64_t seed) {
  if (n_segments < 1) throw SamplingError("need at least one segment");
  if (n < static_cast<std::size_t>(n_segments))
    throw SamplingError("n_perturbations (" + std::to_string(n) + ") must be >= n_segments (" + std::to_string(n_segments) + ")");
  MaskMatrix m{n, static_cast<std::size_t>(n_segments), std::vector<std::uint8_t>(n * static_cast<std::size_t>(n_segments), 1)};
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t r = 1; r < n; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.on[r * m.cols + c] = coin(rng) ? 1 : 0;
  return m;
}

// Switched-off segments take the image's mean colour.
inline PreprocessedImage apply_mask(const PreprocessedImage& img, const SegmentMap& seg, const MaskMatrix& masks, std::size_t row,
                                    const std::array<float, 3>& fill) {
  PreprocessedImage out = img;
  for (std::size_t p = 0; p < seg.labels.size(); ++p)
    if (!masks.at(row, static_cast<std::size_t>(seg.labels[p])))
      for (std::size_t c = 0; c < 3; ++c) out.pixels[p * 3 + c] = fill[c];
  return out;
}

struct PerturbationSet {
  MaskMatrix masks;
  std::array<float, 3> fill{};
};

inline PerturbationSet sample_perturbations(const PreprocessedImage& img, const SegmentMap& seg, std::size_t n, std::uint64_t seed) {
  return {sample_masks(seg.n_segments, n, seed), mean_color(img)};
}

struct ExplainParams {
  int n_segments = 50;
  std::size_t n_perturbations = 1000;
  std::uint64_t seed = 0;
  double kernel_width = 0.25;  // cosine-distance units
  double ridge_lambda = 1.0;
  std::size_t batch = 64;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct HeadExplanation {
  Head head = Head::vegetable;
  std::vector<double> weights;  // one per segment
  double intercept = 0.0;
  double r2 = 0.0;
  double target_value = 0.0;  // explained class index (classification) or day estimate
};

struct Explanation {
  SegmentMap segments;
  std::array<HeadExplanation, 3> heads;
  int vegetable_class = 0;
  int spoilage_class = 0;
  double day_estimate = 0.0;
  std::size_t n_perturbations = 0;
  std::uint64_t seed = 0;
  double kernel_width = 0.25;
  double ridge_lambda = 1.0;
  std::vector<std::string> warnings;

  const HeadExplanation& head(Head h) const { return heads[static_cast<std::size_t>(h)]; }
};

// Cosine distance of each mask row to the all-on row; an all-off row is at distance 1.
inline std::vector<double> mask_distances(const MaskMatrix& m) {
  std::vector<double> d(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < m.cols; ++c) k += m.at(r, c);
    d[r] = k == 0 ? 1.0 : 1.0 - std::sqrt(static_cast<double>(k) / static_cast<double>(m.cols));
  }
  return d;
}

// Kernel sqrt(exp(-d^2 / width^2)).
inline std::vector<double> kernel_weights(const std::vector<double>& distances, double width) {
  std::vector<double> w(distances.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sqrt(std::exp(-distances[i] * distances[i] / (width * width)));
  return w;
}

struct SurrogateFit {
  std::vector<double> coef;
  double intercept = 0.0;
  double r2 = 0.0;
  bool degenerate = false;
};

// Weighted ridge regression of y on the mask matrix; the intercept is not penalized.
inline SurrogateFit fit_surrogate(const MaskMatrix& m, const std::vector<double>& y, const std::vector<double>& w, double lambda) {
  const auto n = static_cast<Eigen::Index>(m.rows), p = static_cast<Eigen::Index>(m.cols);
  SurrogateFit fit;
  fit.coef.assign(m.cols, 0.0);
  double wsum = 0.0, ymean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) wsum += w[i], ymean += w[i] * y[i];
  ymean /= wsum;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss_tot += w[i] * (y[i] - ymean) * (y[i] - ymean);
  if (!(ss_tot > 1e-24 * std::max(1.0, wsum * ymean * ymean))) {
    fit.intercept = ymean;
    fit.degenerate = true;
    return fit;
  }
  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd yv(n), wv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) x(i, j + 1) = m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 : 0.0;
    yv(i) = y[static_cast<std::size_t>(i)];
    wv(i) = w[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd a = x.transpose() * wv.asDiagonal() * x;
  for (Eigen::Index j = 1; j <= p; ++j) a(j, j) += lambda;
  const Eigen::VectorXd beta = a.ldlt().solve(x.transpose() * wv.asDiagonal() * yv);
  const Eigen::VectorXd resid = yv - x * beta;
  fit.intercept = beta(0);
  for (Eigen::Index j = 0; j < p; ++j) fit.coef[static_cast<std::size_t>(j)] = beta(j + 1);
  fit.r2 = 1.0 - resid.cwiseProduct(resid).dot(wv) / ss_tot;
  return fit;
}

// All three heads are fitted against one shared perturbation batch.
inline Explanation explain(const Predictor& predictor, const PreprocessedImage& image, const ExplainParams& params) {
  if (params.batch == 0) throw ConfigError("explain batch size must be positive");
  Explanation ex;
  ex.segments = segment(image, params.n_segments);
  ex.warnings = ex.segments.warnings;
  ex.n_perturbations = params.n_perturbations;
  ex.seed = params.seed;
  ex.kernel_width = params.kernel_width;
  ex.ridge_lambda = params.ridge_lambda;
  const auto pert = sample_perturbations(image, ex.segments, params.n_perturbations, params.seed);
  const auto& masks = pert.masks;

  std::vector<PredictionTriple> responses;
  responses.reserve(masks.rows);
  for (std::size_t start = 0; start < masks.rows; start += params.batch) {
    if (params.deadline && std::chrono::steady_clock::now() > *params.deadline)
      throw TimeoutError("explanation exceeded its time budget after " + std::to_string(start) + " of " +
                         std::to_string(masks.rows) + " perturbations (" + std::to_string(ex.segments.n_segments) + " segments)");
    std::vector<PreprocessedImage> batch;
    for (std::size_t r = start; r < std::min(masks.rows, start + params.batch); ++r)
      batch.push_back(apply_mask(image, ex.segments, masks, r, pert.fill));
    auto out = predictor(batch);
    if (out.size() != batch.size()) throw ConfigError("predictor returned a different batch size");
    responses.insert(responses.end(), std::make_move_iterator(out.begin()), std::make_move_iterator(out.end()));
  }

  // Row 0 is the unperturbed image.
  ex.vegetable_class = static_cast<int>(argmax(responses[0].vegetable_probs));
  ex.spoilage_class = static_cast<int>(argmax(responses[0].spoilage_probs));
  ex.day_estimate = responses[0].day_estimate;

  const auto w = kernel_weights(mask_distances(masks), params.kernel_width);
  for (auto h : kHeads) {
    std::vector<double> y(masks.rows);
    for (std::size_t r = 0; r < masks.rows; ++r) {
      const auto& t = responses[r];
      y[r] = h == Head::vegetable  ? t.vegetable_probs[static_cast<std::size_t>(ex.vegetable_class)]
             : h == Head::spoilage ? t.spoilage_probs[static_cast<std::size_t>(ex.spoilage_class)]
                                   : t.day_estimate;
    }
    auto fit = fit_surrogate(masks, y, w, params.ridge_lambda);
    if (fit.degenerate) ex.warnings.push_back(head_name(h) + " response has zero variance: weights set to 0");
    auto& he = ex.heads[static_cast<std::size_t>(h)];
    he.head = h;
    he.weights = std::move(fit.coef);
    he.intercept = fit.intercept;
    he.r2 = fit.r2;
    he.target_value = h == Head::vegetable ? ex.vegetable_class : h == Head::spoilage ? ex.spoilage_class : ex.day_estimate;
  }
  return ex;
}

inline json to_json(const Explanation& ex, bool include_segment_map = false) {
  json heads = json::object();
  for (const auto& h : ex.heads)
    heads[head_name(h.head)] = {{"weights", h.weights}, {"intercept", h.intercept}, {"surrogate_fit_r2", h.r2}, {"target", h.target_value}};
  json j = {{"n_segments", ex.segments.n_segments},
            {"n_perturbations", ex.n_perturbations},
            {"seed", ex.seed},
            {"kernel_width", ex.kernel_width},
            {"ridge_lambda", ex.ridge_lambda},
            {"fill", "mean_color"},
            {"targets", {{"vegetable_class", ex.vegetable_class}, {"spoilage_class", ex.spoilage_class}, {"day_estimate", ex.day_estimate}}},
            {"heads", heads},
            {"warnings", ex.warnings}};
  if (include_segment_map)
    j["segment_map"] = {{"height", ex.segments.height}, {"width", ex.segments.width}, {"labels", ex.segments.labels}};
  return j;
}

}  // namespace freshcast::lime
