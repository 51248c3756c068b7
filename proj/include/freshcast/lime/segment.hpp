#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "freshcast/core/error.hpp"
#include "freshcast/image/image.hpp"

namespace freshcast::lime {

struct SegmentMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major, values 0..n_segments-1
  int n_segments = 0;
  std::vector<std::string> warnings;

  int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  std::vector<int> sizes() const {
    std::vector<int> s(static_cast<std::size_t>(n_segments), 0);
    for (int l : labels) ++s[static_cast<std::size_t>(l)];
    return s;
  }
};

struct SegmentParams {
  double sigma = 0.8;       // pre-smoothing
  double tolerance = 0.5;   // accepted |n - target| / target
  int search_steps = 24;    // bisection steps over the log of the scale parameter
};

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), thresh_(n, 0.0) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  std::size_t join(std::size_t a, std::size_t b) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }
  std::size_t size(std::size_t x) const { return size_[x]; }
  double& thresh(std::size_t x) { return thresh_[x]; }

 private:
  std::vector<std::size_t> parent_, size_;
  std::vector<double> thresh_;
};

struct Edge {
  std::uint32_t a, b;
  float w;
};

// Edges of the 8-connected pixel graph, sorted by colour distance (stable, so ties keep raster order).
inline std::vector<Edge> pixel_edges(const RgbImage& img, double sigma) {
  cv::Mat m(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat f;
  m.convertTo(f, CV_32FC3);
  if (sigma > 0) cv::GaussianBlur(f, f, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
  const int h = img.height, w = img.width;
  auto px = [&](int y, int x) { return f.ptr<cv::Vec3f>(y)[x]; };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 4);
  auto add = [&](int y0, int x0, int y1, int x1) {
    const auto d = px(y0, x0) - px(y1, x1);
    edges.push_back({static_cast<std::uint32_t>(y0 * w + x0), static_cast<std::uint32_t>(y1 * w + x1),
                     static_cast<float>(std::sqrt(d.dot(d)))});
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) add(y, x, y, x + 1);
      if (y + 1 < h) add(y, x, y + 1, x);
      if (x + 1 < w && y + 1 < h) add(y, x, y + 1, x + 1);
      if (x > 0 && y + 1 < h) add(y, x, y + 1, x - 1);
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) { return l.w < r.w; });
  return edges;
}

// Graph-based segmentation (Felzenszwalb-Huttenlocher) on pre-sorted edges.
inline std::vector<int> graph_segment(const std::vector<Edge>& edges, std::size_t pixels, double k, std::size_t min_size) {
  DisjointSet ds(pixels);
  for (std::size_t i = 0; i < pixels; ++i) ds.thresh(i) = k;
  for (const auto& e : edges) {
    auto a = ds.find(e.a), b = ds.find(e.b);
    if (a == b) continue;
    if (e.w <= ds.thresh(a) && e.w <= ds.thresh(b)) {
      a = ds.join(a, b);
      ds.thresh(a) = e.w + k / static_cast<double>(ds.size(a));
    }
  }
  for (const auto& e : edges) {
    const auto a = ds.find(e.a), b = ds.find(e.b);
    if (a != b && (ds.size(a) < min_size || ds.size(b) < min_size)) ds.join(a, b);
  }
  std::vector<int> labels(pixels);
  for (std::size_t i = 0; i < pixels; ++i) labels[i] = static_cast<int>(ds.find(i));
  return labels;
}

// Labels renumbered 0.. by first appearance in raster order.
inline int relabel(std::vector<int>& labels) {
  std::vector<int> remap;
  int next = 0;
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  remap.assign(static_cast<std::size_t>(max_label) + 1, -1);
  for (int& l : labels) {
    auto& r = remap[static_cast<std::size_t>(l)];
    if (r < 0) r = next++;
    l = r;
  }
  return next;
}

// Merge the smallest segment into the neighbour it shares the longest border with.
inline void merge_smallest(SegmentMap& m) {
  const auto sizes = m.sizes();
  const int victim = static_cast<int>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
  std::vector<int> border(static_cast<std::size_t>(m.n_segments), 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (m.at(y, x) != victim) continue;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (auto [ny, nx] : nb)
        if (ny >= 0 && ny < m.height && nx >= 0 && nx < m.width && m.at(ny, nx) != victim) ++border[static_cast<std::size_t>(m.at(ny, nx))];
    }
  const int target = static_cast<int>(std::max_element(border.begin(), border.end()) - border.begin());
  for (int& l : m.labels)
    if (l == victim) l = target;
  m.n_segments = relabel(m.labels);
}

// Split the largest segment at the median of its longer bounding-box axis. Returns false if nothing can split.
inline bool split_largest(SegmentMap& m) {
  const auto sizes = m.sizes();
  const int victim = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  if (sizes[static_cast<std::size_t>(victim)] < 2) return false;
  int y0 = m.height, y1 = -1, x0 = m.width, x1 = -1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x) == victim) {
        y0 = std::min(y0, y), y1 = std::max(y1, y), x0 = std::min(x0, x), x1 = std::max(x1, x);
      }
  const bool by_x = (x1 - x0) >= (y1 - y0);
  std::vector<int> coords;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (m.at(y, x) == victim) coords.push_back(by_x ? x : y);
  std::nth_element(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(coords.size() / 2), coords.end());
  int cut = coords[coords.size() / 2];
  if (cut == (by_x ? x0 : y0)) ++cut;
  const int fresh = m.n_segments;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      auto& l = m.labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(m.width) + static_cast<std::size_t>(x)];
      if (l == victim && (by_x ? x : y) >= cut) l = fresh;
    }
  m.n_segments = relabel(m.labels);
  return true;
}

}  // namespace detail

inline bool is_constant(const RgbImage& img) {
  for (std::size_t i = 3; i < img.pixels.size(); ++i)
    if (img.pixels[i] != img.pixels[i % 3]) return false;
  return true;
}

// Deterministic superpixels with a count within tolerance of `n_target`.
// A constant image yields a single segment and a warning.
inline SegmentMap segment(const RgbImage& img, int n_target, const SegmentParams& params = {}) {
  const auto pixels = static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
  if (pixels == 0) throw ImageError("cannot segment an empty image");
  if (n_target < 1) throw SamplingError("segment target must be >= 1");
  SegmentMap map;
  map.height = img.height;
  map.width = img.width;
  if (is_constant(img)) {
    map.labels.assign(pixels, 0);
    map.n_segments = 1;
    map.warnings.push_back("constant image: single segment");
    return map;
  }
  n_target = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_target), pixels));
  const auto edges = detail::pixel_edges(img, params.sigma);
  const std::size_t min_size = std::max<std::size_t>(1, pixels / (static_cast<std::size_t>(n_target) * 4));

  double lo = std::log(1e-2), hi = std::log(1e6);
  std::vector<int> best;
  int best_count = 0;
  for (int step = 0; step < params.search_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    auto labels = detail::graph_segment(edges, pixels, std::exp(mid), min_size);
    const int count = detail::relabel(labels);
    if (best.empty() || std::abs(count - n_target) < std::abs(best_count - n_target)) {
      best = std::move(labels);
      best_count = count;
    }
    if (count == n_target) break;
    if (count > n_target) lo = mid;
    else hi = mid;
  }
  map.labels = std::move(best);
  map.n_segments = best_count;

  const int min_count = static_cast<int>(std::ceil(n_target * (1.0 - params.tolerance)));
  const int max_count = static_cast<int>(std::floor(n_target * (1.0 + params.tolerance)));
  // Outside tolerance, refine all the way to the target.
  if (map.n_segments > max_count)
    while (map.n_segments > n_target) detail::merge_smallest(map);
  if (map.n_segments < min_count)
    while (map.n_segments < n_target)
      if (!detail::split_largest(map)) break;
  return map;
}

inline SegmentMap segment(const PreprocessedImage& img, int n_target, const SegmentParams& params = {}) {
  return segment(to_rgb8(img), n_target, params);
}

}  // namespace freshcast::lime
