#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "freshcast/lime/explain.hpp"

namespace freshcast::lime {

// Top-k segments by weight (descending, ties to the lower label) are outlined;
// positive ones tinted green, negative ones red.
inline RgbImage render_overlay(const RgbImage& image, const Explanation& ex, Head head, int top_k) {
  const auto& seg = ex.segments;
  if (image.height != seg.height || image.width != seg.width) throw ShapeError("overlay image does not match the segment map");
  if (top_k < 0 || top_k > seg.n_segments)
    throw ConfigError("top_k must be in [0," + std::to_string(seg.n_segments) + "]");
  RgbImage out = image;
  if (top_k == 0) return out;
  const auto& w = ex.head(head).weights;
  std::vector<int> order(static_cast<std::size_t>(seg.n_segments));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[static_cast<std::size_t>(a)] > w[static_cast<std::size_t>(b)]; });
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(seg.n_segments), 0);
  for (int i = 0; i < top_k; ++i) chosen[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const int l = seg.at(y, x);
      if (!chosen[static_cast<std::size_t>(l)]) continue;
      auto* px = &out.pixels[(static_cast<std::size_t>(y) * static_cast<std::size_t>(seg.width) + static_cast<std::size_t>(x)) * 3];
      const bool edge = x == 0 || y == 0 || x == seg.width - 1 || y == seg.height - 1 || seg.at(y, x - 1) != l ||
                        seg.at(y, x + 1) != l || seg.at(y - 1, x) != l || seg.at(y + 1, x) != l;
      if (edge) {
        px[0] = 255, px[1] = 255, px[2] = 0;
        continue;
      }
      const double wl = w[static_cast<std::size_t>(l)];
      if (wl == 0.0) continue;
      const int hot = wl > 0 ? 1 : 0;
      for (int c = 0; c < 3; ++c) {
        const double target = c == hot ? 255.0 : 0.0;
        px[c] = static_cast<std::uint8_t>(std::lround(0.55 * px[c] + 0.45 * target));
      }
    }
  return out;
}

}  // namespace freshcast::lime
