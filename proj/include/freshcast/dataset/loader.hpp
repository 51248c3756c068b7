#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "freshcast/dataset/split.hpp"
#include "freshcast/image/image.hpp"

namespace freshcast {

struct LabeledImage {
  PreprocessedImage image;
  int vegetable = 0;  // manifest vegetable index
  int spoilage = 0;   // 0 fresh, 1 slightly, 2 completely
  double day = 0.0;
};

// Decodes and resizes every sample of `split`, in manifest order.
inline std::vector<LabeledImage> load_split(const SplitManifest& manifest, Split split, int size, unsigned workers = 1) {
  const auto samples = manifest.samples_in(split);
  std::vector<LabeledImage> out(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const auto& s = samples[i];
        out[i] = {preprocess(s.image_path, size), manifest.vegetable_of(s.vegetable), spoilage_index(s.spoilage),
                  static_cast<double>(s.day)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(samples.size(), 1))));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline std::vector<PreprocessedImage> images_of(const std::vector<LabeledImage>& data) {
  std::vector<PreprocessedImage> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.image);
  return out;
}

}  // namespace freshcast
