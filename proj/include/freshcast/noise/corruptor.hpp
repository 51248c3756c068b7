#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/seed.hpp"
#include "freshcast/dataset/sample.hpp"
#include "freshcast/image/image.hpp"

namespace freshcast {

enum class NoiseKind { gaussian, salt_pepper };

inline std::string noise_kind_name(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "salt_pepper"; }

inline NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "salt_pepper") return NoiseKind::salt_pepper;
  throw SpecError("unknown noise kind '" + name + "' (expected gaussian|salt_pepper)");
}

// intensity: gaussian -> std-dev on the 0..255 scale; salt_pepper -> fraction of pixels.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double intensity = 25.0;
  int per_folder_count = 2;
  std::uint64_t master_seed = 0;
};

inline void validate(const NoiseSpec& spec) {
  if (!std::isfinite(spec.intensity) || spec.intensity < 0.0)
    throw SpecError("noise intensity must be a finite value >= 0");
  if (spec.kind == NoiseKind::salt_pepper && spec.intensity > 1.0)
    throw SpecError("salt_pepper intensity is a fraction and must be <= 1");
  if (spec.per_folder_count < 0) throw SpecError("per_folder_count must be >= 0");
}

inline json to_json(const NoiseSpec& spec) {
  return {{"kind", noise_kind_name(spec.kind)},
          {"intensity", spec.intensity},
          {"per_folder_count", spec.per_folder_count},
          {"master_seed", spec.master_seed}};
}

inline NoiseSpec noise_spec_from_json(const json& j) {
  NoiseSpec s;
  s.kind = noise_kind_from_name(j.at("kind").get<std::string>());
  s.intensity = j.at("intensity").get<double>();
  s.per_folder_count = j.at("per_folder_count").get<int>();
  s.master_seed = j.at("master_seed").get<std::uint64_t>();
  return s;
}

// Deterministic in (image, spec, seed).
inline RgbImage apply_noise(const RgbImage& image, const NoiseSpec& spec, std::uint64_t seed) {
  validate(spec);
  RgbImage out = image;
  std::mt19937_64 rng(seed);
  if (spec.kind == NoiseKind::gaussian) {
    if (spec.intensity == 0.0) return out;
    std::normal_distribution<double> noise(0.0, spec.intensity);
    for (auto& v : out.pixels) v = static_cast<std::uint8_t>(std::clamp(std::lround(v + noise(rng)), 0L, 255L));
    return out;
  }
  const std::size_t n_pixels = image.pixel_count();
  const auto n_hit = static_cast<std::size_t>(std::llround(spec.intensity * static_cast<double>(n_pixels)));
  std::vector<std::size_t> order(n_pixels);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_hit entries are a uniform sample without replacement.
  for (std::size_t i = 0; i < n_hit; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_pixels - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::bernoulli_distribution salt(0.5);
  for (std::size_t i = 0; i < n_hit; ++i) {
    const std::uint8_t v = salt(rng) ? 255 : 0;
    for (int c = 0; c < 3; ++c) out.pixels[order[i] * 3 + c] = v;
  }
  return out;
}

struct CorruptedFile {
  std::string file;  // relative to the dataset root, generic separators
  std::uint64_t noise_seed = 0;
};

struct FolderRecord {
  std::string folder;  // "<vegetable>/<day folder>"
  std::size_t n_images = 0;
  std::vector<CorruptedFile> corrupted;
  bool skipped = false;
  std::string skip_reason;
};

struct CorruptionManifest {
  NoiseSpec spec;
  std::vector<FolderRecord> folders;  // sorted by folder
  std::size_t n_images = 0;
  std::size_t n_corrupted = 0;

  double realized_fraction() const {
    return n_images == 0 ? 0.0 : static_cast<double>(n_corrupted) / static_cast<double>(n_images);
  }
};

inline json to_json(const CorruptionManifest& m) {
  json folders = json::array();
  for (const auto& f : m.folders) {
    json files = json::array();
    for (const auto& c : f.corrupted) files.push_back({{"file", c.file}, {"noise_seed", c.noise_seed}});
    json rec{{"folder", f.folder}, {"n_images", f.n_images}, {"corrupted", files}, {"skipped", f.skipped}};
    if (f.skipped) rec["skip_reason"] = f.skip_reason;
    if (f.n_images > 0)
      rec["realized_fraction"] = static_cast<double>(f.corrupted.size()) / static_cast<double>(f.n_images);
    folders.push_back(std::move(rec));
  }
  return {{"format", "freshcast.corruption_manifest/1"},
          {"spec", to_json(m.spec)},
          {"folders", folders},
          {"n_images", m.n_images},
          {"n_corrupted", m.n_corrupted},
          {"realized_fraction", m.realized_fraction()}};
}

inline CorruptionManifest corruption_manifest_from_json(const json& j) {
  CorruptionManifest m;
  m.spec = noise_spec_from_json(j.at("spec"));
  for (const auto& f : j.at("folders")) {
    FolderRecord rec;
    rec.folder = f.at("folder").get<std::string>();
    rec.n_images = f.at("n_images").get<std::size_t>();
    rec.skipped = f.at("skipped").get<bool>();
    rec.skip_reason = f.value("skip_reason", "");
    for (const auto& c : f.at("corrupted"))
      rec.corrupted.push_back({c.at("file").get<std::string>(), c.at("noise_seed").get<std::uint64_t>()});
    m.folders.push_back(std::move(rec));
  }
  m.n_images = j.at("n_images").get<std::size_t>();
  m.n_corrupted = j.at("n_corrupted").get<std::size_t>();
  return m;
}

namespace detail {

inline FolderRecord corrupt_folder(const std::filesystem::path& root, const std::filesystem::path& out_root,
                                   const std::filesystem::path& day_dir, const NoiseSpec& spec) {
  namespace fs = std::filesystem;
  FolderRecord rec;
  rec.folder = day_dir.lexically_relative(root).generic_string();
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(day_dir))
    if (entry.is_regular_file() && has_image_extension(entry.path())) images.push_back(entry.path());
  std::sort(images.begin(), images.end());
  rec.n_images = images.size();

  if (images.size() < static_cast<std::size_t>(spec.per_folder_count)) {
    rec.skipped = true;
    rec.skip_reason = "folder has " + std::to_string(images.size()) + " images, fewer than " +
                      std::to_string(spec.per_folder_count);
    return rec;
  }
  // Per-folder stream: selection does not depend on traversal order or worker count.
  std::mt19937_64 rng(derive_seed(spec.master_seed, rec.folder));
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(spec.per_folder_count));
  std::sort(idx.begin(), idx.end());

  for (std::size_t i : idx) {
    const std::string rel = images[i].lexically_relative(root).generic_string();
    const std::uint64_t seed = derive_seed(spec.master_seed, "noise:" + rel);
    write_image(out_root / rel, apply_noise(read_image(images[i]), spec, seed));
    rec.corrupted.push_back({rel, seed});
  }
  return rec;
}

}  // namespace detail

// Copies the tree to out_root, then replaces per_folder_count images in every
// day folder with noisy versions. Folder-parallel; output is independent of
// the worker count.
inline CorruptionManifest corrupt_dataset(const std::filesystem::path& root, const std::filesystem::path& out_root,
                                          const NoiseSpec& spec, unsigned workers = 1) {
  namespace fs = std::filesystem;
  validate(spec);
  if (!fs::is_directory(root)) throw EmptyDatasetError("dataset root does not exist: " + root.string());
  if (fs::exists(out_root) && fs::equivalent(root, out_root))
    throw ConfigError("output root must differ from input root");

  fs::create_directories(out_root);
  fs::copy(root, out_root, fs::copy_options::recursive | fs::copy_options::overwrite_existing);

  std::vector<fs::path> day_dirs;
  for (const auto& veg : fs::directory_iterator(root)) {
    if (!veg.is_directory()) continue;
    for (const auto& day : fs::directory_iterator(veg.path())) {
      if (!day.is_directory()) continue;
      parse_day_folder_name(day.path().filename().string());
      day_dirs.push_back(day.path());
    }
  }
  std::sort(day_dirs.begin(), day_dirs.end());

  std::vector<FolderRecord> records(day_dirs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < day_dirs.size(); i = next++) {
      try {
        records[i] = detail::corrupt_folder(root, out_root, day_dirs[i], spec);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  CorruptionManifest m;
  m.spec = spec;
  for (auto& r : records) {
    m.n_images += r.n_images;
    m.n_corrupted += r.corrupted.size();
    m.folders.push_back(std::move(r));
  }
  return m;
}

// Default manifest location: a sibling of the output tree, so the tree itself
// stays a clean dataset.
inline std::filesystem::path default_corruption_manifest_path(const std::filesystem::path& out_root) {
  auto p = out_root.lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  return p.parent_path() / (p.filename().string() + ".corruption.json");
}

}  // namespace freshcast
