#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "freshcast/dataset/sample.hpp"
#include "freshcast/image/image.hpp"

namespace freshcast {

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
};

struct ScanResult {
  std::vector<Sample> samples;  // sorted by image path
  std::vector<SkippedFile> skipped;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_children(const std::filesystem::path& dir, bool dirs) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (dirs ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Walks <root>/<vegetable>/day<x>_<y>/<image>. Unreadable files go to the skip
// report; a malformed day folder is an error.
inline ScanResult scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw EmptyDatasetError("dataset root does not exist: " + root.string());

  ScanResult result;
  const auto vegetables = detail::sorted_children(root, true);
  if (vegetables.empty()) throw EmptyDatasetError("dataset root has no vegetable folders: " + root.string());

  for (const auto& veg_dir : vegetables) {
    const std::string vegetable = veg_dir.filename().string();
    for (const auto& day_dir : detail::sorted_children(veg_dir, true)) {
      const std::string folder = day_dir.filename().string();
      DayFolder parsed;
      try {
        parsed = parse_day_folder_name(folder);
      } catch (const LabelError& e) {
        throw LabelError(vegetable + "/" + e.what());
      } catch (const ParseError& e) {
        throw ParseError(vegetable + "/" + e.what());
      }
      for (const auto& file : detail::sorted_children(day_dir, false)) {
        if (!has_image_extension(file)) {
          result.skipped.push_back({file, "not an image file"});
          continue;
        }
        if (!cv::haveImageReader(file.string())) {
          result.skipped.push_back({file, "unreadable image header"});
          continue;
        }
        result.samples.push_back({file, vegetable, parsed.spoilage, parsed.day, vegetable + "/" + folder});
      }
    }
  }
  if (result.samples.empty()) throw EmptyDatasetError("no images found under " + root.string());

  std::sort(result.samples.begin(), result.samples.end(),
            [](const Sample& a, const Sample& b) { return a.image_path < b.image_path; });
  if (vegetables.size() != kReferenceVegetables.size()) {
    result.warnings.push_back("found " + std::to_string(vegetables.size()) + " vegetable classes, expected " +
                              std::to_string(kReferenceVegetables.size()));
  }
  return result;
}

}  // namespace freshcast
