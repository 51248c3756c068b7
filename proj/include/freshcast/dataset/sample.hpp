#pragma once

#include <array>
#include <filesystem>
#include <regex>
#include <string>
#include <string_view>

#include "freshcast/core/error.hpp"

namespace freshcast {

enum class Spoilage : int { fresh = 1, slightly_spoiled = 2, completely_spoiled = 3 };

inline constexpr std::array<Spoilage, 3> kSpoilageClasses{Spoilage::fresh, Spoilage::slightly_spoiled,
                                                          Spoilage::completely_spoiled};

// The produce set the reference dataset was captured for. Discovery from
// folders is authoritative; this list only drives the "expected 8" warning.
inline constexpr std::array<std::string_view, 8> kReferenceVegetables{
    "mosambi", "lemon", "tomato", "bitter_gourd", "ladies_finger", "brinjal", "green_beans", "beans"};

inline constexpr std::string_view spoilage_name(Spoilage s) {
  switch (s) {
    case Spoilage::fresh: return "fresh";
    case Spoilage::slightly_spoiled: return "slightly_spoiled";
    case Spoilage::completely_spoiled: return "completely_spoiled";
  }
  return "unknown";
}

inline Spoilage spoilage_from_code(int code) {
  if (code < 1 || code > 3) throw LabelError("spoilage code " + std::to_string(code) + " not in {1,2,3}");
  return static_cast<Spoilage>(code);
}

inline int spoilage_code(Spoilage s) { return static_cast<int>(s); }

// Zero-based class index used by the models.
inline int spoilage_index(Spoilage s) { return static_cast<int>(s) - 1; }

struct DayFolder {
  int day = 0;
  Spoilage spoilage = Spoilage::fresh;
  bool operator==(const DayFolder&) const = default;
};

// Parses `day<x>_<y>`: x is the capture day (>= 1), y the spoilage code.
inline DayFolder parse_day_folder_name(std::string_view name) {
  static const std::regex pattern(R"(^day(\d+)_(\d+)$)");
  std::cmatch m;
  if (!std::regex_match(name.begin(), name.end(), m, pattern))
    throw ParseError("folder '" + std::string(name) + "' does not match day<x>_<y>");
  int day = 0;
  int code = 0;
  try {
    day = std::stoi(m[1].str());
    code = std::stoi(m[2].str());
  } catch (const std::out_of_range&) {
    throw ParseError("folder '" + std::string(name) + "' has an out-of-range number");
  }
  if (day < 1) throw ParseError("folder '" + std::string(name) + "': day must be >= 1");
  try {
    return {day, spoilage_from_code(code)};
  } catch (const LabelError& e) {
    throw LabelError("folder '" + std::string(name) + "': " + e.what());
  }
}

inline std::string day_folder_name(DayFolder f) {
  return "day" + std::to_string(f.day) + "_" + std::to_string(spoilage_code(f.spoilage));
}

struct Sample {
  std::filesystem::path image_path;
  std::string vegetable;
  Spoilage spoilage = Spoilage::fresh;
  int day = 1;
  // "<vegetable>/<day folder>"; all images of one capture day share it.
  std::string instance_group;

  bool operator==(const Sample&) const = default;
};

}  // namespace freshcast
