#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "freshcast/core/error.hpp"

namespace freshcast {

using json = nlohmann::json;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Keys are sorted (nlohmann default), so equal documents serialize to equal bytes.
inline void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

inline constexpr const char* kToolkitVersion = "0.3.0";

// Provenance block embedded in every artifact the CLI writes.
inline json make_provenance(const std::string& command, const json& resolved_config,
                            std::uint64_t seed) {
  return json{{"tool", "freshcast"},
              {"version", kToolkitVersion},
              {"command", command},
              {"config", resolved_config},
              {"seed", seed}};
}

}  // namespace freshcast
