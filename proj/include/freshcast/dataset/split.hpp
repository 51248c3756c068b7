#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "freshcast/core/json_io.hpp"
#include "freshcast/core/seed.hpp"
#include "freshcast/dataset/sample.hpp"

namespace freshcast {

enum class Split { train, val, test };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train|val|test)");
}

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;

  double operator[](Split s) const { return s == Split::train ? train : s == Split::val ? val : test; }
};

// Deterministic train/val/test partition at day-folder granularity, plus the
// label encodings. Serialized form is the contract between ingest, trainer,
// evaluator and service.
struct SplitManifest {
  std::filesystem::path dataset_root;
  std::vector<Sample> samples;
  std::map<std::string, Split> split_assignments;  // instance_group -> split
  std::map<std::string, int> vegetable_index;
  std::map<int, int> spoilage_index;  // code -> index
  std::map<std::string, int> max_day_per_vegetable;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::vector<std::string> warnings;
  json provenance;

  Split split_of(const Sample& s) const { return split_assignments.at(s.instance_group); }

  std::vector<Sample> samples_in(Split split) const {
    std::vector<Sample> out;
    for (const auto& s : samples)
      if (split_of(s) == split) out.push_back(s);
    return out;
  }

  std::vector<std::string> vegetable_names() const {
    std::vector<std::string> names(vegetable_index.size());
    for (const auto& [name, idx] : vegetable_index) names.at(static_cast<std::size_t>(idx)) = name;
    return names;
  }

  int vegetable_of(const std::string& name) const {
    auto it = vegetable_index.find(name);
    if (it == vegetable_index.end()) throw LabelError("vegetable '" + name + "' not in manifest");
    return it->second;
  }

  // Same manifest pointed at another copy of the tree (e.g. the noisy variant).
  SplitManifest with_root(const std::filesystem::path& new_root) const {
    SplitManifest m = *this;
    for (auto& s : m.samples) s.image_path = new_root / s.image_path.lexically_relative(dataset_root);
    m.dataset_root = new_root;
    return m;
  }
};

namespace detail {

// Largest-remainder apportionment of n items over the three ratios.
// Ties on the fractional part go to the split with the smaller tie key.
inline std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& r,
                                            const std::array<std::uint64_t, 3>& tie_keys) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = static_cast<double>(n) * r[kSplits[k]];
    counts[k] = static_cast<std::size_t>(std::floor(quota + 1e-12));
    rem[k] = quota - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(rem[a] - rem[b]) > 1e-12) return rem[a] > rem[b];
    return tie_keys[a] < tie_keys[b];
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]] += 1;
  return counts;
}

inline bool honors_all_splits(const std::array<std::size_t, 3>& counts, const SplitRatios& r) {
  for (std::size_t k = 0; k < 3; ++k)
    if (r[kSplits[k]] > 0.0 && counts[k] == 0) return false;
  return true;
}

inline void assign_groups(std::vector<std::string> groups, const std::string& stratum, const SplitRatios& r,
                          std::uint64_t seed, std::map<std::string, Split>& out) {
  std::sort(groups.begin(), groups.end(), [&](const std::string& a, const std::string& b) {
    const auto ha = derive_seed(seed, "group:" + a);
    const auto hb = derive_seed(seed, "group:" + b);
    return ha != hb ? ha < hb : a < b;
  });
  std::array<std::uint64_t, 3> tie{};
  for (std::size_t k = 0; k < 3; ++k) tie[k] = derive_seed(seed, "tie:" + stratum + ":" + split_name(kSplits[k]));
  const auto counts = apportion(groups.size(), r, tie);
  std::size_t i = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < counts[k]; ++c) out[groups[i++]] = kSplits[k];
}

}  // namespace detail

inline void validate_ratios(const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

// Stratified by vegetable; falls back to a global assignment (with a warning)
// when some vegetable has too few day folders to populate every split.
inline SplitManifest make_splits(const std::vector<Sample>& samples, const SplitRatios& ratios, std::uint64_t seed,
                                 const std::filesystem::path& dataset_root = {}) {
  validate_ratios(ratios);
  if (samples.empty()) throw EmptyDatasetError("cannot split an empty sample list");

  SplitManifest m;
  m.dataset_root = dataset_root;
  m.samples = samples;
  std::sort(m.samples.begin(), m.samples.end(),
            [](const Sample& a, const Sample& b) { return a.image_path < b.image_path; });
  m.seed = seed;
  m.ratios = ratios;

  std::map<std::string, std::set<std::string>> groups_by_veg;
  for (const auto& s : m.samples) groups_by_veg[s.vegetable].insert(s.instance_group);

  bool stratified_ok = true;
  for (const auto& [veg, groups] : groups_by_veg) {
    std::array<std::uint64_t, 3> tie{};
    for (std::size_t k = 0; k < 3; ++k) tie[k] = derive_seed(seed, "tie:" + veg + ":" + split_name(kSplits[k]));
    if (!detail::honors_all_splits(detail::apportion(groups.size(), ratios, tie), ratios)) {
      m.warnings.push_back("stratification: vegetable '" + veg + "' has only " + std::to_string(groups.size()) +
                           " day folders; using global assignment");
      stratified_ok = false;
    }
  }
  if (stratified_ok) {
    for (const auto& [veg, groups] : groups_by_veg)
      detail::assign_groups({groups.begin(), groups.end()}, veg, ratios, seed, m.split_assignments);
  } else {
    std::vector<std::string> all;
    for (const auto& [veg, groups] : groups_by_veg) all.insert(all.end(), groups.begin(), groups.end());
    detail::assign_groups(all, "*", ratios, seed, m.split_assignments);
  }

  int idx = 0;
  for (const auto& [veg, groups] : groups_by_veg) m.vegetable_index[veg] = idx++;
  for (Spoilage s : kSpoilageClasses) m.spoilage_index[spoilage_code(s)] = spoilage_index(s);
  if (m.vegetable_index.size() != kReferenceVegetables.size())
    m.warnings.push_back("manifest has " + std::to_string(m.vegetable_index.size()) + " vegetable classes, expected " +
                         std::to_string(kReferenceVegetables.size()));

  std::map<std::string, int> all_max;
  for (const auto& s : m.samples) {
    all_max[s.vegetable] = std::max(all_max[s.vegetable], s.day);
    if (m.split_of(s) == Split::train)
      m.max_day_per_vegetable[s.vegetable] = std::max(m.max_day_per_vegetable[s.vegetable], s.day);
  }
  for (const auto& [veg, d] : all_max) {
    if (!m.max_day_per_vegetable.contains(veg)) {
      m.max_day_per_vegetable[veg] = d;
      m.warnings.push_back("vegetable '" + veg + "' has no training folders; max day taken over all splits");
    }
  }
  return m;
}

inline json to_json(const SplitManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    const auto rel = m.dataset_root.empty() ? s.image_path : s.image_path.lexically_relative(m.dataset_root);
    samples.push_back({{"path", rel.generic_string()},
                       {"vegetable", s.vegetable},
                       {"spoilage", spoilage_code(s.spoilage)},
                       {"day", s.day},
                       {"instance_group", s.instance_group}});
  }
  json assignments = json::object();
  for (const auto& [g, sp] : m.split_assignments) assignments[g] = split_name(sp);
  json spoil = json::object();
  for (const auto& [code, idx] : m.spoilage_index) spoil[std::to_string(code)] = idx;
  json doc{{"format", "freshcast.split_manifest/1"},
           {"dataset_root", m.dataset_root.generic_string()},
           {"samples", samples},
           {"split_assignments", assignments},
           {"vegetable_index", m.vegetable_index},
           {"spoilage_index", spoil},
           {"max_day_per_vegetable", m.max_day_per_vegetable},
           {"seed", m.seed},
           {"ratios", {m.ratios.train, m.ratios.val, m.ratios.test}},
           {"warnings", m.warnings}};
  if (!m.provenance.is_null()) doc["provenance"] = m.provenance;
  return doc;
}

inline SplitManifest manifest_from_json(const json& doc) {
  try {
    SplitManifest m;
    m.dataset_root = doc.at("dataset_root").get<std::string>();
    for (const auto& s : doc.at("samples")) {
      Sample sample;
      sample.image_path = m.dataset_root / std::filesystem::path(s.at("path").get<std::string>());
      sample.vegetable = s.at("vegetable").get<std::string>();
      sample.spoilage = spoilage_from_code(s.at("spoilage").get<int>());
      sample.day = s.at("day").get<int>();
      sample.instance_group = s.at("instance_group").get<std::string>();
      m.samples.push_back(std::move(sample));
    }
    for (const auto& [g, sp] : doc.at("split_assignments").items()) m.split_assignments[g] = split_from_name(sp);
    m.vegetable_index = doc.at("vegetable_index").get<std::map<std::string, int>>();
    for (const auto& [code, idx] : doc.at("spoilage_index").items()) m.spoilage_index[std::stoi(code)] = idx.get<int>();
    m.max_day_per_vegetable = doc.at("max_day_per_vegetable").get<std::map<std::string, int>>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    const auto r = doc.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw ParseError("ratios must have three entries");
    m.ratios = {r[0], r[1], r[2]};
    m.warnings = doc.value("warnings", std::vector<std::string>{});
    if (doc.contains("provenance")) m.provenance = doc.at("provenance");
    for (const auto& s : m.samples)
      if (!m.split_assignments.contains(s.instance_group))
        throw ParseError("sample group '" + s.instance_group + "' has no split assignment");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed split manifest: ") + e.what());
  }
}

inline SplitManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path));
}

}  // namespace freshcast
