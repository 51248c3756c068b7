#pragma once

#include <fmt/format.h>

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "freshcast/eval/evaluate.hpp"

namespace freshcast::eval {

// original - noisy, per metric.
struct DiffRow {
  std::string model_id;
  double vegetable_f1_diff = 0.0;
  double spoilage_f1_diff = 0.0;
  double mse_diff = 0.0;
  double smape_diff = 0.0;
};

using DiffReport = std::vector<DiffRow>;

// Rows follow the order of `original`.
inline DiffReport diff_table(const std::vector<MetricsReport>& original, const std::vector<MetricsReport>& noisy) {
  std::map<std::string, const MetricsReport*> by_id;
  for (const auto& r : noisy)
    if (!by_id.emplace(r.model_id, &r).second) throw PairingError("duplicate model_id '" + r.model_id + "' in noisy reports");
  std::set<std::string> seen;
  DiffReport out;
  for (const auto& o : original) {
    if (!seen.insert(o.model_id).second) throw PairingError("duplicate model_id '" + o.model_id + "' in original reports");
    auto it = by_id.find(o.model_id);
    if (it == by_id.end()) throw PairingError("model_id '" + o.model_id + "' has no noisy counterpart");
    const auto& n = *it->second;
    out.push_back({o.model_id, o.vegetable_f1 - n.vegetable_f1, o.spoilage_f1 - n.spoilage_f1, o.mse - n.mse, o.smape - n.smape});
  }
  for (const auto& [id, r] : by_id)
    if (!seen.count(id)) throw PairingError("model_id '" + id + "' has no original counterpart");
  return out;
}

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{"model_id", "vegetable_f1", "spoilage_f1", "mse", "smape"};
  return cols;
}

inline std::string join_header() {
  std::string h;
  for (const auto& c : csv_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

inline std::string to_csv(const std::vector<MetricsReport>& reports) {
  std::string out = join_header() + "\n";
  for (const auto& r : reports)
    out += fmt::format("{},{},{},{},{}\n", r.model_id, r.vegetable_f1, r.spoilage_f1, r.mse, r.smape);
  return out;
}

inline std::string to_csv(const DiffReport& diff) {
  std::string out = join_header() + "\n";
  for (const auto& d : diff)
    out += fmt::format("{},{},{},{},{}\n", d.model_id, d.vegetable_f1_diff, d.spoilage_f1_diff, d.mse_diff,
                       d.smape_diff);
  return out;
}

inline json to_json(const DiffRow& d) {
  return {{"model_id", d.model_id},
          {"vegetable_f1_diff", d.vegetable_f1_diff},
          {"spoilage_f1_diff", d.spoilage_f1_diff},
          {"mse_diff", d.mse_diff},
          {"smape_diff", d.smape_diff}};
}

inline json to_json(const DiffReport& diff) {
  json rows = json::array();
  for (const auto& d : diff) rows.push_back(to_json(d));
  return rows;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace detail

// Reads the fixed five-column layout; values are interpreted as differences.
inline DiffReport diff_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || detail::split_csv_line(line) != csv_columns())
    throw ParseError("CSV header must be: " + join_header());
  DiffReport out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) throw ParseError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells");
    try {
      out.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])});
    } catch (const std::exception&) {
      throw ParseError("CSV line " + std::to_string(line_no) + " has a non-numeric value");
    }
  }
  return out;
}

inline std::vector<MetricsReport> reports_from_csv(const std::string& text, const std::string& dataset_id = "other") {
  std::vector<MetricsReport> out;
  for (const auto& row : diff_from_csv(text)) {
    MetricsReport r{row.model_id, dataset_id, row.vegetable_f1_diff, row.spoilage_f1_diff, row.mse_diff, row.smape_diff, {}};
    r.validate();
    out.push_back(r);
  }
  return out;
}

}  // namespace freshcast::eval
