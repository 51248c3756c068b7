#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "freshcast/core/error.hpp"

namespace freshcast::service {

// Days left = last observed day for the vegetable minus the estimated day, floored at 0.
inline double remaining_shelf_life(double day_estimate, const std::string& vegetable, const std::map<std::string, int>& max_day) {
  auto it = max_day.find(vegetable);
  if (it == max_day.end()) throw LabelError("no max day recorded for vegetable '" + vegetable + "'");
  if (!std::isfinite(day_estimate)) throw LabelError("day estimate is not finite");
  return std::max(0.0, static_cast<double>(it->second) - day_estimate);
}

}  // namespace freshcast::service
