#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace egoexo::metrics {

struct ReportEntry {
  std::string metric;
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

struct EvaluationReport {
  std::string task;
  std::vector<ReportEntry> entries;
  nlohmann::json switches = nlohmann::json::object();
  std::vector<std::string> unavailable;

  void add(std::string metric, double value, std::size_t evaluated, std::size_t excluded = 0);
  nlohmann::json to_json() const;
  /// One "metric value evaluated excluded" line per entry.
  std::string to_text() const;
};

}  // namespace egoexo::metrics
