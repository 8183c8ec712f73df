#include "egoexo/metrics/report.hpp"

#include <cstdio>

namespace egoexo::metrics {

void EvaluationReport::add(std::string metric, double value, std::size_t evaluated, std::size_t excluded) {
  entries.push_back({std::move(metric), value, evaluated, excluded});
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& e : entries)
    metrics.push_back({{"metric", e.metric}, {"value", e.value}, {"evaluated", e.evaluated}, {"excluded", e.excluded}});
  return {{"task", task}, {"metrics", metrics}, {"switches", switches}, {"unavailable", unavailable}};
}

std::string EvaluationReport::to_text() const {
  std::string out;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-16s %.6f evaluated=%zu excluded=%zu\n", e.metric.c_str(), e.value,
                  e.evaluated, e.excluded);
    out += buf;
  }
  for (const auto& u : unavailable) out += u + " unavailable\n";
  return out;
}

}  // namespace egoexo::metrics
