#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netderiv/config.hpp"

namespace netderiv {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";

struct CheckResult {
  std::string name;
  bool pass = false;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::int64_t runtime_ms = 0;  // stays 0 unless timings were requested
  std::map<std::string, std::int64_t> counters;
};

// Renders the run as one JSON document: schema/version header, config echo,
// one record per check, and an overall status. Key order is fixed and
// runtime_ms defaults to 0, so equal (config, seed) runs emit identical
// bytes.
std::string render_report(const RunConfig& cfg, const std::vector<CheckResult>& results);

}  // namespace netderiv
