#include "netderiv/report.hpp"

#include "json.hpp"

namespace netderiv {

std::string render_report(const RunConfig& cfg, const std::vector<CheckResult>& results) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["artifact_version"] = kArtifactVersion;

  ordered_json net;
  net["n"] = cfg.net.n;
  net["dims"] = cfg.net.dims;
  net["classes"] = cfg.net.classes;
  net["activation"] = act::to_string(cfg.net.activation);
  ordered_json fd;
  fd["step_first"] = cfg.fd.step_first;
  fd["step_second"] = cfg.fd.step_second;
  fd["kink_margin"] = cfg.fd.kink_margin;
  ordered_json conf;
  conf["seed"] = cfg.seed;
  conf["net"] = net;
  conf["batch"] = cfg.batch;
  conf["checks"] = cfg.checks;
  conf["fd"] = fd;
  conf["dense_cap"] = cfg.dense_cap;
  doc["config"] = conf;

  bool all_pass = true;
  ordered_json checks = ordered_json::array();
  for (const CheckResult& r : results) {
    ordered_json c;
    c["name"] = r.name;
    c["status"] = r.pass ? "pass" : "fail";
    c["max_rel_err"] = r.max_rel_err;
    c["tolerance"] = r.tolerance;
    c["runtime_ms"] = r.runtime_ms;
    ordered_json counters = ordered_json::object();  // std::map iterates sorted, stable order
    for (const auto& [k, v] : r.counters) counters[k] = v;
    c["counters"] = counters;
    checks.push_back(c);
    all_pass = all_pass && r.pass;
  }
  doc["checks"] = checks;
  doc["status"] = all_pass ? "pass" : "fail";
  return doc.dump(2) + "\n";
}

}  // namespace netderiv
