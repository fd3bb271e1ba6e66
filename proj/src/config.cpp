#include "netderiv/config.hpp"

#include <set>

#include "json.hpp"
#include "netderiv/errors.hpp"
#include "netderiv/suites.hpp"

namespace netderiv {

void RunConfig::validate() const {
  net.validate();
  fd.validate();
  if (batch < 1) throw ValidationError("config: batch must be positive");
  if (dense_cap < 1) throw ValidationError("config: dense_cap must be positive");
  if (checks.empty()) throw ValidationError("config: suite list is empty");
  for (const std::string& c : checks) {
    bool known = false;
    for (const std::string& s : suite_names())
      if (s == c) known = true;
    if (!known) throw ValidationError("config: unknown suite '" + c + "'");
  }
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.net.n = 2;
  cfg.net.dims = {3, 4, 3};
  cfg.net.classes = 3;
  cfg.net.activation = ActKind::kTanh;
  cfg.checks = suite_names();
  return cfg;
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  reject_unknown_keys(
      j, {"schema_version", "seed", "net", "batch", "checks", "fd", "dense_cap"}, "top level");

  RunConfig cfg = default_config();
  try {
    if (j.contains("schema_version") && j["schema_version"].get<int>() != kConfigSchemaVersion)
      throw ValidationError("config: unsupported schema_version");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("batch")) cfg.batch = j["batch"].get<int>();
    if (j.contains("dense_cap")) cfg.dense_cap = j["dense_cap"].get<std::size_t>();
    if (j.contains("checks")) cfg.checks = j["checks"].get<std::vector<std::string>>();
    if (j.contains("net")) {
      const json& n = j["net"];
      if (!n.is_object()) throw ValidationError("config: net must be an object");
      reject_unknown_keys(n, {"n", "dims", "classes", "activation"}, "net");
      if (n.contains("n")) cfg.net.n = n["n"].get<int>();
      if (n.contains("dims")) cfg.net.dims = n["dims"].get<std::vector<int>>();
      if (n.contains("classes")) cfg.net.classes = n["classes"].get<int>();
      if (n.contains("activation"))
        cfg.net.activation = act::from_string(n["activation"].get<std::string>());
    }
    if (j.contains("fd")) {
      const json& f = j["fd"];
      if (!f.is_object()) throw ValidationError("config: fd must be an object");
      reject_unknown_keys(f, {"step_first", "step_second", "kink_margin"}, "fd");
      if (f.contains("step_first")) cfg.fd.step_first = f["step_first"].get<double>();
      if (f.contains("step_second")) cfg.fd.step_second = f["step_second"].get<double>();
      if (f.contains("kink_margin")) cfg.fd.kink_margin = f["kink_margin"].get<double>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad field type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace netderiv
