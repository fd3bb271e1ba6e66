#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "netderiv/config.hpp"
#include "netderiv/errors.hpp"
#include "netderiv/report.hpp"
#include "netderiv/suites.hpp"

using namespace netderiv;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_path(const char* stem) {
  static const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  return (std::filesystem::temp_directory_path() /
          (std::string(stem) + "_" + std::to_string(stamp)))
      .string();
}

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + NETDERIV_BIN + "\" " + args + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, and rejection") {
  const RunConfig def = default_config();
  CHECK(def.seed == 42);
  CHECK(def.checks == suite_names());
  CHECK_NOTHROW(def.validate());

  const RunConfig cfg = parse_config(R"({
    "seed": 7,
    "net": {"n": 1, "dims": [2, 3], "classes": 2, "activation": "relu"},
    "batch": 2,
    "checks": ["storage", "grad"],
    "fd": {"step_first": 1e-6},
    "dense_cap": 900
  })");
  CHECK(cfg.seed == 7);
  CHECK(cfg.net.n == 1);
  CHECK(cfg.net.activation == ActKind::kReLU);
  CHECK(cfg.batch == 2);
  CHECK(cfg.checks.size() == 2);
  CHECK(cfg.fd.step_first == 1e-6);
  CHECK(cfg.dense_cap == 900);

  CHECK_THROWS_AS(parse_config("not json"), ValidationError);
  CHECK_THROWS_AS(parse_config("[1,2]"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"net": {"bogus": 1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 99})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "many"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"checks": []})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"checks": ["nosuch"]})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"net": {"n": 1, "dims": [2], "classes": 2}})"),
                  ValidationError);
}

TEST_CASE("report rendering is structured and stable") {
  const RunConfig cfg = default_config();
  CheckResult r;
  r.name = "storage";
  r.pass = true;
  r.max_rel_err = 0.0;
  r.tolerance = 0.0;
  r.counters["items"] = 3;
  const std::string doc = render_report(cfg, {r});
  const std::string doc2 = render_report(cfg, {r});
  CHECK(doc == doc2);
  CHECK(doc.back() == '\n');

  const nlohmann::json j = nlohmann::json::parse(doc);
  CHECK(j["schema_version"] == 1);
  CHECK(j["config"]["seed"] == 42);
  CHECK(j["checks"].size() == 1);
  CHECK(j["checks"][0]["name"] == "storage");
  CHECK(j["checks"][0]["status"] == "pass");
  CHECK(j["checks"][0]["counters"]["items"] == 3);
  CHECK(j["status"] == "pass");

  CheckResult bad = r;
  bad.pass = false;
  const nlohmann::json j2 = nlohmann::json::parse(render_report(cfg, {r, bad}));
  CHECK(j2["status"] == "fail");
}

TEST_CASE("binary: repeat runs emit identical bytes and exit zero") {
  const std::string out1 = tmp_path("cli_a");
  const std::string out2 = tmp_path("cli_b");
  CHECK(run("storage-report --out \"" + out1 + "\"") == 0);
  CHECK(run("storage-report --out \"" + out2 + "\"") == 0);
  const std::string doc1 = slurp(out1);
  CHECK(!doc1.empty());
  CHECK(doc1 == slurp(out2));
  const nlohmann::json j = nlohmann::json::parse(doc1);
  CHECK(j["checks"][0]["name"] == "storage");
  std::error_code ec;
  std::filesystem::remove(out1, ec);
  std::filesystem::remove(out2, ec);
}

TEST_CASE("binary: seed override changes the report but stays deterministic") {
  const std::string out1 = tmp_path("cli_s1");
  const std::string out2 = tmp_path("cli_s2");
  const std::string out3 = tmp_path("cli_s3");
  CHECK(run("verify-grad --seed 9 --out \"" + out1 + "\"") == 0);
  CHECK(run("verify-grad --seed 9 --out \"" + out2 + "\"") == 0);
  CHECK(run("verify-grad --seed 10 --out \"" + out3 + "\"") == 0);
  CHECK(slurp(out1) == slurp(out2));
  CHECK(slurp(out1) != slurp(out3));
  const nlohmann::json j = nlohmann::json::parse(slurp(out1));
  CHECK(j["config"]["seed"] == 9);
  std::error_code ec;
  for (const std::string& p : {out1, out2, out3}) std::filesystem::remove(p, ec);
}

TEST_CASE("binary: config-phase failures exit with code two") {
  const std::string bad = tmp_path("cli_bad") + ".json";
  {
    std::ofstream out(bad);
    out << "{\"bogus\": 1}\n";
  }
  CHECK(run("run --config \"" + bad + "\"") == 2);
  CHECK(run("run --config /definitely/missing.json") == 2);
  CHECK(run("run --suite nosuch") == 2);
  CHECK(run("") == 2);  // a subcommand is required
  std::error_code ec;
  std::filesystem::remove(bad, ec);
}

TEST_CASE("binary: suite selection flows from config checks") {
  const std::string cfg_path = tmp_path("cli_cfg") + ".json";
  {
    std::ofstream out(cfg_path);
    out << R"({"checks": ["storage", "conv"]})" << "\n";
  }
  const std::string out_path = tmp_path("cli_sel");
  CHECK(run("run --config \"" + cfg_path + "\" --out \"" + out_path + "\"") == 0);
  const nlohmann::json j = nlohmann::json::parse(slurp(out_path));
  REQUIRE(j["checks"].size() == 2);
  CHECK(j["checks"][0]["name"] == "storage");
  CHECK(j["checks"][1]["name"] == "conv");
  std::error_code ec;
  std::filesystem::remove(cfg_path, ec);
  std::filesystem::remove(out_path, ec);
}
