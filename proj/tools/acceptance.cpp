// Acceptance gate: one line per criterion, exit 0 only if every criterion
// holds. Pass the verification CLI binary as argv[1]; the repeatability
// criterion shells out to it.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "netderiv/config.hpp"
#include "netderiv/report.hpp"
#include "netderiv/suites.hpp"

namespace {

struct Timed {
  netderiv::CheckResult res;
  double seconds = 0.0;
  std::string error;  // nonempty if the suite threw

  bool ok() const { return error.empty() && res.pass; }
};

Timed run_timed(const std::string& name, const netderiv::SuiteContext& ctx) {
  Timed t;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    t.res = netderiv::run_suite(name, ctx);
  } catch (const std::exception& e) {
    t.error = e.what();
    t.res.pass = false;
  }
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* pat, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pat, v);
  return buf;
}

int run_cli(const std::string& cli, const std::string& out_path) {
  const std::string cmd = "\"" + cli + "\" run --parallel --out \"" + out_path + "\"";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -1;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  if (argc > 1) {
    cli = argv[1];
  } else {
    const std::filesystem::path self(argv[0]);
    cli = (self.parent_path() / "netderiv").string();
  }

  const netderiv::RunConfig cfg = netderiv::default_config();
  const netderiv::SuiteContext ctx{cfg, /*parallel=*/true, /*timings=*/false};

  std::map<std::string, Timed> by_name;
  for (const std::string& name : netderiv::suite_names()) by_name[name] = run_timed(name, ctx);

  int passed = 0;
  int number = 0;
  auto line = [&](bool ok, const std::string& label, const std::string& detail) {
    ++number;
    std::printf("%s  criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", number, label.c_str(),
                detail.empty() ? "" : " (", detail.empty() ? "" : (detail + ")").c_str());
    if (ok) ++passed;
  };
  auto err_of = [&](const Timed& t) {
    if (!t.error.empty()) return "error: " + t.error;
    return "max_rel_err=" + fmt("%.3g", t.res.max_rel_err) + ", " + fmt("%.1f", t.seconds) + "s";
  };

  const Timed& grad = by_name.at("grad");
  line(grad.error.empty() && grad.res.max_rel_err <= 1e-6 && grad.seconds <= 10.0,
       "gradient factors match finite differences within 1e-6 in under 10s", err_of(grad));

  const Timed& hess = by_name.at("hess");
  line(hess.ok() && hess.seconds <= 30.0,
       "piecewise-linear Hessian blocks match differentiated gradients in under 30s",
       err_of(hess));

  const Timed& hg = by_name.at("hess-general");
  line(hg.ok(), "smooth-activation Hessian blocks match; general path collapses on ReLU",
       err_of(hg));

  const Timed& qf = by_name.at("quadform");
  line(qf.ok(), "factored quadratic form matches dense values with zero allocations",
       err_of(qf));

  const Timed& curv = by_name.at("curvature");
  line(curv.ok(), "minimum curvature agrees with the dense eigendecomposition", err_of(curv));

  bool rank_ok = grad.error.empty() && grad.res.pass;
  if (rank_ok) {
    const auto it = grad.res.counters.find("rank_violations");
    rank_ok = it != grad.res.counters.end() && it->second == 0;
  }
  line(rank_ok, "per-sample gradient blocks are rank one; batch means bounded by batch size",
       grad.error.empty() ? "" : "error: " + grad.error);

  const Timed& storage = by_name.at("storage");
  line(storage.ok(), "factor storage counts and the streaming bound hold exactly",
       err_of(storage));

  const Timed& reg = by_name.at("reg");
  const Timed& bound = by_name.at("bound");
  line(reg.ok() && bound.ok(),
       "regularizer gradients and the perturbation bound match finite differences",
       err_of(reg) + "; bound " + err_of(bound));

  const Timed& rnn = by_name.at("rnn");
  const Timed& conv = by_name.at("conv");
  const Timed& rankone = by_name.at("rankone");
  line(rnn.ok() && conv.ok() && rankone.ok(),
       "recurrent, convolution, and rank-one derivatives verified",
       "rnn " + err_of(rnn) + "; conv " + err_of(conv) + "; rankone " + err_of(rankone));

  {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const std::filesystem::path dir = std::filesystem::temp_directory_path();
    const std::string out1 = (dir / ("report_a_" + std::to_string(stamp) + ".json")).string();
    const std::string out2 = (dir / ("report_b_" + std::to_string(stamp) + ".json")).string();
    const int rc1 = run_cli(cli, out1);
    const int rc2 = run_cli(cli, out2);
    const std::string doc1 = slurp(out1);
    const std::string doc2 = slurp(out2);
    std::error_code ec;
    std::filesystem::remove(out1, ec);
    std::filesystem::remove(out2, ec);
    const bool ok = rc1 == 0 && rc2 == 0 && !doc1.empty() && doc1 == doc2;
    std::string detail = "exit codes " + std::to_string(rc1) + "/" + std::to_string(rc2);
    detail += doc1 == doc2 ? ", identical bytes" : ", reports differ";
    line(ok, "repeat runs with one config and seed emit byte-identical reports", detail);
  }

  std::printf("%d/%d criteria passed\n", passed, number);
  return passed == number ? 0 : 1;
}
