#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "netderiv/config.hpp"
#include "netderiv/errors.hpp"
#include "netderiv/report.hpp"
#include "netderiv/suites.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw netderiv::ValidationError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification harness for factored network derivatives"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  bool parallel = false;
  bool timings = false;
  std::uint64_t seed_val = 0;
  std::vector<std::string> suite_override;

  app.add_option("--config", config_path, "JSON run configuration (defaults built in)");
  app.add_option("--out", out_path, "write the JSON report here instead of stdout");
  app.add_flag("--parallel", parallel, "run independent fixtures on worker threads");
  app.add_flag("--timings", timings,
               "record wall-clock time per check; off by default so reports are byte-stable");
  CLI::Option* seed_opt = app.add_option("--seed", seed_val, "override the config seed");

  struct SubDef {
    const char* cmd;
    const char* suite;
    const char* help;
  };
  const std::vector<SubDef> defs = {
      {"verify-grad", "grad", "gradient factors against finite differences"},
      {"verify-hess", "hess", "piecewise-linear Hessian blocks against finite differences"},
      {"verify-hess-general", "hess-general", "smooth-activation Hessian blocks"},
      {"quadform", "quadform", "factored quadratic form against the dense matrix"},
      {"curvature", "curvature", "minimum curvature extraction"},
      {"reg", "reg", "input-gradient and curvature regularizers"},
      {"bound", "bound", "output perturbation bound"},
      {"rnn", "rnn", "recurrent network derivatives"},
      {"conv", "conv", "convolution layer derivatives"},
      {"rankone", "rankone", "rank-one factored weight gradients"},
      {"storage-report", "storage", "factor storage accounting"},
  };
  std::vector<CLI::App*> subs;
  subs.reserve(defs.size());
  for (const SubDef& d : defs) {
    CLI::App* s = app.add_subcommand(d.cmd, d.help);
    s->fallthrough();
    subs.push_back(s);
  }
  CLI::App* run_cmd = app.add_subcommand("run", "run every suite listed in the config");
  run_cmd->fallthrough();
  run_cmd->add_option("--suite", suite_override, "restrict to these suites (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  netderiv::RunConfig cfg;
  try {
    cfg = config_path.empty() ? netderiv::default_config()
                              : netderiv::parse_config(slurp(config_path));
    if (seed_opt->count() > 0) cfg.seed = seed_val;
    if (run_cmd->parsed()) {
      if (!suite_override.empty()) cfg.checks = suite_override;
    } else {
      for (std::size_t i = 0; i < defs.size(); ++i)
        if (subs[i]->parsed()) cfg.checks = {defs[i].suite};
    }
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const netderiv::SuiteContext ctx{cfg, parallel, timings};
    std::vector<netderiv::CheckResult> results;
    results.reserve(cfg.checks.size());
    for (const std::string& name : cfg.checks)
      results.push_back(netderiv::run_suite(name, ctx));

    const std::string doc = netderiv::render_report(cfg, results);
    if (out_path.empty()) {
      std::cout << doc;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) {
        std::cerr << "cannot write report to '" << out_path << "'\n";
        return 3;
      }
      out << doc;
    }
    for (const netderiv::CheckResult& r : results)
      if (!r.pass) return 1;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
