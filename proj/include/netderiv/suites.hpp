#pragma once

#include <string>
#include <vector>

#include "netderiv/config.hpp"
#include "netderiv/report.hpp"

namespace netderiv {

struct SuiteContext {
  RunConfig cfg;
  bool parallel = false;
  bool timings = false;
};

// One function per suite. Each draws its fixtures from cfg.seed, measures
// the worst relative error it saw, and fails on that error or on any
// structural violation (rank, symmetry, counter mismatch). Fixture families
// and tolerances are fixed per suite; cfg supplies seed, fd steps, batch
// size, dense cap, and the base net where one is needed.
CheckResult check_grad(const SuiteContext& ctx);
CheckResult check_hess(const SuiteContext& ctx);
CheckResult check_hess_general(const SuiteContext& ctx);
CheckResult check_quadform(const SuiteContext& ctx);
CheckResult check_curvature(const SuiteContext& ctx);
CheckResult check_storage(const SuiteContext& ctx);
CheckResult check_reg(const SuiteContext& ctx);
CheckResult check_bound(const SuiteContext& ctx);
CheckResult check_rnn(const SuiteContext& ctx);
CheckResult check_conv(const SuiteContext& ctx);
CheckResult check_rankone(const SuiteContext& ctx);

const std::vector<std::string>& suite_names();

// Dispatch by suite name; unknown names throw ValidationError.
CheckResult run_suite(const std::string& name, const SuiteContext& ctx);

}  // namespace netderiv
