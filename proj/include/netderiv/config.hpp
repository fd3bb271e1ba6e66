#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netderiv/fd.hpp"
#include "netderiv/hessian.hpp"
#include "netderiv/network.hpp"

namespace netderiv {

inline constexpr int kConfigSchemaVersion = 1;

// One verification run. Everything random downstream is derived from `seed`,
// so a config fixes the run completely.
struct RunConfig {
  std::uint64_t seed = 42;
  NetworkSpec net;  // base net; used by storage accounting and echoed in the report
  int batch = 3;
  std::vector<std::string> checks;
  FDConfig fd;
  std::size_t dense_cap = kDefaultDenseCap;

  void validate() const;
};

// Default config: small tanh net, all suites.
RunConfig default_config();

// Parses and validates a JSON config document. Unknown keys and malformed
// values are rejected; throws ValidationError with a diagnostic.
RunConfig parse_config(const std::string& text);

}  // namespace netderiv
