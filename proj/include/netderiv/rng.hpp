#pragma once

#include <cstdint>

namespace netderiv {

// Deterministic splitmix64 generator. The integer stream depends only on the
// seed, so fixtures and reports derived from it are reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller.
  double normal();

  // Uniform integer on [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

 private:
  std::uint64_t state_;
};

}  // namespace netderiv
