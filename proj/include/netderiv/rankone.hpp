#pragma once

#include <vector>

#include "netderiv/network.hpp"

namespace netderiv {

// Weights constrained to rank one: u = a b^T and w_k = c_k e_k^T. Gradients
// in the factor vectors collapse to a scalar times a fixed direction, which
// is the point of the representation; ScaledVec keeps the two apart.
struct RankOneWeights {
  Vec a;
  Vec b;
  std::vector<Vec> c;
  std::vector<Vec> e;

  WeightSet expand(const NetworkSpec& spec) const;
  void validate(const NetworkSpec& spec) const;
};

struct ScaledVec {
  double scale = 0.0;
  Vec vec;

  Vec densify() const;
};

struct RankOneGrads {
  ScaledVec da;
  ScaledVec db;
  std::vector<ScaledVec> dc;
  std::vector<ScaledVec> de;
};

RankOneGrads rankone_grads(const NetworkSpec& spec, const RankOneWeights& r1,
                           const Sample& sample);

}  // namespace netderiv
