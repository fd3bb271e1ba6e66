#pragma once

#include <vector>

#include "netderiv/hessian.hpp"
#include "netderiv/network.hpp"
#include "netderiv/rankone.hpp"
#include "netderiv/recurrent.hpp"
#include "netderiv/rng.hpp"

namespace netderiv {

// Random desk-scale fixtures. Everything is driven by the caller's Rng so a
// seed pins the whole case.

NetworkSpec random_spec(Rng& rng, ActKind act, int n_lo, int n_hi, int dim_lo, int dim_hi,
                        int cls_lo, int cls_hi);
WeightSet random_weights(const NetworkSpec& spec, Rng& rng, double scale = 0.8);
Sample random_sample(const NetworkSpec& spec, Rng& rng);
Direction random_direction(const NetworkSpec& spec, Rng& rng);
RankOneWeights random_rankone(const NetworkSpec& spec, Rng& rng, double scale = 0.8);

struct TestNet {
  NetworkSpec spec;
  WeightSet weights;
  Sample sample;
  ForwardTrace trace;
};

TestNet random_net(Rng& rng, ActKind act, int n_lo = 1, int n_hi = 4, int dim_lo = 2,
                   int dim_hi = 6, int cls_lo = 2, int cls_hi = 5);

// ReLU case with every preactivation at least `margin` from the kink, found
// by resampling. Difference quotients on such a net never cross a kink, so
// the piecewise-linear identities hold exactly.
TestNet live_relu_net(Rng& rng, double margin, int n_lo = 1, int n_hi = 4, int dim_lo = 2,
                      int dim_hi = 6, int cls_lo = 2, int cls_hi = 5);

struct RnnCase {
  RecurrentSpec rs;
  std::vector<Vec> xs;
  int label = 0;
};

// ReLU recurrent case with every step preactivation at least `margin` above
// the kink. Weights and inputs are shifted positive so states stay live;
// unshifted draws tend to die within a step or two and every mixed block
// degenerates to zero.
RnnCase live_rnn_case(Rng& rng, int d, int d_in, int classes, int t_max, double margin);

}  // namespace netderiv
