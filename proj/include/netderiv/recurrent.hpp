#pragma once

#include <vector>

#include "netderiv/network.hpp"

namespace netderiv {

// ReLU recurrent cell with tied weights, shared by two variants:
//   layer:   v_(t) = A(w v_(t-1)),           v_(0) = x
//   network: v_(t) = A(w v_(t-1) + u x_(t-1)), v_(0) = 0, head p = z v_(n)
struct RecurrentSpec {
  int d = 0;
  int d_in = 0;
  int classes = 0;
  int t_max = 0;
  Mat w;  // d x d
  Mat u;  // d x d_in
  Mat z;  // classes x d

  void validate() const;
};

// Derivatives of the layer state v_(t) in the tied weight and the initial
// state. Second derivatives survive ReLU only through the paths where one
// unrolled copy of w feeds another, so both families below are sums over
// ordered step pairs.
struct RnnLayerDerivs {
  int d = 0;
  Rank3 dv_dw;  // (m, s, r): d v_t[m] / d w[s,r]
  Mat dv_dx;    // (m, i):    d v_t[m] / d x[i]

  double d2v_dwdw(int m, int i, int j, int q, int r) const;
  double d2v_dwdx(int m, int q, int r, int i) const;

  std::vector<double> ww;  // flat (m, i, j, q, r)
  std::vector<double> wx;  // flat (m, q, r, i)
};

RnnLayerDerivs rnn_layer_derivs(const RecurrentSpec& rs, const Vec& x, int t);

struct RnnTrace {
  std::vector<Vec> v;    // v[0] = 0 .. v[t_max]
  std::vector<Vec> pre;  // pre[t-1] = w v[t-1] + u x[t-1]
  Vec p;
  Vec yhat;
  double loss = 0.0;
};

RnnTrace rnn_forward(const RecurrentSpec& rs, const std::vector<Vec>& xs, int label);

// Loss gradients and all six Hessian block families of the network variant.
// Blocks are densified with row-major (row, col) flattening inside each
// parameter matrix; g[r-2] and eta_top[r-2] hold the per-step factors for
// unrolled step r-1, r in [2, t_max+1].
struct RnnNetworkDerivs {
  RnnTrace trace;
  Vec df_dp;
  Mat d2f_dp2;
  std::vector<Mat> eta_top;
  std::vector<Vec> g;

  Mat df_dz;
  Mat df_dw;
  Mat df_du;

  Mat hzz;
  Mat hzw;
  Mat hzu;
  Mat huu;
  Mat hwu;
  Mat hww;
};

RnnNetworkDerivs rnn_network_derivs(const RecurrentSpec& rs, const std::vector<Vec>& xs,
                                    int label);

}  // namespace netderiv
