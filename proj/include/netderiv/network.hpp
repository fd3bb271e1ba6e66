#pragma once

#include <vector>

#include "netderiv/activation.hpp"
#include "netderiv/linalg.hpp"

namespace netderiv {

// Feedforward classifier without bias terms:
//   v0 = x,  v_k = A(w_k v_{k-1}),  p = u v_n,  softmax + cross-entropy head.
//
// dims holds n+1 entries d0..dn; layer k (1-based) maps d_{k-1} -> d_k with
// weight matrix w_k of shape d_k x d_{k-1}. The head u is classes x dn.
struct NetworkSpec {
  int n = 0;
  std::vector<int> dims;
  int classes = 0;
  ActKind activation = ActKind::kTanh;

  int dim(int k) const { return dims[static_cast<std::size_t>(k)]; }  // k in [0, n]
  int input_dim() const { return dims.front(); }
  int top_dim() const { return dims.back(); }

  void validate() const;
};

struct WeightSet {
  std::vector<Mat> w;  // w[k-1] is layer k
  Mat u;

  const Mat& layer(int k) const { return w[static_cast<std::size_t>(k - 1)]; }
  Mat& layer(int k) { return w[static_cast<std::size_t>(k - 1)]; }

  static WeightSet zeros(const NetworkSpec& spec);
  void validate(const NetworkSpec& spec) const;
};

struct Sample {
  Vec x;
  Vec y;  // one-hot over classes

  int label() const;
  void validate(const NetworkSpec& spec) const;
};

struct ForwardTrace {
  std::vector<Vec> v;  // v[0] = x .. v[n]
  std::vector<Vec> z;  // z[k-1] = w_k v_{k-1}
  Vec p;
  Vec yhat;
  double loss = 0.0;

  const Vec& layer_out(int k) const { return v[static_cast<std::size_t>(k)]; }  // k in [0, n]
  const Vec& pre(int k) const { return z[static_cast<std::size_t>(k - 1)]; }    // k in [1, n]
};

// Evaluates the network on one sample. The softmax subtracts max(p) before
// exponentiating; the loss is -ln yhat[label] exactly.
ForwardTrace forward(const NetworkSpec& spec, const WeightSet& weights, const Sample& sample);

// Head pieces on their own, reusable by other architectures with the same
// softmax + cross-entropy top.
Vec softmax_head(const Vec& p);  // subtracts max(p) before exponentiating
Vec dfdp(const Vec& yhat, const Vec& y);
Mat d2fdp2(const Vec& yhat);
Rank3 d3fdp3(const Vec& yhat);

// Derivatives of the loss with respect to the head output p.
Vec dfdp(const ForwardTrace& trace, const Sample& sample);   // yhat - y
Mat d2fdp2(const ForwardTrace& trace);                       // diag(yhat) - yhat yhat^T
Rank3 d3fdp3(const ForwardTrace& trace);                     // fully symmetric

}  // namespace netderiv
