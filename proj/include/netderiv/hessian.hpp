#pragma once

#include <cstddef>
#include <vector>

#include "netderiv/factors.hpp"
#include "netderiv/network.hpp"

namespace netderiv {

// A perturbation over every trainable block: omega pairs with u, phi[k-1]
// with layer k. Same shapes as WeightSet.
struct Direction {
  Mat omega;
  std::vector<Mat> phi;

  const Mat& layer(int k) const { return phi[static_cast<std::size_t>(k - 1)]; }
  Mat& layer(int k) { return phi[static_cast<std::size_t>(k - 1)]; }

  static Direction zeros(const NetworkSpec& spec);
  void validate(const NetworkSpec& spec) const;
};

// Frobenius norm over all blocks; equals the Euclidean norm of the
// flattened vector.
double direction_norm(const Direction& d);

// Flattened parameter order: u row-major first, then w_1..w_n row-major.
// Every dense assembly, eigenvector mapping, and FD oracle shares this map.
struct ParamLayout {
  int n = 0;
  std::size_t total = 0;
  std::size_t u_offset = 0;
  std::size_t u_count = 0;
  std::vector<std::size_t> w_offset;  // per layer
  std::vector<std::size_t> w_count;

  static ParamLayout of(const NetworkSpec& spec);

  Vec flatten(const Mat& u, const std::vector<Mat>& w) const;
  Vec flatten(const WeightSet& ws) const { return flatten(ws.u, ws.w); }
  Vec flatten(const Direction& d) const { return flatten(d.omega, d.phi); }
  Direction unflatten_direction(const NetworkSpec& spec, const Vec& theta) const;
  WeightSet unflatten_weights(const NetworkSpec& spec, const Vec& theta) const;
};

// Everything a Hessian block needs, none of it weight-indexed: head
// derivatives, the top-row eta stack, and their contractions with u.
struct HessianFactors {
  const NetworkSpec* spec = nullptr;
  const WeightSet* weights = nullptr;
  const ForwardTrace* trace = nullptr;
  GammaStack gamma;
  EtaStack eta_top;
  Vec df_dp;               // yhat - y
  Mat d2f_dp2;             // C x C
  std::vector<Mat> ueta;   // ueta[k-1] = u eta(n,k), C x dk
  std::vector<Vec> g;      // g[k-1] = eta(n,k)^T u^T df_dp

  const Mat& u_eta(int k) const { return ueta[static_cast<std::size_t>(k - 1)]; }
  const Vec& g_of(int k) const { return g[static_cast<std::size_t>(k - 1)]; }
  const Vec& v_of(int k) const { return trace->layer_out(k); }
};

HessianFactors make_hessian_factors(const NetworkSpec& spec, const WeightSet& weights,
                                    const ForwardTrace& trace, const Sample& sample);

// d2f/du du = d2f_dp2 (x) v_n v_n.
struct UuBlock {
  const Mat* d2;
  const Vec* vn;

  Mat densify() const;  // (C*dn) x (C*dn)
};

UuBlock hess_uu(const HessianFactors& hf);

// d2f/du dw_k: df_dp (x) eta(n,k) (x) v_{k-1} plus a (x) v_n (x) v_{k-1},
// where a = d2f_dp2 u eta(n,k).
struct UwBlock {
  int k;
  const Vec* df_dp;
  const Mat* eta_nk;
  Mat a;  // C x dk
  const Vec* vn;
  const Vec* vkm1;

  Mat densify() const;  // (C*dn) x (dk*d_{k-1})
};

UwBlock hess_uw(const HessianFactors& hf, int k);

// Same scalars as hess_uw laid out as (dk*d_{k-1}) x (C*dn), written by its
// own loop so the assembled matrix tests symmetry rather than assuming it.
struct WuBlock {
  UwBlock uw;

  Mat densify() const;
};

WuBlock hess_wu(const HessianFactors& hf, int k);

// d2f/dw_k dw_r. The Gauss-Newton factor gn = eta(n,k)^T u^T d2f_dp2 u
// eta(n,r) pairs with v_{k-1} (x) v_{r-1} for every (k, r). The case term
// routes through df_dp and one interior eta: absent for r == k (the
// activation's second derivative is zero here), eta(r-1,k) against g_r for
// r > k, eta(k-1,r) against g_k for r < k.
struct WwBlock {
  int k, r;
  Mat gn;             // dk x dr
  const Vec* v_left;  // v_{k-1}
  const Vec* v_right; // v_{r-1}
  const Vec* g_hi;    // g_r if r > k, g_k if r < k, null if r == k
  Mat case_eta;       // eta(r-1,k) or eta(k-1,r); empty if r == k

  Mat densify() const;  // (dk*d_{k-1}) x (dr*d_{r-1})
};

WwBlock hess_ww(const HessianFactors& hf, int k, int r, EtaGenerator& gen);

struct DenseHessian {
  Mat h;  // P x P, symmetrized
  ParamLayout layout;
  double asymmetry = 0.0;  // max |h - h^T| before averaging with the transpose
};

inline constexpr std::size_t kDefaultDenseCap = 5000;

// Densifies every block into the flat layout. Refuses parameter counts past
// the cap; the dense path exists as an oracle, not as the product.
DenseHessian assemble_dense(const HessianFactors& hf, EtaGenerator& gen,
                            std::size_t dense_cap = kDefaultDenseCap);

// Evaluates d^T H d from the factors alone. Construction precomputes the
// interior eta cache and scratch buffers; eval never allocates and never
// touches anything of size P x P.
class QuadFormEvaluator {
 public:
  QuadFormEvaluator(const HessianFactors& hf, EtaGenerator& gen);

  double eval(const Direction& d);

 private:
  const Mat& eta_int(int hi, int lo) const;  // eta(hi, lo), lo <= hi <= n-1

  const HessianFactors* hf_;
  int n_;
  std::vector<Mat> interior_;       // row-major over (hi, lo) pairs
  std::vector<std::size_t> int_at_; // index into interior_ per hi
  // scratch, sized once
  Vec wtil_, d2wtil_, s_sum_, d2s_, r1_, tmp_c_, tmp_dn_;
  std::vector<Vec> q_, s_, m_;
  Vec tmp_lo_;  // length max dk
};

// One-shot convenience wrapper over QuadFormEvaluator.
double quad_form(const HessianFactors& hf, const Direction& d, EtaGenerator& gen);

struct MinCurvature {
  double lambda_min = 0.0;
  Direction dir;  // unit direction attaining it
};

// Smallest eigenvalue of the dense Hessian and its eigenvector mapped back
// into block shape. Dense-oracle path; respects the same cap as
// assemble_dense.
MinCurvature min_curvature(const HessianFactors& hf, EtaGenerator& gen,
                           std::size_t dense_cap = kDefaultDenseCap);

}  // namespace netderiv
