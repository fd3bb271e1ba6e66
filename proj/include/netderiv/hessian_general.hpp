#pragma once

#include <vector>

#include "netderiv/hessian.hpp"

namespace netderiv {

// Second activation derivatives per layer: lambda[l-1][m] = A''(z_l[m]).
// The full object carries two delta factors, so a vector is all that
// survives densification. Identically zero for ReLU.
struct LambdaStack {
  std::vector<Vec> l;

  const Vec& layer(int k) const { return l[static_cast<std::size_t>(k - 1)]; }
};

LambdaStack lambda_stack(const NetworkSpec& spec, const ForwardTrace& trace);

// Workspace extending HessianFactors with everything the curvature route
// needs: psi = u^T df_dp, the alpha top row, rho_r = alpha(n,r)^T psi, and
// the propagated products wtilde(r,k) = w_r eta(r-1,k).
struct GeneralFactors {
  const HessianFactors* base = nullptr;
  LambdaStack lambda;
  Vec psi;                          // dn
  std::vector<Mat> alpha_top;       // alpha_top[r-1] = alpha(n,r), r = 1..n
  std::vector<Vec> rho;             // rho[r-1] = alpha(n,r)^T psi
  std::vector<std::vector<Mat>> wt; // wt[r-1][k-1] = w_r eta(r-1,k), k < r

  const NetworkSpec& spec() const { return *base->spec; }
  const Mat& alpha_of(int r) const { return alpha_top[static_cast<std::size_t>(r - 1)]; }
  const Vec& rho_of(int r) const { return rho[static_cast<std::size_t>(r - 1)]; }
  const Mat& wtilde(int r, int k) const {
    return wt[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(k - 1)];
  }
};

GeneralFactors make_general_factors(const HessianFactors& hf);

// d(gamma_l)/d(w_q). Nonzero entries: [m](s,t) with s forced to m for the
// l == q case. slice(s,t) returns the length-d_l vector of d(gamma_l[.])/
// d(w_q[s,t]).
struct DGammaDw {
  const GeneralFactors* gf;
  int l, q;

  Vec slice(int s, int t) const;
  Rank3 densify() const;  // [m][s][t]
};

DGammaDw dgamma_dw(const GeneralFactors& gf, int l, int q);

// d(alpha(k,l))/d(w_q); slice(s,t) is the d_k x d_l matrix of
// d(alpha(k,l)[j,m])/d(w_q[s,t]).
struct DAlphaDw {
  const GeneralFactors* gf;
  int k, l, q;

  Mat slice(int s, int t) const;
};

DAlphaDw dalpha_dw(const GeneralFactors& gf, int k, int l, int q);

// d(eta(n,k))/d(w_q); slice(s,t) is d_n x d_k.
struct DEtaDw {
  const GeneralFactors* gf;
  int k, q;

  Mat slice(int s, int t) const;
};

DEtaDw deta_dw(const GeneralFactors& gf, int k, int q);

// d2f/dw_k dw_q for any smooth entry-wise activation. core extends the
// Gauss-Newton factor with the curvature route (each piece still pairs with
// v_{k-1} (x) v_{q-1}); the case term is the same interior-eta route as the
// ReLU path and vanishes for k == q.
struct GeneralWwBlock {
  int k, q;
  Mat core;            // dk x dq
  const Vec* v_left;   // v_{k-1}
  const Vec* v_right;  // v_{q-1}
  const Vec* g_hi;     // null when k == q
  Mat case_eta;

  Mat densify() const;
};

GeneralWwBlock hess_ww_general(const GeneralFactors& gf, int k, int q, EtaGenerator& gen);

// Dense assembly with the general ww blocks; the uu/uw/wu blocks do not
// depend on the activation's curvature and reuse the ReLU-path code.
DenseHessian assemble_dense_general(const GeneralFactors& gf, EtaGenerator& gen,
                                    std::size_t dense_cap = kDefaultDenseCap);

}  // namespace netderiv
