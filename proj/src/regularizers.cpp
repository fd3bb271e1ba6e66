#include "netderiv/regularizers.hpp"

#include <cmath>
#include <utility>

namespace netderiv {

namespace {

// Everything downstream of the input: alpha(r,0) for r = 0..n, the
// pre-activation input Jacobians V(r,0) = w_r alpha(r-1,0), and u alpha(n,0).
struct InputChain {
  std::vector<Mat> a_in;
  std::vector<Mat> v_in;
  Mat u_tilde;
};

InputChain input_chain(const HessianFactors& hf) {
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  InputChain ic;
  ic.a_in.reserve(static_cast<std::size_t>(spec.n) + 1);
  ic.a_in.push_back(identity(static_cast<std::size_t>(spec.input_dim())));
  for (int r = 1; r <= spec.n; ++r)
    ic.a_in.push_back(matmul(beta(spec, weights, hf.gamma, r), ic.a_in.back()));
  ic.v_in.reserve(static_cast<std::size_t>(spec.n));
  for (int r = 1; r <= spec.n; ++r)
    ic.v_in.push_back(matmul(weights.layer(r), ic.a_in[static_cast<std::size_t>(r - 1)]));
  ic.u_tilde = matmul(weights.u, ic.a_in[static_cast<std::size_t>(spec.n)]);
  return ic;
}

Vec hadamard(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

GradReg grad_reg(const GeneralFactors& gf) {
  const HessianFactors& hf = *gf.base;
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  const InputChain ic = input_chain(hf);
  const Mat& a_n0 = ic.a_in[static_cast<std::size_t>(spec.n)];

  GradReg out;
  out.zeta = tmatvec(a_n0, gf.psi);
  out.penalty = dot(out.zeta, out.zeta);

  const Vec az = matvec(a_n0, out.zeta);
  const Vec uz = matvec(ic.u_tilde, out.zeta);
  const Vec d2uz = matvec(hf.d2f_dp2, uz);

  out.dpen_du = outer(hf.df_dp, az);
  {
    const Mat second = outer(matvec(hf.d2f_dp2, matvec(weights.u, az)), hf.v_of(spec.n));
    for (std::size_t i = 0; i < out.dpen_du.rows(); ++i)
      for (std::size_t j = 0; j < out.dpen_du.cols(); ++j)
        out.dpen_du(i, j) = 2.0 * (out.dpen_du(i, j) + second(i, j));
  }

  out.dpen_dw.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    Mat dk = outer(hf.g_of(k), matvec(ic.a_in[static_cast<std::size_t>(k - 1)], out.zeta));
    const Mat pull = outer(tmatvec(hf.u_eta(k), d2uz), hf.v_of(k - 1));
    for (std::size_t i = 0; i < dk.rows(); ++i)
      for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) += pull(i, j);
    for (int r = k; r <= spec.n; ++r) {
      const Vec vz = matvec(ic.v_in[static_cast<std::size_t>(r - 1)], out.zeta);
      const Vec core = hadamard(hadamard(gf.rho_of(r), gf.lambda.layer(r)), vz);
      const Vec lifted = (r == k) ? core : tmatvec(gf.wtilde(r, k), core);
      const Mat lam_term = outer(lifted, hf.v_of(k - 1));
      for (std::size_t i = 0; i < dk.rows(); ++i)
        for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) += lam_term(i, j);
    }
    for (std::size_t i = 0; i < dk.rows(); ++i)
      for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) *= 2.0;
    out.dpen_dw.push_back(std::move(dk));
  }
  return out;
}

Mat input_curvature(const GeneralFactors& gf) {
  const InputChain ic = input_chain(*gf.base);
  return matmul(transpose(ic.u_tilde), matmul(gf.base->d2f_dp2, ic.u_tilde));
}

Mat input_hessian(const GeneralFactors& gf) {
  const HessianFactors& hf = *gf.base;
  const NetworkSpec& spec = *hf.spec;
  const InputChain ic = input_chain(hf);
  Mat h = matmul(transpose(ic.u_tilde), matmul(hf.d2f_dp2, ic.u_tilde));
  for (int m = 1; m <= spec.n; ++m) {
    const Mat& vm = ic.v_in[static_cast<std::size_t>(m - 1)];
    const Vec scale = hadamard(gf.rho_of(m), gf.lambda.layer(m));
    for (std::size_t b = 0; b < scale.size(); ++b) {
      if (scale[b] == 0.0) continue;
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += scale[b] * vm(b, i) * vm(b, j);
    }
  }
  return h;
}

CurvReg curv_reg(const GeneralFactors& gf) {
  const HessianFactors& hf = *gf.base;
  const NetworkSpec& spec = *hf.spec;
  const InputChain ic = input_chain(hf);
  const Mat& a_n0 = ic.a_in[static_cast<std::size_t>(spec.n)];

  CurvReg out;
  out.xi = matmul(transpose(ic.u_tilde), matmul(hf.d2f_dp2, ic.u_tilde));
  const double fn = frob(out.xi);
  out.penalty = fn * fn;

  const Mat g = matmul(ic.u_tilde, matmul(out.xi, transpose(ic.u_tilde)));
  const Rank3 t3 = d3fdp3(*hf.trace);
  Vec t3g(g.rows());
  for (std::size_t s = 0; s < t3g.size(); ++s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.rows(); ++j)
      for (std::size_t q = 0; q < g.cols(); ++q) acc += t3(j, q, s) * g(j, q);
    t3g[s] = acc;
  }

  const Mat d2u_xi = matmul(hf.d2f_dp2, matmul(ic.u_tilde, out.xi));
  out.dpen_du = outer(t3g, hf.v_of(spec.n));
  {
    const Mat second = matmul(d2u_xi, transpose(a_n0));
    for (std::size_t i = 0; i < out.dpen_du.rows(); ++i)
      for (std::size_t j = 0; j < out.dpen_du.cols(); ++j)
        out.dpen_du(i, j) = 2.0 * out.dpen_du(i, j) + 4.0 * second(i, j);
  }

  const Mat c2 = matmul(transpose(hf.weights->u), d2u_xi);
  out.dpen_dw.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    Mat dk = outer(tmatvec(hf.u_eta(k), t3g), hf.v_of(k - 1));
    for (std::size_t i = 0; i < dk.rows(); ++i)
      for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) *= 2.0;
    const Mat pull =
        matmul(matmul(transpose(hf.eta_top.top(k)), c2),
               transpose(ic.a_in[static_cast<std::size_t>(k - 1)]));
    for (std::size_t i = 0; i < dk.rows(); ++i)
      for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) += 4.0 * pull(i, j);
    for (int r = k; r <= spec.n; ++r) {
      const Mat pulled = matmul(transpose(gf.alpha_of(r)), c2);
      const Mat& vr = ic.v_in[static_cast<std::size_t>(r - 1)];
      Vec dvec(pulled.rows());
      for (std::size_t b = 0; b < dvec.size(); ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pulled.cols(); ++i) acc += pulled(b, i) * vr(b, i);
        dvec[b] = acc;
      }
      const Vec core = hadamard(dvec, gf.lambda.layer(r));
      const Vec lifted = (r == k) ? core : tmatvec(gf.wtilde(r, k), core);
      const Mat lam_term = outer(lifted, hf.v_of(k - 1));
      for (std::size_t i = 0; i < dk.rows(); ++i)
        for (std::size_t j = 0; j < dk.cols(); ++j) dk(i, j) += 4.0 * lam_term(i, j);
    }
    out.dpen_dw.push_back(std::move(dk));
  }
  return out;
}

double PerturbBound::bound(double dy) const {
  if (!(dy > 0.0)) throw ValidationError("perturb bound: output tolerance must be positive");
  if (frob == 0.0)
    throw DegenerateBoundError("perturb bound: output jacobian vanishes at this sample");
  return dy / frob;
}

PerturbBound make_perturb_bound(const HessianFactors& hf) {
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  PerturbBound pb;
  const Mat a_n0 = alpha(spec, weights, hf.gamma, spec.n, 0);
  pb.jac = matmul(hf.d2f_dp2, matmul(weights.u, a_n0));
  pb.frob = frob(pb.jac);
  return pb;
}

double perturb_bound(const HessianFactors& hf, double dy) {
  return make_perturb_bound(hf).bound(dy);
}

}  // namespace netderiv
