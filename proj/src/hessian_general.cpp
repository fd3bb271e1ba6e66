#include "netderiv/hessian_general.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "netderiv/activation.hpp"

namespace netderiv {

LambdaStack lambda_stack(const NetworkSpec& spec, const ForwardTrace& trace) {
  LambdaStack ls;
  ls.l.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    const Vec& zk = trace.pre(k);
    Vec lk(zk.size());
    for (std::size_t i = 0; i < zk.size(); ++i) lk[i] = act::d2(spec.activation, zk[i]);
    ls.l.push_back(std::move(lk));
  }
  return ls;
}

GeneralFactors make_general_factors(const HessianFactors& hf) {
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  GeneralFactors gf;
  gf.base = &hf;
  gf.lambda = lambda_stack(spec, *hf.trace);
  gf.psi = tmatvec(weights.u, hf.df_dp);

  gf.alpha_top.resize(static_cast<std::size_t>(spec.n));
  Mat acc = identity(static_cast<std::size_t>(spec.top_dim()));
  for (int r = spec.n; r >= 1; --r) {
    gf.alpha_top[static_cast<std::size_t>(r - 1)] = acc;
    if (r > 1) acc = matmul(acc, beta(spec, weights, hf.gamma, r));
  }
  gf.rho.reserve(static_cast<std::size_t>(spec.n));
  for (int r = 1; r <= spec.n; ++r) gf.rho.push_back(tmatvec(gf.alpha_of(r), gf.psi));

  gf.wt.resize(static_cast<std::size_t>(spec.n));
  for (int r = 2; r <= spec.n; ++r) {
    auto& row = gf.wt[static_cast<std::size_t>(r - 1)];
    row.resize(static_cast<std::size_t>(r - 1));
    for (int k = 1; k < r; ++k)
      row[static_cast<std::size_t>(k - 1)] =
          matmul(weights.layer(r), eta(spec, weights, hf.gamma, r - 1, k));
  }
  return gf;
}

DGammaDw dgamma_dw(const GeneralFactors& gf, int l, int q) {
  const int n = gf.spec().n;
  if (l < 1 || l > n || q < 1 || q > n) throw ShapeError("dgamma_dw: layer out of range");
  return DGammaDw{&gf, l, q};
}

Vec DGammaDw::slice(int s, int t) const {
  const NetworkSpec& spec = gf->spec();
  const ForwardTrace& trace = *gf->base->trace;
  Vec out(static_cast<std::size_t>(spec.dim(l)));
  if (l < q) return out;
  const Vec& lam = gf->lambda.layer(l);
  if (l == q) {
    out[static_cast<std::size_t>(s)] =
        lam[static_cast<std::size_t>(s)] * trace.layer_out(l - 1)[static_cast<std::size_t>(t)];
    return out;
  }
  const Mat& wt = gf->wtilde(l, q);
  const double vq = trace.layer_out(q - 1)[static_cast<std::size_t>(t)];
  for (std::size_t m = 0; m < out.size(); ++m)
    out[m] = lam[m] * wt(m, static_cast<std::size_t>(s)) * vq;
  return out;
}

Rank3 DGammaDw::densify() const {
  const NetworkSpec& spec = gf->spec();
  Rank3 r3(static_cast<std::size_t>(spec.dim(l)), static_cast<std::size_t>(spec.dim(q)),
           static_cast<std::size_t>(spec.dim(q - 1)));
  for (int s = 0; s < spec.dim(q); ++s)
    for (int t = 0; t < spec.dim(q - 1); ++t) {
      const Vec col = slice(s, t);
      for (std::size_t m = 0; m < col.size(); ++m)
        r3(m, static_cast<std::size_t>(s), static_cast<std::size_t>(t)) = col[m];
    }
  return r3;
}

DAlphaDw dalpha_dw(const GeneralFactors& gf, int k, int l, int q) {
  const int n = gf.spec().n;
  if (k < 0 || k > n || l < 0 || l > n || q < 1 || q > n)
    throw ShapeError("dalpha_dw: layer out of range");
  return DAlphaDw{&gf, k, l, q};
}

Mat DAlphaDw::slice(int s, int t) const {
  const HessianFactors& hf = *gf->base;
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  const ForwardTrace& trace = *hf.trace;
  Mat out(static_cast<std::size_t>(spec.dim(k)), static_cast<std::size_t>(spec.dim(l)));
  // alpha(k,l) is constant (identity or zero) unless l < k; no weight above
  // layer k enters it.
  if (l >= k || q > k) return out;

  const std::size_t su = static_cast<std::size_t>(s);
  const double vq = trace.layer_out(q - 1)[static_cast<std::size_t>(t)];
  const int r_lo = std::max(l, q) + 1;
  for (int r = r_lo; r <= k; ++r) {
    const Mat a_kr = alpha(spec, weights, hf.gamma, k, r);
    const Mat p = matmul(weights.layer(r), alpha(spec, weights, hf.gamma, r - 1, l));
    const Vec& lam = gf->lambda.layer(r);
    const Mat& wtrq = gf->wtilde(r, q);
    for (std::size_t j = 0; j < out.rows(); ++j)
      for (std::size_t b = 0; b < lam.size(); ++b) {
        const double c = lam[b] * wtrq(b, su) * vq;
        if (c == 0.0) continue;
        for (std::size_t m = 0; m < out.cols(); ++m) out(j, m) += a_kr(j, b) * c * p(b, m);
      }
  }
  if (q > l) {
    // gamma_q's direct dependence plus the explicit w_q factor inside beta_q.
    const Mat a_kq = alpha(spec, weights, hf.gamma, k, q);
    const Mat a_qm1l = alpha(spec, weights, hf.gamma, q - 1, l);
    const Mat wq_a = matmul(weights.layer(q), a_qm1l);
    const double lq = gf->lambda.layer(q)[su] * vq;
    const double gq = hf.gamma.layer(q)[su];
    for (std::size_t j = 0; j < out.rows(); ++j)
      for (std::size_t m = 0; m < out.cols(); ++m)
        out(j, m) += a_kq(j, su) * (lq * wq_a(su, m) + gq * a_qm1l(static_cast<std::size_t>(t), m));
  }
  return out;
}

DEtaDw deta_dw(const GeneralFactors& gf, int k, int q) {
  const int n = gf.spec().n;
  if (k < 1 || k > n || q < 1 || q > n) throw ShapeError("deta_dw: layer out of range");
  return DEtaDw{&gf, k, q};
}

Mat DEtaDw::slice(int s, int t) const {
  const HessianFactors& hf = *gf->base;
  const NetworkSpec& spec = *hf.spec;
  const WeightSet& weights = *hf.weights;
  const ForwardTrace& trace = *hf.trace;
  const int n = spec.n;
  const std::size_t su = static_cast<std::size_t>(s);
  const std::size_t tu = static_cast<std::size_t>(t);
  Mat out(static_cast<std::size_t>(spec.top_dim()), static_cast<std::size_t>(spec.dim(k)));
  const double vq = trace.layer_out(q - 1)[tu];

  // Curvature route through every gamma above both layers.
  for (int r = std::max(k, q) + 1; r <= n; ++r) {
    const Mat& a_nr = gf->alpha_of(r);
    const Vec& lam = gf->lambda.layer(r);
    const Mat& wtrq = gf->wtilde(r, q);
    const Mat& wtrk = gf->wtilde(r, k);
    for (std::size_t j = 0; j < out.rows(); ++j)
      for (std::size_t b = 0; b < lam.size(); ++b) {
        const double c = a_nr(j, b) * lam[b] * wtrq(b, su) * vq;
        if (c == 0.0) continue;
        for (std::size_t m = 0; m < out.cols(); ++m) out(j, m) += c * wtrk(b, m);
      }
  }

  if (q > k) {
    const Mat& a_nq = gf->alpha_of(q);
    const Mat& wtqk = gf->wtilde(q, k);
    const double lq = gf->lambda.layer(q)[su] * vq;
    const Mat& eta_nq = hf.eta_top.top(q);
    const Mat eta_qk = eta(spec, weights, hf.gamma, q - 1, k);
    for (std::size_t j = 0; j < out.rows(); ++j)
      for (std::size_t m = 0; m < out.cols(); ++m)
        out(j, m) += a_nq(j, su) * lq * wtqk(su, m) + eta_nq(j, su) * eta_qk(tu, m);
  } else if (q == k) {
    const Mat& a_nk = gf->alpha_of(k);
    const double lk = gf->lambda.layer(k)[su] * vq;
    for (std::size_t j = 0; j < out.rows(); ++j) out(j, su) += a_nk(j, su) * lk;
  } else {
    const Mat& a_nk = gf->alpha_of(k);
    const Mat& wtkq = gf->wtilde(k, q);
    const Vec& lam = gf->lambda.layer(k);
    for (std::size_t j = 0; j < out.rows(); ++j)
      for (std::size_t m = 0; m < out.cols(); ++m)
        out(j, m) += a_nk(j, m) * lam[m] * wtkq(m, su) * vq;
  }
  return out;
}

GeneralWwBlock hess_ww_general(const GeneralFactors& gf, int k, int q, EtaGenerator& gen) {
  const HessianFactors& hf = *gf.base;
  const NetworkSpec& spec = *hf.spec;
  const int n = spec.n;
  if (k < 1 || k > n || q < 1 || q > n) throw ShapeError("hess_ww_general: layer out of range");

  GeneralWwBlock b;
  b.k = k;
  b.q = q;
  b.core = matmul(transpose(hf.u_eta(k)), matmul(hf.d2f_dp2, hf.u_eta(q)));
  b.v_left = &hf.v_of(k - 1);
  b.v_right = &hf.v_of(q - 1);

  // Curvature route shared by every ordering of (k, q).
  for (int r = std::max(k, q) + 1; r <= n; ++r) {
    const Vec& lam = gf.lambda.layer(r);
    const Vec& rr = gf.rho_of(r);
    const Mat& wtrk = gf.wtilde(r, k);
    const Mat& wtrq = gf.wtilde(r, q);
    for (std::size_t bb = 0; bb < lam.size(); ++bb) {
      const double c = rr[bb] * lam[bb];
      if (c == 0.0) continue;
      for (std::size_t i = 0; i < b.core.rows(); ++i)
        for (std::size_t j = 0; j < b.core.cols(); ++j)
          b.core(i, j) += c * wtrk(bb, i) * wtrq(bb, j);
    }
  }
  if (q == k) {
    const Vec& lam = gf.lambda.layer(k);
    const Vec& rk = gf.rho_of(k);
    for (std::size_t i = 0; i < b.core.rows(); ++i) b.core(i, i) += rk[i] * lam[i];
  } else if (q > k) {
    const Vec& lam = gf.lambda.layer(q);
    const Vec& rq = gf.rho_of(q);
    const Mat& wtqk = gf.wtilde(q, k);
    for (std::size_t j = 0; j < b.core.cols(); ++j) {
      const double c = rq[j] * lam[j];
      for (std::size_t i = 0; i < b.core.rows(); ++i) b.core(i, j) += c * wtqk(j, i);
    }
  } else {
    const Vec& lam = gf.lambda.layer(k);
    const Vec& rk = gf.rho_of(k);
    const Mat& wtkq = gf.wtilde(k, q);
    for (std::size_t i = 0; i < b.core.rows(); ++i) {
      const double c = rk[i] * lam[i];
      for (std::size_t j = 0; j < b.core.cols(); ++j) b.core(i, j) += c * wtkq(i, j);
    }
  }

  if (q > k) {
    b.g_hi = &hf.g_of(q);
    b.case_eta = gen.single(q - 1, k).at(q - 1);
  } else if (q < k) {
    b.g_hi = &hf.g_of(k);
    b.case_eta = gen.single(k - 1, q).at(k - 1);
  } else {
    b.g_hi = nullptr;
  }
  return b;
}

Mat GeneralWwBlock::densify() const {
  const std::size_t dk = core.rows();
  const std::size_t dq = core.cols();
  const std::size_t dkm1 = v_left->size();
  const std::size_t dqm1 = v_right->size();
  Mat h(dk * dkm1, dq * dqm1);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dkm1; ++j)
      for (std::size_t s = 0; s < dq; ++s)
        for (std::size_t t = 0; t < dqm1; ++t)
          h(i * dkm1 + j, s * dqm1 + t) = core(i, s) * (*v_left)[j] * (*v_right)[t];
  if (q > k) {
    for (std::size_t i = 0; i < dk; ++i)
      for (std::size_t j = 0; j < dkm1; ++j)
        for (std::size_t s = 0; s < dq; ++s)
          for (std::size_t t = 0; t < dqm1; ++t)
            h(i * dkm1 + j, s * dqm1 + t) += (*g_hi)[s] * case_eta(t, i) * (*v_left)[j];
  } else if (q < k) {
    for (std::size_t i = 0; i < dk; ++i)
      for (std::size_t j = 0; j < dkm1; ++j)
        for (std::size_t s = 0; s < dq; ++s)
          for (std::size_t t = 0; t < dqm1; ++t)
            h(i * dkm1 + j, s * dqm1 + t) += (*g_hi)[i] * case_eta(j, s) * (*v_right)[t];
  }
  return h;
}

DenseHessian assemble_dense_general(const GeneralFactors& gf, EtaGenerator& gen,
                                    std::size_t dense_cap) {
  const HessianFactors& hf = *gf.base;
  const NetworkSpec& spec = *hf.spec;
  DenseHessian dh;
  dh.layout = ParamLayout::of(spec);
  if (dh.layout.total > dense_cap)
    throw ResourceError("dense assembly: " + std::to_string(dh.layout.total) +
                        " parameters exceed cap " + std::to_string(dense_cap));
  dh.h = Mat(dh.layout.total, dh.layout.total);

  auto place = [&dh](const Mat& block, std::size_t row0, std::size_t col0) {
    for (std::size_t i = 0; i < block.rows(); ++i)
      for (std::size_t j = 0; j < block.cols(); ++j) dh.h(row0 + i, col0 + j) = block(i, j);
  };

  place(hess_uu(hf).densify(), dh.layout.u_offset, dh.layout.u_offset);
  for (int k = 1; k <= spec.n; ++k) {
    const std::size_t wk = dh.layout.w_offset[static_cast<std::size_t>(k - 1)];
    place(hess_uw(hf, k).densify(), dh.layout.u_offset, wk);
    place(hess_wu(hf, k).densify(), wk, dh.layout.u_offset);
    for (int q = 1; q <= spec.n; ++q)
      place(hess_ww_general(gf, k, q, gen).densify(), wk,
            dh.layout.w_offset[static_cast<std::size_t>(q - 1)]);
  }

  double defect = 0.0;
  for (std::size_t i = 0; i < dh.h.rows(); ++i)
    for (std::size_t j = i + 1; j < dh.h.cols(); ++j)
      defect = std::max(defect, std::abs(dh.h(i, j) - dh.h(j, i)));
  dh.asymmetry = defect;
  for (std::size_t i = 0; i < dh.h.rows(); ++i)
    for (std::size_t j = i + 1; j < dh.h.cols(); ++j) {
      const double avg = 0.5 * (dh.h(i, j) + dh.h(j, i));
      dh.h(i, j) = avg;
      dh.h(j, i) = avg;
    }
  return dh;
}

}  // namespace netderiv
