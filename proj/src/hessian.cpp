#include "netderiv/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace netderiv {

Direction Direction::zeros(const NetworkSpec& spec) {
  Direction d;
  d.omega = Mat(static_cast<std::size_t>(spec.classes), static_cast<std::size_t>(spec.top_dim()));
  d.phi.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k)
    d.phi.emplace_back(static_cast<std::size_t>(spec.dim(k)),
                       static_cast<std::size_t>(spec.dim(k - 1)));
  return d;
}

void Direction::validate(const NetworkSpec& spec) const {
  if (omega.rows() != static_cast<std::size_t>(spec.classes) ||
      omega.cols() != static_cast<std::size_t>(spec.top_dim()))
    throw ShapeError("direction: omega shape mismatch");
  if (phi.size() != static_cast<std::size_t>(spec.n))
    throw ShapeError("direction: layer count mismatch");
  for (int k = 1; k <= spec.n; ++k) {
    const Mat& p = layer(k);
    if (p.rows() != static_cast<std::size_t>(spec.dim(k)) ||
        p.cols() != static_cast<std::size_t>(spec.dim(k - 1)))
      throw ShapeError("direction: phi shape mismatch at layer " + std::to_string(k));
  }
}

double direction_norm(const Direction& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.omega.size(); ++i) s += d.omega.data()[i] * d.omega.data()[i];
  for (const Mat& p : d.phi)
    for (std::size_t i = 0; i < p.size(); ++i) s += p.data()[i] * p.data()[i];
  return std::sqrt(s);
}

ParamLayout ParamLayout::of(const NetworkSpec& spec) {
  ParamLayout pl;
  pl.n = spec.n;
  pl.u_offset = 0;
  pl.u_count = static_cast<std::size_t>(spec.classes) * static_cast<std::size_t>(spec.top_dim());
  std::size_t off = pl.u_count;
  for (int k = 1; k <= spec.n; ++k) {
    pl.w_offset.push_back(off);
    const std::size_t cnt =
        static_cast<std::size_t>(spec.dim(k)) * static_cast<std::size_t>(spec.dim(k - 1));
    pl.w_count.push_back(cnt);
    off += cnt;
  }
  pl.total = off;
  return pl;
}

Vec ParamLayout::flatten(const Mat& u, const std::vector<Mat>& w) const {
  Vec theta(total);
  std::copy(u.data(), u.data() + u.size(), theta.data() + u_offset);
  for (std::size_t k = 0; k < w.size(); ++k)
    std::copy(w[k].data(), w[k].data() + w[k].size(), theta.data() + w_offset[k]);
  return theta;
}

Direction ParamLayout::unflatten_direction(const NetworkSpec& spec, const Vec& theta) const {
  if (theta.size() != total) throw ShapeError("unflatten: length mismatch");
  Direction d = Direction::zeros(spec);
  std::copy(theta.data() + u_offset, theta.data() + u_offset + u_count, d.omega.data());
  for (int k = 1; k <= spec.n; ++k) {
    const std::size_t i = static_cast<std::size_t>(k - 1);
    std::copy(theta.data() + w_offset[i], theta.data() + w_offset[i] + w_count[i],
              d.layer(k).data());
  }
  return d;
}

WeightSet ParamLayout::unflatten_weights(const NetworkSpec& spec, const Vec& theta) const {
  Direction d = unflatten_direction(spec, theta);
  WeightSet ws;
  ws.u = std::move(d.omega);
  ws.w = std::move(d.phi);
  return ws;
}

HessianFactors make_hessian_factors(const NetworkSpec& spec, const WeightSet& weights,
                                    const ForwardTrace& trace, const Sample& sample) {
  HessianFactors hf;
  hf.spec = &spec;
  hf.weights = &weights;
  hf.trace = &trace;
  hf.gamma = gamma_stack(spec, trace);
  hf.eta_top = eta_stack(spec, weights, hf.gamma);
  hf.df_dp = dfdp(trace, sample);
  hf.d2f_dp2 = d2fdp2(trace);
  const Vec head_pull = tmatvec(weights.u, hf.df_dp);
  hf.ueta.reserve(static_cast<std::size_t>(spec.n));
  hf.g.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    hf.ueta.push_back(matmul(weights.u, hf.eta_top.top(k)));
    hf.g.push_back(tmatvec(hf.eta_top.top(k), head_pull));
  }
  return hf;
}

UuBlock hess_uu(const HessianFactors& hf) {
  return UuBlock{&hf.d2f_dp2, &hf.trace->layer_out(hf.spec->n)};
}

Mat UuBlock::densify() const {
  const std::size_t c = d2->rows();
  const std::size_t dn = vn->size();
  Mat h(c * dn, c * dn);
  for (std::size_t s = 0; s < c; ++s)
    for (std::size_t t = 0; t < dn; ++t)
      for (std::size_t s2 = 0; s2 < c; ++s2)
        for (std::size_t t2 = 0; t2 < dn; ++t2)
          h(s * dn + t, s2 * dn + t2) = (*d2)(s, s2) * (*vn)[t] * (*vn)[t2];
  return h;
}

UwBlock hess_uw(const HessianFactors& hf, int k) {
  if (k < 1 || k > hf.spec->n) throw ShapeError("hess_uw: layer out of range");
  UwBlock b;
  b.k = k;
  b.df_dp = &hf.df_dp;
  b.eta_nk = &hf.eta_top.top(k);
  b.a = matmul(hf.d2f_dp2, hf.u_eta(k));
  b.vn = &hf.v_of(hf.spec->n);
  b.vkm1 = &hf.v_of(k - 1);
  return b;
}

Mat UwBlock::densify() const {
  const std::size_t c = df_dp->size();
  const std::size_t dn = vn->size();
  const std::size_t dk = a.cols();
  const std::size_t dkm1 = vkm1->size();
  Mat h(c * dn, dk * dkm1);
  for (std::size_t s = 0; s < c; ++s)
    for (std::size_t t = 0; t < dn; ++t)
      for (std::size_t i = 0; i < dk; ++i)
        for (std::size_t j = 0; j < dkm1; ++j)
          h(s * dn + t, i * dkm1 + j) =
              ((*df_dp)[s] * (*eta_nk)(t, i) + a(s, i) * (*vn)[t]) * (*vkm1)[j];
  return h;
}

WuBlock hess_wu(const HessianFactors& hf, int k) { return WuBlock{hess_uw(hf, k)}; }

Mat WuBlock::densify() const {
  const std::size_t c = uw.df_dp->size();
  const std::size_t dn = uw.vn->size();
  const std::size_t dk = uw.a.cols();
  const std::size_t dkm1 = uw.vkm1->size();
  Mat h(dk * dkm1, c * dn);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dkm1; ++j)
      for (std::size_t s = 0; s < c; ++s)
        for (std::size_t t = 0; t < dn; ++t)
          h(i * dkm1 + j, s * dn + t) =
              ((*uw.df_dp)[s] * (*uw.eta_nk)(t, i) + uw.a(s, i) * (*uw.vn)[t]) * (*uw.vkm1)[j];
  return h;
}

WwBlock hess_ww(const HessianFactors& hf, int k, int r, EtaGenerator& gen) {
  const int n = hf.spec->n;
  if (k < 1 || k > n || r < 1 || r > n) throw ShapeError("hess_ww: layer out of range");
  WwBlock b;
  b.k = k;
  b.r = r;
  b.gn = matmul(transpose(hf.u_eta(k)), matmul(hf.d2f_dp2, hf.u_eta(r)));
  b.v_left = &hf.v_of(k - 1);
  b.v_right = &hf.v_of(r - 1);
  if (r > k) {
    b.g_hi = &hf.g_of(r);
    b.case_eta = gen.single(r - 1, k).at(r - 1);
  } else if (r < k) {
    b.g_hi = &hf.g_of(k);
    b.case_eta = gen.single(k - 1, r).at(k - 1);
  } else {
    b.g_hi = nullptr;
  }
  return b;
}

Mat WwBlock::densify() const {
  const std::size_t dk = gn.rows();
  const std::size_t dr = gn.cols();
  const std::size_t dkm1 = v_left->size();
  const std::size_t drm1 = v_right->size();
  Mat h(dk * dkm1, dr * drm1);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dkm1; ++j)
      for (std::size_t s = 0; s < dr; ++s)
        for (std::size_t t = 0; t < drm1; ++t)
          h(i * dkm1 + j, s * drm1 + t) = gn(i, s) * (*v_left)[j] * (*v_right)[t];
  if (r > k) {
    // case_eta = eta(r-1, k): rows span w_r's column index, cols span w_k's row index
    for (std::size_t i = 0; i < dk; ++i)
      for (std::size_t j = 0; j < dkm1; ++j)
        for (std::size_t s = 0; s < dr; ++s)
          for (std::size_t t = 0; t < drm1; ++t)
            h(i * dkm1 + j, s * drm1 + t) += (*g_hi)[s] * case_eta(t, i) * (*v_left)[j];
  } else if (r < k) {
    for (std::size_t i = 0; i < dk; ++i)
      for (std::size_t j = 0; j < dkm1; ++j)
        for (std::size_t s = 0; s < dr; ++s)
          for (std::size_t t = 0; t < drm1; ++t)
            h(i * dkm1 + j, s * drm1 + t) += (*g_hi)[i] * case_eta(j, s) * (*v_right)[t];
  }
  return h;
}

namespace {

void place(Mat& dst, const Mat& block, std::size_t row0, std::size_t col0) {
  for (std::size_t i = 0; i < block.rows(); ++i)
    for (std::size_t j = 0; j < block.cols(); ++j) dst(row0 + i, col0 + j) = block(i, j);
}

}  // namespace

DenseHessian assemble_dense(const HessianFactors& hf, EtaGenerator& gen, std::size_t dense_cap) {
  const NetworkSpec& spec = *hf.spec;
  DenseHessian dh;
  dh.layout = ParamLayout::of(spec);
  if (dh.layout.total > dense_cap)
    throw ResourceError("dense assembly: " + std::to_string(dh.layout.total) +
                        " parameters exceed cap " + std::to_string(dense_cap));
  dh.h = Mat(dh.layout.total, dh.layout.total);

  place(dh.h, hess_uu(hf).densify(), dh.layout.u_offset, dh.layout.u_offset);
  for (int k = 1; k <= spec.n; ++k) {
    const std::size_t wk = dh.layout.w_offset[static_cast<std::size_t>(k - 1)];
    place(dh.h, hess_uw(hf, k).densify(), dh.layout.u_offset, wk);
    place(dh.h, hess_wu(hf, k).densify(), wk, dh.layout.u_offset);
    for (int r = 1; r <= spec.n; ++r)
      place(dh.h, hess_ww(hf, k, r, gen).densify(), wk,
            dh.layout.w_offset[static_cast<std::size_t>(r - 1)]);
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

QuadFormEvaluator::QuadFormEvaluator(const HessianFactors& hf, EtaGenerator& gen)
    : hf_(&hf), n_(hf.spec->n) {
  // Interior cache: for each hi in [1, n-1], the etas eta(hi, lo), lo <= hi.
  // Built column-wise through the generator so materialization is counted.
  int_at_.assign(static_cast<std::size_t>(n_), 0);
  std::size_t pos = 0;
  for (int hi = 1; hi <= n_ - 1; ++hi) {
    int_at_[static_cast<std::size_t>(hi)] = pos;
    pos += static_cast<std::size_t>(hi);
  }
  interior_.resize(pos);
  for (int lo = 1; lo <= n_ - 1; ++lo) {
    EtaGenerator::Column col = gen.column(lo);
    for (int hi = lo; hi <= n_ - 1; ++hi)
      interior_[int_at_[static_cast<std::size_t>(hi)] + static_cast<std::size_t>(lo - 1)] =
          col.at(hi);
  }

  const NetworkSpec& spec = *hf.spec;
  const std::size_t c = static_cast<std::size_t>(spec.classes);
  const std::size_t dn = static_cast<std::size_t>(spec.top_dim());
  wtil_ = Vec(c);
  d2wtil_ = Vec(c);
  s_sum_ = Vec(c);
  d2s_ = Vec(c);
  tmp_c_ = Vec(c);
  r1_ = Vec(dn);
  tmp_dn_ = Vec(dn);
  std::size_t dmax = 0;
  for (int k = 0; k <= n_; ++k) dmax = std::max(dmax, static_cast<std::size_t>(spec.dim(k)));
  tmp_lo_ = Vec(dmax);
  q_.reserve(static_cast<std::size_t>(n_));
  s_.reserve(static_cast<std::size_t>(n_));
  m_.reserve(static_cast<std::size_t>(n_));
  for (int k = 1; k <= n_; ++k) {
    q_.emplace_back(static_cast<std::size_t>(spec.dim(k)));
    s_.emplace_back(c);
    m_.emplace_back(static_cast<std::size_t>(spec.dim(k - 1)));
  }
}

const Mat& QuadFormEvaluator::eta_int(int hi, int lo) const {
  return interior_[int_at_[static_cast<std::size_t>(hi)] + static_cast<std::size_t>(lo - 1)];
}

double QuadFormEvaluator::eval(const Direction& d) {
  const HessianFactors& hf = *hf_;
  const std::size_t c = wtil_.size();
  const Vec& vn = hf.v_of(n_);

  // Head factors of the direction.
  matvec_into(d.omega, vn.data(), wtil_.data());
  tmatvec_into(d.omega, hf.df_dp.data(), r1_.data());
  matvec_into(hf.d2f_dp2, wtil_.data(), d2wtil_.data());

  // Per-layer contractions: q_k = phi_k v_{k-1}, s_k = u eta(n,k) q_k,
  // m_k = phi_k^T g_k.
  for (std::size_t i = 0; i < c; ++i) s_sum_[i] = 0.0;
  for (int k = 1; k <= n_; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k - 1);
    matvec_into(d.layer(k), hf.v_of(k - 1).data(), q_[ki].data());
    matvec_into(hf.u_eta(k), q_[ki].data(), s_[ki].data());
    for (std::size_t i = 0; i < c; ++i) s_sum_[i] += s_[ki][i];
    tmatvec_into(d.layer(k), hf.g_of(k).data(), m_[ki].data());
  }

  // uu: wtil^T d2 wtil.
  double acc = 0.0;
  for (std::size_t i = 0; i < c; ++i) acc += wtil_[i] * d2wtil_[i];

  // uw pairs, both orderings: 2 sum_k [ r1 . (eta(n,k) q_k) + d2wtil . s_k ].
  for (int k = 1; k <= n_; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k - 1);
    matvec_into(hf.eta_top.top(k), q_[ki].data(), tmp_dn_.data());
    double uw = 0.0;
    for (std::size_t i = 0; i < tmp_dn_.size(); ++i) uw += r1_[i] * tmp_dn_[i];
    for (std::size_t i = 0; i < c; ++i) uw += d2wtil_[i] * s_[ki][i];
    acc += 2.0 * uw;
  }

  // ww Gauss-Newton across every layer pair collapses to S^T d2 S.
  matvec_into(hf.d2f_dp2, s_sum_.data(), d2s_.data());
  for (std::size_t i = 0; i < c; ++i) acc += s_sum_[i] * d2s_[i];

  // ww case terms, both orderings: 2 sum_{k>r} m_k . (eta(k-1,r) q_r).
  for (int k = 2; k <= n_; ++k) {
    const std::size_t ki = static_cast<std::size_t>(k - 1);
    for (int r = 1; r < k; ++r) {
      const Mat& e = eta_int(k - 1, r);
      matvec_into(e, q_[static_cast<std::size_t>(r - 1)].data(), tmp_lo_.data());
      double cs = 0.0;
      for (std::size_t i = 0; i < e.rows(); ++i) cs += m_[ki][i] * tmp_lo_[i];
      acc += 2.0 * cs;
    }
  }
  return acc;
}

double quad_form(const HessianFactors& hf, const Direction& d, EtaGenerator& gen) {
  QuadFormEvaluator ev(hf, gen);
  return ev.eval(d);
}

MinCurvature min_curvature(const HessianFactors& hf, EtaGenerator& gen, std::size_t dense_cap) {
  DenseHessian dh = assemble_dense(hf, gen, dense_cap);
  SymEig se = sym_eig(dh.h);
  MinCurvature mc;
  mc.lambda_min = se.values[0];
  Vec evec(dh.layout.total);
  for (std::size_t i = 0; i < dh.layout.total; ++i) evec[i] = se.vectors(i, 0);
  mc.dir = dh.layout.unflatten_direction(*hf.spec, evec);
  return mc;
}

}  // namespace netderiv
