#include "netderiv/recurrent.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "netderiv/errors.hpp"

namespace netderiv {

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }
double relu_d1(double z) { return z > 0.0 ? 1.0 : 0.0; }

// beta for unrolled step s: diag(gamma_s) w.
Mat step_beta(const Mat& w, const Vec& gamma_s) {
  Mat b = w;
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) *= gamma_s[i];
  return b;
}

// eta(t, r) = beta_t ... beta_r diag(gamma_{r-1}), with eta(t, t+1) =
// diag(gamma_t). gammas[s-1] holds gamma_s. Valid for 2 <= r <= t+1.
Mat eta_rec(const Mat& w, const std::vector<Vec>& gammas, int t, int r) {
  const std::size_t d = w.rows();
  Mat acc = identity(d);
  for (int m = t; m >= r; --m) acc = matmul(acc, step_beta(w, gammas[static_cast<std::size_t>(m - 1)]));
  const Vec& g = gammas[static_cast<std::size_t>(r - 2)];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) acc(i, j) *= g[j];
  return acc;
}

}  // namespace

void RecurrentSpec::validate() const {
  if (d < 1 || d_in < 1) throw ValidationError("recurrent: state and input dims must be positive");
  if (classes < 2) throw ValidationError("recurrent: need at least two classes");
  if (t_max < 1) throw ValidationError("recurrent: need at least one step");
  if (w.rows() != static_cast<std::size_t>(d) || w.cols() != static_cast<std::size_t>(d))
    throw ShapeError("recurrent: w must be d x d");
  if (u.rows() != static_cast<std::size_t>(d) || u.cols() != static_cast<std::size_t>(d_in))
    throw ShapeError("recurrent: u must be d x d_in");
  if (z.rows() != static_cast<std::size_t>(classes) || z.cols() != static_cast<std::size_t>(d))
    throw ShapeError("recurrent: z must be classes x d");
}

RnnLayerDerivs rnn_layer_derivs(const RecurrentSpec& rs, const Vec& x, int t) {
  rs.validate();
  if (x.size() != static_cast<std::size_t>(rs.d)) throw ShapeError("recurrent layer: bad state size");
  if (t < 1 || t > rs.t_max) throw ValidationError("recurrent layer: step out of range");

  const std::size_t d = static_cast<std::size_t>(rs.d);
  std::vector<Vec> v;
  std::vector<Vec> gammas;
  v.push_back(x);
  for (int s = 1; s <= t; ++s) {
    const Vec z = matvec(rs.w, v.back());
    Vec vs(d), gs(d);
    for (std::size_t i = 0; i < d; ++i) {
      vs[i] = relu(z[i]);
      gs[i] = relu_d1(z[i]);
    }
    v.push_back(std::move(vs));
    gammas.push_back(std::move(gs));
  }

  // Feedforward-style factors within the unrolled steps: eta_ff[k-1] is
  // alpha(t,k) diag(gamma_k), built top down.
  std::vector<Mat> eta_ff(static_cast<std::size_t>(t));
  {
    Mat acc = identity(d);
    for (int k = t; k >= 1; --k) {
      Mat ek = acc;
      const Vec& gk = gammas[static_cast<std::size_t>(k - 1)];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) ek(i, j) *= gk[j];
      eta_ff[static_cast<std::size_t>(k - 1)] = std::move(ek);
      if (k > 1) acc = matmul(acc, step_beta(rs.w, gammas[static_cast<std::size_t>(k - 1)]));
    }
  }
  auto eta_mid = [&](int a, int b) {  // eta(a, b) for 1 <= b <= a < t
    Mat acc = identity(d);
    for (int m = a; m >= b + 1; --m)
      acc = matmul(acc, step_beta(rs.w, gammas[static_cast<std::size_t>(m - 1)]));
    const Vec& gb = gammas[static_cast<std::size_t>(b - 1)];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) acc(i, j) *= gb[j];
    return acc;
  };

  RnnLayerDerivs out;
  out.d = rs.d;
  out.dv_dw = Rank3(d, d, d);
  for (int k = 1; k <= t; ++k) {
    const Mat& ek = eta_ff[static_cast<std::size_t>(k - 1)];
    const Vec& vk = v[static_cast<std::size_t>(k - 1)];
    for (std::size_t m = 0; m < d; ++m)
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t r = 0; r < d; ++r) out.dv_dw(m, s, r) += ek(m, s) * vk[r];
  }
  out.dv_dx = matmul(eta_ff[0], rs.w);

  out.ww.assign(d * d * d * d * d, 0.0);
  auto ww_at = [&](std::size_t m, std::size_t i, std::size_t j, std::size_t q,
                   std::size_t r) -> double& {
    return out.ww[(((m * d + i) * d + j) * d + q) * d + r];
  };
  for (int k = 2; k <= t; ++k) {
    const Mat& ek = eta_ff[static_cast<std::size_t>(k - 1)];
    for (int p = 1; p <= k - 1; ++p) {
      const Mat em = eta_mid(k - 1, p);
      const Vec& vp = v[static_cast<std::size_t>(p - 1)];
      for (std::size_t m = 0; m < d; ++m)
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t q = 0; q < d; ++q)
              for (std::size_t r = 0; r < d; ++r) {
                ww_at(m, i, j, q, r) += ek(m, i) * em(j, q) * vp[r];
                ww_at(m, i, j, q, r) += ek(m, q) * em(r, i) * vp[j];
              }
    }
  }

  out.wx.assign(d * d * d * d, 0.0);
  auto wx_at = [&](std::size_t m, std::size_t q, std::size_t r, std::size_t i) -> double& {
    return out.wx[((m * d + q) * d + r) * d + i];
  };
  for (std::size_t m = 0; m < d; ++m)
    for (std::size_t q = 0; q < d; ++q)
      for (std::size_t r = 0; r < d; ++r) wx_at(m, q, r, r) += eta_ff[0](m, q);
  for (int k = 2; k <= t; ++k) {
    const Mat& ek = eta_ff[static_cast<std::size_t>(k - 1)];
    const Mat dm = matmul(eta_mid(k - 1, 1), rs.w);
    for (std::size_t m = 0; m < d; ++m)
      for (std::size_t q = 0; q < d; ++q)
        for (std::size_t r = 0; r < d; ++r)
          for (std::size_t i = 0; i < d; ++i) wx_at(m, q, r, i) += ek(m, q) * dm(r, i);
  }
  return out;
}

double RnnLayerDerivs::d2v_dwdw(int m, int i, int j, int q, int r) const {
  const std::size_t dd = static_cast<std::size_t>(d);
  return ww[(((static_cast<std::size_t>(m) * dd + static_cast<std::size_t>(i)) * dd +
              static_cast<std::size_t>(j)) *
                 dd +
             static_cast<std::size_t>(q)) *
                dd +
            static_cast<std::size_t>(r)];
}

double RnnLayerDerivs::d2v_dwdx(int m, int q, int r, int i) const {
  const std::size_t dd = static_cast<std::size_t>(d);
  return wx[((static_cast<std::size_t>(m) * dd + static_cast<std::size_t>(q)) * dd +
             static_cast<std::size_t>(r)) *
                dd +
            static_cast<std::size_t>(i)];
}

RnnTrace rnn_forward(const RecurrentSpec& rs, const std::vector<Vec>& xs, int label) {
  rs.validate();
  if (xs.size() != static_cast<std::size_t>(rs.t_max))
    throw ShapeError("recurrent: need one input per step");
  for (const Vec& x : xs)
    if (x.size() != static_cast<std::size_t>(rs.d_in))
      throw ShapeError("recurrent: input has wrong size");
  if (label < 0 || label >= rs.classes) throw ValidationError("recurrent: label out of range");

  const std::size_t d = static_cast<std::size_t>(rs.d);
  RnnTrace tr;
  tr.v.push_back(Vec(d));
  for (int s = 1; s <= rs.t_max; ++s) {
    Vec z = matvec(rs.w, tr.v.back());
    const Vec ux = matvec(rs.u, xs[static_cast<std::size_t>(s - 1)]);
    for (std::size_t i = 0; i < d; ++i) z[i] += ux[i];
    Vec vs(d);
    for (std::size_t i = 0; i < d; ++i) vs[i] = relu(z[i]);
    tr.pre.push_back(std::move(z));
    tr.v.push_back(std::move(vs));
  }
  tr.p = matvec(rs.z, tr.v.back());
  tr.yhat = softmax_head(tr.p);
  tr.loss = -std::log(tr.yhat[static_cast<std::size_t>(label)]);
  if (!std::isfinite(tr.loss)) throw NumericError("recurrent: loss is not finite");
  return tr;
}

RnnNetworkDerivs rnn_network_derivs(const RecurrentSpec& rs, const std::vector<Vec>& xs,
                                    int label) {
  RnnNetworkDerivs out;
  out.trace = rnn_forward(rs, xs, label);
  const int n = rs.t_max;
  const std::size_t d = static_cast<std::size_t>(rs.d);
  const std::size_t din = static_cast<std::size_t>(rs.d_in);
  const std::size_t c = static_cast<std::size_t>(rs.classes);

  std::vector<Vec> gammas;
  gammas.reserve(static_cast<std::size_t>(n));
  for (int s = 1; s <= n; ++s) {
    const Vec& z = out.trace.pre[static_cast<std::size_t>(s - 1)];
    Vec gs(d);
    for (std::size_t i = 0; i < d; ++i) gs[i] = relu_d1(z[i]);
    gammas.push_back(std::move(gs));
  }

  Vec y(c);
  y[static_cast<std::size_t>(label)] = 1.0;
  out.df_dp = dfdp(out.trace.yhat, y);
  out.d2f_dp2 = d2fdp2(out.trace.yhat);

  // Top factors eta(n, r) for r = n+1 down to 2, then per-step pulls.
  out.eta_top.resize(static_cast<std::size_t>(n));
  {
    Mat acc = identity(d);
    for (int r = n + 1; r >= 2; --r) {
      Mat er = acc;
      const Vec& g = gammas[static_cast<std::size_t>(r - 2)];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) er(i, j) *= g[j];
      out.eta_top[static_cast<std::size_t>(r - 2)] = std::move(er);
      if (r > 2) acc = matmul(acc, step_beta(rs.w, gammas[static_cast<std::size_t>(r - 2)]));
    }
  }
  const Vec head_pull = tmatvec(rs.z, out.df_dp);
  out.g.reserve(static_cast<std::size_t>(n));
  std::vector<Mat> zeta;  // z eta(n, r), classes x d
  zeta.reserve(static_cast<std::size_t>(n));
  for (int r = 2; r <= n + 1; ++r) {
    const Mat& er = out.eta_top[static_cast<std::size_t>(r - 2)];
    out.g.push_back(tmatvec(er, head_pull));
    zeta.push_back(matmul(rs.z, er));
  }
  const Vec& vn = out.trace.v[static_cast<std::size_t>(n)];
  auto left_vec = [&](int r) -> const Vec& { return out.trace.v[static_cast<std::size_t>(r - 2)]; };
  auto input_vec = [&](int r) -> const Vec& { return xs[static_cast<std::size_t>(r - 2)]; };

  out.df_dz = outer(out.df_dp, vn);
  out.df_dw = Mat(d, d);
  out.df_du = Mat(d, din);
  for (int r = 2; r <= n + 1; ++r) {
    const Vec& gr = out.g[static_cast<std::size_t>(r - 2)];
    const Vec& vr = left_vec(r);
    const Vec& xr = input_vec(r);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) out.df_dw(i, j) += gr[i] * vr[j];
      for (std::size_t j = 0; j < din; ++j) out.df_du(i, j) += gr[i] * xr[j];
    }
  }

  out.hzz = Mat(c * d, c * d);
  for (std::size_t s = 0; s < c; ++s)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t s2 = 0; s2 < c; ++s2)
        for (std::size_t t2 = 0; t2 < d; ++t2)
          out.hzz(s * d + t, s2 * d + t2) = out.d2f_dp2(s, s2) * vn[t] * vn[t2];

  out.hzw = Mat(c * d, d * d);
  out.hzu = Mat(c * d, d * din);
  for (int r = 2; r <= n + 1; ++r) {
    const Mat& er = out.eta_top[static_cast<std::size_t>(r - 2)];
    const Mat dz = matmul(out.d2f_dp2, zeta[static_cast<std::size_t>(r - 2)]);
    const Vec& vr = left_vec(r);
    const Vec& xr = input_vec(r);
    for (std::size_t s = 0; s < c; ++s)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t i = 0; i < d; ++i) {
          const double both = out.df_dp[s] * er(t, i) + dz(s, i) * vn[t];
          for (std::size_t j = 0; j < d; ++j)
            out.hzw(s * d + t, i * d + j) += both * vr[j];
          for (std::size_t j = 0; j < din; ++j)
            out.hzu(s * d + t, i * din + j) += both * xr[j];
        }
  }

  out.huu = Mat(d * din, d * din);
  out.hwu = Mat(d * d, d * din);
  out.hww = Mat(d * d, d * d);
  for (int r = 2; r <= n + 1; ++r) {
    for (int cc = 2; cc <= n + 1; ++cc) {
      const Mat gn = matmul(transpose(zeta[static_cast<std::size_t>(r - 2)]),
                            matmul(out.d2f_dp2, zeta[static_cast<std::size_t>(cc - 2)]));
      const Vec& vr = left_vec(r);
      const Vec& xr = input_vec(r);
      const Vec& vc = left_vec(cc);
      const Vec& xc = input_vec(cc);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t q = 0; q < d; ++q) {
          const double gniq = gn(i, q);
          if (gniq == 0.0) continue;
          for (std::size_t j = 0; j < din; ++j)
            for (std::size_t s = 0; s < din; ++s)
              out.huu(i * din + j, q * din + s) += gniq * xr[j] * xc[s];
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t s = 0; s < din; ++s)
              out.hwu(i * d + j, q * din + s) += gniq * vr[j] * xc[s];
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t s = 0; s < d; ++s)
              out.hww(i * d + j, q * d + s) += gniq * vr[j] * vc[s];
        }
    }
  }
  // Second-order routes where one unrolled copy of a weight feeds the state
  // seen by a later copy. Steps r and cc here satisfy cc <= r-1, so the inner
  // factor eta(r-2, cc) is always well formed.
  for (int r = 2; r <= n + 1; ++r) {
    const Vec& gr = out.g[static_cast<std::size_t>(r - 2)];
    for (int cc = 2; cc <= r - 1; ++cc) {
      const Mat em = eta_rec(rs.w, gammas, r - 2, cc);
      const Vec& vc = left_vec(cc);
      const Vec& xc = input_vec(cc);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t q = 0; q < d; ++q) {
            const double base = gr[i] * em(j, q);
            if (base == 0.0) continue;
            for (std::size_t s = 0; s < din; ++s)
              out.hwu(i * d + j, q * din + s) += base * xc[s];
            for (std::size_t s = 0; s < d; ++s)
              out.hww(i * d + j, q * d + s) += base * vc[s];
          }
    }
  }
  // Mirror route for ww: the lower copy sits on the column side.
  for (int cc = 2; cc <= n + 1; ++cc) {
    const Vec& gc = out.g[static_cast<std::size_t>(cc - 2)];
    for (int r = 2; r <= cc - 1; ++r) {
      const Mat em = eta_rec(rs.w, gammas, cc - 2, r);
      const Vec& vr = left_vec(r);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t q = 0; q < d; ++q)
            for (std::size_t s = 0; s < d; ++s)
              out.hww(i * d + j, q * d + s) += gc[q] * em(s, i) * vr[j];
    }
  }
  return out;
}

}  // namespace netderiv
