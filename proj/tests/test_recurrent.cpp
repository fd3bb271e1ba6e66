#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "netderiv/factors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/hessian.hpp"
#include "netderiv/recurrent.hpp"
#include "netderiv/rng.hpp"
#include "netderiv/synth.hpp"

using namespace netderiv;

namespace {

// State orbit of the recurrence v_k = relu(w v_{k-1}) from v_0 = x. With
// positive w and x every pre-activation stays positive, so the trajectory
// is safely away from the kink for difference probes.
Vec evolve(const Mat& w, const Vec& x, int t) {
  Vec v = x;
  for (int k = 0; k < t; ++k) {
    Vec next = matvec(w, v);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = std::max(0.0, next[i]);
    v = next;
  }
  return v;
}

Mat positive_mat(Rng& rng, std::size_t r, std::size_t c, double shift) {
  Mat m(r, c);
  for (std::size_t e = 0; e < m.size(); ++e) m.data()[e] = 0.4 * std::abs(rng.normal()) + shift;
  return m;
}

Vec positive_vec(Rng& rng, std::size_t n, double shift) {
  Vec v(n);
  for (std::size_t e = 0; e < n; ++e) v[e] = std::abs(rng.normal()) + shift;
  return v;
}

Vec rnn_theta(const RecurrentSpec& rs) {
  Vec th(rs.z.size() + rs.w.size() + rs.u.size());
  std::size_t at = 0;
  for (std::size_t e = 0; e < rs.z.size(); ++e) th[at++] = rs.z.data()[e];
  for (std::size_t e = 0; e < rs.w.size(); ++e) th[at++] = rs.w.data()[e];
  for (std::size_t e = 0; e < rs.u.size(); ++e) th[at++] = rs.u.data()[e];
  return th;
}

RecurrentSpec rnn_with(const RecurrentSpec& rs, const Vec& th) {
  RecurrentSpec r2 = rs;
  std::size_t at = 0;
  for (std::size_t e = 0; e < r2.z.size(); ++e) r2.z.data()[e] = th[at++];
  for (std::size_t e = 0; e < r2.w.size(); ++e) r2.w.data()[e] = th[at++];
  for (std::size_t e = 0; e < r2.u.size(); ++e) r2.u.data()[e] = th[at++];
  return r2;
}

}  // namespace

TEST_CASE("unrolled layer derivatives match difference probes") {
  Rng rng(71);
  const FDConfig fd;
  const int d = 3, t = 3;
  RecurrentSpec rs;
  rs.d = d;
  rs.d_in = d;
  rs.classes = 2;
  rs.t_max = t;
  rs.w = positive_mat(rng, d, d, 0.15);
  rs.u = positive_mat(rng, d, d, 0.1);
  rs.z = positive_mat(rng, 2, d, 0.1);
  const Vec x = positive_vec(rng, d, 0.2);

  const RnnLayerDerivs ld = rnn_layer_derivs(rs, x, t);

  // theta = [w row-major ; x]
  Vec theta0(static_cast<std::size_t>(d * d + d));
  for (int i = 0; i < d * d; ++i) theta0[static_cast<std::size_t>(i)] = rs.w.data()[i];
  for (int i = 0; i < d; ++i)
    theta0[static_cast<std::size_t>(d * d + i)] = x[static_cast<std::size_t>(i)];
  auto state_at = [&](int m, const Vec& th) {
    Mat w2 = rs.w;
    Vec x2 = x;
    for (int e = 0; e < d * d; ++e) w2.data()[e] = th[static_cast<std::size_t>(e)];
    for (int e = 0; e < d; ++e) x2[static_cast<std::size_t>(e)] = th[static_cast<std::size_t>(d * d + e)];
    return evolve(w2, x2, t)[static_cast<std::size_t>(m)];
  };

  for (int m = 0; m < d; ++m) {
    const Vec g = fd_grad([&](const Vec& th) { return state_at(m, th); }, theta0, fd);
    for (int s = 0; s < d; ++s)
      for (int r = 0; r < d; ++r)
        CHECK(std::abs(ld.dv_dw(m, s, r) - g[static_cast<std::size_t>(s * d + r)]) <= 1e-6);
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(ld.dv_dx(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) -
                     g[static_cast<std::size_t>(d * d + i)]) <= 1e-6);

    const Mat hh =
        fd_hess_of_value([&](const Vec& th) { return state_at(m, th); }, theta0, fd);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int q = 0; q < d; ++q)
          for (int r = 0; r < d; ++r)
            CHECK(std::abs(ld.d2v_dwdw(m, i, j, q, r) -
                           hh(static_cast<std::size_t>(i * d + j),
                              static_cast<std::size_t>(q * d + r))) <= 1e-5);
    for (int q = 0; q < d; ++q)
      for (int r = 0; r < d; ++r)
        for (int i = 0; i < d; ++i)
          CHECK(std::abs(ld.d2v_dwdx(m, q, r, i) -
                         hh(static_cast<std::size_t>(q * d + r),
                            static_cast<std::size_t>(d * d + i))) <= 1e-5);
    // No state-state curvature with a piecewise-linear activation; the
    // probe sees difference noise only, well under any genuine entry.
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(std::abs(hh(static_cast<std::size_t>(d * d + i),
                          static_cast<std::size_t>(d * d + j))) <= 1e-6);
  }
}

TEST_CASE("single unrolled step reduces to the slope-scaled input") {
  Rng rng(72);
  const int d = 3;
  RecurrentSpec rs;
  rs.d = d;
  rs.d_in = d;
  rs.classes = 2;
  rs.t_max = 1;
  rs.w = positive_mat(rng, d, d, 0.15);
  rs.u = positive_mat(rng, d, d, 0.1);
  rs.z = positive_mat(rng, 2, d, 0.1);
  const Vec x = positive_vec(rng, d, 0.2);
  const RnnLayerDerivs ld = rnn_layer_derivs(rs, x, 1);

  // All pre-activations positive: slope one, so dv_dw[m](s,r) = d_{ms} x[r],
  // the state jacobian is w itself, and the only curvature is the mixed
  // delta block.
  for (int m = 0; m < d; ++m)
    for (int s = 0; s < d; ++s)
      for (int r = 0; r < d; ++r)
        CHECK(ld.dv_dw(m, s, r) ==
              doctest::Approx(m == s ? x[static_cast<std::size_t>(r)] : 0.0).epsilon(1e-15));
  for (int m = 0; m < d; ++m)
    for (int i = 0; i < d; ++i)
      CHECK(ld.dv_dx(static_cast<std::size_t>(m), static_cast<std::size_t>(i)) ==
            doctest::Approx(rs.w(static_cast<std::size_t>(m), static_cast<std::size_t>(i)))
                .epsilon(1e-15));
  for (int m = 0; m < d; ++m)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int q = 0; q < d; ++q)
          for (int r = 0; r < d; ++r) CHECK(ld.d2v_dwdw(m, i, j, q, r) == 0.0);
  for (int m = 0; m < d; ++m)
    for (int q = 0; q < d; ++q)
      for (int r = 0; r < d; ++r)
        for (int i = 0; i < d; ++i)
          CHECK(ld.d2v_dwdx(m, q, r, i) ==
                doctest::Approx(m == q && r == i ? 1.0 : 0.0).epsilon(1e-15));
}

TEST_CASE("network gradient and all second-order blocks match difference probes") {
  Rng rng(73);
  const FDConfig fd;
  const RnnCase rc = live_rnn_case(rng, 3, 2, 3, 3, fd.kink_margin);
  const RnnNetworkDerivs nd = rnn_network_derivs(rc.rs, rc.xs, rc.label);
  const Vec theta0 = rnn_theta(rc.rs);

  const Vec g_fd = fd_grad(
      [&](const Vec& th) { return rnn_forward(rnn_with(rc.rs, th), rc.xs, rc.label).loss; },
      theta0, fd);
  Vec g_an(theta0.size());
  {
    std::size_t at = 0;
    for (std::size_t e = 0; e < nd.df_dz.size(); ++e) g_an[at++] = nd.df_dz.data()[e];
    for (std::size_t e = 0; e < nd.df_dw.size(); ++e) g_an[at++] = nd.df_dw.data()[e];
    for (std::size_t e = 0; e < nd.df_du.size(); ++e) g_an[at++] = nd.df_du.data()[e];
  }
  CHECK(rel_err_max(g_an, g_fd) <= 1e-6);

  Mat hfd = fd_hess_of_grad(
      [&](const Vec& th) {
        const RecurrentSpec r2 = rnn_with(rc.rs, th);
        const RnnNetworkDerivs nd2 = rnn_network_derivs(r2, rc.xs, rc.label);
        Vec g(th.size());
        std::size_t at = 0;
        for (std::size_t e = 0; e < nd2.df_dz.size(); ++e) g[at++] = nd2.df_dz.data()[e];
        for (std::size_t e = 0; e < nd2.df_dw.size(); ++e) g[at++] = nd2.df_dw.data()[e];
        for (std::size_t e = 0; e < nd2.df_du.size(); ++e) g[at++] = nd2.df_du.data()[e];
        return g;
      },
      theta0, fd);
  for (std::size_t i = 0; i < hfd.rows(); ++i)
    for (std::size_t j = i + 1; j < hfd.cols(); ++j) {
      const double avg = 0.5 * (hfd(i, j) + hfd(j, i));
      hfd(i, j) = avg;
      hfd(j, i) = avg;
    }

  const std::size_t cz = rc.rs.z.size(), cw = rc.rs.w.size();
  auto block_err = [&](const Mat& b, std::size_t r0, std::size_t c0) {
    double amax = 0.0, dmax = 0.0;
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) {
        amax = std::max({amax, std::abs(b(i, j)), std::abs(hfd(r0 + i, c0 + j))});
        dmax = std::max(dmax, std::abs(b(i, j) - hfd(r0 + i, c0 + j)));
      }
    return dmax / std::max(1e-12, amax);
  };
  CHECK(block_err(nd.hzz, 0, 0) <= 1e-5);
  CHECK(block_err(nd.hzw, 0, cz) <= 1e-5);
  CHECK(block_err(nd.hzu, 0, cz + cw) <= 1e-5);
  CHECK(block_err(nd.hww, cz, cz) <= 1e-5);
  CHECK(block_err(nd.hwu, cz, cz + cw) <= 1e-5);
  CHECK(block_err(nd.huu, cz + cw, cz + cw) <= 1e-5);

  // Diagonal blocks are symmetric on their own.
  for (const Mat* b : {&nd.hzz, &nd.hww, &nd.huu})
    for (std::size_t i = 0; i < b->rows(); ++i)
      for (std::size_t j = i + 1; j < b->cols(); ++j)
        CHECK(std::abs((*b)(i, j) - (*b)(j, i)) <= 1e-12 * std::max(1.0, max_abs(*b)));
}

TEST_CASE("one-step network is the one-layer feedforward net in disguise") {
  Rng rng(74);
  const FDConfig fd;
  const RnnCase rc = live_rnn_case(rng, 3, 2, 3, 1, fd.kink_margin);
  const RnnNetworkDerivs nd = rnn_network_derivs(rc.rs, rc.xs, rc.label);

  NetworkSpec spec;
  spec.n = 1;
  spec.dims = {rc.rs.d_in, rc.rs.d};
  spec.classes = rc.rs.classes;
  spec.activation = ActKind::kReLU;
  WeightSet ws;
  ws.w = {rc.rs.u};
  ws.u = rc.rs.z;
  Sample s;
  s.x = rc.xs[0];
  s.y = Vec(static_cast<std::size_t>(rc.rs.classes));
  s.y[static_cast<std::size_t>(rc.label)] = 1.0;
  const ForwardTrace tr = forward(spec, ws, s);
  const HessianFactors hf = make_hessian_factors(spec, ws, tr, s);
  EtaGenerator gen(spec, ws, hf.gamma);

  CHECK(std::abs(rnn_forward(rc.rs, rc.xs, rc.label).loss - tr.loss) <= 1e-14);
  CHECK(rel_err_max(nd.df_dz, outer(hf.df_dp, hf.v_of(1))) <= 1e-12);
  CHECK(rel_err_max(nd.df_du, outer(hf.g_of(1), s.x)) <= 1e-12);
  CHECK(rel_err_max(nd.hzz, hess_uu(hf).densify()) <= 1e-12);
  CHECK(rel_err_max(nd.hzu, hess_uw(hf, 1).densify()) <= 1e-12);
  CHECK(rel_err_max(nd.huu, hess_ww(hf, 1, 1, gen).densify()) <= 1e-12);

  // The recurrence weight only ever sees the zero initial state.
  CHECK(max_abs(nd.df_dw) == 0.0);
  CHECK(max_abs(nd.hww) == 0.0);
  CHECK(max_abs(nd.hzw) == 0.0);
  CHECK(max_abs(nd.hwu) == 0.0);
}

TEST_CASE("recurrent spec validation") {
  RecurrentSpec rs;
  rs.d = 3;
  rs.d_in = 2;
  rs.classes = 3;
  rs.t_max = 2;
  rs.w = Mat(3, 3);
  rs.u = Mat(3, 2);
  rs.z = Mat(3, 3);
  CHECK_NOTHROW(rs.validate());
  rs.u = Mat(2, 2);
  CHECK_THROWS(rs.validate());
}
