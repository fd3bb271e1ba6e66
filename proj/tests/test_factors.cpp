#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "netderiv/errors.hpp"
#include "netderiv/factors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/rng.hpp"
#include "netderiv/synth.hpp"

using namespace netderiv;

namespace {

// Fixed four-layer tanh net shared by the structural cases.
struct Fixture {
  NetworkSpec spec;
  WeightSet ws;
  Sample s;
  ForwardTrace tr;
  GammaStack gs;

  Fixture() {
    Rng rng(21);
    spec = random_spec(rng, ActKind::kTanh, 4, 4, 2, 5, 2, 4);
    ws = random_weights(spec, rng);
    s = random_sample(spec, rng);
    tr = forward(spec, ws, s);
    gs = gamma_stack(spec, tr);
  }
};

}  // namespace

TEST_CASE("gamma holds the activation slope at each pre-activation") {
  const Fixture f;
  for (int k = 1; k <= f.spec.n; ++k) {
    const Vec& g = f.gs.layer(k);
    const Vec& z = f.tr.pre(k);
    REQUIRE(g.size() == z.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = std::tanh(z[i]);
      CHECK(g[i] == doctest::Approx(1.0 - t * t).epsilon(1e-14));
    }
  }
}

TEST_CASE("alpha composes along the chain and is the identity on the diagonal") {
  const Fixture f;
  const int n = f.spec.n;
  for (int k = 0; k <= n; ++k) {
    const Mat a_kk = alpha(f.spec, f.ws, f.gs, k, k);
    for (std::size_t i = 0; i < a_kk.rows(); ++i)
      for (std::size_t j = 0; j < a_kk.cols(); ++j)
        CHECK(a_kk(i, j) == (i == j ? 1.0 : 0.0));
  }
  for (int k = 2; k <= n; ++k)
    for (int l = 1; l < k; ++l)
      for (int m = 0; m < l; ++m) {
        const Mat lhs = alpha(f.spec, f.ws, f.gs, k, m);
        const Mat rhs =
            matmul(alpha(f.spec, f.ws, f.gs, k, l), alpha(f.spec, f.ws, f.gs, l, m));
        CHECK(rel_err_max(lhs, rhs) <= 1e-12);
      }
}

TEST_CASE("eta is alpha with the source slope folded in") {
  const Fixture f;
  const int n = f.spec.n;
  for (int k = 1; k <= n; ++k)
    for (int l = 1; l <= k; ++l) {
      const Mat e = eta(f.spec, f.ws, f.gs, k, l);
      const Mat a = alpha(f.spec, f.ws, f.gs, k, l);
      for (std::size_t i = 0; i < e.rows(); ++i)
        for (std::size_t j = 0; j < e.cols(); ++j)
          CHECK(e(i, j) ==
                doctest::Approx(a(i, j) * f.gs.layer(l)[j]).epsilon(1e-13));
    }
}

TEST_CASE("eta stack top rows match the free construction") {
  const Fixture f;
  const EtaStack es = eta_stack(f.spec, f.ws, f.gs);
  for (int k = 1; k <= f.spec.n; ++k)
    CHECK(rel_err_max(es.top(k), eta(f.spec, f.ws, f.gs, f.spec.n, k)) <= 1e-14);
}

TEST_CASE("factored gradient matches finite differences and is rank one") {
  Rng rng(22);
  for (int rep = 0; rep < 4; ++rep) {
    const TestNet tn = random_net(rng, ActKind::kTanh, 1, 3, 2, 5, 2, 4);
    const GammaStack gs = gamma_stack(tn.spec, tn.trace);
    const EtaStack es = eta_stack(tn.spec, tn.weights, gs);
    const FactoredGradient fg = grad(tn.spec, tn.weights, tn.trace, es, tn.sample);
    const ParamLayout lay = ParamLayout::of(tn.spec);
    const Vec theta0 = lay.flatten(tn.weights);
    const FDConfig fd;

    std::vector<Mat> dw;
    for (int k = 1; k <= tn.spec.n; ++k) dw.push_back(fg.densify_w(k));
    const Mat du = fg.densify_u();
    const Vec an = lay.flatten(du, dw);
    const Vec num = fd_grad(
        [&](const Vec& th) {
          return forward(tn.spec, lay.unflatten_weights(tn.spec, th), tn.sample).loss;
        },
        theta0, fd);
    CHECK(rel_err_max(an, num) <= 1e-6);

    if (frob(du) > 0.0) CHECK(svd_rank(du, 1e-8) == 1);
    for (const Mat& m : dw)
      if (frob(m) > 0.0) CHECK(svd_rank(m, 1e-8) == 1);
  }
}

TEST_CASE("batch-averaged gradient blocks have rank at most the batch size") {
  Rng rng(23);
  const int batch = 3;
  const TestNet tn = random_net(rng, ActKind::kTanh, 2, 2, 4, 5, 3, 3);
  const GammaStack gs0 = gamma_stack(tn.spec, tn.trace);

  Mat mean_u(static_cast<std::size_t>(tn.spec.classes),
             static_cast<std::size_t>(tn.spec.top_dim()));
  for (int b = 0; b < batch; ++b) {
    const Sample s = random_sample(tn.spec, rng);
    const ForwardTrace tr = forward(tn.spec, tn.weights, s);
    const GammaStack gs = gamma_stack(tn.spec, tr);
    const EtaStack es = eta_stack(tn.spec, tn.weights, gs);
    const FactoredGradient fg = grad(tn.spec, tn.weights, tr, es, s);
    const Mat du = fg.densify_u();
    for (std::size_t e = 0; e < mean_u.size(); ++e)
      mean_u.data()[e] += du.data()[e] / batch;
  }
  CHECK(svd_rank(mean_u, 1e-8) <= static_cast<std::size_t>(batch));
}

TEST_CASE("input gradient pulls the head error back to the sample") {
  Rng rng(24);
  const TestNet tn = random_net(rng, ActKind::kSoftplus, 2, 3, 2, 5, 2, 4);
  const GammaStack gs = gamma_stack(tn.spec, tn.trace);
  const Vec gx = grad_input(tn.spec, tn.weights, tn.trace, gs, tn.sample);
  const FDConfig fd;
  const Vec gx_fd = fd_grad(
      [&](const Vec& x) {
        Sample s2 = tn.sample;
        s2.x = x;
        return forward(tn.spec, tn.weights, s2).loss;
      },
      tn.sample.x, fd);
  CHECK(rel_err_max(gx, gx_fd) <= 1e-6);
}

TEST_CASE("interior eta generator: counts, streaming peak, and content") {
  const Fixture f;  // n = 4
  const int n = f.spec.n;
  REQUIRE(n == 4);

  EtaGenerator gen(f.spec, f.ws, f.gs);
  CHECK(gen.live() == 0);
  {
    std::vector<EtaGenerator::Column> cols;
    for (int b = 1; b <= n - 1; ++b) cols.push_back(gen.column(b));
    // Interior set {eta(a,b) : 1 <= b <= a <= n-1} has n(n-1)/2 members.
    CHECK(gen.live() == n * (n - 1) / 2);
    for (int b = 1; b <= n - 1; ++b)
      for (int a = b; a <= n - 1; ++a)
        CHECK(rel_err_max(cols[static_cast<std::size_t>(b - 1)].at(a),
                          eta(f.spec, f.ws, f.gs, a, b)) <= 1e-13);
  }
  CHECK(gen.live() == 0);

  EtaGenerator stream(f.spec, f.ws, f.gs);
  for (int b = 1; b <= n - 1; ++b) {
    const EtaGenerator::Column col = stream.column(b);
    CHECK(col.b() == b);
  }
  // One column at a time: the widest is b = 1 with n-1 matrices.
  CHECK(stream.peak_live() == n - 1);
  CHECK(stream.total_made() == n * (n - 1) / 2);

  EtaGenerator one(f.spec, f.ws, f.gs);
  const EtaGenerator::Column single = one.column(2);
  CHECK(rel_err_max(one.single(3, 2).at(3), single.at(3)) <= 1e-14);
}

TEST_CASE("scalar counts cover exactly the stored factor entries") {
  const Fixture f;
  const EtaStack es = eta_stack(f.spec, f.ws, f.gs);
  std::size_t expect = 0;
  for (int k = 1; k <= f.spec.n; ++k)
    expect += static_cast<std::size_t>(f.spec.top_dim()) *
              static_cast<std::size_t>(f.spec.dim(k));
  CHECK(es.scalar_count() == expect);
}
