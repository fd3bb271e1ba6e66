#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "netderiv/factors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/hessian.hpp"
#include "netderiv/hessian_general.hpp"
#include "netderiv/rng.hpp"
#include "netderiv/synth.hpp"

using namespace netderiv;

namespace {

Vec analytic_grad(const NetworkSpec& spec, const ParamLayout& lay, const Sample& s,
                  const Vec& theta) {
  const WeightSet ws = lay.unflatten_weights(spec, theta);
  const ForwardTrace tr = forward(spec, ws, s);
  const GammaStack gs = gamma_stack(spec, tr);
  const EtaStack es = eta_stack(spec, ws, gs);
  const FactoredGradient fg = grad(spec, ws, tr, es, s);
  std::vector<Mat> dw;
  for (int k = 1; k <= spec.n; ++k) dw.push_back(fg.densify_w(k));
  return lay.flatten(fg.densify_u(), dw);
}

void fd_symmetrize(Mat& h) {
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = i + 1; j < h.cols(); ++j) {
      const double avg = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = avg;
      h(j, i) = avg;
    }
}

// Rebuilds gamma / alpha / eta at perturbed weights for slice probes.
struct Rebuilt {
  WeightSet ws;
  ForwardTrace tr;
  GammaStack gs;
};

Rebuilt rebuild(const NetworkSpec& spec, WeightSet ws, const Sample& s, int q, int sq, int tq,
                double delta) {
  ws.layer(q)(static_cast<std::size_t>(sq), static_cast<std::size_t>(tq)) += delta;
  Rebuilt r{std::move(ws), {}, {}};
  r.tr = forward(spec, r.ws, s);
  r.gs = gamma_stack(spec, r.tr);
  return r;
}

}  // namespace

TEST_CASE("slope-vector derivative slices match central differences") {
  Rng rng(41);
  const TestNet tn = random_net(rng, ActKind::kTanh, 3, 3, 2, 4, 2, 3);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const GeneralFactors gf = make_general_factors(hf);
  const double h = 1e-5;

  for (int l = 1; l <= tn.spec.n; ++l)
    for (int q = 1; q <= tn.spec.n; ++q) {
      const DGammaDw d = dgamma_dw(gf, l, q);
      for (int sq = 0; sq < tn.spec.dim(q); ++sq)
        for (int tq = 0; tq < tn.spec.dim(q - 1); ++tq) {
          const Vec slice = d.slice(sq, tq);
          const Rebuilt plus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, h);
          const Rebuilt minus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, -h);
          for (int m = 0; m < tn.spec.dim(l); ++m) {
            const double fdv = (plus.gs.layer(l)[static_cast<std::size_t>(m)] -
                                minus.gs.layer(l)[static_cast<std::size_t>(m)]) /
                               (2.0 * h);
            CHECK(std::abs(slice[static_cast<std::size_t>(m)] - fdv) <= 1e-6);
          }
        }
    }
}

TEST_CASE("propagator derivative slices match central differences") {
  Rng rng(42);
  const TestNet tn = random_net(rng, ActKind::kSoftplus, 3, 3, 2, 4, 2, 3);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const GeneralFactors gf = make_general_factors(hf);
  const double h = 1e-5;
  const int n = tn.spec.n;

  for (int k = 1; k <= n; ++k)
    for (int l = 0; l < k; ++l)
      for (int q = 1; q <= n; ++q) {
        const DAlphaDw d = dalpha_dw(gf, k, l, q);
        for (int sq = 0; sq < tn.spec.dim(q); ++sq)
          for (int tq = 0; tq < tn.spec.dim(q - 1); ++tq) {
            const Mat slice = d.slice(sq, tq);
            const Rebuilt plus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, h);
            const Rebuilt minus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, -h);
            const Mat ap = alpha(tn.spec, plus.ws, plus.gs, k, l);
            const Mat am = alpha(tn.spec, minus.ws, minus.gs, k, l);
            for (std::size_t i = 0; i < slice.rows(); ++i)
              for (std::size_t j = 0; j < slice.cols(); ++j)
                CHECK(std::abs(slice(i, j) - (ap(i, j) - am(i, j)) / (2.0 * h)) <= 1e-6);
          }
      }

  for (int k = 1; k <= n; ++k)
    for (int q = 1; q <= n; ++q) {
      const DEtaDw d = deta_dw(gf, k, q);
      for (int sq = 0; sq < tn.spec.dim(q); ++sq)
        for (int tq = 0; tq < tn.spec.dim(q - 1); ++tq) {
          const Mat slice = d.slice(sq, tq);
          const Rebuilt plus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, h);
          const Rebuilt minus = rebuild(tn.spec, tn.weights, tn.sample, q, sq, tq, -h);
          const Mat ep = eta(tn.spec, plus.ws, plus.gs, n, k);
          const Mat em = eta(tn.spec, minus.ws, minus.gs, n, k);
          for (std::size_t i = 0; i < slice.rows(); ++i)
            for (std::size_t j = 0; j < slice.cols(); ++j)
              CHECK(std::abs(slice(i, j) - (ep(i, j) - em(i, j)) / (2.0 * h)) <= 1e-6);
        }
    }
}

TEST_CASE("general dense assembly matches differentiated gradients per activation") {
  Rng rng(43);
  const FDConfig fd;
  for (const ActKind act : {ActKind::kTanh, ActKind::kSoftplus, ActKind::kSigmoid}) {
    // n = 3 exercises all three relative layer positions in the curvature
    // route (below, equal, above).
    const TestNet tn = random_net(rng, act, 3, 3, 2, 4, 2, 3);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    const GeneralFactors gf = make_general_factors(hf);
    EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
    const DenseHessian dh = assemble_dense_general(gf, gen);
    CHECK(dh.asymmetry <= 1e-10 * std::max(1.0, max_abs(dh.h)));

    const Vec theta0 = dh.layout.flatten(tn.weights);
    Mat hfd = fd_hess_of_grad(
        [&](const Vec& th) { return analytic_grad(tn.spec, dh.layout, tn.sample, th); },
        theta0, fd);
    fd_symmetrize(hfd);
    CHECK(rel_err_max(dh.h, hfd) <= 1e-5);
  }
}

TEST_CASE("general path collapses to the piecewise-linear path exactly") {
  Rng rng(44);
  const FDConfig fd;
  for (int rep = 0; rep < 3; ++rep) {
    const TestNet tn = live_relu_net(rng, fd.kink_margin, 2, 3, 2, 4, 2, 3);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    const GeneralFactors gf = make_general_factors(hf);
    for (const Vec& lam : gf.lambda.l)
      for (std::size_t i = 0; i < lam.size(); ++i) CHECK(lam[i] == 0.0);

    EtaGenerator gen_a(tn.spec, tn.weights, hf.gamma);
    EtaGenerator gen_b(tn.spec, tn.weights, hf.gamma);
    const DenseHessian da = assemble_dense(hf, gen_a);
    const DenseHessian db = assemble_dense_general(gf, gen_b);
    CHECK(rel_err_max(da.h, db.h) <= 1e-12);
  }
}

TEST_CASE("curvature core keeps the case term out of the diagonal pairing") {
  Rng rng(45);
  const TestNet tn = random_net(rng, ActKind::kTanh, 3, 3, 2, 4, 2, 3);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const GeneralFactors gf = make_general_factors(hf);
  EtaGenerator gen(tn.spec, tn.weights, hf.gamma);

  const GeneralWwBlock diag = hess_ww_general(gf, 2, 2, gen);
  CHECK(diag.g_hi == nullptr);
  CHECK(diag.case_eta.size() == 0);
  const GeneralWwBlock off = hess_ww_general(gf, 1, 3, gen);
  CHECK(off.g_hi != nullptr);
  CHECK(off.case_eta.size() != 0);
}
