#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "netderiv/errors.hpp"
#include "netderiv/factors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/hessian.hpp"
#include "netderiv/hessian_general.hpp"
#include "netderiv/regularizers.hpp"
#include "netderiv/rng.hpp"
#include "netderiv/synth.hpp"

using namespace netderiv;

namespace {

// Draws until the head error is informative; a saturated softmax makes every
// regularizer vanishingly small and the comparisons meaningless.
TestNet informative_net(Rng& rng, ActKind act, int n_lo, int n_hi) {
  TestNet tn = random_net(rng, act, n_lo, n_hi, 2, 5, 2, 4);
  for (int a = 0; a < 50 && norm(dfdp(tn.trace, tn.sample)) < 0.05; ++a)
    tn = random_net(rng, act, n_lo, n_hi, 2, 5, 2, 4);
  return tn;
}

double loss_at_x(const TestNet& tn, const Vec& x) {
  Sample s2 = tn.sample;
  s2.x = x;
  return forward(tn.spec, tn.weights, s2).loss;
}

}  // namespace

TEST_CASE("input-gradient penalty: value and parameter derivatives") {
  Rng rng(51);
  const FDConfig fd;
  for (int rep = 0; rep < 3; ++rep) {
    const TestNet tn = informative_net(rng, rep % 2 == 0 ? ActKind::kTanh : ActKind::kSoftplus,
                                       1, 3);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    const GeneralFactors gf = make_general_factors(hf);
    const GradReg gr = grad_reg(gf);

    // zeta is the loss gradient in the input.
    const Vec fdx = fd_grad([&](const Vec& x) { return loss_at_x(tn, x); }, tn.sample.x, fd);
    CHECK(rel_err_max(gr.zeta, fdx) <= 1e-6);
    CHECK(gr.penalty == doctest::Approx(dot(gr.zeta, gr.zeta)).epsilon(1e-12));

    const ParamLayout lay = ParamLayout::of(tn.spec);
    const Vec theta0 = lay.flatten(tn.weights);
    const Vec pen_fd = fd_grad(
        [&](const Vec& th) {
          const WeightSet ws = lay.unflatten_weights(tn.spec, th);
          const ForwardTrace tr = forward(tn.spec, ws, tn.sample);
          const GammaStack gs = gamma_stack(tn.spec, tr);
          const Vec z = tmatvec(alpha(tn.spec, ws, gs, tn.spec.n, 0),
                                tmatvec(ws.u, dfdp(tr, tn.sample)));
          return dot(z, z);
        },
        theta0, fd);
    CHECK(rel_err_max(lay.flatten(gr.dpen_du, gr.dpen_dw), pen_fd) <= 1e-4);
  }
}

TEST_CASE("curvature penalty: value and parameter derivatives") {
  Rng rng(52);
  const FDConfig fd;
  for (int rep = 0; rep < 3; ++rep) {
    const TestNet tn = informative_net(rng, rep % 2 == 0 ? ActKind::kTanh : ActKind::kSoftplus,
                                       1, 3);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    const GeneralFactors gf = make_general_factors(hf);
    const CurvReg cr = curv_reg(gf);

    const double f = frob(cr.xi);
    CHECK(cr.penalty == doctest::Approx(f * f).epsilon(1e-12));

    const ParamLayout lay = ParamLayout::of(tn.spec);
    const Vec theta0 = lay.flatten(tn.weights);
    const Vec pen_fd = fd_grad(
        [&](const Vec& th) {
          const WeightSet ws = lay.unflatten_weights(tn.spec, th);
          const ForwardTrace tr = forward(tn.spec, ws, tn.sample);
          const GammaStack gs = gamma_stack(tn.spec, tr);
          const Mat ut = matmul(ws.u, alpha(tn.spec, ws, gs, tn.spec.n, 0));
          const Mat xi = matmul(transpose(ut), matmul(d2fdp2(tr), ut));
          const double fr = frob(xi);
          return fr * fr;
        },
        theta0, fd);
    CHECK(rel_err_max(lay.flatten(cr.dpen_du, cr.dpen_dw), pen_fd) <= 1e-4);
  }
}

TEST_CASE("full input Hessian matches value differences on smooth nets") {
  Rng rng(53);
  const FDConfig fd;
  const TestNet tn = informative_net(rng, ActKind::kTanh, 2, 3);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const GeneralFactors gf = make_general_factors(hf);
  const Mat ih = input_hessian(gf);
  const Mat ih_fd =
      fd_hess_of_value([&](const Vec& x) { return loss_at_x(tn, x); }, tn.sample.x, fd);
  CHECK(rel_err_max(ih, ih_fd) <= 1e-5);
}

TEST_CASE("pulled-back curvature equals the full input Hessian off the kinks") {
  Rng rng(54);
  const FDConfig fd;
  const TestNet tn = live_relu_net(rng, fd.kink_margin, 2, 3, 2, 5, 2, 4);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const GeneralFactors gf = make_general_factors(hf);
  const Mat xi = input_curvature(gf);
  const Mat xi_fd =
      fd_hess_of_value([&](const Vec& x) { return loss_at_x(tn, x); }, tn.sample.x, fd);
  CHECK(rel_err_max(xi, xi_fd) <= 1e-5);
  // With zero activation curvature the two input-Hessian routes coincide.
  CHECK(rel_err_max(xi, input_hessian(gf)) <= 1e-14);
}

TEST_CASE("perturbation bound: jacobian, scaling, and failure modes") {
  Rng rng(55);
  const FDConfig fd;
  const TestNet tn = informative_net(rng, ActKind::kTanh, 1, 3);
  const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
  const PerturbBound pb = make_perturb_bound(hf);

  const Mat jac_fd = fd_jacobian(
      [&](const Vec& x) {
        Sample s2 = tn.sample;
        s2.x = x;
        return forward(tn.spec, tn.weights, s2).yhat;
      },
      tn.sample.x, fd);
  CHECK(rel_err_max(pb.jac, jac_fd) <= 1e-6);
  CHECK(pb.frob == doctest::Approx(frob(pb.jac)).epsilon(1e-12));
  CHECK(pb.bound(0.2) == doctest::Approx(2.0 * pb.bound(0.1)).epsilon(1e-12));
  CHECK_THROWS_AS(pb.bound(0.0), ValidationError);
  CHECK_THROWS_AS(pb.bound(-0.5), ValidationError);

  WeightSet ws0 = tn.weights;
  ws0.u = Mat(ws0.u.rows(), ws0.u.cols());
  const ForwardTrace tr0 = forward(tn.spec, ws0, tn.sample);
  const HessianFactors hf0 = make_hessian_factors(tn.spec, ws0, tr0, tn.sample);
  CHECK_THROWS_AS(perturb_bound(hf0, 0.1), DegenerateBoundError);
}
