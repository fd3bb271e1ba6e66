#pragma once

#include <vector>

#include "netderiv/hessian_general.hpp"

namespace netderiv {

// Squared norm of the loss gradient with respect to the input, together with
// its exact derivatives in every weight block. zeta is the input gradient
// itself, so penalty == dot(zeta, zeta).
struct GradReg {
  Vec zeta;
  double penalty = 0.0;
  Mat dpen_du;
  std::vector<Mat> dpen_dw;
};

GradReg grad_reg(const GeneralFactors& gf);

// Gauss-Newton part of the input Hessian, u alpha(n,0) pulled back through
// the head curvature. For piecewise-linear activations this equals the full
// input Hessian away from kinks.
Mat input_curvature(const GeneralFactors& gf);

// Full input Hessian, including the activation-curvature route through every
// interior layer.
Mat input_hessian(const GeneralFactors& gf);

// Squared Frobenius norm of input_curvature and its weight derivatives.
struct CurvReg {
  Mat xi;
  double penalty = 0.0;
  Mat dpen_du;
  std::vector<Mat> dpen_dw;
};

CurvReg curv_reg(const GeneralFactors& gf);

// First-order output sensitivity: jac = d yhat / d x at the sample. bound()
// converts a tolerated output change into an input-radius estimate.
struct PerturbBound {
  Mat jac;
  double frob = 0.0;
  double bound(double dy) const;
};

PerturbBound make_perturb_bound(const HessianFactors& hf);
double perturb_bound(const HessianFactors& hf, double dy);

}  // namespace netderiv
