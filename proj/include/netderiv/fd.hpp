#pragma once

#include <functional>

#include "netderiv/linalg.hpp"
#include "netderiv/network.hpp"

namespace netderiv {

// Central-difference checker. Steps scale with each coordinate's magnitude so
// large and small parameters are probed at comparable relative resolution.
struct FDConfig {
  double step_first = 1e-5;    // first differences
  double step_second = 1e-4;   // second differences of values
  double kink_margin = 1e-3;   // minimum |preactivation| for ReLU checks

  void validate() const;
};

using ScalarFn = std::function<double(const Vec&)>;
using VecFn = std::function<Vec(const Vec&)>;

// Gradient of a scalar function, one central difference per coordinate.
Vec fd_grad(const ScalarFn& f, const Vec& theta, const FDConfig& cfg);

// Jacobian of a vector function: column i is the central difference in e_i.
// rows = output size, cols = theta size.
Mat fd_jacobian(const VecFn& f, const Vec& theta, const FDConfig& cfg);

// Hessian from central differences of a supplied gradient function.
Mat fd_hess_of_grad(const VecFn& grad, const Vec& theta, const FDConfig& cfg);

// Hessian from second differences of values only (4-point off-diagonal
// stencil); slower and noisier but independent of any gradient code.
Mat fd_hess_of_value(const ScalarFn& f, const Vec& theta, const FDConfig& cfg);

// True when every preactivation in the trace sits at least `margin` away
// from the ReLU kink, so difference quotients cannot straddle it.
bool kink_guard(const ForwardTrace& trace, double margin);

// |a-b| scaled by the larger magnitude present, floored at 1e-12 so exact
// zeros compare equal. The array forms report the max deviation against the
// max-norm of the operands; per-entry denominators would let entries that
// are merely rounding noise dominate the verdict.
double rel_err(double a, double b);
double rel_err_max(const Vec& a, const Vec& b);
double rel_err_max(const Mat& a, const Mat& b);

}  // namespace netderiv
