#pragma once

#include <string>

namespace netderiv {

enum class ActKind { kReLU, kTanh, kSoftplus, kSigmoid };

// Elementwise activation with its first two derivatives. ReLU reports a
// subgradient of 0 at z == 0 and has no second derivative anywhere it is
// defined, so its curvature channel is identically zero.
namespace act {

double value(ActKind k, double z);
double d1(ActKind k, double z);
double d2(ActKind k, double z);

// True when d2 is not identically zero; lets callers skip curvature terms.
bool has_curvature(ActKind k);

ActKind from_string(const std::string& name);
std::string to_string(ActKind k);

}  // namespace act

}  // namespace netderiv
