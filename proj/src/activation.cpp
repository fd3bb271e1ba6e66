#include "netderiv/activation.hpp"

#include <cmath>

#include "netderiv/errors.hpp"

namespace netderiv {
namespace act {

namespace {

// Logistic function evaluated without overflow on either tail.
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double value(ActKind k, double z) {
  switch (k) {
    case ActKind::kReLU:
      return z > 0.0 ? z : 0.0;
    case ActKind::kTanh:
      return std::tanh(z);
    case ActKind::kSoftplus:
      // ln(1 + e^z) with the large-z branch rewritten so exp never overflows.
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    case ActKind::kSigmoid:
      return sigmoid(z);
  }
  throw ValidationError("activation value: unknown kind");
}

double d1(ActKind k, double z) {
  switch (k) {
    case ActKind::kReLU:
      return z > 0.0 ? 1.0 : 0.0;
    case ActKind::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActKind::kSoftplus:
      return sigmoid(z);
    case ActKind::kSigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
  }
  throw ValidationError("activation d1: unknown kind");
}

double d2(ActKind k, double z) {
  switch (k) {
    case ActKind::kReLU:
      return 0.0;
    case ActKind::kTanh: {
      const double t = std::tanh(z);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActKind::kSoftplus: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case ActKind::kSigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
  }
  throw ValidationError("activation d2: unknown kind");
}

bool has_curvature(ActKind k) { return k != ActKind::kReLU; }

ActKind from_string(const std::string& name) {
  if (name == "relu") return ActKind::kReLU;
  if (name == "tanh") return ActKind::kTanh;
  if (name == "softplus") return ActKind::kSoftplus;
  if (name == "sigmoid") return ActKind::kSigmoid;
  throw ValidationError("unknown activation: " + name);
}

std::string to_string(ActKind k) {
  switch (k) {
    case ActKind::kReLU:
      return "relu";
    case ActKind::kTanh:
      return "tanh";
    case ActKind::kSoftplus:
      return "softplus";
    case ActKind::kSigmoid:
      return "sigmoid";
  }
  return "unknown";
}

}  // namespace act
}  // namespace netderiv
