#include "netderiv/conv.hpp"

#include <cmath>

#include "netderiv/activation.hpp"
#include "netderiv/errors.hpp"

namespace netderiv {

namespace {

ActKind to_act_kind(ConvAct a) {
  switch (a) {
    case ConvAct::kReLU:
      return ActKind::kReLU;
    case ConvAct::kTanh:
      return ActKind::kTanh;
    case ConvAct::kSoftplus:
      return ActKind::kSoftplus;
    case ConvAct::kSigmoid:
      return ActKind::kSigmoid;
    default:
      throw NumericError("identity has no ActKind equivalent");
  }
}

}  // namespace

double conv_act_value(ConvAct a, double z) {
  return a == ConvAct::kIdentity ? z : act::value(to_act_kind(a), z);
}

double conv_act_d1(ConvAct a, double z) {
  return a == ConvAct::kIdentity ? 1.0 : act::d1(to_act_kind(a), z);
}

double conv_act_d2(ConvAct a, double z) {
  return a == ConvAct::kIdentity ? 0.0 : act::d2(to_act_kind(a), z);
}

int ConvSpec::out_h() const { return (in_h - static_cast<int>(kernel.rows())) / stride_r + 1; }

int ConvSpec::out_w() const { return (in_w - static_cast<int>(kernel.cols())) / stride_c + 1; }

void ConvSpec::validate() const {
  if (kernel.rows() == 0 || kernel.cols() == 0) throw ShapeError("conv: empty kernel");
  if (stride_r < 1 || stride_c < 1) throw ShapeError("conv: strides must be positive");
  if (in_h < static_cast<int>(kernel.rows()) || in_w < static_cast<int>(kernel.cols()))
    throw ShapeError("conv: kernel larger than input");
}

ConvTrace conv_forward(const ConvSpec& cs, const Mat& x) {
  cs.validate();
  if (static_cast<int>(x.rows()) != cs.in_h || static_cast<int>(x.cols()) != cs.in_w)
    throw ShapeError("conv: input dims do not match spec");
  const int sh = cs.out_h();
  const int sw = cs.out_w();
  ConvTrace tr;
  tr.z = Mat(static_cast<std::size_t>(sh), static_cast<std::size_t>(sw));
  tr.v = Mat(static_cast<std::size_t>(sh), static_cast<std::size_t>(sw));
  for (int s = 0; s < sh; ++s)
    for (int t = 0; t < sw; ++t) {
      double acc = 0.0;
      for (std::size_t l = 0; l < cs.kernel.rows(); ++l)
        for (std::size_t k = 0; k < cs.kernel.cols(); ++k)
          acc += cs.kernel(l, k) * x(static_cast<std::size_t>(cs.stride_r * s) + l,
                                     static_cast<std::size_t>(cs.stride_c * t) + k);
      tr.z(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) = acc;
      tr.v(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) =
          conv_act_value(cs.activation, acc);
    }
  return tr;
}

ConvDerivs conv_derivs(const ConvSpec& cs, const Mat& x, const ConvTrace& trace) {
  cs.validate();
  ConvDerivs cd;
  cd.spec = cs;
  cd.x = x;
  cd.d1 = Mat(trace.z.rows(), trace.z.cols());
  cd.d2 = Mat(trace.z.rows(), trace.z.cols());
  for (std::size_t s = 0; s < trace.z.rows(); ++s)
    for (std::size_t t = 0; t < trace.z.cols(); ++t) {
      cd.d1(s, t) = conv_act_d1(cs.activation, trace.z(s, t));
      cd.d2(s, t) = conv_act_d2(cs.activation, trace.z(s, t));
    }
  return cd;
}

double ConvDerivs::dv_dw(int s, int t, int p, int q) const {
  return d1(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) *
         x(static_cast<std::size_t>(spec.stride_r * s + p),
           static_cast<std::size_t>(spec.stride_c * t + q));
}

double ConvDerivs::dv_dx(int s, int t, int i, int j) const {
  const int a = i - spec.stride_r * s;
  const int b = j - spec.stride_c * t;
  if (a < 0 || a >= static_cast<int>(spec.kernel.rows()) || b < 0 ||
      b >= static_cast<int>(spec.kernel.cols()))
    return 0.0;
  return d1(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) *
         spec.kernel(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
}

double ConvDerivs::d2v_dwdw(int s, int t, int p, int q, int p2, int q2) const {
  return d2(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) *
         x(static_cast<std::size_t>(spec.stride_r * s + p),
           static_cast<std::size_t>(spec.stride_c * t + q)) *
         x(static_cast<std::size_t>(spec.stride_r * s + p2),
           static_cast<std::size_t>(spec.stride_c * t + q2));
}

double ConvDerivs::d2v_dwdx(int s, int t, int p, int q, int i, int j) const {
  const int a = i - spec.stride_r * s;
  const int b = j - spec.stride_c * t;
  double acc = 0.0;
  // Smooth route: the pixel moves the preactivation through the kernel entry
  // it multiplies. Linear route: the pixel multiplies kernel entry (p,q)
  // itself. At a == p, b == q both are present.
  if (a >= 0 && a < static_cast<int>(spec.kernel.rows()) && b >= 0 &&
      b < static_cast<int>(spec.kernel.cols())) {
    acc += d2(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) *
           spec.kernel(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) *
           x(static_cast<std::size_t>(spec.stride_r * s + p),
             static_cast<std::size_t>(spec.stride_c * t + q));
    if (a == p && b == q) acc += d1(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
  }
  return acc;
}

double ConvDerivs::d2v_dxdx(int s, int t, int i, int j, int i2, int j2) const {
  const int a = i - spec.stride_r * s;
  const int b = j - spec.stride_c * t;
  const int a2 = i2 - spec.stride_r * s;
  const int b2 = j2 - spec.stride_c * t;
  const int kh = static_cast<int>(spec.kernel.rows());
  const int kw = static_cast<int>(spec.kernel.cols());
  if (a < 0 || a >= kh || b < 0 || b >= kw || a2 < 0 || a2 >= kh || b2 < 0 || b2 >= kw)
    return 0.0;
  return d2(static_cast<std::size_t>(s), static_cast<std::size_t>(t)) *
         spec.kernel(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) *
         spec.kernel(static_cast<std::size_t>(a2), static_cast<std::size_t>(b2));
}

}  // namespace netderiv
