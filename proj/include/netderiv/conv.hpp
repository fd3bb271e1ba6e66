#pragma once

#include "netderiv/linalg.hpp"

namespace netderiv {

// Activation choices for the convolutional layer. Identity is included so
// the layer can be tested as a pure linear map.
enum class ConvAct { kIdentity, kReLU, kTanh, kSoftplus, kSigmoid };

double conv_act_value(ConvAct a, double z);
double conv_act_d1(ConvAct a, double z);
double conv_act_d2(ConvAct a, double z);

// Single convolutional layer: kernel slid over an H x W input with row
// stride stride_r and column stride stride_c, activation applied pointwise.
// All indices are 0-based; output site (s,t) reads the input patch whose top
// left corner is (stride_r*s, stride_c*t).
struct ConvSpec {
  Mat kernel;
  int stride_r = 1;
  int stride_c = 1;
  int in_h = 0;
  int in_w = 0;
  ConvAct activation = ConvAct::kTanh;

  int out_h() const;
  int out_w() const;
  void validate() const;
};

struct ConvTrace {
  Mat v;
  Mat z;
};

ConvTrace conv_forward(const ConvSpec& cs, const Mat& x);

// Pointwise first and second derivatives of one output site with respect to
// kernel entries (p,q) and input pixels (i,j). Accessors evaluate the closed
// forms on demand; sites are (s,t)-first in every signature.
struct ConvDerivs {
  ConvSpec spec;
  Mat x;
  Mat d1;
  Mat d2;

  double dv_dw(int s, int t, int p, int q) const;
  double dv_dx(int s, int t, int i, int j) const;
  double d2v_dwdw(int s, int t, int p, int q, int p2, int q2) const;
  double d2v_dwdx(int s, int t, int p, int q, int i, int j) const;
  double d2v_dxdx(int s, int t, int i, int j, int i2, int j2) const;
};

ConvDerivs conv_derivs(const ConvSpec& cs, const Mat& x, const ConvTrace& trace);

}  // namespace netderiv
