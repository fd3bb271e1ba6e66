#include "netderiv/fd.hpp"

#include <algorithm>
#include <cmath>

namespace netderiv {

void FDConfig::validate() const {
  if (!(step_first > 0.0) || !(step_second > 0.0))
    throw ValidationError("fd: steps must be positive");
  if (!(kink_margin >= 0.0)) throw ValidationError("fd: kink margin must be non-negative");
}

namespace {

double step_for(double step, double coord) {
  return step * std::max(1.0, std::abs(coord));
}

void check_finite(double v) {
  if (!std::isfinite(v)) throw NumericError("fd: probe produced a non-finite value");
}

}  // namespace

Vec fd_grad(const ScalarFn& f, const Vec& theta, const FDConfig& cfg) {
  cfg.validate();
  Vec g(theta.size());
  Vec probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = step_for(cfg.step_first, theta[i]);
    probe[i] = theta[i] + h;
    const double fp = f(probe);
    probe[i] = theta[i] - h;
    const double fm = f(probe);
    probe[i] = theta[i];
    check_finite(fp);
    check_finite(fm);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat fd_jacobian(const VecFn& f, const Vec& theta, const FDConfig& cfg) {
  cfg.validate();
  Vec probe = theta;
  Mat j;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = step_for(cfg.step_first, theta[i]);
    probe[i] = theta[i] + h;
    const Vec fp = f(probe);
    probe[i] = theta[i] - h;
    const Vec fm = f(probe);
    probe[i] = theta[i];
    if (fp.size() != fm.size()) throw ShapeError("fd_jacobian: output size changed");
    if (j.rows() == 0) j = Mat(fp.size(), theta.size());
    for (std::size_t r = 0; r < fp.size(); ++r) {
      check_finite(fp[r]);
      check_finite(fm[r]);
      j(r, i) = (fp[r] - fm[r]) / (2.0 * h);
    }
  }
  return j;
}

Mat fd_hess_of_grad(const VecFn& grad, const Vec& theta, const FDConfig& cfg) {
  return fd_jacobian(grad, theta, cfg);
}

Mat fd_hess_of_value(const ScalarFn& f, const Vec& theta, const FDConfig& cfg) {
  cfg.validate();
  const std::size_t n = theta.size();
  Mat h(n, n);
  const double f0 = f(theta);
  check_finite(f0);
  Vec probe = theta;
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = step_for(cfg.step_second, theta[i]);
    probe[i] = theta[i] + hi;
    const double fp = f(probe);
    probe[i] = theta[i] - hi;
    const double fm = f(probe);
    probe[i] = theta[i];
    h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double hj = step_for(cfg.step_second, theta[j]);
      probe[i] = theta[i] + hi;
      probe[j] = theta[j] + hj;
      const double fpp = f(probe);
      probe[j] = theta[j] - hj;
      const double fpm = f(probe);
      probe[i] = theta[i] - hi;
      probe[j] = theta[j] + hj;
      const double fmp = f(probe);
      probe[j] = theta[j] - hj;
      const double fmm = f(probe);
      probe[i] = theta[i];
      probe[j] = theta[j];
      check_finite(fpp);
      check_finite(fpm);
      check_finite(fmp);
      check_finite(fmm);
      const double v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

bool kink_guard(const ForwardTrace& trace, double margin) {
  for (const Vec& z : trace.z)
    for (double zi : z)
      if (std::abs(zi) <= margin) return false;
  return true;
}

double rel_err(double a, double b) {
  const double denom = std::max({1e-12, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

double rel_err_max(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("rel_err_max: size mismatch");
  const double denom = std::max({1e-12, max_abs(a), max_abs(b)});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  return worst;
}

double rel_err_max(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("rel_err_max: shape mismatch");
  const double denom = std::max({1e-12, max_abs(a), max_abs(b)});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  return worst;
}

}  // namespace netderiv
