#include "netderiv/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace netderiv {

namespace {
thread_local AllocStats g_alloc;
}

AllocStats alloc_stats() { return g_alloc; }

void alloc_stats_reset() { g_alloc = AllocStats{}; }

namespace detail {
void track_alloc(std::size_t elems) {
  if (elems == 0) return;
  g_alloc.allocations += 1;
  g_alloc.elements += elems;
  g_alloc.max_single = std::max<std::uint64_t>(g_alloc.max_single, elems);
}
}  // namespace detail

Mat identity(std::size_t n) {
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  return a;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

Vec matvec(const Mat& a, const Vec& x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vec y(a.rows());
  matvec_into(a, x.data(), y.data());
  return y;
}

Vec tmatvec(const Mat& a, const Vec& x) {
  if (a.rows() != x.size()) throw ShapeError("tmatvec: dimension mismatch");
  Vec y(a.cols());
  tmatvec_into(a, x.data(), y.data());
  return y;
}

void matvec_into(const Mat& a, const double* x, double* y) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * x[k];
    y[i] = s;
  }
}

void tmatvec_into(const Mat& a, const double* x, double* y) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, j) * x[k];
    y[j] = s;
  }
}

Mat outer(const Vec& u, const Vec& v) {
  Mat a(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) a(i, j) = u[i] * v[j];
  return a;
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double frob(const Mat& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

double max_abs(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i]));
  return m;
}

namespace {

// One Jacobi rotation zeroing a(p,q); updates eigenvector columns alongside.
void jacobi_rotate(Mat& a, Mat& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  double t;
  if (theta >= 0.0)
    t = 1.0 / (theta + std::sqrt(theta * theta + 1.0));
  else
    t = -1.0 / (-theta + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const double tau = s / (1.0 + c);

  const std::size_t n = a.rows();
  a(p, p) -= t * apq;
  a(q, q) += t * apq;
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == p || r == q) continue;
    const double arp = a(r, p);
    const double arq = a(r, q);
    a(r, p) = arp - s * (arq + tau * arp);
    a(p, r) = a(r, p);
    a(r, q) = arq + s * (arp - tau * arq);
    a(q, r) = a(r, q);
  }
  for (std::size_t r = 0; r < n; ++r) {
    const double vrp = v(r, p);
    const double vrq = v(r, q);
    v(r, p) = vrp - s * (vrq + tau * vrp);
    v(r, q) = vrq + s * (vrp - tau * vrq);
  }
}

double max_offdiag(const Mat& a) {
  double m = 0.0;
  for (std::size_t p = 0; p + 1 < a.rows(); ++p)
    for (std::size_t q = p + 1; q < a.rows(); ++q) m = std::max(m, std::abs(a(p, q)));
  return m;
}

}  // namespace

SymEig sym_eig(const Mat& input) {
  if (input.rows() != input.cols()) throw ShapeError("sym_eig: matrix must be square");
  const std::size_t n = input.rows();
  const double scale = max_abs(input);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q)
      if (std::abs(input(p, q) - input(q, p)) > 1e-12 * std::max(scale, 1.0))
        throw ShapeError("sym_eig: input is not symmetric");

  Mat a = input;
  // Use the upper triangle as authoritative.
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q) a(q, p) = a(p, q);
  Mat v = identity(n);

  const double off_tol = 1e-14 * frob(input);
  const int max_sweeps = 100;
  int sweep = 0;
  while (max_offdiag(a) > off_tol) {
    if (++sweep > max_sweeps) throw NumericError("sym_eig: jacobi sweeps did not converge");
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (std::abs(a(p, q)) > off_tol) jacobi_rotate(a, v, p, q);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  SymEig out;
  out.values = Vec(n);
  out.vectors = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, j) = v(r, order[j]);
  }
  return out;
}

std::size_t svd_rank(const Mat& a, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0))
    throw ValidationError("svd_rank: rel_tol must lie in (0, 1)");
  if (a.rows() == 0 || a.cols() == 0) return 0;

  // Gram matrix on the smaller side.
  const bool tall = a.rows() >= a.cols();
  const std::size_t m = tall ? a.cols() : a.rows();
  Mat g(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      double s = 0.0;
      if (tall) {
        for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * a(k, j);
      } else {
        for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * a(j, k);
      }
      g(i, j) = s;
      g(j, i) = s;
    }
  }

  SymEig eig = sym_eig(g);
  double lmax = 0.0;
  for (double l : eig.values) lmax = std::max(lmax, l);
  if (lmax <= 0.0) return 0;

  // Eigenvalues of the Gram matrix are only trustworthy down to roughly
  // machine precision times its norm; below that they are rounding debris.
  const double noise_floor =
      16.0 * static_cast<double>(std::max(a.rows(), a.cols())) *
      std::numeric_limits<double>::epsilon() * lmax;
  const double sigma_max = std::sqrt(lmax);
  const double thresh = rel_tol * sigma_max;

  std::size_t rank = 0;
  for (double l : eig.values) {
    if (l <= noise_floor) continue;
    if (std::sqrt(l) > thresh) ++rank;
  }
  return rank;
}

}  // namespace netderiv
