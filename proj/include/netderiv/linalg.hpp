#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "netderiv/errors.hpp"

namespace netderiv {

// Buffer accounting used by the storage guarantees: every Vec/Mat/Rank3
// construction is recorded so hot paths can assert they allocate nothing.
struct AllocStats {
  std::uint64_t allocations = 0;  // container buffers created
  std::uint64_t elements = 0;     // total elements across those buffers
  std::uint64_t max_single = 0;   // largest single buffer, in elements
};

AllocStats alloc_stats();
void alloc_stats_reset();

namespace detail {
void track_alloc(std::size_t elems);
}

class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : d_(n, fill) {
    detail::track_alloc(n);
  }
  Vec(std::initializer_list<double> xs) : d_(xs) { detail::track_alloc(d_.size()); }
  Vec(const Vec& o) : d_(o.d_) { detail::track_alloc(d_.size()); }
  Vec(Vec&&) noexcept = default;
  Vec& operator=(const Vec&) = default;
  Vec& operator=(Vec&&) noexcept = default;

  std::size_t size() const { return d_.size(); }
  double& operator[](std::size_t i) { return d_[i]; }
  double operator[](std::size_t i) const { return d_[i]; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  auto begin() { return d_.begin(); }
  auto end() { return d_.end(); }
  auto begin() const { return d_.begin(); }
  auto end() const { return d_.end(); }

 private:
  std::vector<double> d_;
};

// Dense row-major matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {
    detail::track_alloc(d_.size());
  }
  Mat(const Mat& o) : rows_(o.rows_), cols_(o.cols_), d_(o.d_) {
    detail::track_alloc(d_.size());
  }
  Mat(Mat&&) noexcept = default;
  Mat& operator=(const Mat&) = default;
  Mat& operator=(Mat&&) noexcept = default;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }
  double& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> d_;
};

class Rank3 {
 public:
  Rank3() = default;
  Rank3(std::size_t n0, std::size_t n1, std::size_t n2, double fill = 0.0)
      : n0_(n0), n1_(n1), n2_(n2), d_(n0 * n1 * n2, fill) {
    detail::track_alloc(d_.size());
  }
  Rank3(const Rank3& o) : n0_(o.n0_), n1_(o.n1_), n2_(o.n2_), d_(o.d_) {
    detail::track_alloc(d_.size());
  }
  Rank3(Rank3&&) noexcept = default;
  Rank3& operator=(const Rank3&) = default;
  Rank3& operator=(Rank3&&) noexcept = default;

  std::size_t dim0() const { return n0_; }
  std::size_t dim1() const { return n1_; }
  std::size_t dim2() const { return n2_; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return d_[(i * n1_ + j) * n2_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return d_[(i * n1_ + j) * n2_ + k];
  }

 private:
  std::size_t n0_ = 0, n1_ = 0, n2_ = 0;
  std::vector<double> d_;
};

Mat identity(std::size_t n);
Mat transpose(const Mat& a);

// All contractions run the shared index in ascending order; results are
// reproducible bit-for-bit for identical inputs.
Mat matmul(const Mat& a, const Mat& b);
Vec matvec(const Mat& a, const Vec& x);
Vec tmatvec(const Mat& a, const Vec& x);  // transpose(a) * x
Mat outer(const Vec& u, const Vec& v);
double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
double frob(const Mat& a);
double max_abs(const Vec& a);
double max_abs(const Mat& a);

// In-place kernels for preallocated buffers; never allocate.
void matvec_into(const Mat& a, const double* x, double* y);
void tmatvec_into(const Mat& a, const double* x, double* y);

struct SymEig {
  Vec values;   // ascending
  Mat vectors;  // column i pairs with values[i]; orthonormal
};

// Cyclic Jacobi on a symmetric matrix. Stops once every off-diagonal entry
// is at most 1e-14 * frob(input).
SymEig sym_eig(const Mat& a);

// Count of singular values above rel_tol * sigma_max, computed from the
// eigenvalues of A^T A (or A A^T, whichever is smaller). Eigenvalues below
// the numerical noise floor of the Gram matrix count as zero so exact-rank
// inputs are classified stably.
std::size_t svd_rank(const Mat& a, double rel_tol);

}  // namespace netderiv
