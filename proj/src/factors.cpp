#include "netderiv/factors.hpp"

#include <string>
#include <utility>

namespace netderiv {

GammaStack gamma_stack(const NetworkSpec& spec, const ForwardTrace& trace) {
  GammaStack gs;
  gs.g.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    const Vec& zk = trace.pre(k);
    Vec gk(zk.size());
    for (std::size_t i = 0; i < zk.size(); ++i) gk[i] = act::d1(spec.activation, zk[i]);
    gs.g.push_back(std::move(gk));
  }
  return gs;
}

Mat beta(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k) {
  if (k < 1 || k > spec.n) throw ShapeError("beta: layer index out of range");
  const Mat& wk = weights.layer(k);
  const Vec& gk = gs.layer(k);
  Mat b(wk.rows(), wk.cols());
  for (std::size_t r = 0; r < wk.rows(); ++r)
    for (std::size_t c = 0; c < wk.cols(); ++c) b(r, c) = gk[r] * wk(r, c);
  return b;
}

Mat alpha(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k, int l) {
  if (k < 0 || k > spec.n || l < 0 || l > spec.n)
    throw ShapeError("alpha: layer index out of range");
  if (k < l)
    return Mat(static_cast<std::size_t>(spec.dim(k)), static_cast<std::size_t>(spec.dim(l)));
  if (k == l) return identity(static_cast<std::size_t>(spec.dim(k)));
  Mat acc = beta(spec, weights, gs, l + 1);
  for (int i = l + 2; i <= k; ++i) acc = matmul(beta(spec, weights, gs, i), acc);
  return acc;
}

Mat eta(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k, int l) {
  if (l < 1) throw ShapeError("eta: second index must be a layer");
  Mat a = alpha(spec, weights, gs, k, l);
  const Vec& gl = gs.layer(l);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) a(r, c) *= gl[c];
  return a;
}

std::size_t EtaStack::scalar_count() const {
  std::size_t n = 0;
  for (const Mat& m : e) n += m.size();
  return n;
}

EtaStack eta_stack(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs) {
  EtaStack es;
  es.e.resize(static_cast<std::size_t>(spec.n));
  // Walk alpha(n, k) down from k = n; each step appends one beta factor.
  Mat acc = identity(static_cast<std::size_t>(spec.top_dim()));
  for (int k = spec.n; k >= 1; --k) {
    Mat ek = acc;  // alpha(n, k)
    const Vec& gk = gs.layer(k);
    for (std::size_t r = 0; r < ek.rows(); ++r)
      for (std::size_t c = 0; c < ek.cols(); ++c) ek(r, c) *= gk[c];
    es.e[static_cast<std::size_t>(k - 1)] = std::move(ek);
    if (k > 1) acc = matmul(acc, beta(spec, weights, gs, k));
  }
  return es;
}

std::size_t FactoredGradient::scalar_count() const {
  std::size_t n = df_dp.size() + u_right.size();
  for (const Vec& v : w_left) n += v.size();
  for (const Vec& v : w_right) n += v.size();
  return n;
}

FactoredGradient grad(const NetworkSpec& spec, const WeightSet& weights,
                      const ForwardTrace& trace, const EtaStack& es, const Sample& sample) {
  FactoredGradient fg;
  fg.df_dp = dfdp(trace, sample);
  fg.u_right = trace.layer_out(spec.n);
  const Vec head_pull = tmatvec(weights.u, fg.df_dp);  // u^T (yhat - y)
  fg.w_left.reserve(static_cast<std::size_t>(spec.n));
  fg.w_right.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    fg.w_left.push_back(tmatvec(es.top(k), head_pull));
    fg.w_right.push_back(trace.layer_out(k - 1));
  }
  return fg;
}

Vec grad_input(const NetworkSpec& spec, const WeightSet& weights, const ForwardTrace& trace,
               const GammaStack& gs, const Sample& sample) {
  const Vec head_pull = tmatvec(weights.u, dfdp(trace, sample));
  const Mat a = alpha(spec, weights, gs, spec.n, 0);
  return tmatvec(a, head_pull);
}

EtaGenerator::Column::Column(EtaGenerator* owner, int b, int lo, std::vector<Mat> mats)
    : owner_(owner), b_(b), lo_(lo), mats_(std::move(mats)) {}

EtaGenerator::Column::Column(Column&& o) noexcept
    : owner_(o.owner_), b_(o.b_), lo_(o.lo_), mats_(std::move(o.mats_)) {
  o.owner_ = nullptr;
  o.mats_.clear();
}

EtaGenerator::Column::~Column() {
  if (owner_ != nullptr && !mats_.empty())
    owner_->on_release(static_cast<std::int64_t>(mats_.size()));
}

const Mat& EtaGenerator::Column::at(int a) const {
  const int idx = a - lo_;
  if (idx < 0 || static_cast<std::size_t>(idx) >= mats_.size())
    throw ShapeError("eta column: row index " + std::to_string(a) + " not held");
  return mats_[static_cast<std::size_t>(idx)];
}

EtaGenerator::Column EtaGenerator::column(int b) {
  if (b < 1 || b >= spec_->n)
    throw ShapeError("eta column: index must satisfy 1 <= b < n");
  std::vector<Mat> mats;
  mats.reserve(static_cast<std::size_t>(spec_->n - b));
  // Ascend the column: alpha(b,b) = I, alpha(a,b) = beta_a alpha(a-1,b).
  Mat acc = identity(static_cast<std::size_t>(spec_->dim(b)));
  const Vec& gb = gs_->layer(b);
  for (int a = b; a <= spec_->n - 1; ++a) {
    if (a > b) acc = matmul(beta(*spec_, *weights_, *gs_, a), acc);
    Mat ek = acc;
    for (std::size_t r = 0; r < ek.rows(); ++r)
      for (std::size_t c = 0; c < ek.cols(); ++c) ek(r, c) *= gb[c];
    mats.push_back(std::move(ek));
  }
  on_make(static_cast<std::int64_t>(mats.size()));
  return Column(this, b, b, std::move(mats));
}

EtaGenerator::Column EtaGenerator::single(int a, int b) {
  if (b < 1 || a < b || a >= spec_->n)
    throw ShapeError("eta single: need 1 <= b <= a < n");
  std::vector<Mat> mats;
  mats.push_back(eta(*spec_, *weights_, *gs_, a, b));
  on_make(1);
  return Column(this, b, a, std::move(mats));
}

void EtaGenerator::on_make(std::int64_t n) {
  live_ += n;
  total_made_ += n;
  if (live_ > peak_live_) peak_live_ = live_;
}

void EtaGenerator::on_release(std::int64_t n) { live_ -= n; }

}  // namespace netderiv
