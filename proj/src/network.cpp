#include "netderiv/network.hpp"

#include <cmath>
#include <string>

namespace netderiv {

void NetworkSpec::validate() const {
  if (n < 1) throw ValidationError("spec: need at least one layer");
  if (dims.size() != static_cast<std::size_t>(n) + 1)
    throw ValidationError("spec: dims must hold n+1 entries");
  for (int d : dims)
    if (d < 1) throw ValidationError("spec: layer widths must be positive");
  if (classes < 2) throw ValidationError("spec: need at least two classes");
}

WeightSet WeightSet::zeros(const NetworkSpec& spec) {
  WeightSet ws;
  ws.w.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k)
    ws.w.emplace_back(static_cast<std::size_t>(spec.dim(k)),
                      static_cast<std::size_t>(spec.dim(k - 1)));
  ws.u = Mat(static_cast<std::size_t>(spec.classes), static_cast<std::size_t>(spec.top_dim()));
  return ws;
}

void WeightSet::validate(const NetworkSpec& spec) const {
  if (w.size() != static_cast<std::size_t>(spec.n))
    throw ShapeError("weights: wrong layer count");
  for (int k = 1; k <= spec.n; ++k) {
    const Mat& m = layer(k);
    if (m.rows() != static_cast<std::size_t>(spec.dim(k)) ||
        m.cols() != static_cast<std::size_t>(spec.dim(k - 1)))
      throw ShapeError("weights: layer " + std::to_string(k) + " has wrong shape");
  }
  if (u.rows() != static_cast<std::size_t>(spec.classes) ||
      u.cols() != static_cast<std::size_t>(spec.top_dim()))
    throw ShapeError("weights: head has wrong shape");
  for (const Mat& m : w)
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!std::isfinite(m.data()[i])) throw ValidationError("weights: non-finite entry");
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!std::isfinite(u.data()[i])) throw ValidationError("weights: non-finite entry");
}

int Sample::label() const {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == 1.0) return static_cast<int>(i);
  throw ValidationError("sample: label vector is not one-hot");
}

void Sample::validate(const NetworkSpec& spec) const {
  if (x.size() != static_cast<std::size_t>(spec.input_dim()))
    throw ShapeError("sample: input has wrong size");
  if (y.size() != static_cast<std::size_t>(spec.classes))
    throw ShapeError("sample: label has wrong size");
  int ones = 0;
  for (double v : y) {
    if (v == 1.0)
      ++ones;
    else if (v != 0.0)
      throw ValidationError("sample: label vector is not one-hot");
  }
  if (ones != 1) throw ValidationError("sample: label vector is not one-hot");
  for (double v : x)
    if (!std::isfinite(v)) throw ValidationError("sample: non-finite input");
}

ForwardTrace forward(const NetworkSpec& spec, const WeightSet& weights, const Sample& sample) {
  spec.validate();
  weights.validate(spec);
  sample.validate(spec);

  ForwardTrace t;
  t.v.reserve(static_cast<std::size_t>(spec.n) + 1);
  t.z.reserve(static_cast<std::size_t>(spec.n));
  t.v.push_back(sample.x);
  for (int k = 1; k <= spec.n; ++k) {
    Vec zk = matvec(weights.layer(k), t.v.back());
    Vec vk(zk.size());
    for (std::size_t i = 0; i < zk.size(); ++i) vk[i] = act::value(spec.activation, zk[i]);
    t.z.push_back(std::move(zk));
    t.v.push_back(std::move(vk));
  }
  t.p = matvec(weights.u, t.v.back());
  t.yhat = softmax_head(t.p);
  t.loss = -std::log(t.yhat[static_cast<std::size_t>(sample.label())]);
  if (!std::isfinite(t.loss)) throw NumericError("forward: loss is not finite");
  return t;
}

Vec softmax_head(const Vec& p) {
  const std::size_t c = p.size();
  double pmax = p[0];
  for (std::size_t i = 1; i < c; ++i) pmax = std::max(pmax, p[i]);
  Vec e(c);
  double esum = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    e[i] = std::exp(p[i] - pmax);
    esum += e[i];
  }
  for (std::size_t i = 0; i < c; ++i) e[i] /= esum;
  return e;
}

Vec dfdp(const Vec& yhat, const Vec& y) {
  Vec g(yhat.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = yhat[i] - y[i];
  return g;
}

Mat d2fdp2(const Vec& yhat) {
  const std::size_t c = yhat.size();
  Mat h(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      h(i, j) = (i == j ? yhat[i] : 0.0) - yhat[i] * yhat[j];
  return h;
}

Vec dfdp(const ForwardTrace& trace, const Sample& sample) { return dfdp(trace.yhat, sample.y); }

Mat d2fdp2(const ForwardTrace& trace) { return d2fdp2(trace.yhat); }

Rank3 d3fdp3(const Vec& yh) {
  const std::size_t c = yh.size();
  Rank3 t(c, c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t k = 0; k < c; ++k) {
        double v = 2.0 * yh[i] * yh[j] * yh[k];
        if (i == j && i == k) v += yh[i];
        if (i == j) v -= yh[i] * yh[k];
        if (i == k) v -= yh[i] * yh[j];
        if (j == k) v -= yh[i] * yh[j];
        t(i, j, k) = v;
      }
    }
  }
  return t;
}

Rank3 d3fdp3(const ForwardTrace& trace) { return d3fdp3(trace.yhat); }

}  // namespace netderiv
