#include "netderiv/synth.hpp"

#include <cmath>
#include <utility>

#include "netderiv/errors.hpp"
#include "netderiv/fd.hpp"

namespace netderiv {

NetworkSpec random_spec(Rng& rng, ActKind act, int n_lo, int n_hi, int dim_lo, int dim_hi,
                        int cls_lo, int cls_hi) {
  NetworkSpec spec;
  spec.n = rng.uniform_int(n_lo, n_hi);
  spec.dims.reserve(static_cast<std::size_t>(spec.n) + 1);
  for (int k = 0; k <= spec.n; ++k) spec.dims.push_back(rng.uniform_int(dim_lo, dim_hi));
  spec.classes = rng.uniform_int(cls_lo, cls_hi);
  spec.activation = act;
  spec.validate();
  return spec;
}

WeightSet random_weights(const NetworkSpec& spec, Rng& rng, double scale) {
  WeightSet ws = WeightSet::zeros(spec);
  for (Mat& m : ws.w)
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  for (std::size_t i = 0; i < ws.u.size(); ++i) ws.u.data()[i] = scale * rng.normal();
  return ws;
}

Sample random_sample(const NetworkSpec& spec, Rng& rng) {
  Sample s;
  s.x = Vec(static_cast<std::size_t>(spec.input_dim()));
  for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] = rng.normal();
  s.y = Vec(static_cast<std::size_t>(spec.classes));
  s.y[static_cast<std::size_t>(rng.uniform_int(0, spec.classes - 1))] = 1.0;
  return s;
}

Direction random_direction(const NetworkSpec& spec, Rng& rng) {
  Direction d = Direction::zeros(spec);
  for (Mat& m : d.phi)
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  for (std::size_t i = 0; i < d.omega.size(); ++i) d.omega.data()[i] = rng.normal();
  return d;
}

RankOneWeights random_rankone(const NetworkSpec& spec, Rng& rng, double scale) {
  RankOneWeights r1;
  r1.a = Vec(static_cast<std::size_t>(spec.classes));
  r1.b = Vec(static_cast<std::size_t>(spec.top_dim()));
  for (std::size_t i = 0; i < r1.a.size(); ++i) r1.a[i] = scale * rng.normal();
  for (std::size_t i = 0; i < r1.b.size(); ++i) r1.b[i] = scale * rng.normal();
  for (int k = 1; k <= spec.n; ++k) {
    Vec ck(static_cast<std::size_t>(spec.dim(k)));
    Vec ek(static_cast<std::size_t>(spec.dim(k - 1)));
    for (std::size_t i = 0; i < ck.size(); ++i) ck[i] = scale * rng.normal();
    for (std::size_t i = 0; i < ek.size(); ++i) ek[i] = scale * rng.normal();
    r1.c.push_back(std::move(ck));
    r1.e.push_back(std::move(ek));
  }
  return r1;
}

TestNet random_net(Rng& rng, ActKind act, int n_lo, int n_hi, int dim_lo, int dim_hi, int cls_lo,
                   int cls_hi) {
  TestNet tn;
  tn.spec = random_spec(rng, act, n_lo, n_hi, dim_lo, dim_hi, cls_lo, cls_hi);
  tn.weights = random_weights(tn.spec, rng);
  tn.sample = random_sample(tn.spec, rng);
  tn.trace = forward(tn.spec, tn.weights, tn.sample);
  return tn;
}

TestNet live_relu_net(Rng& rng, double margin, int n_lo, int n_hi, int dim_lo, int dim_hi,
                      int cls_lo, int cls_hi) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    TestNet tn;
    tn.spec = random_spec(rng, ActKind::kReLU, n_lo, n_hi, dim_lo, dim_hi, cls_lo, cls_hi);
    tn.weights = random_weights(tn.spec, rng);
    tn.sample = random_sample(tn.spec, rng);
    tn.trace = forward(tn.spec, tn.weights, tn.sample);
    if (kink_guard(tn.trace, margin)) return tn;
  }
  throw NumericError("live_relu_net: no kink-free draw in 1000 attempts");
}

RnnCase live_rnn_case(Rng& rng, int d, int d_in, int classes, int t_max, double margin) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    RnnCase rc;
    rc.rs.d = d;
    rc.rs.d_in = d_in;
    rc.rs.classes = classes;
    rc.rs.t_max = t_max;
    rc.rs.w = Mat(static_cast<std::size_t>(d), static_cast<std::size_t>(d));
    rc.rs.u = Mat(static_cast<std::size_t>(d), static_cast<std::size_t>(d_in));
    rc.rs.z = Mat(static_cast<std::size_t>(classes), static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < rc.rs.w.size(); ++i)
      rc.rs.w.data()[i] = 0.5 * rng.normal() + 0.2;
    for (std::size_t i = 0; i < rc.rs.u.size(); ++i)
      rc.rs.u.data()[i] = 0.5 * rng.normal() + 0.3;
    for (std::size_t i = 0; i < rc.rs.z.size(); ++i) rc.rs.z.data()[i] = 0.8 * rng.normal();
    rc.xs.reserve(static_cast<std::size_t>(t_max));
    for (int t = 0; t < t_max; ++t) {
      Vec x(static_cast<std::size_t>(d_in));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::abs(rng.normal()) + 0.2;
      rc.xs.push_back(std::move(x));
    }
    rc.label = rng.uniform_int(0, classes - 1);
    const RnnTrace tr = rnn_forward(rc.rs, rc.xs, rc.label);
    bool live = true;
    for (const Vec& z : tr.pre)
      for (double zi : z)
        if (std::abs(zi) < margin) live = false;
    if (live) return rc;
  }
  throw NumericError("live_rnn_case: no kink-free draw in 1000 attempts");
}

}  // namespace netderiv
