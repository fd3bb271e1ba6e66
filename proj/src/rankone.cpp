#include "netderiv/rankone.hpp"

#include "netderiv/factors.hpp"

namespace netderiv {

WeightSet RankOneWeights::expand(const NetworkSpec& spec) const {
  validate(spec);
  WeightSet ws;
  ws.w.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k)
    ws.w.push_back(outer(c[static_cast<std::size_t>(k - 1)], e[static_cast<std::size_t>(k - 1)]));
  ws.u = outer(a, b);
  return ws;
}

void RankOneWeights::validate(const NetworkSpec& spec) const {
  spec.validate();
  if (a.size() != static_cast<std::size_t>(spec.classes) ||
      b.size() != static_cast<std::size_t>(spec.top_dim()))
    throw ShapeError("rank-one: head factors have wrong size");
  if (c.size() != static_cast<std::size_t>(spec.n) || e.size() != static_cast<std::size_t>(spec.n))
    throw ShapeError("rank-one: need one factor pair per layer");
  for (int k = 1; k <= spec.n; ++k) {
    if (c[static_cast<std::size_t>(k - 1)].size() != static_cast<std::size_t>(spec.dim(k)) ||
        e[static_cast<std::size_t>(k - 1)].size() != static_cast<std::size_t>(spec.dim(k - 1)))
      throw ShapeError("rank-one: layer factor has wrong size");
  }
}

Vec ScaledVec::densify() const {
  Vec out(vec.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * vec[i];
  return out;
}

RankOneGrads rankone_grads(const NetworkSpec& spec, const RankOneWeights& r1,
                           const Sample& sample) {
  const WeightSet ws = r1.expand(spec);
  const ForwardTrace trace = forward(spec, ws, sample);
  const GammaStack gs = gamma_stack(spec, trace);
  const EtaStack es = eta_stack(spec, ws, gs);
  const Vec df_dp = dfdp(trace, sample);
  const Vec& vn = trace.layer_out(spec.n);
  const double a_pull = dot(r1.a, df_dp);

  RankOneGrads out;
  out.da = ScaledVec{dot(r1.b, vn), df_dp};
  out.db = ScaledVec{a_pull, vn};
  out.dc.reserve(static_cast<std::size_t>(spec.n));
  out.de.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) {
    const Mat& eta_nk = es.top(k);
    const Vec& vkm1 = trace.layer_out(k - 1);
    const Vec pull = tmatvec(eta_nk, r1.b);
    const double ce = dot(r1.e[static_cast<std::size_t>(k - 1)], vkm1);
    out.dc.push_back(ScaledVec{ce * a_pull, pull});
    out.de.push_back(
        ScaledVec{a_pull * dot(pull, r1.c[static_cast<std::size_t>(k - 1)]), vkm1});
  }
  return out;
}

}  // namespace netderiv
