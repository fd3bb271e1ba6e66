#include "netderiv/suites.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>

#include "netderiv/conv.hpp"
#include "netderiv/errors.hpp"
#include "netderiv/factors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/hessian.hpp"
#include "netderiv/hessian_general.hpp"
#include "netderiv/rankone.hpp"
#include "netderiv/recurrent.hpp"
#include "netderiv/regularizers.hpp"
#include "netderiv/rng.hpp"
#include "netderiv/synth.hpp"

namespace netderiv {

namespace {

struct ItemOut {
  double err = 0.0;
  std::int64_t violations = 0;
};

// Per-item seeds come from hashing (seed, suite, index), not from slicing
// one stream, so the fixtures do not depend on execution order.
std::uint64_t mix_seed(std::uint64_t seed, const char* tag, std::uint64_t item) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (const char* p = tag; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  h ^= item + 0x9E3779B97F4A7C15ULL;
  h *= 1099511628211ULL;
  return h;
}

template <typename Fn>
std::vector<ItemOut> for_each_item(int count, bool parallel, const Fn& fn) {
  std::vector<ItemOut> outs(static_cast<std::size_t>(count));
  if (!parallel || count <= 1) {
    for (int i = 0; i < count; ++i) outs[static_cast<std::size_t>(i)] = fn(i);
    return outs;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  const int nthreads = std::min(count, hw ? static_cast<int>(hw) : 4);
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        outs[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return outs;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled)
      : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}

  std::int64_t ms() const {
    if (!enabled_) return 0;  // byte-stable reports by default
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

void finish(CheckResult& res, const std::vector<ItemOut>& outs, const Stopwatch& sw,
            const char* violation_key) {
  std::int64_t violations = 0;
  for (const ItemOut& o : outs) {
    res.max_rel_err = std::max(res.max_rel_err, o.err);
    violations += o.violations;
  }
  res.counters[violation_key] = violations;
  res.pass = res.max_rel_err <= res.tolerance && violations == 0;
  res.runtime_ms = sw.ms();
}

double loss_at(const NetworkSpec& spec, const ParamLayout& layout, const Sample& sample,
               const Vec& theta) {
  const WeightSet ws = layout.unflatten_weights(spec, theta);
  return forward(spec, ws, sample).loss;
}

Vec analytic_grad_at(const NetworkSpec& spec, const ParamLayout& layout, const Sample& sample,
                     const Vec& theta) {
  const WeightSet ws = layout.unflatten_weights(spec, theta);
  const ForwardTrace tr = forward(spec, ws, sample);
  const GammaStack gs = gamma_stack(spec, tr);
  const EtaStack es = eta_stack(spec, ws, gs);
  const FactoredGradient fg = grad(spec, ws, tr, es, sample);
  std::vector<Mat> dw;
  dw.reserve(static_cast<std::size_t>(spec.n));
  for (int k = 1; k <= spec.n; ++k) dw.push_back(fg.densify_w(k));
  return layout.flatten(fg.densify_u(), dw);
}

Sample guarded_sample(const NetworkSpec& spec, const WeightSet& ws, Rng& rng, double margin) {
  for (int a = 0; a < 1000; ++a) {
    Sample s = random_sample(spec, rng);
    if (spec.activation != ActKind::kReLU) return s;
    if (kink_guard(forward(spec, ws, s), margin)) return s;
  }
  throw NumericError("guarded_sample: no kink-free draw in 1000 attempts");
}

void symmetrize(Mat& h) {
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = i + 1; j < h.cols(); ++j) {
      const double avg = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = avg;
      h(j, i) = avg;
    }
}

double block_rel_err(const Mat& a, const Mat& b, std::size_t r0, std::size_t nr, std::size_t c0,
                     std::size_t nc) {
  double amax = 0.0, bmax = 0.0, dmax = 0.0;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      amax = std::max(amax, std::abs(a(r0 + i, c0 + j)));
      bmax = std::max(bmax, std::abs(b(r0 + i, c0 + j)));
      dmax = std::max(dmax, std::abs(a(r0 + i, c0 + j) - b(r0 + i, c0 + j)));
    }
  return dmax / std::max({1e-12, amax, bmax});
}

// Max over all (u,u), (u,w), (w,u), (w,w) blocks of the per-block relative
// deviation between two dense Hessians in the same layout.
double all_blocks_rel_err(const Mat& a, const Mat& b, const ParamLayout& lay) {
  double err = block_rel_err(a, b, lay.u_offset, lay.u_count, lay.u_offset, lay.u_count);
  for (int k = 1; k <= lay.n; ++k) {
    const std::size_t wo = lay.w_offset[static_cast<std::size_t>(k - 1)];
    const std::size_t wc = lay.w_count[static_cast<std::size_t>(k - 1)];
    err = std::max(err, block_rel_err(a, b, lay.u_offset, lay.u_count, wo, wc));
    err = std::max(err, block_rel_err(a, b, wo, wc, lay.u_offset, lay.u_count));
    for (int r = 1; r <= lay.n; ++r) {
      const std::size_t ro = lay.w_offset[static_cast<std::size_t>(r - 1)];
      const std::size_t rc = lay.w_count[static_cast<std::size_t>(r - 1)];
      err = std::max(err, block_rel_err(a, b, wo, wc, ro, rc));
    }
  }
  return err;
}

}  // namespace

CheckResult check_grad(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "grad";
  res.tolerance = 1e-6;
  const int nets = 20;
  const int batch = ctx.cfg.batch;
  const ActKind act = ctx.cfg.net.activation;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "grad", static_cast<std::uint64_t>(i)));
    const TestNet tn = (act == ActKind::kReLU)
                           ? live_relu_net(rng, fd.kink_margin, 1, 4, 2, 8, 2, 5)
                           : random_net(rng, act, 1, 4, 2, 8, 2, 5);
    const ParamLayout layout = ParamLayout::of(tn.spec);
    const Vec theta0 = layout.flatten(tn.weights);

    Mat mean_u(static_cast<std::size_t>(tn.spec.classes),
               static_cast<std::size_t>(tn.spec.top_dim()));
    std::vector<Mat> mean_w;
    for (int k = 1; k <= tn.spec.n; ++k)
      mean_w.emplace_back(static_cast<std::size_t>(tn.spec.dim(k)),
                          static_cast<std::size_t>(tn.spec.dim(k - 1)));

    for (int b = 0; b < batch; ++b) {
      const Sample s =
          (b == 0) ? tn.sample : guarded_sample(tn.spec, tn.weights, rng, fd.kink_margin);
      const ForwardTrace tr = forward(tn.spec, tn.weights, s);
      const GammaStack gs = gamma_stack(tn.spec, tr);
      const EtaStack es = eta_stack(tn.spec, tn.weights, gs);
      const FactoredGradient fg = grad(tn.spec, tn.weights, tr, es, s);

      std::vector<Mat> dw;
      for (int k = 1; k <= tn.spec.n; ++k) dw.push_back(fg.densify_w(k));
      const Mat du = fg.densify_u();
      const Vec an = layout.flatten(du, dw);
      const Vec num = fd_grad(
          [&](const Vec& th) { return loss_at(tn.spec, layout, s, th); }, theta0, fd);
      out.err = std::max(out.err, rel_err_max(an, num));

      if (frob(du) > 0.0 && svd_rank(du, 1e-8) != 1) ++out.violations;
      for (int k = 1; k <= tn.spec.n; ++k) {
        const Mat& dwk = dw[static_cast<std::size_t>(k - 1)];
        if (frob(dwk) > 0.0 && svd_rank(dwk, 1e-8) != 1) ++out.violations;
        Mat& acc = mean_w[static_cast<std::size_t>(k - 1)];
        for (std::size_t e = 0; e < acc.size(); ++e)
          acc.data()[e] += dwk.data()[e] / static_cast<double>(batch);
      }
      for (std::size_t e = 0; e < mean_u.size(); ++e)
        mean_u.data()[e] += du.data()[e] / static_cast<double>(batch);
    }
    if (svd_rank(mean_u, 1e-8) > static_cast<std::size_t>(batch)) ++out.violations;
    for (const Mat& mw : mean_w)
      if (svd_rank(mw, 1e-8) > static_cast<std::size_t>(batch)) ++out.violations;
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);
  res.counters["nets"] = nets;
  res.counters["samples_per_net"] = batch;
  finish(res, outs, sw, "rank_violations");
  return res;
}

CheckResult check_hess(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "hess";
  res.tolerance = 1e-5;
  const int nets = 20;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "hess", static_cast<std::uint64_t>(i)));
    const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 3, 2, 5, 2, 4);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
    const DenseHessian dh = assemble_dense(hf, gen, ctx.cfg.dense_cap);

    const Vec theta0 = dh.layout.flatten(tn.weights);
    Mat hfd = fd_hess_of_grad(
        [&](const Vec& th) { return analytic_grad_at(tn.spec, dh.layout, tn.sample, th); },
        theta0, fd);
    symmetrize(hfd);
    out.err = all_blocks_rel_err(dh.h, hfd, dh.layout);
    if (dh.asymmetry > 1e-10 * max_abs(dh.h)) ++out.violations;
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);

  // Informational: how often random draws on the base net clear the kink
  // margin. Not a pass/fail input, just recorded.
  {
    NetworkSpec spec = ctx.cfg.net;
    spec.activation = ActKind::kReLU;
    Rng rng(mix_seed(ctx.cfg.seed, "hess-kink-rate", 0));
    std::int64_t accepted = 0;
    const int draws = 1000;
    for (int d = 0; d < draws; ++d) {
      const WeightSet ws = random_weights(spec, rng);
      const Sample s = random_sample(spec, rng);
      if (kink_guard(forward(spec, ws, s), fd.kink_margin)) ++accepted;
    }
    res.counters["kink_guard_accept_per_1000"] = accepted;
  }

  res.counters["nets"] = nets;
  finish(res, outs, sw, "symmetry_violations");
  return res;
}

CheckResult check_hess_general(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "hess-general";
  res.tolerance = 1e-5;
  const int smooth = 21;  // 7 nets per smooth activation
  const int relu = 5;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "hess-general", static_cast<std::uint64_t>(i)));
    if (i < smooth) {
      static const ActKind acts[3] = {ActKind::kTanh, ActKind::kSoftplus, ActKind::kSigmoid};
      const TestNet tn = random_net(rng, acts[i % 3], 1, 3, 2, 5, 2, 4);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      const GeneralFactors gf = make_general_factors(hf);
      EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
      const DenseHessian dh = assemble_dense_general(gf, gen, ctx.cfg.dense_cap);

      const Vec theta0 = dh.layout.flatten(tn.weights);
      Mat hfd = fd_hess_of_grad(
          [&](const Vec& th) { return analytic_grad_at(tn.spec, dh.layout, tn.sample, th); },
          theta0, fd);
      symmetrize(hfd);
      out.err = all_blocks_rel_err(dh.h, hfd, dh.layout);
      if (dh.asymmetry > 1e-10 * max_abs(dh.h)) ++out.violations;
    } else {
      // On ReLU the curvature terms vanish identically, so the general
      // assembly must reproduce the dedicated path to the last bit.
      const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 3, 2, 5, 2, 4);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      const GeneralFactors gf = make_general_factors(hf);
      EtaGenerator gen_a(tn.spec, tn.weights, hf.gamma);
      EtaGenerator gen_b(tn.spec, tn.weights, hf.gamma);
      const DenseHessian da = assemble_dense(hf, gen_a, ctx.cfg.dense_cap);
      const DenseHessian db = assemble_dense_general(gf, gen_b, ctx.cfg.dense_cap);
      if (rel_err_max(da.h, db.h) > 1e-12) ++out.violations;
    }
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(smooth + relu, ctx.parallel, item);
  res.counters["nets_smooth"] = smooth;
  res.counters["nets_relu"] = relu;
  finish(res, outs, sw, "equality_violations");
  return res;
}

CheckResult check_quadform(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "quadform";
  res.tolerance = 1e-10;
  const int nets = 5;
  const int dirs = 120;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "quadform", static_cast<std::uint64_t>(i)));
    const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 4, 2, 6, 2, 5);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
    const DenseHessian dh = assemble_dense(hf, gen, ctx.cfg.dense_cap);
    QuadFormEvaluator qe(hf, gen);

    std::vector<Direction> ds;
    std::vector<Vec> thetas;
    ds.reserve(dirs);
    thetas.reserve(dirs);
    for (int d = 0; d < dirs; ++d) {
      ds.push_back(random_direction(tn.spec, rng));
      thetas.push_back(dh.layout.flatten(ds.back()));
    }
    std::vector<double> dense_vals(dirs, 0.0);
    for (int d = 0; d < dirs; ++d) {
      const Vec& th = thetas[static_cast<std::size_t>(d)];
      double acc = 0.0;
      for (std::size_t r = 0; r < dh.h.rows(); ++r) {
        double row = 0.0;
        for (std::size_t cidx = 0; cidx < dh.h.cols(); ++cidx) row += dh.h(r, cidx) * th[cidx];
        acc += th[r] * row;
      }
      dense_vals[static_cast<std::size_t>(d)] = acc;
    }

    // The factored evaluation must not create a single container.
    alloc_stats_reset();
    std::vector<double> fact_vals(dirs, 0.0);
    for (int d = 0; d < dirs; ++d)
      fact_vals[static_cast<std::size_t>(d)] = qe.eval(ds[static_cast<std::size_t>(d)]);
    const AllocStats st = alloc_stats();
    if (st.allocations != 0) ++out.violations;

    for (int d = 0; d < dirs; ++d)
      out.err = std::max(out.err, rel_err(fact_vals[static_cast<std::size_t>(d)],
                                          dense_vals[static_cast<std::size_t>(d)]));
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);
  res.counters["nets"] = nets;
  res.counters["directions_per_net"] = dirs;
  finish(res, outs, sw, "alloc_violations");
  return res;
}

CheckResult check_curvature(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "curvature";
  res.tolerance = 1e-8;
  const int nets = 6;
  const FDConfig fd = ctx.cfg.fd;
  std::atomic<std::int64_t> resamples{0};

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "curvature", static_cast<std::uint64_t>(i)));
    if (i == 0) {
      // One-layer net: the ww block has no interior route, so it is pure
      // Gauss-Newton and cannot reach below zero except by rounding.
      const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 1, 2, 4, 2, 3);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
      const WwBlock b = hess_ww(hf, 1, 1, gen);
      if (b.g_hi != nullptr || b.case_eta.size() != 0) ++out.violations;
      const SymEig eig = sym_eig(b.densify());
      if (eig.values[0] < -1e-10) ++out.violations;
      return out;
    }
    for (int attempt = 0; attempt < 50; ++attempt) {
      const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 2, 2, 4, 2, 3);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      EtaGenerator gen(tn.spec, tn.weights, hf.gamma);
      const DenseHessian dh = assemble_dense(hf, gen, ctx.cfg.dense_cap);
      const SymEig eig = sym_eig(dh.h);
      if (std::abs(eig.values[0]) < 1e-4 * max_abs(dh.h)) {
        ++resamples;
        continue;  // too close to flat for a meaningful relative comparison
      }
      const MinCurvature mc = min_curvature(hf, gen, ctx.cfg.dense_cap);
      out.err = std::max(out.err, rel_err(mc.lambda_min, eig.values[0]));
      out.err = std::max(out.err, rel_err(quad_form(hf, mc.dir, gen), mc.lambda_min));
      return out;
    }
    throw NumericError("check_curvature: no net with usable minimum eigenvalue in 50 draws");
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);
  res.counters["nets"] = nets;
  res.counters["resamples"] = resamples.load();
  finish(res, outs, sw, "structure_violations");
  return res;
}

CheckResult check_storage(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "storage";
  res.tolerance = 0.0;
  std::int64_t violations = 0;

  auto interior_counts = [&](int n) {
    NetworkSpec spec;
    spec.n = n;
    spec.dims.assign(static_cast<std::size_t>(n) + 1, 2);
    spec.classes = 3;
    spec.activation = ActKind::kReLU;
    Rng rng(mix_seed(ctx.cfg.seed, "storage", static_cast<std::uint64_t>(n)));
    const WeightSet ws = random_weights(spec, rng);
    const Sample s = random_sample(spec, rng);
    const ForwardTrace tr = forward(spec, ws, s);
    const GammaStack gs = gamma_stack(spec, tr);

    EtaGenerator full(spec, ws, gs);
    std::int64_t full_live = 0;
    {
      std::vector<EtaGenerator::Column> cols;
      for (int b = 1; b <= n - 1; ++b) cols.push_back(full.column(b));
      full_live = full.live();
    }
    EtaGenerator stream(spec, ws, gs);
    for (int b = 1; b <= n - 1; ++b) {
      const EtaGenerator::Column col = stream.column(b);
      (void)col;
    }
    return std::pair<std::int64_t, std::int64_t>(full_live, stream.peak_live());
  };

  const auto [full10, peak10] = interior_counts(10);
  const auto [full20, peak20] = interior_counts(20);
  res.counters["eta_interior_n10"] = full10;
  res.counters["eta_interior_n20"] = full20;
  res.counters["eta_stream_peak_n10"] = peak10;
  res.counters["eta_stream_peak_n20"] = peak20;
  if (full10 != 45 || full20 != 190) ++violations;
  if (peak10 != 9 || peak20 != 19) ++violations;

  {
    NetworkSpec spec;
    spec.n = 1;
    spec.dims = {2, 2};
    spec.classes = 10;
    spec.activation = ActKind::kTanh;
    Rng rng(mix_seed(ctx.cfg.seed, "storage", 100));
    const WeightSet ws = random_weights(spec, rng);
    const Sample s = random_sample(spec, rng);
    const Mat d2 = d2fdp2(forward(spec, ws, s));
    res.counters["head_hess_entries_c10"] = static_cast<std::int64_t>(d2.size());
    if (d2.size() != 100) ++violations;
  }

  {
    const NetworkSpec& spec = ctx.cfg.net;
    Rng rng(mix_seed(ctx.cfg.seed, "storage", 200));
    const WeightSet ws = random_weights(spec, rng);
    const Sample s = random_sample(spec, rng);
    const ForwardTrace tr = forward(spec, ws, s);
    const HessianFactors hf = make_hessian_factors(spec, ws, tr, s);

    std::int64_t held = static_cast<std::int64_t>(hf.df_dp.size() + hf.d2f_dp2.size());
    for (const Vec& v : tr.v) held += static_cast<std::int64_t>(v.size());
    for (const Vec& g : hf.gamma.g) held += static_cast<std::int64_t>(g.size());
    for (const Mat& e : hf.eta_top.e) held += static_cast<std::int64_t>(e.size());
    for (const Mat& m : hf.ueta) held += static_cast<std::int64_t>(m.size());
    for (const Vec& g : hf.g) held += static_cast<std::int64_t>(g.size());
    std::int64_t peak_interior = 0;
    for (int b = 1; b <= spec.n - 1; ++b) {
      std::int64_t col = 0;
      for (int a = b; a <= spec.n - 1; ++a) col += spec.dim(a) * spec.dim(b);
      peak_interior = std::max(peak_interior, col);
    }
    held += peak_interior;

    const ParamLayout lay = ParamLayout::of(spec);
    const std::int64_t weight_count = static_cast<std::int64_t>(lay.total);
    const std::int64_t bound = (spec.n + 2) * weight_count;
    res.counters["head_hess_entries"] =
        static_cast<std::int64_t>(spec.classes) * spec.classes;
    for (int k = 1; k <= spec.n; ++k)
      res.counters["eta_top_scalars_k" + std::to_string(k)] =
          static_cast<std::int64_t>(hf.eta_top.top(k).size());
    res.counters["eta_interior_peak_scalars"] = peak_interior;
    res.counters["factored_scalars"] = held;
    res.counters["factored_bound"] = bound;
    res.counters["dense_scalars"] = weight_count * weight_count;
    if (held > bound) ++violations;
  }

  res.counters["violations"] = violations;
  res.pass = violations == 0;
  res.runtime_ms = sw.ms();
  return res;
}

CheckResult check_reg(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "reg";
  res.tolerance = 1e-4;
  const int smooth = 6;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "reg", static_cast<std::uint64_t>(i)));
    if (i < smooth) {
      const ActKind act = (i % 2 == 0) ? ActKind::kTanh : ActKind::kSoftplus;
      // A saturated softmax zeroes the head gradient and with it every
      // quantity under test, leaving nothing but difference noise to
      // compare against; redraw those nets.
      TestNet tn = random_net(rng, act, 1, 3, 2, 5, 2, 4);
      for (int a = 0; a < 50 && norm(dfdp(tn.trace, tn.sample)) < 0.05; ++a)
        tn = random_net(rng, act, 1, 3, 2, 5, 2, 4);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      const GeneralFactors gf = make_general_factors(hf);
      const ParamLayout lay = ParamLayout::of(tn.spec);
      const Vec theta0 = lay.flatten(tn.weights);

      // Input gradient against a direct difference of the loss in x.
      const GradReg gr = grad_reg(gf);
      const Vec fdx = fd_grad(
          [&](const Vec& x) {
            Sample s2 = tn.sample;
            s2.x = x;
            return forward(tn.spec, tn.weights, s2).loss;
          },
          tn.sample.x, fd);
      out.err = std::max(out.err, rel_err_max(gr.zeta, fdx));

      auto zeta_at = [&](const Vec& th) {
        const WeightSet ws = lay.unflatten_weights(tn.spec, th);
        const ForwardTrace tr = forward(tn.spec, ws, tn.sample);
        const GammaStack gs = gamma_stack(tn.spec, tr);
        const Vec psi = tmatvec(ws.u, dfdp(tr, tn.sample));
        return tmatvec(alpha(tn.spec, ws, gs, tn.spec.n, 0), psi);
      };
      const Vec pen_fd = fd_grad(
          [&](const Vec& th) {
            const Vec z = zeta_at(th);
            return dot(z, z);
          },
          theta0, fd);
      out.err = std::max(out.err, rel_err_max(lay.flatten(gr.dpen_du, gr.dpen_dw), pen_fd));

      const CurvReg cr = curv_reg(gf);
      const Vec pen2_fd = fd_grad(
          [&](const Vec& th) {
            const WeightSet ws = lay.unflatten_weights(tn.spec, th);
            const ForwardTrace tr = forward(tn.spec, ws, tn.sample);
            const GammaStack gs = gamma_stack(tn.spec, tr);
            const Mat ut = matmul(ws.u, alpha(tn.spec, ws, gs, tn.spec.n, 0));
            const Mat xi = matmul(transpose(ut), matmul(d2fdp2(tr), ut));
            const double f = frob(xi);
            return f * f;
          },
          theta0, fd);
      out.err = std::max(out.err, rel_err_max(lay.flatten(cr.dpen_du, cr.dpen_dw), pen2_fd));

      // Full input Hessian with the activation-curvature route; tighter
      // tolerance than the weight derivatives above.
      const Mat ih = input_hessian(gf);
      const Mat ih_fd = fd_hess_of_value(
          [&](const Vec& x) {
            Sample s2 = tn.sample;
            s2.x = x;
            return forward(tn.spec, tn.weights, s2).loss;
          },
          tn.sample.x, fd);
      if (rel_err_max(ih, ih_fd) > 1e-5) ++out.violations;
    } else {
      // Piecewise-linear regime: the Gauss-Newton input curvature is the
      // whole input Hessian, so it must match the value-difference oracle.
      const TestNet tn = live_relu_net(rng, fd.kink_margin, 1, 3, 2, 5, 2, 4);
      const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
      const GeneralFactors gf = make_general_factors(hf);
      const Mat xi = input_curvature(gf);
      const Mat xi_fd = fd_hess_of_value(
          [&](const Vec& x) {
            Sample s2 = tn.sample;
            s2.x = x;
            return forward(tn.spec, tn.weights, s2).loss;
          },
          tn.sample.x, fd);
      if (rel_err_max(xi, xi_fd) > 1e-5) ++out.violations;
    }
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(smooth + 1, ctx.parallel, item);
  res.counters["nets_smooth"] = smooth;
  res.counters["nets_relu"] = 1;
  finish(res, outs, sw, "hessian_violations");
  return res;
}

CheckResult check_bound(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "bound";
  res.tolerance = 1e-6;
  const int nets = 3;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "bound", static_cast<std::uint64_t>(i)));
    const TestNet tn = random_net(rng, ActKind::kTanh, 1, 3, 2, 5, 2, 4);
    const HessianFactors hf = make_hessian_factors(tn.spec, tn.weights, tn.trace, tn.sample);
    const PerturbBound pb = make_perturb_bound(hf);
    const Mat jac_fd = fd_jacobian(
        [&](const Vec& x) {
          Sample s2 = tn.sample;
          s2.x = x;
          return forward(tn.spec, tn.weights, s2).yhat;
        },
        tn.sample.x, fd);
    out.err = rel_err_max(pb.jac, jac_fd);
    if (!(pb.bound(0.1) > 0.0)) ++out.violations;

    if (i == 0) {
      // All-zero head: the output cannot move, so no radius is defensible
      // and the bound must refuse.
      WeightSet ws0 = tn.weights;
      ws0.u = Mat(ws0.u.rows(), ws0.u.cols());
      const ForwardTrace tr0 = forward(tn.spec, ws0, tn.sample);
      const HessianFactors hf0 = make_hessian_factors(tn.spec, ws0, tr0, tn.sample);
      bool raised = false;
      try {
        perturb_bound(hf0, 0.1);
      } catch (const DegenerateBoundError&) {
        raised = true;
      }
      if (!raised) ++out.violations;
    }
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);
  res.counters["nets"] = nets;
  res.counters["degenerate_cases"] = 1;
  finish(res, outs, sw, "bound_violations");
  return res;
}

namespace {

// Flattened (z, w, u) order used by the recurrent FD comparisons.
Vec rnn_flatten(const RecurrentSpec& rs, const Mat& z, const Mat& w, const Mat& u) {
  Vec th(z.size() + w.size() + u.size());
  std::size_t at = 0;
  for (std::size_t e = 0; e < z.size(); ++e) th[at++] = z.data()[e];
  for (std::size_t e = 0; e < w.size(); ++e) th[at++] = w.data()[e];
  for (std::size_t e = 0; e < u.size(); ++e) th[at++] = u.data()[e];
  (void)rs;
  return th;
}

RecurrentSpec rnn_unflatten(const RecurrentSpec& rs, const Vec& th) {
  RecurrentSpec r2 = rs;
  std::size_t at = 0;
  for (std::size_t e = 0; e < r2.z.size(); ++e) r2.z.data()[e] = th[at++];
  for (std::size_t e = 0; e < r2.w.size(); ++e) r2.w.data()[e] = th[at++];
  for (std::size_t e = 0; e < r2.u.size(); ++e) r2.u.data()[e] = th[at++];
  return r2;
}

double mat_sym_err(const Mat& m) {
  double dmax = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      dmax = std::max(dmax, std::abs(m(i, j) - m(j, i)));
  return dmax / std::max(1e-12, max_abs(m));
}

}  // namespace

CheckResult check_rnn(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "rnn";
  res.tolerance = 1e-5;
  const int deep_cases = 3;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "rnn", static_cast<std::uint64_t>(i)));
    if (i < deep_cases) {
      const RnnCase rc = live_rnn_case(rng, 3, 2, 3, 4, fd.kink_margin);
      const RnnNetworkDerivs nd = rnn_network_derivs(rc.rs, rc.xs, rc.label);
      const Vec theta0 = rnn_flatten(rc.rs, rc.rs.z, rc.rs.w, rc.rs.u);

      const Vec grad_fd = fd_grad(
          [&](const Vec& th) {
            return rnn_forward(rnn_unflatten(rc.rs, th), rc.xs, rc.label).loss;
          },
          theta0, fd);
      const Vec grad_an = rnn_flatten(rc.rs, nd.df_dz, nd.df_dw, nd.df_du);
      out.err = std::max(out.err, rel_err_max(grad_an, grad_fd));

      Mat hfd = fd_hess_of_grad(
          [&](const Vec& th) {
            const RecurrentSpec r2 = rnn_unflatten(rc.rs, th);
            const RnnNetworkDerivs nd2 = rnn_network_derivs(r2, rc.xs, rc.label);
            return rnn_flatten(r2, nd2.df_dz, nd2.df_dw, nd2.df_du);
          },
          theta0, fd);
      symmetrize(hfd);
      const std::size_t cz = rc.rs.z.size();
      const std::size_t cw = rc.rs.w.size();
      const std::size_t cu = rc.rs.u.size();
      auto cmp = [&](const Mat& block, std::size_t r0, std::size_t nr, std::size_t c0,
                     std::size_t nc) {
        double amax = 0.0, dmax = 0.0;
        for (std::size_t r = 0; r < nr; ++r)
          for (std::size_t c = 0; c < nc; ++c) {
            amax = std::max({amax, std::abs(block(r, c)), std::abs(hfd(r0 + r, c0 + c))});
            dmax = std::max(dmax, std::abs(block(r, c) - hfd(r0 + r, c0 + c)));
          }
        out.err = std::max(out.err, dmax / std::max(1e-12, amax));
      };
      cmp(nd.hzz, 0, cz, 0, cz);
      cmp(nd.hzw, 0, cz, cz, cw);
      cmp(nd.hzu, 0, cz, cz + cw, cu);
      cmp(nd.hww, cz, cw, cz, cw);
      cmp(nd.hwu, cz, cw, cz + cw, cu);
      cmp(nd.huu, cz + cw, cu, cz + cw, cu);
      if (mat_sym_err(nd.hzz) > 1e-12 || mat_sym_err(nd.hww) > 1e-12 ||
          mat_sym_err(nd.huu) > 1e-12)
        ++out.violations;
    } else {
      // One unrolled step is a one-hidden-layer feedforward net with the
      // input weight in the hidden slot and the readout in the head slot.
      const RnnCase rc = live_rnn_case(rng, 3, 2, 3, 1, fd.kink_margin);
      const RnnNetworkDerivs nd = rnn_network_derivs(rc.rs, rc.xs, rc.label);

      NetworkSpec spec;
      spec.n = 1;
      spec.dims = {rc.rs.d_in, rc.rs.d};
      spec.classes = rc.rs.classes;
      spec.activation = ActKind::kReLU;
      WeightSet ws;
      ws.w = {rc.rs.u};
      ws.u = rc.rs.z;
      Sample s;
      s.x = rc.xs[0];
      s.y = Vec(static_cast<std::size_t>(rc.rs.classes));
      s.y[static_cast<std::size_t>(rc.label)] = 1.0;
      const ForwardTrace tr = forward(spec, ws, s);
      const HessianFactors hf = make_hessian_factors(spec, ws, tr, s);
      EtaGenerator gen(spec, ws, hf.gamma);

      double e = rel_err_max(nd.hzz, hess_uu(hf).densify());
      e = std::max(e, rel_err_max(nd.hzu, hess_uw(hf, 1).densify()));
      e = std::max(e, rel_err_max(nd.huu, hess_ww(hf, 1, 1, gen).densify()));
      e = std::max(e, rel_err_max(nd.df_dz, outer(hf.df_dp, hf.v_of(1))));
      e = std::max(e, rel_err_max(nd.df_du, outer(hf.g_of(1), s.x)));
      if (e > 1e-12) ++out.violations;
      // Everything touching w sees only the zero initial state.
      if (max_abs(nd.df_dw) != 0.0 || max_abs(nd.hww) != 0.0 || max_abs(nd.hzw) != 0.0 ||
          max_abs(nd.hwu) != 0.0)
        ++out.violations;
    }
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(deep_cases + 1, ctx.parallel, item);
  res.counters["cases"] = deep_cases;
  res.counters["reduction_cases"] = 1;
  finish(res, outs, sw, "structure_violations");
  return res;
}

CheckResult check_conv(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "conv";
  res.tolerance = 1e-6;
  const FDConfig fd = ctx.cfg.fd;

  struct Case {
    int kh, kw, sr, sc, h, w;
    ConvAct act;
    bool positive;  // shift kernel and input positive to stay off the kink
  };
  const std::vector<Case> cases = {
      {2, 2, 1, 1, 4, 4, ConvAct::kTanh, false},
      {2, 2, 2, 2, 4, 4, ConvAct::kTanh, false},
      {2, 2, 2, 2, 5, 5, ConvAct::kTanh, false},  // bottom row and right column unused
      {1, 1, 1, 1, 3, 3, ConvAct::kIdentity, false},
      {2, 2, 1, 1, 3, 3, ConvAct::kReLU, true},
  };

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "conv", static_cast<std::uint64_t>(i)));
    const Case& c = cases[static_cast<std::size_t>(i)];
    ConvSpec cs;
    cs.kernel = Mat(static_cast<std::size_t>(c.kh), static_cast<std::size_t>(c.kw));
    cs.stride_r = c.sr;
    cs.stride_c = c.sc;
    cs.in_h = c.h;
    cs.in_w = c.w;
    cs.activation = c.act;
    for (std::size_t e = 0; e < cs.kernel.size(); ++e)
      cs.kernel.data()[e] = c.positive ? 0.5 * std::abs(rng.normal()) + 0.2 : rng.normal();
    Mat x(static_cast<std::size_t>(c.h), static_cast<std::size_t>(c.w));
    for (std::size_t e = 0; e < x.size(); ++e)
      x.data()[e] = c.positive ? std::abs(rng.normal()) + 0.2 : rng.normal();

    const ConvTrace tr = conv_forward(cs, x);
    const ConvDerivs cd = conv_derivs(cs, x, tr);
    const std::size_t nw = cs.kernel.size();
    const std::size_t nx = x.size();
    Vec theta0(nw + nx);
    for (std::size_t e = 0; e < nw; ++e) theta0[e] = cs.kernel.data()[e];
    for (std::size_t e = 0; e < nx; ++e) theta0[nw + e] = x.data()[e];

    const bool smooth_second = c.act == ConvAct::kTanh || c.act == ConvAct::kSoftplus ||
                               c.act == ConvAct::kSigmoid;
    for (int s = 0; s < cs.out_h(); ++s)
      for (int t = 0; t < cs.out_w(); ++t) {
        auto site = [&](const Vec& th) {
          ConvSpec c2 = cs;
          Mat x2 = x;
          for (std::size_t e = 0; e < nw; ++e) c2.kernel.data()[e] = th[e];
          for (std::size_t e = 0; e < nx; ++e) x2.data()[e] = th[nw + e];
          return conv_forward(c2, x2).v(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
        };
        const Vec g = fd_grad(site, theta0, fd);
        Vec g_an(nw + nx);
        for (int p = 0; p < c.kh; ++p)
          for (int q = 0; q < c.kw; ++q)
            g_an[static_cast<std::size_t>(p * c.kw + q)] = cd.dv_dw(s, t, p, q);
        for (int ii = 0; ii < c.h; ++ii)
          for (int jj = 0; jj < c.w; ++jj)
            g_an[nw + static_cast<std::size_t>(ii * c.w + jj)] = cd.dv_dx(s, t, ii, jj);
        out.err = std::max(out.err, rel_err_max(g_an, g));

        const Mat hh = fd_hess_of_value(site, theta0, fd);
        Mat hh_an(nw + nx, nw + nx);
        for (int p = 0; p < c.kh; ++p)
          for (int q = 0; q < c.kw; ++q) {
            const std::size_t row = static_cast<std::size_t>(p * c.kw + q);
            for (int p2 = 0; p2 < c.kh; ++p2)
              for (int q2 = 0; q2 < c.kw; ++q2)
                hh_an(row, static_cast<std::size_t>(p2 * c.kw + q2)) =
                    cd.d2v_dwdw(s, t, p, q, p2, q2);
            for (int ii = 0; ii < c.h; ++ii)
              for (int jj = 0; jj < c.w; ++jj) {
                const double v = cd.d2v_dwdx(s, t, p, q, ii, jj);
                hh_an(row, nw + static_cast<std::size_t>(ii * c.w + jj)) = v;
                hh_an(nw + static_cast<std::size_t>(ii * c.w + jj), row) = v;
              }
          }
        for (int ii = 0; ii < c.h; ++ii)
          for (int jj = 0; jj < c.w; ++jj)
            for (int i2 = 0; i2 < c.h; ++i2)
              for (int j2 = 0; j2 < c.w; ++j2)
                hh_an(nw + static_cast<std::size_t>(ii * c.w + jj),
                      nw + static_cast<std::size_t>(i2 * c.w + j2)) =
                    cd.d2v_dxdx(s, t, ii, jj, i2, j2);
        if (smooth_second) {
          out.err = std::max(out.err, rel_err_max(hh_an, hh));
        } else {
          // Piecewise-linear activation: the whole curvature channel except
          // the mixed delta term is identically zero, and what remains is
          // checked exactly; the oracle just has to agree to noise level.
          if (rel_err_max(hh_an, hh) > 1e-6 && max_abs(hh_an) > 0.0) ++out.violations;
          if (max_abs(hh_an) == 0.0 && max_abs(hh) > 1e-7) ++out.violations;
        }
      }

    if (c.act == ConvAct::kIdentity && c.kh == 1 && c.kw == 1) {
      // 1x1 identity kernel: the layer is a pure scaling, pinning the index
      // mapping between kernel coordinates and input patches.
      for (int s = 0; s < cs.out_h(); ++s)
        for (int t = 0; t < cs.out_w(); ++t) {
          const std::size_t su = static_cast<std::size_t>(s), tu = static_cast<std::size_t>(t);
          if (rel_err(tr.v(su, tu), cs.kernel(0, 0) * x(su, tu)) > 1e-14) ++out.violations;
          if (rel_err(cd.dv_dw(s, t, 0, 0), x(su, tu)) > 1e-14) ++out.violations;
        }
    }
    return out;
  };
  const std::vector<ItemOut> outs =
      for_each_item(static_cast<int>(cases.size()), ctx.parallel, item);
  res.counters["cases"] = static_cast<std::int64_t>(cases.size());
  finish(res, outs, sw, "branch_violations");
  return res;
}

CheckResult check_rankone(const SuiteContext& ctx) {
  const Stopwatch sw(ctx.timings);
  CheckResult res;
  res.name = "rankone";
  res.tolerance = 1e-6;
  const int nets = 4;
  const FDConfig fd = ctx.cfg.fd;

  auto item = [&](int i) {
    ItemOut out;
    Rng rng(mix_seed(ctx.cfg.seed, "rankone", static_cast<std::uint64_t>(i)));
    const NetworkSpec spec = random_spec(rng, ActKind::kTanh, 1, 3, 2, 5, 2, 4);
    const RankOneWeights r1 = random_rankone(spec, rng);
    Sample s = random_sample(spec, rng);
    const RankOneGrads rg = rankone_grads(spec, r1, s);

    // Factor parameters flattened a, b, c_1..c_n, e_1..e_n.
    std::vector<const Vec*> parts = {&r1.a, &r1.b};
    for (const Vec& v : r1.c) parts.push_back(&v);
    for (const Vec& v : r1.e) parts.push_back(&v);
    std::size_t total = 0;
    for (const Vec* p : parts) total += p->size();
    Vec theta0(total);
    {
      std::size_t at = 0;
      for (const Vec* p : parts)
        for (std::size_t e = 0; e < p->size(); ++e) theta0[at++] = (*p)[e];
    }
    auto r1_at = [&](const Vec& th) {
      RankOneWeights r2 = r1;
      std::size_t at = 0;
      for (std::size_t e = 0; e < r2.a.size(); ++e) r2.a[e] = th[at++];
      for (std::size_t e = 0; e < r2.b.size(); ++e) r2.b[e] = th[at++];
      for (Vec& v : r2.c)
        for (std::size_t e = 0; e < v.size(); ++e) v[e] = th[at++];
      for (Vec& v : r2.e)
        for (std::size_t e = 0; e < v.size(); ++e) v[e] = th[at++];
      return r2;
    };
    const Vec fdg = fd_grad(
        [&](const Vec& th) { return forward(spec, r1_at(th).expand(spec), s).loss; }, theta0,
        fd);

    std::vector<ScaledVec> an = {rg.da, rg.db};
    for (const ScaledVec& v : rg.dc) an.push_back(v);
    for (const ScaledVec& v : rg.de) an.push_back(v);
    std::size_t at = 0;
    for (const ScaledVec& sv : an) {
      const Vec dense = sv.densify();
      Vec fd_part(dense.size());
      for (std::size_t e = 0; e < dense.size(); ++e) fd_part[e] = fdg[at + e];
      out.err = std::max(out.err, rel_err_max(dense, fd_part));
      // The numeric gradient must point along the printed factor vector.
      const double nf = norm(fd_part);
      const double nv = norm(sv.vec);
      if (nf > 1e-8 && nv > 0.0) {
        const double cos = std::abs(dot(fd_part, sv.vec)) / (nf * nv);
        if (cos < 1.0 - 1e-12) ++out.violations;
      }
      at += dense.size();
    }

    // Chain rule consistency: contracting the full head gradient with b
    // reproduces the a-gradient.
    const WeightSet ws = r1.expand(spec);
    const ForwardTrace tr = forward(spec, ws, s);
    const GammaStack gs = gamma_stack(spec, tr);
    const EtaStack es = eta_stack(spec, ws, gs);
    const FactoredGradient fg = grad(spec, ws, tr, es, s);
    if (rel_err_max(matvec(fg.densify_u(), r1.b), rg.da.densify()) > 1e-12) ++out.violations;
    return out;
  };
  const std::vector<ItemOut> outs = for_each_item(nets, ctx.parallel, item);
  res.counters["nets"] = nets;
  finish(res, outs, sw, "direction_violations");
  return res;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "grad", "hess",  "hess-general", "quadform", "curvature", "storage",
      "reg",  "bound", "rnn",          "conv",     "rankone"};
  return names;
}

CheckResult run_suite(const std::string& name, const SuiteContext& ctx) {
  if (name == "grad") return check_grad(ctx);
  if (name == "hess") return check_hess(ctx);
  if (name == "hess-general") return check_hess_general(ctx);
  if (name == "quadform") return check_quadform(ctx);
  if (name == "curvature") return check_curvature(ctx);
  if (name == "storage") return check_storage(ctx);
  if (name == "reg") return check_reg(ctx);
  if (name == "bound") return check_bound(ctx);
  if (name == "rnn") return check_rnn(ctx);
  if (name == "conv") return check_conv(ctx);
  if (name == "rankone") return check_rankone(ctx);
  throw ValidationError("unknown suite '" + name + "'");
}

}  // namespace netderiv
