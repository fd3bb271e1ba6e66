#pragma once

#include <cstdint>
#include <vector>

#include "netderiv/network.hpp"

namespace netderiv {

// Diagonal of activation slopes per layer: gamma[k-1][i] = A'(z_k[i]).
// Stored as vectors, never as dense diagonal matrices.
struct GammaStack {
  std::vector<Vec> g;

  const Vec& layer(int k) const { return g[static_cast<std::size_t>(k - 1)]; }
};

GammaStack gamma_stack(const NetworkSpec& spec, const ForwardTrace& trace);

// beta_k = diag(gamma_k) w_k: rows of w_k scaled by the slope diagonal.
Mat beta(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k);

// Chain product alpha(k,l) = beta_k beta_{k-1} ... beta_{l+1}.
// alpha(k,k) is the identity; alpha(k,l) with k < l is the zero matrix.
// Satisfies alpha(k,l) * alpha(l,m) == alpha(k,m).
Mat alpha(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k, int l);

// eta(k,l) = alpha(k,l) diag(gamma_l): the Jacobian of v_k with respect to
// the preactivation of layer l. dv_k/dw_l factors as eta(k,l) x v_{l-1}.
Mat eta(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs, int k, int l);

// Top-row factors eta(n,k) for k = 1..n; these are the only chain matrices a
// gradient needs to keep.
struct EtaStack {
  std::vector<Mat> e;  // e[k-1] = eta(n,k), shape dn x dk

  const Mat& top(int k) const { return e[static_cast<std::size_t>(k - 1)]; }
  std::size_t scalar_count() const;
};

EtaStack eta_stack(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs);

// Per-sample gradient in outer-product form. Each weight-matrix gradient is
// a single column vector times a row vector; nothing of weight-matrix shape
// is ever stored.
struct FactoredGradient {
  Vec df_dp;                 // left factor of the head gradient
  Vec u_right;               // v_n
  std::vector<Vec> w_left;   // w_left[k-1] = eta(n,k)^T u^T df_dp
  std::vector<Vec> w_right;  // w_right[k-1] = v_{k-1}

  const Vec& u_left() const { return df_dp; }
  Mat densify_u() const { return outer(df_dp, u_right); }
  Mat densify_w(int k) const {
    return outer(w_left[static_cast<std::size_t>(k - 1)],
                 w_right[static_cast<std::size_t>(k - 1)]);
  }
  std::size_t scalar_count() const;
};

FactoredGradient grad(const NetworkSpec& spec, const WeightSet& weights,
                      const ForwardTrace& trace, const EtaStack& es, const Sample& sample);

// Gradient of the loss with respect to the input x.
Vec grad_input(const NetworkSpec& spec, const WeightSet& weights, const ForwardTrace& trace,
               const GammaStack& gs, const Sample& sample);

// Streaming access to the interior chain matrices eta(a, b) with b <= a < n.
// A column fixes b and holds eta(a, b) for a = b..n-1; columns are built on
// demand, used, and released, and the generator records how many interior
// matrices were ever live at once.
class EtaGenerator {
 public:
  EtaGenerator(const NetworkSpec& spec, const WeightSet& weights, const GammaStack& gs)
      : spec_(&spec), weights_(&weights), gs_(&gs) {}

  class Column {
   public:
    ~Column();
    Column(Column&&) noexcept;
    Column& operator=(Column&&) = delete;
    Column(const Column&) = delete;

    // eta(a, b) for a held by this column.
    const Mat& at(int a) const;
    int b() const { return b_; }

   private:
    friend class EtaGenerator;
    Column(EtaGenerator* owner, int b, int lo, std::vector<Mat> mats);
    EtaGenerator* owner_;
    int b_;
    int lo_;  // row index of mats_[0]
    std::vector<Mat> mats_;
  };

  // Full column b: eta(a, b) for a in [b, n-1].
  Column column(int b);

  // Single interior matrix eta(a, b), still tracked while the column lives.
  Column single(int a, int b);

  std::int64_t live() const { return live_; }
  std::int64_t peak_live() const { return peak_live_; }
  std::int64_t total_made() const { return total_made_; }

 private:
  friend class Column;
  void on_make(std::int64_t n);
  void on_release(std::int64_t n);

  const NetworkSpec* spec_;
  const WeightSet* weights_;
  const GammaStack* gs_;
  std::int64_t live_ = 0;
  std::int64_t peak_live_ = 0;
  std::int64_t total_made_ = 0;
};

}  // namespace netderiv
