#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "netderiv/errors.hpp"
#include "netderiv/fd.hpp"
#include "netderiv/network.hpp"
#include "netderiv/rng.hpp"

using namespace netderiv;

TEST_CASE("gradient of a cubic polynomial") {
  Vec x(4);
  x[0] = 0.3;
  x[1] = -1.2;
  x[2] = 2.0;
  x[3] = -0.4;
  const FDConfig fd;
  const Vec g = fd_grad(
      [](const Vec& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * v[i] * v[i];
        return s;
      },
      x, fd);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(g[i] == doctest::Approx(3.0 * x[i] * x[i]).epsilon(1e-8));
}

TEST_CASE("jacobian of a coupled vector map") {
  Vec x(2);
  x[0] = 0.7;
  x[1] = -0.2;
  const FDConfig fd;
  const Mat j = fd_jacobian(
      [](const Vec& v) {
        Vec out(3);
        out[0] = v[0] * v[1];
        out[1] = std::sin(v[0]);
        out[2] = v[1] * v[1];
        return out;
      },
      x, fd);
  CHECK(j(0, 0) == doctest::Approx(x[1]).epsilon(1e-8));
  CHECK(j(0, 1) == doctest::Approx(x[0]).epsilon(1e-8));
  CHECK(j(1, 0) == doctest::Approx(std::cos(x[0])).epsilon(1e-8));
  CHECK(j(1, 1) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(j(2, 1) == doctest::Approx(2.0 * x[1]).epsilon(1e-8));
}

TEST_CASE("value-based Hessian on a quartic with cross terms") {
  Vec x(3);
  x[0] = 0.5;
  x[1] = -0.8;
  x[2] = 1.1;
  const FDConfig fd;
  // f = x0^2 x1 + x2^4
  const Mat h = fd_hess_of_value(
      [](const Vec& v) { return v[0] * v[0] * v[1] + v[2] * v[2] * v[2] * v[2]; }, x, fd);
  CHECK(h(0, 0) == doctest::Approx(2.0 * x[1]).epsilon(1e-5));
  CHECK(h(0, 1) == doctest::Approx(2.0 * x[0]).epsilon(1e-5));
  CHECK(h(1, 0) == doctest::Approx(2.0 * x[0]).epsilon(1e-5));
  CHECK(h(1, 1) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(h(2, 2) == doctest::Approx(12.0 * x[2] * x[2]).epsilon(1e-5));
}

TEST_CASE("gradient-based Hessian from an exact gradient") {
  Vec x(3);
  x[0] = 1.3;
  x[1] = -0.6;
  x[2] = 0.2;
  const FDConfig fd;
  const Mat h = fd_hess_of_grad(
      [](const Vec& v) {
        Vec g(3);
        for (std::size_t i = 0; i < 3; ++i) g[i] = 3.0 * v[i] * v[i];
        return g;
      },
      x, fd);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(h(i, j) == doctest::Approx(i == j ? 6.0 * x[i] : 0.0).epsilon(1e-7));
}

TEST_CASE("relative error helpers use max-style denominators") {
  CHECK(rel_err(1.0, 1.0) == 0.0);
  CHECK(rel_err(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(rel_err(0.0, 0.0) == 0.0);
  Vec a(2), b(2);
  a[0] = 1.0;
  b[0] = 1.0 + 1e-6;
  a[1] = -2.0;
  b[1] = -2.0;
  CHECK(rel_err_max(a, b) == doctest::Approx(1e-6).epsilon(1e-3));
}

TEST_CASE("kink guard flags pre-activations near the ReLU corner") {
  NetworkSpec spec;
  spec.n = 1;
  spec.dims = {1, 1};
  spec.classes = 2;
  spec.activation = ActKind::kReLU;
  WeightSet ws;
  ws.w = {Mat(1, 1)};
  ws.w[0](0, 0) = 0.5;
  ws.u = Mat(2, 1);
  ws.u(0, 0) = 1.0;
  ws.u(1, 0) = -1.0;
  Sample s;
  s.x = Vec(1);
  s.x[0] = 1.0;
  s.y = Vec(2);
  s.y[0] = 1.0;
  const ForwardTrace tr = forward(spec, ws, s);  // z = 0.5
  CHECK(kink_guard(tr, 0.4));
  CHECK_FALSE(kink_guard(tr, 0.6));
}

TEST_CASE("step configuration is validated") {
  FDConfig fd;
  fd.step_first = 0.0;
  CHECK_THROWS_AS(fd.validate(), ValidationError);
  fd.step_first = 1e-5;
  fd.kink_margin = -1.0;
  CHECK_THROWS_AS(fd.validate(), ValidationError);
}
