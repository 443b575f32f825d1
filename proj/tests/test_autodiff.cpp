#include "wbm/autodiff.hpp"

#include <random>

#include "doctest.h"

using wbm::ad::Dual;

namespace {

// Central finite difference of a scalar function of n variables.
template <class F>
Eigen::VectorXd fd_gradient(const F& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("arithmetic obeys chain rule against finite differences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = dist(rng);
    if (std::abs(x[2]) < 0.2) x[2] += 0.5;  // keep divisions well conditioned

    auto f_double = [](const Eigen::VectorXd& v) {
      return std::sin(v[0]) * std::exp(0.3 * v[1]) + v[0] * v[1] / v[2] +
             std::sqrt(v[0] * v[0] + v[1] * v[1] + 1.0) +
             std::atan2(v[1], v[2]);
    };
    auto xs = wbm::ad::seed(x);
    using wbm::ad::atan2;
    using wbm::ad::exp;
    using wbm::ad::sin;
    using wbm::ad::sqrt;
    Dual y = sin(xs[0]) * exp(Dual(0.3) * xs[1]) + xs[0] * xs[1] / xs[2] +
             sqrt(xs[0] * xs[0] + xs[1] * xs[1] + Dual(1.0)) +
             atan2(xs[1], xs[2]);

    CHECK(y.value() == doctest::Approx(f_double(x)).epsilon(1e-12));
    Eigen::VectorXd fd = fd_gradient(f_double, x);
    Eigen::VectorXd g = y.grad(3);
    for (int i = 0; i < 3; ++i) {
      CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("constant duals stay gradient-free through arithmetic") {
  Dual a(2.0), b(3.0);
  Dual c = a * b + a / b - b;
  CHECK(!c.has_grad());
  CHECK(c.grad(4).isZero());
}

TEST_CASE("clamp derivative is one-sided zero at the bounds") {
  Dual x = Dual::seeded(0.5, 1, 0);
  CHECK(wbm::ad::clamp(x, 0.0, 1.0).grad(1)[0] == 1.0);
  Dual lo = Dual::seeded(-3.0, 1, 0);
  CHECK(wbm::ad::clamp(lo, 0.0, 1.0).value() == 0.0);
  CHECK(wbm::ad::clamp(lo, 0.0, 1.0).grad(1)[0] == 0.0);
  Dual hi = Dual::seeded(1.7, 1, 0);
  CHECK(wbm::ad::clamp(hi, 0.0, 1.0).value() == 1.0);
  CHECK(wbm::ad::clamp(hi, 0.0, 1.0).grad(1)[0] == 0.0);
  Dual edge = Dual::seeded(1.0, 1, 0);
  CHECK(wbm::ad::clamp(edge, 0.0, 1.0).grad(1)[0] == 0.0);
}

TEST_CASE("seed produces identity partials") {
  Eigen::VectorXd x(2);
  x << 4.0, -1.0;
  auto xs = wbm::ad::seed(x);
  CHECK(xs[0].grad(2)[0] == 1.0);
  CHECK(xs[0].grad(2)[1] == 0.0);
  CHECK(xs[1].grad(2)[1] == 1.0);
}
