#include "wbm/nlp.hpp"

#include <random>

#include "doctest.h"

using namespace wbm;
using ad::Dual;
using nlp::DualVec;
using nlp::Problem;
using nlp::Settings;
using nlp::Status;

namespace {

Problem make_problem(int n) {
  Problem p;
  p.n = n;
  p.lb = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  p.x0 = Eigen::VectorXd::Zero(n);
  return p;
}

}  // namespace

TEST_CASE("unconstrained quadratic") {
  Problem p = make_problem(1);
  p.objective = [](const DualVec& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
  auto sol = nlp::solve(p);
  CHECK(sol.status == Status::kOptimal);
  CHECK(std::abs(sol.x[0] - 3.0) <= 1e-6);
}

TEST_CASE("active inequality at x = 1") {
  Problem p = make_problem(1);
  p.objective = [](const DualVec& x) { return x[0] * x[0]; };
  p.ineq = [](const DualVec& x) { return DualVec{x[0] - 1.0}; };
  auto sol = nlp::solve(p);
  CHECK(sol.status == Status::kOptimal);
  CHECK(std::abs(sol.x[0] - 1.0) <= 1e-6);
  auto kkt = nlp::check_kkt(p, sol.x, sol.lambda, sol.mu);
  CHECK(kkt.stationarity <= 1e-5);
  CHECK(kkt.feasibility <= 1e-6);
}

TEST_CASE("equality-constrained quadratic") {
  Problem p = make_problem(2);
  p.objective = [](const DualVec& x) { return x[0] * x[0] + x[1] * x[1]; };
  p.eq = [](const DualVec& x) { return DualVec{x[0] + x[1] - 1.0}; };
  auto sol = nlp::solve(p);
  CHECK(sol.status == Status::kOptimal);
  CHECK(std::abs(sol.x[0] - 0.5) <= 1e-6);
  CHECK(std::abs(sol.x[1] - 0.5) <= 1e-6);
  auto kkt = nlp::check_kkt(p, sol.x, sol.lambda, sol.mu);
  CHECK(kkt.stationarity <= 1e-5);
  CHECK(kkt.feasibility <= 1e-6);
  CHECK(kkt.complementarity <= 1e-5);
}

TEST_CASE("box bounds: infeasible start is projected") {
  Problem p = make_problem(1);
  p.lb[0] = 2.0;
  p.ub[0] = 5.0;
  p.x0[0] = -10.0;
  p.objective = [](const DualVec& x) { return x[0] * x[0]; };
  auto sol = nlp::solve(p);
  CHECK(sol.status == Status::kOptimal);
  CHECK(sol.x[0] == doctest::Approx(2.0));
}

TEST_CASE("complementarity product relaxed then tightened") {
  // min (x-1)^2 + (y-1)^2 s.t. x,y >= 0 and x*y = 0 (relaxed): the solver
  // should land near an axis rather than the unconstrained optimum.
  Problem p = make_problem(2);
  p.lb = Eigen::VectorXd::Zero(2);
  p.ub = Eigen::VectorXd::Constant(2, 10.0);
  p.x0 << 0.4, 0.6;
  p.objective = [](const DualVec& x) {
    return (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 1.0) * (x[1] - 1.0);
  };
  p.comp = [](const DualVec& x) { return DualVec{x[0] * x[1]}; };
  auto sol = nlp::solve(p);
  CHECK(sol.violation <= 1e-6);
  // The relaxed product bound is met up to the feasibility tolerance.
  CHECK(std::abs(sol.x[0] * sol.x[1]) <= 1e-6 + 1e-6);
  CHECK(std::max(sol.x[0], sol.x[1]) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("non-finite callback aborts with the constraint index") {
  Problem p = make_problem(1);
  p.objective = [](const DualVec& x) { return x[0] * x[0]; };
  p.ineq = [](const DualVec& x) {
    return DualVec{Dual(std::numeric_limits<double>::quiet_NaN()) + x[0]};
  };
  CHECK_THROWS_WITH_AS(nlp::solve(p),
                       "nlp: inequality constraint 0 returned non-finite value",
                       std::runtime_error);
}

TEST_CASE("infeasible problem is reported") {
  Problem p = make_problem(1);
  p.objective = [](const DualVec& x) { return x[0] * x[0]; };
  p.ineq = [](const DualVec& x) {
    return DualVec{x[0] - 1.0, -x[0] - 1.0};  // x >= 1 and x <= -1
  };
  Settings s;
  s.max_outer = 30;
  auto sol = nlp::solve(p, s);
  CHECK(sol.status == Status::kInfeasible);
  CHECK(sol.violation > 0.5);
}

namespace {

// Exhaustive active-set oracle for min 1/2 x'Qx + c'x s.t. Ax >= b.
double qp_oracle(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                 const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(Q.rows());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = Q;
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -c;
    for (int i = 0; i < k; ++i) {
      kkt.block(n + i, 0, 1, n) = A.row(act[i]);
      kkt.block(0, n + i, n, 1) = A.row(act[i]).transpose();
      rhs[n + i] = b[act[i]];
    }
    Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    if ((kkt * sol - rhs).norm() > 1e-9) continue;  // singular subset
    const Eigen::VectorXd x = sol.head(n);
    bool ok = true;
    for (int i = 0; i < m; ++i) {
      if (A.row(i).dot(x) < b[i] - 1e-9) ok = false;
    }
    for (int i = 0; i < k; ++i) {
      // Stationarity Qx + c = A_S' mu with mu >= 0; the KKT block above uses
      // +A', so its multiplier is -mu and must be <= 0.
      if (sol[n + i] > 1e-9) ok = false;
    }
    if (!ok) continue;
    best = std::min(best, 0.5 * x.dot(Q * x) + c.dot(x));
  }
  return best;
}

}  // namespace

TEST_CASE("randomized convex QP suite matches active-set oracle") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int m = 1 + static_cast<int>(rng() % 3);
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = g(rng);
    Eigen::MatrixXd Q = B * B.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd c(n), b(m);
    Eigen::MatrixXd A(m, n);
    for (int i = 0; i < n; ++i) c[i] = g(rng);
    for (int i = 0; i < m; ++i) {
      b[i] = g(rng) - 1.0;
      for (int j = 0; j < n; ++j) A(i, j) = g(rng);
    }
    const double oracle = qp_oracle(Q, c, A, b);
    if (!std::isfinite(oracle)) continue;  // infeasible draw

    Problem p = make_problem(n);
    p.objective = [&](const DualVec& x) {
      Dual v(0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) v = v + 0.5 * Q(i, j) * x[i] * x[j];
        v = v + c[i] * x[i];
      }
      return v;
    };
    p.ineq = [&](const DualVec& x) {
      DualVec h(m, Dual(0.0));
      for (int i = 0; i < m; ++i) {
        Dual row(-b[i]);
        for (int j = 0; j < n; ++j) row = row + A(i, j) * x[j];
        h[static_cast<size_t>(i)] = row;
      }
      return h;
    };
    auto sol = nlp::solve(p);
    CHECK(sol.violation <= 1e-6);
    CHECK(std::abs(sol.objective - oracle) <= 1e-5);
  }
}

TEST_CASE("deterministic: identical problems give identical iterates") {
  auto run = [] {
    Problem p = make_problem(3);
    p.x0 << 0.3, -0.2, 0.9;
    p.objective = [](const DualVec& x) {
      return (x[0] - 1.0) * (x[0] - 1.0) + 2.0 * x[1] * x[1] +
             (x[2] + 0.5) * (x[2] + 0.5) + 0.1 * x[0] * x[2];
    };
    p.ineq = [](const DualVec& x) { return DualVec{x[0] + x[1] - 0.2}; };
    return nlp::solve(p).x;
  };
  const Eigen::VectorXd a = run(), b = run();
  CHECK((a - b).norm() == 0.0);
}
