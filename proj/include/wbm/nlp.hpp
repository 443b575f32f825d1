#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <vector>

#include "wbm/autodiff.hpp"

namespace wbm::nlp {

using DualVec = std::vector<ad::Dual>;

/// Smooth NLP: min f(x) s.t. g(x) = 0, h(x) >= 0, lb <= x <= ub, plus
/// complementarity products c(x) enforced as |c| <= eps with eps tightened
/// across outer iterations. Vector-valued callbacks let constraint groups
/// share intermediate computation (kinematics, proximities).
struct Problem {
  int n = 0;
  Eigen::VectorXd lb, ub;  // +-infinity allowed
  std::function<ad::Dual(const DualVec&)> objective;
  std::function<DualVec(const DualVec&)> eq;    // g(x) = 0
  std::function<DualVec(const DualVec&)> ineq;  // h(x) >= 0
  std::function<DualVec(const DualVec&)> comp;  // |c(x)| <= eps_comp
  Eigen::VectorXd x0;
};

struct Settings {
  double tol_feas = 1e-6;
  double tol_kkt = 1e-5;
  int max_outer = 200;
  int max_inner = 100;
  double rho0 = 10.0;
  double rho_growth = 10.0;
  double rho_max = 1e12;
  double comp_eps0 = 1e-2;
  double comp_eps_final = 1e-6;
  std::ostream* log = nullptr;
};

enum class Status { kOptimal, kMaxIter, kInfeasible };

struct Solution {
  Eigen::VectorXd x;
  double objective = 0.0;
  double violation = 0.0;  // true max violation over all constraints at x
  int iterations = 0;      // outer iterations
  Status status = Status::kMaxIter;
  Eigen::VectorXd lambda;  // equality multipliers
  Eigen::VectorXd mu;      // inequality multipliers (>= 0)
};

struct KktResiduals {
  double stationarity = 0.0;    // projected-gradient norm of the Lagrangian
  double feasibility = 0.0;     // max constraint violation
  double complementarity = 0.0; // max |mu_i h_i|
};

Solution solve(const Problem& problem, const Settings& settings = {});

KktResiduals check_kkt(const Problem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                       double comp_eps = 0.0);

}  // namespace wbm::nlp
