#include "wbm/nlp.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wbm::nlp {
namespace {

using ad::Dual;

Eigen::VectorXd project(const Problem& p, Eigen::VectorXd x) {
  for (int i = 0; i < p.n; ++i) x[i] = std::min(p.ub[i], std::max(p.lb[i], x[i]));
  return x;
}

void check_finite(double v, const char* what, int index) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "nlp: " << what << " " << index << " returned non-finite value";
    throw std::runtime_error(os.str());
  }
}

/// One full evaluation at x: objective, equalities, inequalities (with the
/// comp products expanded into eps -+ c >= 0 pairs). `seeded` controls
/// whether gradients are carried.
struct Eval {
  Dual f;
  DualVec g;  // equalities
  DualVec h;  // inequalities incl. expanded complementarity rows
};

Eval evaluate(const Problem& p, const Eigen::VectorXd& x, double comp_eps,
              bool seeded) {
  DualVec xs = seeded ? ad::seed(x) : ad::constants(x);
  Eval e{p.objective(xs), {}, {}};
  check_finite(e.f.value(), "objective", 0);
  if (p.eq) {
    e.g = p.eq(xs);
    for (size_t i = 0; i < e.g.size(); ++i)
      check_finite(e.g[i].value(), "equality constraint", static_cast<int>(i));
  }
  if (p.ineq) {
    e.h = p.ineq(xs);
    for (size_t i = 0; i < e.h.size(); ++i)
      check_finite(e.h[i].value(), "inequality constraint", static_cast<int>(i));
  }
  if (p.comp) {
    DualVec c = p.comp(xs);
    for (size_t i = 0; i < c.size(); ++i) {
      check_finite(c[i].value(), "complementarity product", static_cast<int>(i));
      e.h.push_back(Dual(comp_eps) - c[i]);
      e.h.push_back(Dual(comp_eps) + c[i]);
    }
  }
  return e;
}

double max_violation(const Eval& e) {
  double v = 0.0;
  for (const auto& gi : e.g) v = std::max(v, std::abs(gi.value()));
  for (const auto& hi : e.h) v = std::max(v, -hi.value());
  return v;
}

/// Augmented Lagrangian merit (Rockafellar form for inequalities; the
/// constant -mu^2/(2 rho) terms are dropped).
Dual merit(const Eval& e, const Eigen::VectorXd& lambda,
           const Eigen::VectorXd& mu, double rho) {
  Dual m = e.f;
  for (size_t i = 0; i < e.g.size(); ++i) {
    m = m - lambda[static_cast<int>(i)] * e.g[i] +
        (0.5 * rho) * e.g[i] * e.g[i];
  }
  for (size_t i = 0; i < e.h.size(); ++i) {
    const Dual t = Dual(mu[static_cast<int>(i)]) - rho * e.h[i];
    if (t.value() > 0.0) m = m + t * t * (0.5 / rho);
  }
  return m;
}

struct MeritEval {
  double value;
  Eigen::VectorXd grad;
};

MeritEval merit_with_grad(const Problem& p, const Eigen::VectorXd& x,
                          double comp_eps, const Eigen::VectorXd& lambda,
                          const Eigen::VectorXd& mu, double rho) {
  const Eval e = evaluate(p, x, comp_eps, true);
  const Dual m = merit(e, lambda, mu, rho);
  return {m.value(), m.grad(p.n)};
}

double merit_value(const Problem& p, const Eigen::VectorXd& x, double comp_eps,
                   const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                   double rho) {
  const Eval e = evaluate(p, x, comp_eps, false);
  return merit(e, lambda, mu, rho).value();
}

/// Merit value, gradient, and a Gauss-Newton Hessian of the penalty terms.
/// The penalty curvature rho * grad_c * grad_c^T is what makes the merit a
/// stiff valley at large rho; capturing it lets steps follow the valley floor
/// where a first-order method would need step sizes below machine precision.
struct MeritModel {
  double value;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;  // penalty Gauss-Newton part only
};

MeritModel merit_model(const Problem& p, const Eigen::VectorXd& x,
                       double comp_eps, const Eigen::VectorXd& lambda,
                       const Eigen::VectorXd& mu, double rho) {
  const Eval e = evaluate(p, x, comp_eps, true);
  const Dual m = merit(e, lambda, mu, rho);
  MeritModel out{m.value(), m.grad(p.n), Eigen::MatrixXd::Zero(p.n, p.n)};
  for (const auto& gi : e.g) {
    const Eigen::VectorXd gg = gi.grad(p.n);
    out.hess.noalias() += rho * gg * gg.transpose();
  }
  for (size_t i = 0; i < e.h.size(); ++i) {
    if (mu[static_cast<int>(i)] - rho * e.h[i].value() <= 0.0) continue;
    const Eigen::VectorXd gh = e.h[i].grad(p.n);
    out.hess.noalias() += rho * gh * gh.transpose();
  }
  return out;
}

/// Projected Gauss-Newton inner solver with an Armijo backtracking line
/// search on the merit and a gradient-step fallback.
Eigen::VectorXd minimize_merit(const Problem& p, Eigen::VectorXd x,
                               double comp_eps, const Eigen::VectorXd& lambda,
                               const Eigen::VectorXd& mu, double rho,
                               const Settings& s) {
  MeritModel cur = merit_model(p, x, comp_eps, lambda, mu, rho);
  double sigma = 1.0;  // curvature estimate for the unmodeled objective part
  Eigen::VectorXd x_prev, g_prev;
  for (int it = 0; it < s.max_inner; ++it) {
    const Eigen::VectorXd pg = x - project(p, x - cur.grad);
    if (pg.lpNorm<Eigen::Infinity>() <= 0.1 * s.tol_kkt) break;
    if (it > 0) {
      const Eigen::VectorXd sv = x - x_prev;
      const Eigen::VectorXd yv = cur.grad - g_prev;
      const double sy = sv.dot(yv);
      if (sy > 1e-14)
        sigma = std::min(1e8, std::max(1e-6, sy / sv.squaredNorm()));
    }
    x_prev = x;
    g_prev = cur.grad;

    Eigen::MatrixXd h = cur.hess;
    h.diagonal().array() += sigma + 1e-12 * cur.hess.trace();
    Eigen::VectorXd dir = h.ldlt().solve(-cur.grad);
    if (!dir.allFinite() || cur.grad.dot(dir) >= 0.0) dir = -cur.grad / sigma;

    double t = 1.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = project(p, x + t * dir);
      const double m_new = merit_value(p, x_new, comp_eps, lambda, mu, rho);
      const double decrease = cur.grad.dot(x_new - x);
      if (m_new <= cur.value + 1e-4 * decrease &&
          (x_new - x).squaredNorm() > 0.0) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    x = x_new;
    cur = merit_model(p, x, comp_eps, lambda, mu, rho);
  }
  return x;
}

}  // namespace

KktResiduals check_kkt(const Problem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                       double comp_eps) {
  const Eval e = evaluate(problem, x, comp_eps, true);
  KktResiduals r;
  r.feasibility = max_violation(e);
  Eigen::VectorXd grad_l = e.f.grad(problem.n);
  for (size_t i = 0; i < e.g.size(); ++i)
    grad_l -= lambda[static_cast<int>(i)] * e.g[i].grad(problem.n);
  for (size_t i = 0; i < e.h.size(); ++i) {
    const double m = mu[static_cast<int>(i)];
    grad_l -= m * e.h[i].grad(problem.n);
    r.complementarity =
        std::max(r.complementarity, std::abs(m * e.h[i].value()));
  }
  r.stationarity =
      (x - project(problem, x - grad_l)).lpNorm<Eigen::Infinity>();
  return r;
}

Solution solve(const Problem& problem, const Settings& settings) {
  if (problem.n <= 0 || !problem.objective)
    throw std::invalid_argument("nlp: empty problem");
  Eigen::VectorXd x = project(problem, problem.x0);

  double comp_eps = settings.comp_eps0;
  Eval e0 = evaluate(problem, x, comp_eps, false);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(e0.g.size());
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(e0.h.size());

  double rho = settings.rho0;
  double best_viol = std::numeric_limits<double>::infinity();
  Solution sol;
  sol.status = Status::kMaxIter;
  for (int outer = 0; outer < settings.max_outer; ++outer) {
    x = minimize_merit(problem, x, comp_eps, lambda, mu, rho, settings);
    const Eval e = evaluate(problem, x, comp_eps, settings.log != nullptr);
    const double viol = max_violation(e);
    for (size_t i = 0; i < e.g.size(); ++i)
      lambda[static_cast<int>(i)] -= rho * e.g[i].value();
    for (size_t i = 0; i < e.h.size(); ++i) {
      const int k = static_cast<int>(i);
      mu[k] = std::max(0.0, mu[k] - rho * e.h[i].value());
    }
    sol.iterations = outer + 1;
    if (settings.log) {
      int worst = -1;
      double wv = 0.0;
      for (size_t i = 0; i < e.h.size(); ++i)
        if (-e.h[i].value() > wv) { wv = -e.h[i].value(); worst = static_cast<int>(i); }
      Eigen::VectorXd gn = e.h.empty() || worst < 0
                               ? Eigen::VectorXd()
                               : e.h[worst].grad(problem.n);
      *settings.log << "outer " << outer << " obj " << e.f.value() << " viol "
                    << viol << " rho " << rho << " worst_h " << worst
                    << " |grad| " << (gn.size() ? gn.norm() : -1.0) << "\n";
    }
    const KktResiduals kkt = check_kkt(problem, x, lambda, mu, comp_eps);
    if (viol <= settings.tol_feas && kkt.stationarity <= settings.tol_kkt &&
        comp_eps <= settings.comp_eps_final + 1e-15) {
      sol.status = Status::kOptimal;
      break;
    }
    if (viol > 0.25 * best_viol)
      rho = std::min(settings.rho_max, rho * settings.rho_growth);
    best_viol = std::min(best_viol, viol);
    comp_eps = std::max(settings.comp_eps_final, comp_eps * 0.1);
  }
  const Eval ef = evaluate(problem, x, settings.comp_eps_final, false);
  sol.x = x;
  sol.objective = ef.f.value();
  sol.violation = max_violation(ef);
  sol.lambda = lambda;
  sol.mu = mu;
  if (sol.status != Status::kOptimal && sol.violation > settings.tol_feas)
    sol.status = Status::kInfeasible;
  return sol;
}

}  // namespace wbm::nlp
