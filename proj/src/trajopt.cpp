#include "wbm/trajopt.hpp"

#include <cmath>
#include <random>

namespace wbm::trajopt {
namespace {

using ad::Dual;
using nlp::DualVec;

DualVec slice(const DualVec& x, int offset, int count) {
  return DualVec(x.begin() + offset, x.begin() + offset + count);
}

Eigen::VectorXd default_w_d(const costs::CostParams& cost) {
  if (cost.w_d_diag.size() > 0) return cost.w_d_diag;
  // Heavy enough that goal progress beats the contact-attraction rewards
  // (beta_p/beta_r scale) even when the remaining error is near tolerance;
  // otherwise the endgame trades centimeters of goal error for posture.
  Eigen::VectorXd w(3);
  w << 300.0, 300.0, 90.0;
  return w;
}

/// Smoothed |x|, shifted so it vanishes at x = 0: the friction cone built on
/// it admits f = 0 exactly instead of violating it by sqrt(eps).
Dual smooth_abs(const Dual& x, double eps) {
  using ad::sqrt;
  return sqrt(x * x + Dual(eps)) - std::sqrt(eps);
}

/// Object-frame coordinates of a world point given pose q_u.
geom::Vec2d to_object_frame(const Eigen::Vector3d& q_u, const geom::Vec2d& p) {
  const double c = std::cos(q_u[2]), s = std::sin(q_u[2]);
  const geom::Vec2d rel{p.x - q_u[0], p.y - q_u[1]};
  return {c * rel.x + s * rel.y, -s * rel.x + c * rel.y};
}

/// Link-frame coordinates of a world point given the joint frames.
geom::Vec2d to_link_frame(const plant::JointFrames<double>& fr, int joint,
                          const geom::Vec2d& p) {
  const double c = std::cos(fr.angle[joint]), s = std::sin(fr.angle[joint]);
  const geom::Vec2d rel{p.x - fr.origin[joint].x, p.y - fr.origin[joint].y};
  return {c * rel.x + s * rel.y, -s * rel.x + c * rel.y};
}

/// Damped Gauss-Newton position IK for one chain's fingertip. Returns the
/// full joint vector (other chains untouched); no collision awareness — the
/// result only seeds the placement solve, which owns the constraints.
Eigen::VectorXd fingertip_ik(const plant::RobotModel& robot,
                             const Eigen::VectorXd& q_a0, int chain,
                             const geom::Vec2d& target) {
  Eigen::VectorXd q = q_a0;
  const int off = robot.joint_offset(chain);
  const int nj = static_cast<int>(robot.chains[chain].link_lengths.size());
  const int last = nj - 1;
  const geom::Vec2d tip_local{robot.chains[chain].link_lengths[last], 0.0};
  for (int it = 0; it < 100; ++it) {
    const auto fr = plant::compute_joint_frames(robot, plant::to_std(q));
    const auto tip = plant::link_point(robot, fr, chain, last, tip_local);
    const Eigen::Vector2d err(target.x - tip.x, target.y - tip.y);
    if (err.norm() < 1e-6) break;
    Eigen::MatrixXd j(2, nj);
    for (int k = 0; k < nj; ++k) {
      const geom::Vec2d arm{tip.x - fr.origin[off + k].x,
                            tip.y - fr.origin[off + k].y};
      j(0, k) = -arm.y;
      j(1, k) = arm.x;
    }
    const Eigen::MatrixXd h =
        j.transpose() * j + 1e-6 * Eigen::MatrixXd::Identity(nj, nj);
    Eigen::VectorXd dq = h.ldlt().solve(j.transpose() * err);
    const double step = std::min(1.0, 0.3 / std::max(1e-9, dq.norm()));
    for (int k = 0; k < nj; ++k) {
      q[off + k] = std::clamp(q[off + k] + step * dq[k], robot.q_lb[off + k],
                              robot.q_ub[off + k]);
    }
  }
  return q;
}

}  // namespace

double subgoal_error(const plant::PlantState& state,
                     const Eigen::Vector3d& q_u_goal,
                     const costs::CostParams& cost) {
  const Eigen::VectorXd w = default_w_d(cost);
  const std::vector<double> qu{state.q_u[0], state.q_u[1], state.q_u[2]};
  const std::vector<double> qa;  // object error only
  return costs::distance_objective(qu, qa, q_u_goal, Eigen::VectorXd(), w);
}

bool subgoal_reached(const plant::PlantState& state,
                     const Eigen::Vector3d& q_u_goal, const PhaseConfig& cfg) {
  const double dx = state.q_u[0] - q_u_goal[0];
  const double dy = state.q_u[1] - q_u_goal[1];
  const double dth = costs::wrap_angle(state.q_u[2] - q_u_goal[2]);
  return std::hypot(dx, dy) <= cfg.goal_tol_xy &&
         std::abs(dth) <= cfg.goal_tol_theta;
}

std::vector<int> detect_active(const plant::RobotModel& robot,
                               const plant::ObjectModel& object,
                               const plant::PlantState& state,
                               double delta_act) {
  std::vector<int> active;
  for (const auto& c : plant::contact_candidates(robot, object, state)) {
    if (c.prox.dp <= delta_act) active.push_back(c.patch_index);
  }
  return active;
}

TrajectorySegment placement_phase(const plant::RobotModel& robot,
                                  const plant::ObjectModel& object,
                                  const plant::PlantState& q_near,
                                  const Eigen::Vector3d& q_samp,
                                  const PhaseConfig& cfg,
                                  const Eigen::VectorXd* warm_u,
                                  bool explore) {
  const int na = robot.num_joints();
  const int n = cfg.n_cf * na;
  nlp::Problem p;
  p.n = n;
  p.lb = Eigen::VectorXd::Constant(n, -robot.u_max);
  p.ub = Eigen::VectorXd::Constant(n, robot.u_max);
  p.x0 = (warm_u && warm_u->size() == n) ? *warm_u : Eigen::VectorXd::Zero(n);

  const DualVec qu_const = ad::constants(Eigen::VectorXd(q_near.q_u));
  const std::vector<double> qu_vals{q_near.q_u[0], q_near.q_u[1], q_near.q_u[2]};

  // Accepted steps can leave contacts a hair inside the surface (solver
  // feasibility tolerance). Require "no additional penetration" rather than
  // dp >= 0 so such states still admit a feasible solve.
  std::vector<double> dp_floor;
  for (const auto& c : plant::contact_candidates(robot, object, q_near))
    dp_floor.push_back(std::min(0.0, c.prox.dp));

  auto accumulate = [&](const DualVec& x, int steps) {
    DualVec qa = ad::constants(q_near.q_a);
    for (int i = 0; i < steps; ++i) {
      for (int j = 0; j < na; ++j) qa[j] = qa[j] + x[i * na + j];
    }
    return qa;
  };

  p.objective = [&, qu_const](const DualVec& x) {
    const DualVec qa = accumulate(x, cfg.n_cf);
    auto pc = costs::placement_cost(robot, object, cfg.cost, qu_const, qa, q_samp);
    return pc.g_p + pc.g_r;
  };
  p.ineq = [&, qu_const](const DualVec& x) {
    DualVec out;
    DualVec qa = ad::constants(q_near.q_a);
    for (int i = 0; i < cfg.n_cf; ++i) {
      for (int j = 0; j < na; ++j) qa[j] = qa[j] + x[i * na + j];
      const auto fr = plant::compute_joint_frames(robot, qa);
      for (size_t k = 0; k < robot.b_r.size(); ++k) {
        const auto w = plant::patch_world(robot, fr, robot.b_r[k]);
        out.push_back(
            plant::patch_object_proximity(w, object.shape, qu_const).dp -
            dp_floor[k]);
      }
      for (auto& d : plant::self_collision_distances(robot, qa))
        out.push_back(std::move(d));
      for (int j = 0; j < na; ++j) {
        out.push_back(qa[j] - robot.q_lb[j]);
        out.push_back(robot.q_ub[j] - qa[j]);
      }
    }
    return out;
  };

  // The placement NLP is local: when the current posture already rests
  // against the object, it rarely swings an arm around to the far side even
  // when only contacts there can push toward the subgoal. Seed extra starts
  // from fingertip IK aimed at the point behind the object (where the
  // reference-force normal is largest); the solve keeps the constraints.
  std::vector<Eigen::VectorXd> starts{p.x0};
  const Eigen::Vector2d gap = q_samp.head<2>() - q_near.q_u.head<2>();
  if (explore && gap.norm() > 1e-3) {
    const Eigen::Vector2d s_dir = -gap.normalized();
    const double reach = object.shape.bounding_radius() + 0.03;
    const geom::Vec2d target{q_near.q_u[0] + reach * s_dir[0],
                             q_near.q_u[1] + reach * s_dir[1]};
    for (int chain = 0; chain < static_cast<int>(robot.chains.size());
         ++chain) {
      const Eigen::VectorXd q_ik =
          fingertip_ik(robot, q_near.q_a, chain, target);
      Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < cfg.n_cf; ++i) {
        x0.segment(i * na, na) =
            ((q_ik - q_near.q_a) / cfg.n_cf)
                .cwiseMin(robot.u_max)
                .cwiseMax(-robot.u_max);
      }
      starts.push_back(std::move(x0));
    }
  }
  nlp::Solution sol;
  sol.status = nlp::Status::kInfeasible;
  for (const auto& x0 : starts) {
    p.x0 = x0;
    nlp::Solution cand = nlp::solve(p, cfg.solver);
#ifdef WBM_PLACEMENT_DEBUG
    fprintf(stderr, "  [place] explore=%d start#%ld status=%d obj=%.4f\n",
            int(explore), &x0 - starts.data(), int(cand.status),
            cand.objective);
#endif
    if (cand.status == nlp::Status::kInfeasible) continue;
    if (sol.status == nlp::Status::kInfeasible ||
        cand.objective < sol.objective)
      sol = std::move(cand);
  }

  TrajectorySegment seg;
  seg.states.push_back(q_near);
  seg.initial_error = subgoal_error(q_near, q_samp, cfg.cost);
  if (sol.status == nlp::Status::kInfeasible) {
    seg.failed = true;
    seg.terminal_error = seg.initial_error;
    return seg;
  }
  plant::PlantState cur = q_near;
  for (int i = 0; i < cfg.n_cf; ++i) {
    StepRecord rec;
    rec.phase = Phase::kPlacement;
    rec.u = sol.x.segment(i * na, na);
    cur = plant::quasi_dynamic_step(robot, object, cur, rec.u, {});
    seg.steps.push_back(std::move(rec));
    seg.states.push_back(cur);
  }
  seg.terminal_error = subgoal_error(cur, q_samp, cfg.cost);
  seg.contact_reached =
      !detect_active(robot, object, cur, cfg.cost.delta_act).empty();
  seg.failed = sol.status == nlp::Status::kInfeasible;
  return seg;
}

TrajectorySegment manipulation_phase(const plant::RobotModel& robot,
                                     const plant::ObjectModel& object,
                                     const plant::PlantState& state,
                                     const Eigen::Vector3d& q_samp,
                                     const PhaseConfig& cfg,
                                     const Eigen::VectorXd* warm) {
  const int na = robot.num_joints();
  const int nq = 3 + na;
  const int n = na + nq;  // decision variables (u, nu)

  auto cands = plant::contact_candidates(robot, object, state);
  std::vector<int> active;
  for (const auto& c : cands)
    if (c.prox.dp <= cfg.cost.delta_act) active.push_back(c.patch_index);
  const int m = static_cast<int>(active.size());

  // As in the placement phase: tolerate pre-existing hairline penetration
  // instead of rejecting the whole step as infeasible.
  std::vector<double> dp_floor(robot.b_r.size(), 0.0);
  for (const auto& c : cands)
    dp_floor[c.patch_index] = std::min(0.0, c.prox.dp);

  // Stacked force map: generalized force = Jbar^T f, f in per-contact (n, t).
  Eigen::MatrixXd jbar = Eigen::MatrixXd::Zero(2 * m, nq);
  for (int i = 0; i < m; ++i) {
    const auto& c = cands[active[i]];
    for (int col = 0; col < 2; ++col) {
      jbar.block(2 * i + col, 0, 1, 3) = c.j_u.col(col).transpose();
      jbar.block(2 * i + col, 3, 1, na) = -c.j_a.col(col).transpose();
    }
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nq, nq);
  M.topLeftCorner(3, 3) = object.l_u;
  M.bottomRightCorner(na, na) = robot.k_a.asDiagonal();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nq, na);
  K.bottomRows(na) = Eigen::MatrixXd(robot.k_a.asDiagonal());
  Eigen::MatrixXd Minv = Eigen::MatrixXd::Zero(nq, nq);
  Minv.topLeftCorner(3, 3) = object.l_u.inverse();
  Minv.bottomRightCorner(na, na) =
      robot.k_a.cwiseInverse().asDiagonal().toDenseMatrix();

  bool regularized = false;
  Eigen::MatrixXd A, B, C;
  if (m > 0) {
    const Eigen::MatrixXd gram = jbar * jbar.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    regularized = es.eigenvalues().minCoeff() < 1e-8;
    const Eigen::MatrixXd ginv =
        (gram + cfg.pinv_reg * Eigen::MatrixXd::Identity(2 * m, 2 * m))
            .ldlt()
            .solve(Eigen::MatrixXd::Identity(2 * m, 2 * m));
    A = ginv * jbar * M;        // f = A nu + B u
    B = -ginv * jbar * K;
    C = Minv * jbar.transpose();  // dq = [0; u] + C f
  }

  // Material points frozen at the pre-step contact configuration.
  const auto fr0 = plant::compute_joint_frames(robot, plant::to_std(state.q_a));
  struct Frozen {
    geom::Vec2d local_h, local_s, h0, s0, n, t;
    int chain, link;
  };
  std::vector<Frozen> frozen(m);
  for (int i = 0; i < m; ++i) {
    const auto& c = cands[active[i]];
    const auto& patch = robot.b_r[c.patch_index];
    Frozen fz;
    fz.chain = patch.chain;
    fz.link = patch.link;
    fz.h0 = c.prox.Hp;
    fz.s0 = c.prox.Sp;
    fz.n = c.prox.n;
    fz.t = c.prox.t;
    fz.local_s = to_object_frame(state.q_u, c.prox.Sp);
    fz.local_h = patch.link < 0
                     ? geom::Vec2d{c.prox.Hp.x - robot.chains[patch.chain].base.x,
                                   c.prox.Hp.y - robot.chains[patch.chain].base.y}
                     : to_link_frame(fr0, robot.joint_offset(patch.chain) + patch.link,
                                     c.prox.Hp);
    frozen[i] = fz;
  }

  // Shared evaluation of forces, the post state and contact velocities.
  struct StepEval {
    DualVec f;        // 2m
    DualVec qu, qa;   // post state
    DualVec v;        // 2m, (v_n, v_t) per active contact
  };
  auto eval_step = [&](const DualVec& x) {
    StepEval e;
    const DualVec u = slice(x, 0, na);
    const DualVec nu = slice(x, na, nq);
    e.f.assign(2 * m, Dual(0.0));
    for (int r = 0; r < 2 * m; ++r) {
      Dual acc(0.0);
      for (int j = 0; j < nq; ++j) acc = acc + A(r, j) * nu[j];
      for (int j = 0; j < na; ++j) acc = acc + B(r, j) * u[j];
      e.f[r] = acc;
    }
    e.qu.assign(3, Dual(0.0));
    e.qa.assign(na, Dual(0.0));
    for (int j = 0; j < 3; ++j) {
      Dual acc(state.q_u[j]);
      for (int r = 0; r < 2 * m; ++r) acc = acc + C(j, r) * e.f[r];
      e.qu[j] = acc;
    }
    for (int j = 0; j < na; ++j) {
      Dual acc = Dual(state.q_a[j]) + u[j];
      for (int r = 0; r < 2 * m; ++r) acc = acc + C(3 + j, r) * e.f[r];
      e.qa[j] = acc;
    }
    if (m > 0) {
      const auto fr = plant::compute_joint_frames(robot, e.qa);
      e.v.assign(2 * m, Dual(0.0));
      for (int i = 0; i < m; ++i) {
        const auto& fz = frozen[i];
        geom::Vec2<Dual> hp =
            plant::link_point(robot, fr, fz.chain, fz.link, fz.local_h);
        geom::Vec2<Dual> sp = plant::object_point(e.qu, fz.local_s);
        const geom::Vec2<Dual> rel{(hp.x - fz.h0.x) - (sp.x - fz.s0.x),
                                   (hp.y - fz.h0.y) - (sp.y - fz.s0.y)};
        e.v[2 * i] = rel.x * fz.n.x + rel.y * fz.n.y;
        e.v[2 * i + 1] = rel.x * fz.t.x + rel.y * fz.t.y;
      }
    }
    return e;
  };

  const Eigen::VectorXd w_d = default_w_d(cfg.cost);
  const Eigen::VectorXd qa_goal = Eigen::VectorXd::Zero(na);

  nlp::Problem p;
  p.n = n;
  p.lb = Eigen::VectorXd::Constant(n, -cfg.nu_max);
  p.ub = Eigen::VectorXd::Constant(n, cfg.nu_max);
  p.lb.head(na).setConstant(-robot.u_max);
  p.ub.head(na).setConstant(robot.u_max);
  p.x0 = (warm && warm->size() == n) ? *warm : Eigen::VectorXd::Zero(n);

  p.objective = [&, active](const DualVec& x) {
    const StepEval e = eval_step(x);
    auto pc = costs::placement_cost(robot, object, cfg.cost, e.qu, e.qa, q_samp,
                                    &active);
    return pc.g_p + pc.g_r +
           costs::distance_objective(e.qu, e.qa, q_samp, qa_goal, w_d);
  };
  p.ineq = [&](const DualVec& x) {
    const StepEval e = eval_step(x);
    DualVec out;
    const auto fr = plant::compute_joint_frames(robot, e.qa);
    for (size_t k = 0; k < robot.b_r.size(); ++k) {
      const auto w = plant::patch_world(robot, fr, robot.b_r[k]);
      out.push_back(plant::patch_object_proximity(w, object.shape, e.qu).dp -
                    dp_floor[k]);
    }
    for (auto& d : plant::self_collision_distances(robot, e.qa))
      out.push_back(std::move(d));
    for (int j = 0; j < na; ++j) {
      out.push_back(e.qa[j] - robot.q_lb[j]);
      out.push_back(robot.q_ub[j] - e.qa[j]);
      // Eq. 13b: the realized joint displacement stays within u_max.
      const Dual dq = e.qa[j] - state.q_a[j];
      out.push_back(Dual(robot.u_max) - dq);
      out.push_back(dq + robot.u_max);
    }
    const auto& ws = object.workspace;
    out.push_back(e.qu[0] - ws.x_min);
    out.push_back(Dual(ws.x_max) - e.qu[0]);
    out.push_back(e.qu[1] - ws.y_min);
    out.push_back(Dual(ws.y_max) - e.qu[1]);
    for (int i = 0; i < m; ++i) {
      const Dual& fn = e.f[2 * i];
      const Dual& ft = e.f[2 * i + 1];
      out.push_back(fn);  // Eq. 2b
      out.push_back(object.mu * fn - smooth_abs(ft, cfg.comp_smooth));  // Eq. 2a
      out.push_back(e.v[2 * i + 1] * ft);  // Eq. 2e
    }
    return out;
  };
  if (m > 0) {
    p.comp = [&](const DualVec& x) {
      const StepEval e = eval_step(x);
      DualVec out;
      const auto fr = plant::compute_joint_frames(robot, e.qa);
      for (int i = 0; i < m; ++i) {
        const Dual& fn = e.f[2 * i];
        const Dual& ft = e.f[2 * i + 1];
        const auto& patch = robot.b_r[active[i]];
        const auto w = plant::patch_world(robot, fr, patch);
        const Dual dp =
            plant::patch_object_proximity(w, object.shape, e.qu).dp;
        out.push_back(dp * fn);                                     // Eq. 13a
        out.push_back(e.v[2 * i] * fn);                             // Eq. 2c
        const Dual cone = object.mu * fn - smooth_abs(ft, cfg.comp_smooth);
        out.push_back(e.v[2 * i + 1] * cone);                       // Eq. 2d
      }
      return out;
    };
  }

  // The bilinear sliding-consistency products trap the solver in basins that
  // depend on both the start point and the initial penalty: a weak penalty
  // lets the iterate dive into interpenetration, a strong one can pin it near
  // a stagnant feasible point. Solve a small deterministic portfolio and keep
  // the best feasible solution by objective.
  std::vector<std::pair<Eigen::VectorXd, double>> starts;
  const double rho_hi = cfg.solver.rho0;
  const double rho_lo = std::min(cfg.solver.rho0, 10.0);
  if (warm && warm->size() == n) starts.emplace_back(*warm, rho_hi);
  starts.emplace_back(Eigen::VectorXd::Zero(n), rho_hi);
  starts.emplace_back(Eigen::VectorXd::Zero(n), rho_lo);
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  for (int t = 0; t < 2; ++t) {
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0[i] = jitter(rng);
    starts.emplace_back(std::move(x0), t == 0 ? rho_hi : rho_lo);
  }
  const double err0 = subgoal_error(state, q_samp, cfg.cost);
  auto step_error = [&](const Eigen::VectorXd& x) {
    const StepEval e = eval_step(ad::constants(x));
    plant::PlantState next;
    next.q_u << e.qu[0].value(), e.qu[1].value(), e.qu[2].value();
    next.q_a = state.q_a;  // object error only
    return subgoal_error(next, q_samp, cfg.cost);
  };
  nlp::Solution sol;
  sol.status = nlp::Status::kInfeasible;
  for (const auto& [x0, rho0] : starts) {
    p.x0 = x0;
    nlp::Settings settings = cfg.solver;
    settings.rho0 = rho0;
    nlp::Solution cand = nlp::solve(p, settings);
    if (cand.status == nlp::Status::kInfeasible) continue;
    if (sol.status == nlp::Status::kInfeasible ||
        cand.objective < sol.objective)
      sol = std::move(cand);
    // A feasible step that moves the object toward the subgoal is good
    // enough; the remaining starts exist to escape stagnant basins.
    if (step_error(sol.x) < err0 - cfg.stall_tol) break;
  }

  TrajectorySegment seg;
  seg.states.push_back(state);
  seg.initial_error = subgoal_error(state, q_samp, cfg.cost);
  if (sol.status == nlp::Status::kInfeasible) {
    seg.failed = true;
    seg.terminal_error = seg.initial_error;
    return seg;
  }

  StepRecord rec;
  rec.phase = Phase::kManipulation;
  rec.u = sol.x.head(na);
  rec.nu = sol.x.tail(nq);
  rec.alpha = active;
  rec.regularized = regularized;
  // Resolve forces and velocities at the solution (value-only pass).
  const StepEval ev = eval_step(ad::constants(sol.x));
  std::vector<plant::ContactCandidate> resolved;
  for (int i = 0; i < m; ++i) {
    plant::ContactCandidate c = cands[active[i]];
    c.f = {ev.f[2 * i].value(), ev.f[2 * i + 1].value()};
    c.v = {ev.v[2 * i].value(), ev.v[2 * i + 1].value()};
    resolved.push_back(std::move(c));
  }
  rec.contacts = resolved;
  const plant::PlantState next =
      plant::quasi_dynamic_step(robot, object, state, rec.u, resolved);
  seg.steps.push_back(std::move(rec));
  seg.states.push_back(next);
  seg.terminal_error = subgoal_error(next, q_samp, cfg.cost);
  seg.reached = subgoal_reached(next, q_samp, cfg);
  seg.contact_reached =
      !detect_active(robot, object, next, cfg.cost.delta_act).empty();
  return seg;
}

TrajectorySegment extend(const plant::RobotModel& robot,
                         const plant::ObjectModel& object,
                         const plant::PlantState& q_near,
                         const Eigen::Vector3d& q_samp,
                         const PhaseConfig& cfg) {
  TrajectorySegment seg;
  seg.states.push_back(q_near);
  seg.initial_error = subgoal_error(q_near, q_samp, cfg.cost);
  seg.terminal_error = seg.initial_error;
  if (subgoal_reached(q_near, q_samp, cfg)) {
    seg.reached = true;
    return seg;
  }

  plant::PlantState cur = q_near;
  auto append = [&](const TrajectorySegment& part) {
    for (size_t i = 0; i < part.steps.size(); ++i) {
      seg.steps.push_back(part.steps[i]);
      seg.states.push_back(part.states[i + 1]);
    }
    cur = seg.states.back();
  };

  int placements = 0;
  auto try_placement = [&](bool explore) {
    if (placements >= 3) return false;
    ++placements;
    const auto pl =
        placement_phase(robot, object, cur, q_samp, cfg, nullptr, explore);
    if (pl.failed) return false;
    append(pl);
    return pl.contact_reached;
  };

  if (detect_active(robot, object, cur, cfg.cost.delta_act).empty()) {
    if (!try_placement(false)) {
      seg.failed = true;
      seg.terminal_error = subgoal_error(cur, q_samp, cfg.cost);
      return seg;
    }
  }

  // The one-step horizon tolerates small error components orthogonal to the
  // main push direction, and those drifts accumulate over a long push while
  // the contact geometry that could correct them slips out of reach. Aim the
  // per-step solves at an integrally-corrected target so systematic drift is
  // counteracted while it is still cheap to do so.
  Eigen::Vector3d aim_bias = Eigen::Vector3d::Zero();
  constexpr double kAimGain = 0.5;
  const Eigen::Vector3d aim_clamp(0.06, 0.06, 0.2);
  auto update_aim = [&] {
    Eigen::Vector3d err = q_samp - cur.q_u;
    err[2] = costs::wrap_angle(err[2]);
    aim_bias += kAimGain * err;
    aim_bias = aim_bias.cwiseMin(aim_clamp).cwiseMax(-aim_clamp);
  };

  Eigen::VectorXd warm;
  int stalled = 0;
  double best_gd = subgoal_error(cur, q_samp, cfg.cost);
  for (int step = 0; step < cfg.max_manip_steps; ++step) {
    if (detect_active(robot, object, cur, cfg.cost.delta_act).empty()) {
      if (!try_placement(false)) break;
      continue;
    }
    update_aim();
    const Eigen::Vector3d aim = q_samp + aim_bias;
    const auto mp = manipulation_phase(robot, object, cur, aim, cfg,
                                       warm.size() > 0 ? &warm : nullptr);
    if (mp.failed || mp.steps.empty()) {
      // An infeasible manipulation solve usually means the current contact
      // geometry is exhausted; try repositioning before giving up.
      if (!try_placement(true)) break;
      stalled = 0;
      warm.resize(0);
      continue;
    }
    const double gd =
        subgoal_error(mp.states.back(), q_samp, cfg.cost);
    if (gd > best_gd) {
      // A step that moves away from the subgoal is never kept; count it as a
      // stall so the arms get repositioned instead of drifting further.
      if (++stalled >= cfg.stall_window) {
        if (!try_placement(true)) break;
        stalled = 0;
        warm.resize(0);
      }
      continue;
    }
    append(mp);
    warm.resize(mp.steps[0].u.size() + mp.steps[0].nu.size());
    warm << mp.steps[0].u, mp.steps[0].nu;
    if (subgoal_reached(cur, q_samp, cfg)) {
      seg.reached = true;
      break;
    }
    if (best_gd - gd < cfg.stall_tol) {
      if (++stalled >= cfg.stall_window) {
        // Manipulation can no longer improve from this contact; reposition
        // the arms and push again before giving up on the subgoal.
        if (!try_placement(true)) break;
        stalled = 0;
        warm.resize(0);
      }
    } else {
      stalled = 0;
    }
    best_gd = std::min(best_gd, gd);
  }

  // Keep the best prefix: late steps may regress (e.g. a re-placement whose
  // pushes no longer help), and the caller wants the best reachable state.
  size_t best_idx = 0;
  double best_err = seg.initial_error;
  for (size_t i = 1; i < seg.states.size(); ++i) {
    const double err = subgoal_error(seg.states[i], q_samp, cfg.cost);
    if (err < best_err - 1e-12) {
      best_err = err;
      best_idx = i;
    }
  }
  seg.states.resize(best_idx + 1);
  seg.steps.resize(best_idx);
  cur = seg.states.back();

  seg.terminal_error = subgoal_error(cur, q_samp, cfg.cost);
  seg.contact_reached =
      !detect_active(robot, object, cur, cfg.cost.delta_act).empty();
  seg.reached = subgoal_reached(cur, q_samp, cfg);
  if (!seg.reached &&
      (seg.steps.empty() || seg.terminal_error >= seg.initial_error))
    seg.failed = true;
  return seg;
}

}  // namespace wbm::trajopt
