#include "wbm/sim.hpp"

#include <algorithm>
#include <cmath>

namespace wbm::sim {

plant::PlantState apply_transition(
    const plant::RobotModel& robot, const plant::ObjectModel& object,
    const plant::PlantState& state, const Eigen::VectorXd& u,
    const std::vector<plant::ContactCandidate>& contacts) {
  const int na = robot.num_joints();
  const int n = 3 + na;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  m.topLeftCorner<3, 3>() = object.l_u;
  m.bottomRightCorner(na, na) = robot.k_a.asDiagonal();

  // The input enters as K u on the right-hand side, i.e. exactly u after the
  // solve; keep it outside so the force-free case reduces to q_a + u with no
  // rounding. Only the contact response goes through the assembled system.
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (const auto& c : contacts) {
    rhs.head<3>() += c.j_u * c.f;
    rhs.tail(na) -= c.j_a * c.f;
  }

  const Eigen::VectorXd dq = m.ldlt().solve(rhs);
  plant::PlantState next;
  next.q_u = state.q_u + dq.head<3>();
  next.q_a = state.q_a + u + dq.tail(na);
  return next;
}

bool resolve_contacts(const plant::RobotModel& robot,
                      const plant::ObjectModel& object,
                      const plant::PlantState& state, const Eigen::VectorXd& u,
                      const SimOptions& options,
                      std::vector<plant::ContactCandidate>& resolved,
                      std::vector<ContactEvent>& events) {
  resolved.clear();
  events.clear();
  for (auto& c : plant::contact_candidates(robot, object, state)) {
    if (c.prox.dp <= options.delta_act) resolved.push_back(std::move(c));
  }
  const int m = static_cast<int>(resolved.size());
  if (m == 0) return true;

  const double mu = object.mu * options.mu_scale;
  const Eigen::LDLT<Eigen::Matrix3d> l_u(object.l_u);

  // Relative contact-frame displacement is affine in the stacked forces:
  // v = b - D f with D the (PSD) Delassus operator of Eq. 1.
  Eigen::MatrixXd d(2 * m, 2 * m);
  Eigen::VectorXd b(2 * m);
  for (int i = 0; i < m; ++i) {
    b.segment<2>(2 * i) = resolved[i].j_a.transpose() * u;
    for (int k = 0; k < m; ++k) {
      d.block<2, 2>(2 * i, 2 * k) =
          resolved[i].j_a.transpose() *
              (resolved[k].j_a.array().colwise() / robot.k_a.array())
                  .matrix() +
          resolved[i].j_u.transpose() * l_u.solve(resolved[k].j_u);
    }
  }

  Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * m);
  auto velocity = [&](int row) { return b[row] - d.row(row).dot(f); };

  bool converged = false;
  for (int it = 0; it < options.max_iterations && !converged; ++it) {
    double delta = 0.0;
    for (int i = 0; i < m; ++i) {
      const int ni = 2 * i, ti = 2 * i + 1;
      // Normal: 0 <= f_n perp (dp - v_n) >= 0.
      const double gap = resolved[i].prox.dp - velocity(ni);
      const double fn =
          std::max(0.0, f[ni] - gap / std::max(d(ni, ni), 1e-12));
      delta = std::max(delta, std::abs(fn - f[ni]));
      f[ni] = fn;
      // Tangential: drive slip to zero, then project on the cone. Kinetic
      // friction on the object acts along the robot's relative slip.
      double ft = f[ti] + velocity(ti) / std::max(d(ti, ti), 1e-12);
      ft = std::clamp(ft, -mu * fn, mu * fn);
      delta = std::max(delta, std::abs(ft - f[ti]));
      f[ti] = ft;
    }
    converged = delta <= options.tol;
  }
  if (!converged) return false;

  for (int i = 0; i < m; ++i) {
    resolved[i].f = f.segment<2>(2 * i);
    resolved[i].v = {velocity(2 * i) - resolved[i].prox.dp,
                     velocity(2 * i + 1)};
    ContactEvent ev;
    ev.patch_index = resolved[i].patch_index;
    ev.dp = resolved[i].prox.dp;
    ev.f = resolved[i].f;
    ev.v = resolved[i].v;
    events.push_back(ev);
  }
  return true;
}

Trace rollout(const plant::RobotModel& robot, const plant::ObjectModel& object,
              const plant::PlantState& q_init,
              const std::vector<Eigen::VectorXd>& inputs,
              const SimOptions& options) {
  Trace trace;
  trace.states.push_back(q_init);
  for (size_t t = 0; t < inputs.size(); ++t) {
    std::vector<plant::ContactCandidate> contacts;
    std::vector<ContactEvent> events;
    if (!resolve_contacts(robot, object, trace.states.back(), inputs[t],
                          options, contacts, events)) {
      trace.truncated = true;
      trace.diagnostic =
          "contact resolution did not converge at step " + std::to_string(t);
      return trace;
    }
    trace.states.push_back(apply_transition(robot, object, trace.states.back(),
                                            inputs[t], contacts));
    trace.contacts.push_back(std::move(events));
  }
  return trace;
}

ExecutionLog deviation_replan(const plant::RobotModel& robot,
                              const plant::ObjectModel& object,
                              const planner::PlanResult& plan_result,
                              const Eigen::Vector3d& q_goal,
                              const planner::PlannerSettings& settings,
                              const SimOptions& options, double eps_max,
                              int budget) {
  ExecutionLog log;
  const planner::PlanPath* path = &plan_result.path;
  planner::PlanResult replanned;  // keeps the active path alive

  plant::PlantState cur = path->states.empty() ? plan_result.tree.nodes[0].state
                                               : path->states.front();
  log.states.push_back(cur);

  size_t idx = 0;  // next step of the active path
  while (true) {
    if (planner::goal_reached(cur.q_u, q_goal, settings)) {
      log.reached = true;
      return log;
    }
    if (idx >= path->steps.size()) {
      // Plan exhausted without reaching the goal: replan only when the
      // realized terminal pose actually deviates from the planned one
      // (eps_max = infinity must never trigger a replan).
      if (!path->states.empty() &&
          planner::pose_metric(cur.q_u, path->states.back().q_u, settings) <=
              eps_max) {
        log.diagnostic = "plan exhausted without reaching the goal";
        return log;
      }
      if (log.replans >= budget) {
        log.diagnostic = "replan budget exhausted";
        return log;
      }
      ++log.replans;
      replanned = planner::plan(robot, object, cur, q_goal, settings);
      if (!replanned.success) {
        log.diagnostic = "replanning failed: " + (replanned.error.empty()
                                                      ? "no plan found"
                                                      : replanned.error);
        return log;
      }
      path = &replanned.path;
      idx = 0;
      continue;
    }

    std::vector<plant::ContactCandidate> contacts;
    std::vector<ContactEvent> events;
    if (!resolve_contacts(robot, object, cur, path->steps[idx].u, options,
                          contacts, events)) {
      log.diagnostic = "contact resolution did not converge";
      return log;
    }
    cur = apply_transition(robot, object, cur, path->steps[idx].u, contacts);
    log.states.push_back(cur);
    ++idx;

    const double dev =
        planner::pose_metric(cur.q_u, path->states[idx].q_u, settings);
    if (dev > eps_max) {
      if (log.replans >= budget) {
        log.diagnostic = "replan budget exhausted";
        return log;
      }
      ++log.replans;
      replanned = planner::plan(robot, object, cur, q_goal, settings);
      if (!replanned.success) {
        log.diagnostic = "replanning failed: " + (replanned.error.empty()
                                                      ? "no plan found"
                                                      : replanned.error);
        return log;
      }
      path = &replanned.path;
      idx = 0;
    }
  }
}

}  // namespace wbm::sim
