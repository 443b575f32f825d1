#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "wbm/planner.hpp"
#include "wbm/plant.hpp"

namespace wbm::sim {

struct SimOptions {
  double mu_scale = 1.0;   // multiplies the model friction coefficient
  double delta_act = 1e-3; // activation distance for contact resolution, m
  double tol = 1e-8;       // projected Gauss-Seidel convergence, N
  int max_iterations = 20000;
};

struct ContactEvent {
  int patch_index = -1;
  double dp = 0.0;          // gap at the pre-step state
  Eigen::Vector2d f{0.0, 0.0};  // resolved (f_n, f_t) on the object
  // Constraint-space relative displacement (robot minus object): the normal
  // component is gap-referenced (v_n - dp), so complementarity holds exactly
  // even when the contact activates across a small positive gap.
  Eigen::Vector2d v{0.0, 0.0};
};

struct Trace {
  std::vector<plant::PlantState> states;  // size() == inputs consumed + 1
  std::vector<std::vector<ContactEvent>> contacts;  // per executed step
  bool truncated = false;
  std::string diagnostic;
};

/// Eq. 1 transition with the generalized system assembled and solved in one
/// block, independent of the planner-side per-block implementation (the two
/// agreeing is a genuine cross-check). Forces are taken from the candidates.
plant::PlantState apply_transition(
    const plant::RobotModel& robot, const plant::ObjectModel& object,
    const plant::PlantState& state, const Eigen::VectorXd& u,
    const std::vector<plant::ContactCandidate>& contacts);

/// Resolves contact forces for one step by projected Gauss-Seidel on the
/// position-stabilized complementarity problem over the active candidates
/// (dp <= delta_act): 0 <= f_n perp (dp - v_n) >= 0, |f_t| <= mu f_n with
/// sliding friction opposing relative slip. Returns false on non-convergence.
bool resolve_contacts(const plant::RobotModel& robot,
                      const plant::ObjectModel& object,
                      const plant::PlantState& state, const Eigen::VectorXd& u,
                      const SimOptions& options,
                      std::vector<plant::ContactCandidate>& resolved,
                      std::vector<ContactEvent>& events);

/// Executes the inputs forward from q_init, re-resolving contact forces at
/// every step (the planner's stored forces are never consulted). A resolution
/// failure truncates the trace with a diagnostic.
Trace rollout(const plant::RobotModel& robot, const plant::ObjectModel& object,
              const plant::PlantState& q_init,
              const std::vector<Eigen::VectorXd>& inputs,
              const SimOptions& options = {});

struct ExecutionLog {
  bool reached = false;
  int replans = 0;
  std::vector<plant::PlantState> states;  // realized (perturbed) trajectory
  std::string diagnostic;
};

/// Executes a planned input sequence under perturbed friction; when the
/// realized object pose drifts more than eps_max (planner metric) from the
/// plan, re-plans from the realized state with the nominal model and splices.
/// Stops at the goal or after `budget` replans.
ExecutionLog deviation_replan(const plant::RobotModel& robot,
                              const plant::ObjectModel& object,
                              const planner::PlanResult& plan_result,
                              const Eigen::Vector3d& q_goal,
                              const planner::PlannerSettings& settings,
                              const SimOptions& options, double eps_max = 0.03,
                              int budget = 5);

}  // namespace wbm::sim
