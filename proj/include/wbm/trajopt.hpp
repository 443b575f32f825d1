#pragma once

#include <Eigen/Dense>
#include <vector>

#include "wbm/costs.hpp"
#include "wbm/nlp.hpp"
#include "wbm/plant.hpp"

namespace wbm::trajopt {

enum class Phase { kPlacement, kManipulation };

struct PhaseConfig {
  int n_cf = 5;          // placement horizon
  int n_cr = 1;          // manipulation horizon per solve
  double nu_max = 0.05;  // virtual displacement bound per component
  costs::CostParams cost;
  nlp::Settings solver;
  int max_manip_steps = 50;      // manipulation solves per extend
  double stall_tol = 1e-6;       // G_d improvement counted as progress
  int stall_window = 3;          // consecutive stalled solves before giving up
  double goal_tol_xy = 0.02;     // subgoal acceptance, m
  double goal_tol_theta = 5.0 * M_PI / 180.0;
  double comp_smooth = 1e-10;    // |f_t| ~ sqrt(f_t^2 + comp_smooth)
  // Tikhonov term for the force-map pseudo-inverse. Near-coincident contacts
  // make J J^T nearly singular; the force sensitivities scale as 1/(2 sqrt of
  // this), so values below ~1e-6 produce gradients the NLP cannot follow.
  double pinv_reg = 1e-4;        // lambda in (J J^T + lambda I)^-1

  PhaseConfig() {
    solver.max_outer = 25;
    solver.max_inner = 60;
    // Phase NLPs are checked downstream at 1e-5 (replay, Coulomb, clearance);
    // demanding 1e-6 from the first-order inner solver only burns iterations.
    solver.tol_feas = 1e-5;
    solver.tol_kkt = 1e-3;
    // Keep iterates near-feasible from the start. With a weak initial
    // penalty the contact-attraction objective drags the iterate deep into
    // interpenetration (or links through each other), where the regularized
    // distances flatten out and leave no useful recovery gradient.
    solver.rho0 = 1e4;
  }
};

struct StepRecord {
  Phase phase = Phase::kPlacement;
  Eigen::VectorXd u;
  Eigen::VectorXd nu;        // manipulation only, (3 + N_a)
  std::vector<int> alpha;    // active B_r candidate indices
  std::vector<plant::ContactCandidate> contacts;  // resolved f, v for alpha
  bool regularized = false;  // pseudo-inverse needed the lambda floor
};

struct TrajectorySegment {
  std::vector<plant::PlantState> states;  // size() == steps.size() + 1
  std::vector<StepRecord> steps;
  bool failed = false;
  bool reached = false;          // subgoal within tolerance at the end
  bool contact_reached = false;  // some dp <= delta_act at the end
  double initial_error = 0.0;    // G_d at the first state
  double terminal_error = 0.0;   // G_d at the last state
};

double subgoal_error(const plant::PlantState& state,
                     const Eigen::Vector3d& q_u_goal,
                     const costs::CostParams& cost);
bool subgoal_reached(const plant::PlantState& state,
                     const Eigen::Vector3d& q_u_goal, const PhaseConfig& cfg);

/// Active set: B_r candidates with dp <= delta_act.
std::vector<int> detect_active(const plant::RobotModel& robot,
                               const plant::ObjectModel& object,
                               const plant::PlantState& state, double delta_act);

/// Contact-free placement: N_cf inputs drive the arms toward high-value
/// contact placements around the static object (terminal G_p + G_r); every
/// intermediate state keeps clearance and joint bounds.
/// `explore` adds solver starts seeded by fingertip IK aimed behind the
/// object; used to escape postures the local solve cannot leave on its own.
TrajectorySegment placement_phase(const plant::RobotModel& robot,
                                  const plant::ObjectModel& object,
                                  const plant::PlantState& q_near,
                                  const Eigen::Vector3d& q_samp,
                                  const PhaseConfig& cfg,
                                  const Eigen::VectorXd* warm_u = nullptr,
                                  bool explore = false);

/// One contact-rich solve (N_cr = 1): decision variables (u, nu), forces
/// recovered by projecting the virtual motion on the active contact Jacobian,
/// Coulomb and complementarity enforced, objective masked by alpha plus G_d.
TrajectorySegment manipulation_phase(const plant::RobotModel& robot,
                                     const plant::ObjectModel& object,
                                     const plant::PlantState& state,
                                     const Eigen::Vector3d& q_samp,
                                     const PhaseConfig& cfg,
                                     const Eigen::VectorXd* warm = nullptr);

/// Placement, then repeated manipulation solves with alpha re-detected before
/// each (contacts make and break between steps), until the subgoal is hit,
/// progress stalls, or the step budget runs out.
TrajectorySegment extend(const plant::RobotModel& robot,
                         const plant::ObjectModel& object,
                         const plant::PlantState& q_near,
                         const Eigen::Vector3d& q_samp, const PhaseConfig& cfg);

}  // namespace wbm::trajopt
