#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wbm/plant.hpp"
#include "wbm/trajopt.hpp"

namespace wbm::planner {

struct PlannerSettings {
  double greed = 1.0;        // probability a sampled subgoal is q_goal
  double goal_tol_xy = 0.02;  // m
  double goal_tol_theta = 5.0 * M_PI / 180.0;
  // Nearest metric and edge cost: d = sqrt(w_xy |dxy|^2 + w_theta wrap(dth)^2)
  // on the object pose, so edge costs add like path lengths.
  double w_xy = 1.0;     // m^-2
  double w_theta = 0.1;  // rad^-2
  double rewire_radius = 0.01;  // metric units; 0 disables merging
  double p_rand = 0.1;          // nearest() returns a uniform random node
  double timeout_s = 900.0;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
  trajopt::PhaseConfig phase;  // local planner (extend) configuration
};

struct TreeNode {
  plant::PlantState state;
  int parent = -1;   // node id, -1 for the root
  int in_edge = -1;  // edge id of (parent -> this), -1 for the root
  double cost = 0.0;  // metric path length from the root
};

struct TreeEdge {
  int parent = -1;
  int child = -1;
  trajopt::StepRecord step;  // replays from the parent state
  double cost = 0.0;
};

/// Rooted exploration tree: nodes[0] is q_init; every edge carries the single
/// plant step that produced its child from its parent.
struct PlanTree {
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;
};

struct PlanStats {
  double wall_time_s = 0.0;
  int iterations = 0;
  int extends_attempted = 0;
  int extends_succeeded = 0;
  int node_count = 0;
  double extend_success_rate = 0.0;
};

struct PlanPath {
  bool found = false;
  std::vector<int> node_ids;  // root .. goal node
  std::vector<plant::PlantState> states;
  std::vector<trajopt::StepRecord> steps;  // states.size() == steps.size() + 1
  double cost = 0.0;
};

struct PlanResult {
  bool success = false;
  std::string error;  // non-empty iff a precondition was rejected
  PlanPath path;
  PlanTree tree;
  PlanStats stats;
};

double pose_metric(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                   const PlannerSettings& settings);
bool goal_reached(const Eigen::Vector3d& q_u, const Eigen::Vector3d& q_goal,
                  const PlannerSettings& settings);

/// With probability `greed` returns q_goal; otherwise a uniform object pose
/// within the workspace (theta uniform on [-pi, pi)). The robot configuration
/// is never constrained by a subgoal.
Eigen::Vector3d sample_subgoal(const PlannerSettings& settings,
                               std::mt19937_64& rng,
                               const plant::Workspace& workspace,
                               const Eigen::Vector3d& q_goal);

/// With probability p_rand a uniform random node id; otherwise the node
/// minimizing pose_metric to q_samp (lowest id on ties).
int nearest(const PlanTree& tree, const Eigen::Vector3d& q_samp,
            const PlannerSettings& settings, std::mt19937_64& rng);

/// Appends the segment's intermediate states as a chain of nodes under
/// parent_id. A state landing within rewire_radius of an existing node is
/// merged: the chain continues from that node, and if the new route is
/// cheaper the node adopts the new parent edge. Re-parenting with a changed
/// state is only applied to childless nodes so that every edge keeps
/// replaying exactly from its parent's stored state.
void register_and_rewire(PlanTree& tree, int parent_id,
                         const trajopt::TrajectorySegment& segment,
                         const PlannerSettings& settings);

/// Minimum-edge-cost root-to-goal path (Dijkstra over the stored edges);
/// found = false when no node is within goal tolerance.
PlanPath extract_path(const PlanTree& tree, const Eigen::Vector3d& q_goal,
                      const PlannerSettings& settings);

/// Greedy tree search: sample / nearest / extend / register until some node
/// reaches q_goal or the timeout or iteration budget runs out. The returned
/// tree is kept on failure for inspection.
PlanResult plan(const plant::RobotModel& robot,
                const plant::ObjectModel& object,
                const plant::PlantState& q_init, const Eigen::Vector3d& q_goal,
                const PlannerSettings& settings);

}  // namespace wbm::planner
