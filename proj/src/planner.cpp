#include "wbm/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

#include "wbm/costs.hpp"

namespace wbm::planner {
namespace {

/// Recomputes cost-from-root for every node (the tree is small; a full pass
/// after each rewire is simpler than propagating deltas through subtrees).
void refresh_costs(PlanTree& tree) {
  std::vector<std::vector<int>> children(tree.nodes.size());
  for (const auto& e : tree.edges) {
    if (e.child >= 0 && tree.nodes[e.child].in_edge ==
                            static_cast<int>(&e - tree.edges.data()))
      children[e.parent].push_back(e.child);
  }
  std::queue<int> bfs;
  bfs.push(0);
  tree.nodes[0].cost = 0.0;
  while (!bfs.empty()) {
    const int id = bfs.front();
    bfs.pop();
    for (int c : children[id]) {
      tree.nodes[c].cost =
          tree.nodes[id].cost + tree.edges[tree.nodes[c].in_edge].cost;
      bfs.push(c);
    }
  }
}

bool has_children(const PlanTree& tree, int id) {
  for (const auto& n : tree.nodes)
    if (n.parent == id) return true;
  return false;
}

}  // namespace

double pose_metric(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                   const PlannerSettings& settings) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dth = costs::wrap_angle(a[2] - b[2]);
  return std::sqrt(settings.w_xy * (dx * dx + dy * dy) +
                   settings.w_theta * dth * dth);
}

bool goal_reached(const Eigen::Vector3d& q_u, const Eigen::Vector3d& q_goal,
                  const PlannerSettings& settings) {
  const double dth = costs::wrap_angle(q_u[2] - q_goal[2]);
  return std::hypot(q_u[0] - q_goal[0], q_u[1] - q_goal[1]) <=
             settings.goal_tol_xy &&
         std::abs(dth) <= settings.goal_tol_theta;
}

Eigen::Vector3d sample_subgoal(const PlannerSettings& settings,
                               std::mt19937_64& rng,
                               const plant::Workspace& workspace,
                               const Eigen::Vector3d& q_goal) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < settings.greed) return q_goal;
  std::uniform_real_distribution<double> ux(workspace.x_min, workspace.x_max);
  std::uniform_real_distribution<double> uy(workspace.y_min, workspace.y_max);
  std::uniform_real_distribution<double> uth(-M_PI, M_PI);
  return {ux(rng), uy(rng), uth(rng)};
}

int nearest(const PlanTree& tree, const Eigen::Vector3d& q_samp,
            const PlannerSettings& settings, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < settings.p_rand) {
    std::uniform_int_distribution<int> pick(
        0, static_cast<int>(tree.nodes.size()) - 1);
    return pick(rng);
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const double d = pose_metric(tree.nodes[i].state.q_u, q_samp, settings);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void register_and_rewire(PlanTree& tree, int parent_id,
                         const trajopt::TrajectorySegment& segment,
                         const PlannerSettings& settings) {
  int cur = parent_id;
  bool rewired = false;
  for (size_t i = 0; i < segment.steps.size(); ++i) {
    const plant::PlantState& s = segment.states[i + 1];
    const double cost = pose_metric(tree.nodes[cur].state.q_u, s.q_u, settings);
    const double tentative = tree.nodes[cur].cost + cost;

    int merge = -1;
    double merge_d = settings.rewire_radius;
    for (size_t j = 0; j < tree.nodes.size(); ++j) {
      const double d = pose_metric(tree.nodes[j].state.q_u, s.q_u, settings);
      if (d < merge_d) {
        merge_d = d;
        merge = static_cast<int>(j);
      }
    }

    if (merge >= 0 && merge != cur) {
      TreeNode& m = tree.nodes[merge];
      const bool identical = (m.state.q_u - s.q_u).norm() < 1e-12 &&
                             (m.state.q_a - s.q_a).norm() < 1e-12;
      if (tentative < m.cost && merge != 0 &&
          (identical || !has_children(tree, merge))) {
        // Cheaper route to an equivalent state: adopt the new parent edge.
        tree.edges.push_back({cur, merge, segment.steps[i], cost});
        m.parent = cur;
        m.in_edge = static_cast<int>(tree.edges.size()) - 1;
        if (!identical) m.state = s;
        rewired = true;
      }
      cur = merge;
      continue;
    }

    tree.edges.push_back({cur, static_cast<int>(tree.nodes.size()),
                          segment.steps[i], cost});
    tree.nodes.push_back(
        {s, cur, static_cast<int>(tree.edges.size()) - 1, tentative});
    cur = static_cast<int>(tree.nodes.size()) - 1;
  }
  if (rewired) refresh_costs(tree);
}

PlanPath extract_path(const PlanTree& tree, const Eigen::Vector3d& q_goal,
                      const PlannerSettings& settings) {
  PlanPath path;
  const size_t n = tree.nodes.size();
  std::vector<std::vector<int>> out(n);  // edge ids
  for (size_t e = 0; e < tree.edges.size(); ++e)
    out[tree.edges[e].parent].push_back(static_cast<int>(e));

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> via(n, -1);  // edge id used to reach the node
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[0] = 0.0;
  heap.emplace(0.0, 0);
  while (!heap.empty()) {
    const auto [d, id] = heap.top();
    heap.pop();
    if (d > dist[id]) continue;
    for (int e : out[id]) {
      const auto& edge = tree.edges[e];
      const double nd = d + edge.cost;
      if (nd < dist[edge.child]) {
        dist[edge.child] = nd;
        via[edge.child] = e;
        heap.emplace(nd, edge.child);
      }
    }
  }

  int goal_node = -1;
  for (size_t i = 0; i < n; ++i) {
    if (!goal_reached(tree.nodes[i].state.q_u, q_goal, settings)) continue;
    if (goal_node < 0 || dist[i] < dist[goal_node])
      goal_node = static_cast<int>(i);
  }
  if (goal_node < 0 || !std::isfinite(dist[goal_node])) return path;

  std::vector<int> edge_ids;
  for (int id = goal_node; via[id] >= 0; id = tree.edges[via[id]].parent)
    edge_ids.push_back(via[id]);
  std::reverse(edge_ids.begin(), edge_ids.end());

  path.found = true;
  path.cost = dist[goal_node];
  path.node_ids.push_back(edge_ids.empty() ? goal_node
                                           : tree.edges[edge_ids[0]].parent);
  path.states.push_back(tree.nodes[path.node_ids[0]].state);
  for (int e : edge_ids) {
    path.node_ids.push_back(tree.edges[e].child);
    path.steps.push_back(tree.edges[e].step);
    path.states.push_back(tree.nodes[tree.edges[e].child].state);
  }
  return path;
}

PlanResult plan(const plant::RobotModel& robot,
                const plant::ObjectModel& object,
                const plant::PlantState& q_init, const Eigen::Vector3d& q_goal,
                const PlannerSettings& settings) {
  PlanResult result;
  if (!plant::joint_bounds_ok(robot, q_init.q_a)) {
    result.error = "initial robot configuration violates joint bounds";
    return result;
  }
  if (!plant::workspace_ok(object, q_init.q_u)) {
    result.error = "initial object pose outside the workspace";
    return result;
  }
  for (const auto& c : plant::contact_candidates(robot, object, q_init)) {
    if (c.prox.dp < -1e-9) {
      result.error = "initial state interpenetrates";
      return result;
    }
  }
  if (!plant::workspace_ok(object, q_goal)) {
    result.error = "goal pose outside the workspace";
    return result;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  result.tree.nodes.push_back({q_init, -1, -1, 0.0});
  std::mt19937_64 rng(settings.seed);
  result.path = extract_path(result.tree, q_goal, settings);
  result.success = result.path.found;  // q_init already within tolerance

  while (!result.success && result.stats.iterations < settings.max_iterations &&
         elapsed() < settings.timeout_s) {
    ++result.stats.iterations;
    const Eigen::Vector3d q_samp =
        sample_subgoal(settings, rng, object.workspace, q_goal);
    const int near = nearest(result.tree, q_samp, settings, rng);
    const auto seg = trajopt::extend(robot, object,
                                     result.tree.nodes[near].state, q_samp,
                                     settings.phase);
    ++result.stats.extends_attempted;
    if (seg.failed) continue;
    ++result.stats.extends_succeeded;
    register_and_rewire(result.tree, near, seg, settings);
    result.path = extract_path(result.tree, q_goal, settings);
    result.success = result.path.found;
  }

  result.stats.wall_time_s = elapsed();
  result.stats.node_count = static_cast<int>(result.tree.nodes.size());
  result.stats.extend_success_rate =
      result.stats.extends_attempted == 0
          ? 0.0
          : static_cast<double>(result.stats.extends_succeeded) /
                result.stats.extends_attempted;
  return result;
}

}  // namespace wbm::planner
