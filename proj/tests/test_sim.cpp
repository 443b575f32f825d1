#include "wbm/sim.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "wbm/plant.hpp"
#include "wbm/trajopt.hpp"

using namespace wbm;

namespace {

plant::PlantState make_state(double x, double y, double th,
                             std::initializer_list<double> qa_deg) {
  plant::PlantState s;
  s.q_u << x, y, th;
  s.q_a.resize(static_cast<int>(qa_deg.size()));
  int i = 0;
  for (double d : qa_deg) s.q_a[i++] = d * M_PI / 180.0;
  return s;
}

}  // namespace

TEST_CASE("apply_transition matches the planner-side step on random triples") {
  plant::RobotModel robot = plant::default_dual_arm();
  plant::ObjectModel object = plant::default_cylinder();
  const int na = robot.num_joints();

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ux(0.2, 0.9), uy(-0.5, 0.5),
      uth(-M_PI, M_PI), uq(-1.2, 1.2), uu(-0.1, 0.1), uf(-2.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    plant::PlantState s;
    s.q_u << ux(rng), uy(rng), uth(rng);
    s.q_a.resize(na);
    for (int i = 0; i < na; ++i) s.q_a[i] = uq(rng);
    Eigen::VectorXd u(na);
    for (int i = 0; i < na; ++i) u[i] = uu(rng);

    // Up to three candidates with arbitrary (not necessarily feasible)
    // forces: the transition is affine in f, so fidelity must hold anywhere.
    auto cands = plant::contact_candidates(robot, object, s);
    std::vector<plant::ContactCandidate> picked;
    std::uniform_int_distribution<int> upick(
        0, static_cast<int>(cands.size()) - 1);
    for (int k = 0; k < trial % 4; ++k) {
      auto c = cands[upick(rng)];
      c.f << std::abs(uf(rng)), uf(rng);
      picked.push_back(std::move(c));
    }

    const auto a = sim::apply_transition(robot, object, s, u, picked);
    const auto b = plant::quasi_dynamic_step(robot, object, s, u, picked);
    CHECK((a.q_u - b.q_u).norm() <= 1e-10);
    CHECK((a.q_a - b.q_a).norm() <= 1e-10);
    if (picked.empty()) CHECK((a.q_a - (s.q_a + u)).norm() == 0.0);
  }
}

TEST_CASE("rollout: zero input without contact is a constant trace") {
  plant::RobotModel robot = plant::default_dual_arm();
  plant::ObjectModel object = plant::default_cylinder();
  const auto s = make_state(0.6, 0.0, 0.3, {0, 0, 0, 0, 0, 0});
  const std::vector<Eigen::VectorXd> inputs(
      5, Eigen::VectorXd::Zero(robot.num_joints()));
  const auto trace = sim::rollout(robot, object, s, inputs);
  REQUIRE_FALSE(trace.truncated);
  REQUIRE(trace.states.size() == 6);
  for (const auto& st : trace.states) {
    CHECK(st.q_u == s.q_u);
    CHECK(st.q_a == s.q_a);
  }
  for (const auto& ev : trace.contacts) CHECK(ev.empty());
}

TEST_CASE("rollout: resolved forces satisfy Coulomb and move the object") {
  plant::RobotModel robot = plant::default_dual_arm();
  plant::ObjectModel object = plant::default_cylinder();
  trajopt::PhaseConfig cfg;

  // Push toward a subgoal with the local planner, then re-execute its inputs
  // with independently resolved forces.
  const auto start = make_state(0.5, 0.0, 0.0, {0, 0, 0, 0, 0, 0});
  const Eigen::Vector3d subgoal(0.5, 0.10, 0.0);
  const auto seg = trajopt::extend(robot, object, start, subgoal, cfg);
  REQUIRE_FALSE(seg.failed);
  REQUIRE(!seg.steps.empty());

  std::vector<Eigen::VectorXd> inputs;
  for (const auto& st : seg.steps) inputs.push_back(st.u);
  const auto trace = sim::rollout(robot, object, start, inputs);
  REQUIRE_FALSE(trace.truncated);
  REQUIRE(trace.states.size() == seg.states.size());

  // Independent per-step agreement with the planner's internal transitions.
  for (size_t i = 0; i < trace.states.size(); ++i) {
    CHECK((trace.states[i].q_u - seg.states[i].q_u).norm() <= 1e-5);
    CHECK((trace.states[i].q_a - seg.states[i].q_a).norm() <= 1e-5);
  }

  int force_events = 0;
  for (const auto& step_events : trace.contacts) {
    for (const auto& ev : step_events) {
      if (ev.f.norm() > 1e-12) ++force_events;
      CHECK(plant::coulomb_feasible(ev.f, ev.v, object.mu, 1e-6));
    }
  }
  CHECK(force_events > 0);
  // The re-executed push moves the object toward the subgoal.
  CHECK((trace.states.back().q_u.head<2>() - subgoal.head<2>()).norm() <
        (start.q_u.head<2>() - subgoal.head<2>()).norm());
}

TEST_CASE("deviation_replan: trivial perturbation and infinite tolerance") {
  plant::RobotModel robot = plant::default_dual_arm();
  plant::ObjectModel object = plant::default_cylinder();
  planner::PlannerSettings st;
  st.greed = 1.0;
  st.seed = 9;
  st.max_iterations = 20;
  st.timeout_s = 600.0;

  const auto init = make_state(0.6, 0.0, 0.0, {-40.1, 0, 0, 40.1, 0, 0});
  const Eigen::Vector3d goal(0.6, 0.12, 0.0);
  const auto plan = planner::plan(robot, object, init, goal, st);
  REQUIRE(plan.success);

  sim::SimOptions nominal;
  auto log = sim::deviation_replan(robot, object, plan, goal, st, nominal);
  CHECK(log.replans == 0);
  CHECK(log.reached);

  sim::SimOptions perturbed;
  perturbed.mu_scale = 0.7;
  log = sim::deviation_replan(robot, object, plan, goal, st, perturbed,
                              std::numeric_limits<double>::infinity());
  CHECK(log.replans == 0);
}
