#include "wbm/plant.hpp"

#include <cmath>

namespace wbm::plant {

void RobotModel::validate() const {
  const int n = num_joints();
  if (n == 0) throw std::invalid_argument("robot has no joints");
  if (q_lb.size() != n || q_ub.size() != n || k_a.size() != n)
    throw std::invalid_argument("joint bound / gain size mismatch");
  for (int i = 0; i < n; ++i) {
    if (!(q_lb[i] < q_ub[i])) throw std::invalid_argument("q_lb must be < q_ub");
    if (!(k_a[i] > 0.0)) throw std::invalid_argument("K_a must be positive");
  }
  if (!(u_max > 0.0)) throw std::invalid_argument("u_max must be positive");
  auto check_patch = [&](const Patch& p) {
    if (p.chain < 0 || p.chain >= static_cast<int>(chains.size()))
      throw std::invalid_argument("patch references missing chain");
    const int links = static_cast<int>(chains[p.chain].link_lengths.size());
    if (p.link < -1 || p.link >= links)
      throw std::invalid_argument("patch references missing link");
  };
  for (const auto& p : b_r) check_patch(p);
  for (const auto& p : b_c) check_patch(p);
}

double ObjectShape::bounding_radius() const {
  auto nrm = [](const geom::Vec2d& v) { return std::hypot(v.x, v.y); };
  double rr = 0.0;
  switch (kind) {
    case Kind::kCircle:
      rr = nrm(c);
      break;
    case Kind::kSegment:
      rr = std::max(nrm(c), nrm(d));
      break;
    case Kind::kPolygon:
      for (const auto& v : polygon) rr = std::max(rr, nrm(v));
      break;
  }
  return rr + r;
}

void ObjectModel::validate() const {
  if (shape.r < 0.0) throw std::invalid_argument("negative rounding radius");
  if (mu < 0.0) throw std::invalid_argument("negative friction coefficient");
  if ((l_u - l_u.transpose()).norm() > 1e-12)
    throw std::invalid_argument("L_u must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(l_u);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("L_u must be positive definite");
  if (shape.kind == ObjectShape::Kind::kPolygon &&
      !geom::is_convex_ccw(shape.polygon))
    throw std::invalid_argument("object polygon must be CCW convex");
}

RobotModel default_dual_arm() {
  RobotModel r;
  // Lower arm first: scenario tables list the joint vector starting with the
  // arm based at (0, -0.25), so e.g. (-40.1deg, 0, 0, +40.1deg, 0, 0) is the
  // arms-open posture on either side of the object.
  r.chains = {{{0.0, -0.25}, {0.30, 0.30, 0.15}},
              {{0.0, 0.25}, {0.30, 0.30, 0.15}}};
  const int n = r.num_joints();
  r.q_lb = Eigen::VectorXd::Constant(n, -3.0);
  r.q_ub = Eigen::VectorXd::Constant(n, 3.0);
  r.u_max = 0.1;
  r.k_a = Eigen::VectorXd::Constant(n, 100.0);
  constexpr double kFineRadius = 0.03;
  constexpr double kCoarseRadius = 0.035;
  for (int chain = 0; chain < 2; ++chain) {
    const auto& lens = r.chains[chain].link_lengths;
    for (int link = 0; link < static_cast<int>(lens.size()); ++link) {
      const double len = lens[link];
      // Two half-link fine patches, one full-link conservative patch.
      r.b_r.push_back(
          {chain, link, {{0.0, 0.0}, {0.5 * len, 0.0}, kFineRadius}});
      r.b_r.push_back(
          {chain, link, {{0.5 * len, 0.0}, {len, 0.0}, kFineRadius}});
      r.b_c.push_back({chain, link, {{0.0, 0.0}, {len, 0.0}, kCoarseRadius}});
    }
  }
  r.validate();
  return r;
}

ObjectModel default_cylinder() {
  ObjectModel o;
  o.shape.kind = ObjectShape::Kind::kCircle;
  o.shape.c = {0.0, 0.0};
  o.shape.r = 0.14;
  o.mu = 0.5;
  const double mg = 1.0 * 9.81;
  const double r_c = o.shape.bounding_radius();
  o.l_u = Eigen::Vector3d(o.mu * mg, o.mu * mg, o.mu * mg * r_c).asDiagonal();
  o.workspace = {0.05, 1.0, -0.7, 0.7};
  o.validate();
  return o;
}

bool joint_bounds_ok(const RobotModel& robot, const Eigen::VectorXd& q_a,
                     double tol) {
  for (int i = 0; i < q_a.size(); ++i) {
    if (q_a[i] < robot.q_lb[i] - tol || q_a[i] > robot.q_ub[i] + tol)
      return false;
  }
  return true;
}

bool workspace_ok(const ObjectModel& object, const Eigen::Vector3d& q_u,
                  double tol) {
  return object.workspace.contains(q_u[0], q_u[1], -tol);
}

void contact_jacobians(const RobotModel& robot, const ObjectModel& object,
                       const PlantState& state, ContactCandidate& cand) {
  (void)object;
  const geom::Vec2d n = cand.prox.n;
  const geom::Vec2d t = cand.prox.t;
  // Object side: lever arm from the object origin to the rounded point S'.
  const geom::Vec2d lever{cand.prox.Sp.x - state.q_u[0],
                          cand.prox.Sp.y - state.q_u[1]};
  cand.j_u << n.x, t.x, n.y, t.y, lever.cross(n), lever.cross(t);
  // Robot side: revolute columns for every ancestor joint of the patch link.
  const int na = robot.num_joints();
  cand.j_a = Eigen::MatrixXd::Zero(na, 2);
  const Patch& patch = robot.b_r[cand.patch_index];
  if (patch.link < 0) return;  // base patch: immobile, J_a stays zero
  const auto fr = compute_joint_frames(robot, to_std(state.q_a));
  const int off = robot.joint_offset(patch.chain);
  for (int j = 0; j <= patch.link; ++j) {
    const geom::Vec2d arm{cand.prox.Hp.x - fr.origin[off + j].x,
                          cand.prox.Hp.y - fr.origin[off + j].y};
    const geom::Vec2d vel = arm.perp();  // unit joint rate
    cand.j_a(off + j, 0) = vel.dot(n);
    cand.j_a(off + j, 1) = vel.dot(t);
  }
}

std::vector<ContactCandidate> contact_candidates(const RobotModel& robot,
                                                 const ObjectModel& object,
                                                 const PlantState& state) {
  const auto fr = compute_joint_frames(robot, to_std(state.q_a));
  const auto qu = to_std(Eigen::VectorXd(state.q_u));
  std::vector<ContactCandidate> out;
  out.reserve(robot.b_r.size());
  for (size_t i = 0; i < robot.b_r.size(); ++i) {
    ContactCandidate c;
    c.k = static_cast<int>(i);
    c.patch_index = static_cast<int>(i);
    const auto patch_w = patch_world(robot, fr, robot.b_r[i]);
    c.prox = patch_object_proximity(patch_w, object.shape, qu);
    contact_jacobians(robot, object, state, c);
    out.push_back(std::move(c));
  }
  return out;
}

PlantState quasi_dynamic_step(const RobotModel& robot, const ObjectModel& object,
                              const PlantState& state, const Eigen::VectorXd& u,
                              const std::vector<ContactCandidate>& contacts) {
  Eigen::Vector3d wrench = Eigen::Vector3d::Zero();
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(robot.num_joints());
  for (const auto& c : contacts) {
    wrench += c.j_u * c.f;
    tau -= c.j_a * c.f;  // reaction on the robot
  }
  PlantState next;
  next.q_u = state.q_u + object.l_u.ldlt().solve(wrench);
  next.q_a = state.q_a + u + (tau.array() / robot.k_a.array()).matrix();
  return next;
}

Eigen::Matrix<double, 5, 1> coulomb_residuals(const Eigen::Vector2d& f,
                                              const Eigen::Vector2d& v,
                                              double mu) {
  Eigen::Matrix<double, 5, 1> r;
  const double cone = mu * f[0] - std::abs(f[1]);
  r << cone, f[0], v[0] * f[0], v[1] * -cone, v[1] * f[1];
  return r;
}

bool coulomb_feasible(const Eigen::Vector2d& f, const Eigen::Vector2d& v,
                      double mu, double tol) {
  const auto r = coulomb_residuals(f, v, mu);
  return r[0] >= -tol && r[1] >= -tol && std::abs(r[2]) <= tol &&
         std::abs(r[3]) <= tol && r[4] >= -tol;
}

std::vector<double> self_collision_distances(const RobotModel& robot,
                                             const Eigen::VectorXd& q_a) {
  return self_collision_distances(robot, to_std(q_a));
}

}  // namespace wbm::plant
