#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "wbm/geometry.hpp"

namespace wbm::plant {

/// Contact patch rigidly attached to a robot link. `link` indexes the chain's
/// links; link = -1 attaches the patch to the chain base (immobile torso).
/// The local frame has the link running from (0,0) to (length,0).
struct Patch {
  int chain = 0;
  int link = 0;
  geom::Segmentd local;
};

/// Planar serial chain of revolute joints; joint i sits at the tip of link
/// i-1 (the base for i = 0), each link extends along its local +x.
struct Chain {
  geom::Vec2d base;
  std::vector<double> link_lengths;
};

struct RobotModel {
  std::vector<Chain> chains;
  Eigen::VectorXd q_lb, q_ub;   // rad
  double u_max = 0.1;           // rad per step
  Eigen::VectorXd k_a;          // diagonal joint impedance, N*m/rad
  std::vector<Patch> b_r;       // fine contact patches
  std::vector<Patch> b_c;       // one conservative patch per link
  int num_joints() const {
    int n = 0;
    for (const auto& c : chains) n += static_cast<int>(c.link_lengths.size());
    return n;
  }
  int joint_offset(int chain) const {
    int n = 0;
    for (int c = 0; c < chain; ++c)
      n += static_cast<int>(chains[c].link_lengths.size());
    return n;
  }
  void validate() const;
};

struct ObjectShape {
  enum class Kind { kCircle, kSegment, kPolygon };
  Kind kind = Kind::kCircle;
  geom::Vec2d c, d;                    // circle center / segment endpoints (object frame)
  std::vector<geom::Vec2d> polygon;    // CCW, object frame
  double r = 0.0;                      // rounding radius
  /// Radius of the smallest origin-centered disc containing the skeleton + r.
  double bounding_radius() const;
};

struct Workspace {
  double x_min = 0.0, x_max = 1.0, y_min = -1.0, y_max = 1.0;
  bool contains(double x, double y, double margin = 0.0) const {
    return x >= x_min + margin && x <= x_max - margin && y >= y_min + margin &&
           y <= y_max - margin;
  }
};

struct ObjectModel {
  ObjectShape shape;
  Eigen::Matrix3d l_u = Eigen::Matrix3d::Identity();  // limit-surface matrix
  double mu = 0.5;
  Workspace workspace;
  void validate() const;
};

struct PlantState {
  Eigen::Vector3d q_u;  // x, y, theta
  Eigen::VectorXd q_a;
};

/// Default desk-scale plant: two planar 3-DOF arms facing each other.
RobotModel default_dual_arm();
/// 0.14 m radius cylinder, 1 kg under gravity, mu = 0.5 on the support plane.
ObjectModel default_cylinder();

bool joint_bounds_ok(const RobotModel& robot, const Eigen::VectorXd& q_a,
                     double tol = 1e-9);
bool workspace_ok(const ObjectModel& object, const Eigen::Vector3d& q_u,
                  double tol = 1e-9);

// ---------------------------------------------------------------------------
// Kinematics (templated so the same code path yields values and AD gradients)

/// World pose of every joint: origin and cumulative link angle.
template <class T>
struct JointFrames {
  std::vector<geom::Vec2<T>> origin;  // per joint, world
  std::vector<T> angle;               // cumulative world angle of the link
};

template <class T>
JointFrames<T> compute_joint_frames(const RobotModel& robot,
                                    const std::vector<T>& q_a) {
  using std::cos;
  using std::sin;
  using ad::cos;
  using ad::sin;
  JointFrames<T> fr;
  const int n = robot.num_joints();
  fr.origin.resize(n);
  fr.angle.resize(n);
  int j = 0;
  for (const auto& chain : robot.chains) {
    geom::Vec2<T> p{T(chain.base.x), T(chain.base.y)};
    T ang(0.0);
    for (double len : chain.link_lengths) {
      ang = ang + q_a[j];
      fr.origin[j] = p;
      fr.angle[j] = ang;
      p = p + geom::Vec2<T>{cos(ang) * T(len), sin(ang) * T(len)};
      ++j;
    }
  }
  return fr;
}

template <class T>
geom::Vec2<T> link_point(const RobotModel& robot, const JointFrames<T>& fr,
                         int chain, int link, const geom::Vec2d& local) {
  using std::cos;
  using std::sin;
  using ad::cos;
  using ad::sin;
  if (link < 0) {  // base-mounted: translation only
    const geom::Vec2d& b = robot.chains[chain].base;
    return {T(b.x + local.x), T(b.y + local.y)};
  }
  const int j = robot.joint_offset(chain) + link;
  const T c = cos(fr.angle[j]);
  const T s = sin(fr.angle[j]);
  return {fr.origin[j].x + c * T(local.x) - s * T(local.y),
          fr.origin[j].y + s * T(local.x) + c * T(local.y)};
}

template <class T>
geom::Segment<T> patch_world(const RobotModel& robot, const JointFrames<T>& fr,
                             const Patch& patch) {
  return {link_point(robot, fr, patch.chain, patch.link, patch.local.a),
          link_point(robot, fr, patch.chain, patch.link, patch.local.b),
          patch.local.r};
}

/// Object-frame point placed at pose q_u = (x, y, theta).
template <class T>
geom::Vec2<T> object_point(const std::vector<T>& q_u, const geom::Vec2d& local) {
  using std::cos;
  using std::sin;
  using ad::cos;
  using ad::sin;
  const T c = cos(q_u[2]);
  const T s = sin(q_u[2]);
  return {q_u[0] + c * T(local.x) - s * T(local.y),
          q_u[1] + s * T(local.x) + c * T(local.y)};
}

/// Proximity between one world-frame patch and the posed object structure.
template <class T>
geom::ProximityResult<T> patch_object_proximity(
    const geom::Segment<T>& patch_w, const ObjectShape& shape,
    const std::vector<T>& q_u, const geom::Vec2<T>* fallback_n = nullptr) {
  switch (shape.kind) {
    case ObjectShape::Kind::kCircle:
      return geom::point_segment_proximity(patch_w, object_point(q_u, shape.c),
                                           shape.r, fallback_n);
    case ObjectShape::Kind::kSegment: {
      geom::Segment<T> s{object_point(q_u, shape.c), object_point(q_u, shape.d),
                         shape.r};
      return geom::segment_segment_proximity(patch_w, s, fallback_n);
    }
    case ObjectShape::Kind::kPolygon: {
      geom::ConvexPolygon<T> poly;
      poly.r = shape.r;
      poly.vertices.reserve(shape.polygon.size());
      for (const auto& v : shape.polygon)
        poly.vertices.push_back(object_point(q_u, v));
      return geom::polygon_segment_proximity(patch_w, poly, fallback_n);
    }
  }
  throw std::logic_error("patch_object_proximity: unknown shape kind");
}

// ---------------------------------------------------------------------------
// Contacts

/// One (B_r patch, object) pair. J_u and J_a are force maps: a contact force
/// f = (f_n, f_t) applied at the rounded proximity points contributes +J_u f
/// to the object wrench and -J_a f to the joint torques (reaction). Their
/// transposes map object twist / joint rates to the contact-point velocity in
/// the (n, t) frame.
struct ContactCandidate {
  int k = 0;            // index into the candidate list
  int patch_index = 0;  // index into B_r
  geom::ProximityResultd prox;
  Eigen::Matrix<double, 3, 2> j_u = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::MatrixXd j_a;          // N_a x 2
  Eigen::Vector2d f{0.0, 0.0};  // (f_n, f_t), resolved force on the object
  Eigen::Vector2d v{0.0, 0.0};  // (v_n, v_t), robot-minus-object displacement
};

void contact_jacobians(const RobotModel& robot, const ObjectModel& object,
                       const PlantState& state, ContactCandidate& cand);

std::vector<ContactCandidate> contact_candidates(const RobotModel& robot,
                                                 const ObjectModel& object,
                                                 const PlantState& state);

/// Eq. 1 transition: M (q+ - q) = K u + sum_k J_k^T f_k with
/// M = blockdiag(L_u, K_a) and K = [0; K_a]. Affine in (u, f).
PlantState quasi_dynamic_step(const RobotModel& robot, const ObjectModel& object,
                              const PlantState& state, const Eigen::VectorXd& u,
                              const std::vector<ContactCandidate>& contacts);

/// Eq. 2 residuals: (mu f_n - |f_t|, f_n, v_n f_n, v_t (|f_t| - mu f_n),
/// v_t f_t). Feasible iff the first two are >= 0, the third and fourth are 0
/// (complementarity) and the last is >= 0.
Eigen::Matrix<double, 5, 1> coulomb_residuals(const Eigen::Vector2d& f,
                                              const Eigen::Vector2d& v, double mu);
bool coulomb_feasible(const Eigen::Vector2d& f, const Eigen::Vector2d& v,
                      double mu, double tol);

/// Rounded distance for every unordered B_c patch pair on distinct links,
/// skipping same-chain adjacent links (they meet at the joint by design).
template <class T>
std::vector<T> self_collision_distances(const RobotModel& robot,
                                        const std::vector<T>& q_a) {
  const auto fr = compute_joint_frames(robot, q_a);
  std::vector<geom::Segment<T>> world;
  world.reserve(robot.b_c.size());
  for (const auto& p : robot.b_c) world.push_back(patch_world(robot, fr, p));
  std::vector<T> out;
  for (size_t i = 0; i < world.size(); ++i) {
    for (size_t j = i + 1; j < world.size(); ++j) {
      const Patch& a = robot.b_c[i];
      const Patch& b = robot.b_c[j];
      if (a.chain == b.chain && std::abs(a.link - b.link) <= 1) continue;
      out.push_back(geom::segment_segment_proximity(world[i], world[j]).dp);
    }
  }
  return out;
}

std::vector<double> self_collision_distances(const RobotModel& robot,
                                             const Eigen::VectorXd& q_a);

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace wbm::plant
