#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "wbm/plant.hpp"

namespace wbm::costs {

struct CostParams {
  double beta_d = 10.0;
  double beta_p = 5.0;
  double beta_r = 10.0;
  double beta_j = 0.1;
  double f_lim = 10.0;       // reference-force saturation, N
  double delta_act = 1e-3;   // activation distance for the binary mask, m
  Eigen::VectorXd w_d_diag;  // (3 + N_a) diagonal of W_d
};

/// Overflow-safe ln(1 + e^x).
template <class T>
T softplus(const T& x) {
  using std::exp;
  using std::log1p;
  using ad::exp;
  using ad::log1p;
  using ad::value;
  if (value(x) > 0.0) return x + log1p(exp(-x));
  return log1p(exp(x));
}

/// w_d = ln(1 + e^{-beta_d dp}): strictly positive, decreasing in dp.
template <class T>
T activation_weight(const T& dp, double beta_d) {
  return softplus(T(-beta_d) * dp);
}

/// Smallest representative of theta modulo 2 pi; the shift is locally
/// constant so derivatives pass through.
template <class T>
T wrap_angle(const T& theta) {
  using ad::value;
  const double k = std::round(value(theta) / (2.0 * M_PI));
  return theta - T(2.0 * M_PI * k);
}

/// w_p = (1 - (phi/pi)^2) clamp01(f_n / f_lim), phi = atan2(f_t, f_n).
/// Exact zero (constant) when the reference force vanishes: w_p would be 0
/// anyway and atan2 has no derivative there.
template <class T>
T object_manipulability(const T& f_n, const T& f_t, double f_lim) {
  using std::atan2;
  using ad::atan2;
  using ad::value;
  const double vn = value(f_n), vt = value(f_t);
  if (vn * vn + vt * vt < 1e-18) return T(0.0);
  const T phi = atan2(f_t, f_n);
  const T angle_term = T(1.0) - (phi * (1.0 / M_PI)) * (phi * (1.0 / M_PI));
  return angle_term * geom::clamp01(f_n * (1.0 / f_lim));
}

/// w_r = det(J J^T + beta_j I2) for the 2 x N_a contact Jacobian given as
/// per-joint (n, t) column pairs. >= beta_j^2 for any J, including J = 0.
template <class T>
T robot_manipulability(const std::vector<std::array<T, 2>>& j_rows,
                       double beta_j) {
  T a(0.0), b(0.0), c(0.0);
  for (const auto& r : j_rows) {
    a = a + r[0] * r[0];
    b = b + r[0] * r[1];
    c = c + r[1] * r[1];
  }
  return (a + T(beta_j)) * (c + T(beta_j)) - b * b;
}

/// Eq. 12b with wrapped angle error. W_d spans (q_u, q_a); a short diagonal
/// (size 3) weighs the object error only.
template <class T>
T distance_objective(const std::vector<T>& q_u, const std::vector<T>& q_a,
                     const Eigen::Vector3d& q_u_goal,
                     const Eigen::VectorXd& q_a_goal,
                     const Eigen::VectorXd& w_d_diag) {
  T g(0.0);
  T e0 = q_u[0] - T(q_u_goal[0]);
  T e1 = q_u[1] - T(q_u_goal[1]);
  T e2 = wrap_angle(q_u[2] - T(q_u_goal[2]));
  g = g + w_d_diag[0] * e0 * e0 + w_d_diag[1] * e1 * e1 + w_d_diag[2] * e2 * e2;
  for (size_t i = 0; i < q_a.size() && 3 + i < static_cast<size_t>(w_d_diag.size());
       ++i) {
    T e = q_a[i] - T(q_a_goal[static_cast<int>(i)]);
    g = g + w_d_diag[3 + static_cast<int>(i)] * e * e;
  }
  return g;
}

/// Per-candidate cost constituents at one plant configuration.
template <class T>
struct CandidateCost {
  T dp;
  T w_d, w_p, w_r;
  T f_n, f_t;  // reference force, Eq. 9i-9j
};

template <class T>
struct PlacementCost {
  T g_p{0.0}, g_r{0.0};
  std::vector<CandidateCost<T>> per;
};

/// Reference force at a contact: the goal-ward pose error mapped through the
/// contact force map, f~ = J_u^T (q_goal - q_u). Positive f~_n means a push
/// along the contact normal moves the object toward the goal.
template <class T>
void reference_force(const geom::ProximityResult<T>& prox,
                     const std::vector<T>& q_u, const Eigen::Vector3d& q_u_goal,
                     T& f_n, T& f_t) {
  const geom::Vec2<T> lever{prox.Sp.x - q_u[0], prox.Sp.y - q_u[1]};
  const T ex = T(q_u_goal[0]) - q_u[0];
  const T ey = T(q_u_goal[1]) - q_u[1];
  const T et = wrap_angle(T(q_u_goal[2]) - q_u[2]);
  f_n = prox.n.x * ex + prox.n.y * ey + lever.cross(prox.n) * et;
  f_t = prox.t.x * ex + prox.t.y * ey + lever.cross(prox.t) * et;
}

/// G_p + G_r constituents summed over (B_r patch, object) candidates,
/// smoothly weighted by w_d. `subset` restricts the sum to the given B_r
/// indices (the manipulation phase's binary alpha mask); null means all.
template <class T>
PlacementCost<T> placement_cost(const plant::RobotModel& robot,
                                const plant::ObjectModel& object,
                                const CostParams& params,
                                const std::vector<T>& q_u,
                                const std::vector<T>& q_a,
                                const Eigen::Vector3d& q_u_goal,
                                const std::vector<int>* subset = nullptr) {
  const auto fr = plant::compute_joint_frames(robot, q_a);
  PlacementCost<T> out;
  const size_t count = subset ? subset->size() : robot.b_r.size();
  out.per.reserve(count);
  for (size_t si = 0; si < count; ++si) {
    const size_t pi =
        subset ? static_cast<size_t>((*subset)[si]) : si;
    const auto& patch = robot.b_r[pi];
    const auto patch_w = plant::patch_world(robot, fr, patch);
    const auto prox = plant::patch_object_proximity(patch_w, object.shape, q_u);
    CandidateCost<T> cc;
    cc.dp = prox.dp;
    cc.w_d = activation_weight(prox.dp, params.beta_d);
    reference_force(prox, q_u, q_u_goal, cc.f_n, cc.f_t);
    cc.w_p = object_manipulability(cc.f_n, cc.f_t, params.f_lim);
    // 2 x N_a contact Jacobian rows per joint (material point H').
    std::vector<std::array<T, 2>> j_rows;
    if (patch.link >= 0) {
      const int off = robot.joint_offset(patch.chain);
      j_rows.reserve(patch.link + 1);
      for (int j = 0; j <= patch.link; ++j) {
        const geom::Vec2<T> arm{prox.Hp.x - fr.origin[off + j].x,
                                prox.Hp.y - fr.origin[off + j].y};
        const geom::Vec2<T> vel = arm.perp();
        j_rows.push_back({vel.dot(prox.n), vel.dot(prox.t)});
      }
    }
    cc.w_r = robot_manipulability(j_rows, params.beta_j);
    out.g_p = out.g_p - params.beta_p * cc.w_p * cc.w_d;
    out.g_r = out.g_r - params.beta_r * cc.w_r * cc.w_d;
    out.per.push_back(std::move(cc));
  }
  return out;
}

}  // namespace wbm::costs
