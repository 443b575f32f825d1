#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wbm/autodiff.hpp"

namespace wbm::geom {

/// Regularization used in every denominator of the closed-form proximity
/// cascade; also covers zero-length segments.
inline constexpr double kEps = 1e-5;  // m^2

/// Below this separation the contact frame falls back to a caller-supplied
/// normal (the division by ||HS|| is no longer meaningful).
inline constexpr double kDegenerateDist = 1e-9;

template <class T>
struct Vec2 {
  T x{}, y{};

  Vec2() = default;
  Vec2(T x_, T y_) : x(std::move(x_)), y(std::move(y_)) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(const T& s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }

  T dot(const Vec2& o) const { return x * o.x + y * o.y; }
  /// z-component of the 2D cross product.
  T cross(const Vec2& o) const { return x * o.y - y * o.x; }
  /// Rotation by +90 degrees.
  Vec2 perp() const { return {-y, x}; }
  T squared_norm() const { return x * x + y * y; }
  T norm() const {
    using std::sqrt;
    using ad::sqrt;
    return sqrt(squared_norm());
  }
};

using Vec2d = Vec2<double>;

template <class T>
Vec2<T> operator*(const T& s, const Vec2<T>& v) {
  return v * s;
}

/// Rounded segment: skeleton AB inflated by radius r. A degenerate A == B
/// yields a circle of radius r.
template <class T>
struct Segment {
  Vec2<T> a, b;
  double r = 0.0;
};

using Segmentd = Segment<double>;

/// Rounded convex polygon, counter-clockwise vertex order.
template <class T>
struct ConvexPolygon {
  std::vector<Vec2<T>> vertices;
  double r = 0.0;
};

using ConvexPolygond = ConvexPolygon<double>;

/// Closest points between two structures. H lives on the first (robot patch)
/// skeleton, S on the second (object). Hp/Sp are the points moved onto the
/// rounded surfaces; dp = d - r_h - r_s. n is the unit vector from H toward S
/// and t its +90 degree rotation.
template <class T>
struct ProximityResult {
  T h{}, s{};
  T h0{};  // pre-refinement line-line parameter, exposed for diagnostics
  Vec2<T> H, S;
  T d{};
  Vec2<T> Hp, Sp;
  T dp{};
  Vec2<T> n, t;
};

using ProximityResultd = ProximityResult<double>;

template <class T>
T clamp01(const T& x) {
  using ad::clamp;
  return clamp(x, 0.0, 1.0);
}

/// Applies surface rounding and fills the contact frame. When ||HS|| is
/// degenerate the direction comes from fallback_n (callers cache the previous
/// frame or use the object's outward edge normal).
template <class T>
void round_proximity(ProximityResult<T>& res, double r_h, double r_s,
                     const Vec2<T>* fallback_n = nullptr) {
  using ad::value;
  Vec2<T> n;
  if (value(res.d) < kDegenerateDist) {
    n = fallback_n ? *fallback_n : Vec2<T>{T(1.0), T(0.0)};
  } else {
    const T inv = T(1.0) / res.d;
    n = (res.S - res.H) * inv;
  }
  res.n = n;
  res.t = n.perp();
  res.Hp = res.H + n * T(r_h);
  res.Sp = res.S - n * T(r_s);
  res.dp = res.d - T(r_h) - T(r_s);
}

/// Closest point between a rounded segment and a rounded point (circle of
/// radius c_r centered at c).
template <class T>
ProximityResult<T> point_segment_proximity(const Segment<T>& seg, const Vec2<T>& c,
                                           double c_r = 0.0,
                                           const Vec2<T>* fallback_n = nullptr) {
  const Vec2<T> ab = seg.b - seg.a;
  const Vec2<T> ac = c - seg.a;
  ProximityResult<T> res;
  res.h = clamp01(ab.dot(ac) / (ab.dot(ab) + T(kEps)));
  res.s = T(0.0);
  res.H = seg.a + ab * res.h;
  res.S = c;
  res.d = (res.S - res.H).norm();
  round_proximity(res, seg.r, c_r, fallback_n);
  return res;
}

/// Three-step closed-form cascade for the closest points between segments AB
/// and CD. Always returns a single deterministic (h, s) pair, including for
/// parallel, intersecting and zero-length segments.
template <class T>
ProximityResult<T> segment_segment_proximity(const Segment<T>& seg_h,
                                             const Segment<T>& seg_s,
                                             const Vec2<T>* fallback_n = nullptr) {
  const Vec2<T>& a = seg_h.a;
  const Vec2<T> ab = seg_h.b - seg_h.a;
  const Vec2<T>& c = seg_s.a;
  const Vec2<T> cd = seg_s.b - seg_s.a;
  const Vec2<T> ac = c - a;

  // [CD]^2 taken as |CD|^2 I - CD CD^T: h0 minimizes the distance from
  // A + h AB to the infinite line through CD.
  const T cd2 = cd.dot(cd);
  const auto q = [&](const Vec2<T>& u, const Vec2<T>& v) {
    return cd2 * u.dot(v) - u.dot(cd) * v.dot(cd);
  };
  const T h0 = clamp01(q(ab, ac) / (q(ab, ab) + T(kEps)));
  const T s = clamp01(cd.dot(ab * h0 - ac) / (cd2 + T(kEps)));
  const T h = clamp01(ab.dot(cd * s + ac) / (ab.dot(ab) + T(kEps)));

  ProximityResult<T> res;
  res.h = h;
  res.s = s;
  res.h0 = h0;
  res.H = a + ab * h;
  res.S = c + cd * s;
  res.d = (res.S - res.H).norm();
  round_proximity(res, seg_h.r, seg_s.r, fallback_n);
  return res;
}

/// Signed-area convexity test on a CCW vertex list.
template <class T>
bool is_convex_ccw(const std::vector<Vec2<T>>& v) {
  using ad::value;
  const size_t n = v.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    const Vec2<T> e0 = v[(i + 1) % n] - v[i];
    const Vec2<T> e1 = v[(i + 2) % n] - v[(i + 1) % n];
    if (value(e0.norm()) < 1e-9) return false;
    if (value(e0.cross(e1)) < -1e-12) return false;
  }
  return true;
}

/// True if p is inside (or on) the CCW convex polygon skeleton.
template <class T>
bool point_in_convex_polygon(const Vec2d& p, const ConvexPolygon<T>& poly) {
  using ad::value;
  const size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2<T> e = poly.vertices[(i + 1) % n] - poly.vertices[i];
    const Vec2d ev{value(e.x), value(e.y)};
    const Vec2d pv{p.x - value(poly.vertices[i].x), p.y - value(poly.vertices[i].y)};
    if (ev.cross(pv) < 0.0) return false;
  }
  return true;
}

/// One proximity evaluation per polygon edge, keeping the closest. The first
/// pass of the chain reduction already contains the per-edge minimum; further
/// reduction passes only re-select it through ever shorter (and hence badly
/// regularized) chords, so the argmin is taken directly. A patch point inside
/// the polygon skeleton reads as penetration: d = 0 and dp carries the
/// (negated) interior distance to the boundary.
template <class T>
ProximityResult<T> polygon_segment_proximity(const Segment<T>& seg,
                                             const ConvexPolygon<T>& poly,
                                             const Vec2<T>* fallback_n = nullptr) {
  using ad::value;
  if (!is_convex_ccw(poly.vertices)) {
    throw std::invalid_argument(
        "polygon_segment_proximity: vertex list is not a CCW convex polygon");
  }
  Segment<T> skeleton{seg.a, seg.b, 0.0};
  const size_t n = poly.vertices.size();
  ProximityResult<T> last;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    Segment<T> edge{poly.vertices[i], poly.vertices[(i + 1) % n], 0.0};
    auto res = segment_segment_proximity(skeleton, edge);
    if (value(res.d) < best) {
      best = value(res.d);
      last = std::move(res);
    }
  }

  const Vec2d h_val{value(last.H.x), value(last.H.y)};
  if (value(last.d) > kDegenerateDist && point_in_convex_polygon(h_val, poly)) {
    // Interior patch point: the reduction distance is to the boundary from
    // the inside, so flip it into a penetration depth.
    const T depth = last.d;
    // Continuation of the outside contact normal (robot toward object).
    Vec2<T> n_pen = -(last.S - last.H) * (T(1.0) / last.d);
    last.d = T(0.0);
    last.n = n_pen;
    last.t = n_pen.perp();
    last.Hp = last.H + n_pen * T(seg.r);
    last.Sp = last.S - n_pen * T(poly.r);
    last.dp = -depth - T(seg.r) - T(poly.r);
    return last;
  }
  round_proximity(last, seg.r, poly.r, fallback_n);
  return last;
}

/// Outward normal of the polygon edge nearest to a boundary point S; used as
/// the degenerate-contact frame fallback.
inline Vec2d polygon_outward_normal_at(const ConvexPolygond& poly, const Vec2d& s) {
  const size_t n = poly.vertices.size();
  double best = std::numeric_limits<double>::infinity();
  Vec2d normal{1.0, 0.0};
  for (size_t i = 0; i < n; ++i) {
    const Vec2d a = poly.vertices[i];
    const Vec2d b = poly.vertices[(i + 1) % n];
    Segmentd edge{a, b, 0.0};
    auto res = point_segment_proximity(edge, s);
    if (res.d < best) {
      best = res.d;
      const Vec2d e = b - a;
      const double len = e.norm();
      // CCW order: outward normal is the edge direction rotated -90 degrees.
      normal = Vec2d{e.y / len, -e.x / len};
    }
  }
  return normal;
}

inline std::string debug_dump(const ProximityResultd& r) {
  std::ostringstream os;
  os.precision(12);
  os << "h=" << r.h << " s=" << r.s << " d=" << r.d << " dp=" << r.dp
     << " H=(" << r.H.x << "," << r.H.y << ")"
     << " S=(" << r.S.x << "," << r.S.y << ")"
     << " Hp=(" << r.Hp.x << "," << r.Hp.y << ")"
     << " Sp=(" << r.Sp.x << "," << r.Sp.y << ")"
     << " n=(" << r.n.x << "," << r.n.y << ")"
     << " t=(" << r.t.x << "," << r.t.y << ")";
  return os.str();
}

}  // namespace wbm::geom
