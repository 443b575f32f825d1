#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <vector>

namespace wbm::ad {

/// Forward-mode scalar carrying a value and a dense vector of seed-directional
/// derivatives. An empty partials vector means "constant" (identically zero
/// gradient); this keeps value-only evaluations nearly as cheap as doubles.
class Dual {
 public:
  Dual() : v_(0.0) {}
  Dual(double v) : v_(v) {}  // NOLINT: implicit by design
  Dual(double v, Eigen::VectorXd g) : v_(v), g_(std::move(g)) {}

  static Dual seeded(double v, int dim, int index) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    g[index] = 1.0;
    return Dual(v, std::move(g));
  }

  double value() const { return v_; }
  bool has_grad() const { return g_.size() > 0; }
  const Eigen::VectorXd& grad_raw() const { return g_; }

  /// Gradient as a dense vector of the given seed dimension.
  Eigen::VectorXd grad(int dim) const {
    if (g_.size() == 0) return Eigen::VectorXd::Zero(dim);
    assert(g_.size() == dim);
    return g_;
  }

  Dual operator-() const { return Dual(-v_, -g_); }

  Dual& operator+=(const Dual& o) {
    v_ += o.v_;
    add_scaled(o.g_, 1.0);
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v_ -= o.v_;
    add_scaled(o.g_, -1.0);
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    // d(ab) = a db + b da
    if (g_.size() == 0) {
      if (o.g_.size() > 0) g_ = v_ * o.g_;
    } else {
      g_ *= o.v_;
      add_scaled(o.g_, v_);
    }
    v_ *= o.v_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v_;
    // d(a/b) = da/b - a db / b^2
    if (o.g_.size() > 0) {
      if (g_.size() == 0) {
        g_ = (-v_ * inv * inv) * o.g_;
      } else {
        g_ = inv * g_ - (v_ * inv * inv) * o.g_;
      }
    } else if (g_.size() > 0) {
      g_ *= inv;
    }
    v_ *= inv;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v_ <= b.v_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v_ >= b.v_; }
  friend bool operator==(const Dual& a, const Dual& b) { return a.v_ == b.v_; }

  /// Chain rule helper: returns f(v) with gradient f'(v) * dv.
  Dual chain(double f, double df) const {
    if (g_.size() == 0) return Dual(f);
    return Dual(f, df * g_);
  }

 private:
  void add_scaled(const Eigen::VectorXd& og, double s) {
    if (og.size() == 0) return;
    if (g_.size() == 0) {
      g_ = s * og;
    } else {
      assert(g_.size() == og.size());
      g_ += s * og;
    }
  }

  double v_;
  Eigen::VectorXd g_;
};

inline double value(double x) { return x; }
inline double value(const Dual& x) { return x.value(); }

inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.value());
  return x.chain(s, 0.5 / s);
}
inline Dual exp(const Dual& x) {
  const double e = std::exp(x.value());
  return x.chain(e, e);
}
inline Dual log(const Dual& x) {
  return x.chain(std::log(x.value()), 1.0 / x.value());
}
inline Dual log1p(const Dual& x) {
  return x.chain(std::log1p(x.value()), 1.0 / (1.0 + x.value()));
}
inline Dual sin(const Dual& x) {
  return x.chain(std::sin(x.value()), std::cos(x.value()));
}
inline Dual cos(const Dual& x) {
  return x.chain(std::cos(x.value()), -std::sin(x.value()));
}
inline Dual abs(const Dual& x) {
  const double s = x.value() < 0.0 ? -1.0 : (x.value() > 0.0 ? 1.0 : 0.0);
  return x.chain(std::abs(x.value()), s);
}
inline Dual atan2(const Dual& y, const Dual& x) {
  const double denom = x.value() * x.value() + y.value() * y.value();
  // d atan2(y,x) = (x dy - y dx) / (x^2 + y^2)
  Dual r = (x * y.chain(0.0, 1.0) - y * x.chain(0.0, 1.0)) / Dual(denom);
  return Dual(std::atan2(y.value(), x.value()), r.grad_raw());
}

/// min(b, max(a, x)) with one-sided zero derivative at and beyond the bounds.
inline Dual clamp(const Dual& x, double a, double b) {
  if (x.value() <= a) return Dual(a);
  if (x.value() >= b) return Dual(b);
  return x;
}
inline double clamp(double x, double a, double b) {
  return std::min(b, std::max(a, x));
}

inline Dual max(const Dual& a, const Dual& b) { return a.value() >= b.value() ? a : b; }
inline Dual min(const Dual& a, const Dual& b) { return a.value() <= b.value() ? a : b; }

/// Seeds an identity Jacobian: x[i] gets partials e_i.
inline std::vector<Dual> seed(const Eigen::VectorXd& x) {
  std::vector<Dual> out;
  out.reserve(x.size());
  for (int i = 0; i < x.size(); ++i) out.push_back(Dual::seeded(x[i], static_cast<int>(x.size()), i));
  return out;
}

/// Wraps values as constants (no partials); value-only evaluation path.
inline std::vector<Dual> constants(const Eigen::VectorXd& x) {
  return std::vector<Dual>(x.data(), x.data() + x.size());
}

}  // namespace wbm::ad
