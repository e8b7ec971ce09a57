#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include "gkin/types.hpp"

namespace gkin {

struct Ball {
  double r = 1.0;
};

// { x : |x + a e1| < R } intersected with { x1 < 0 }.
struct FlatCap {
  double R = 1.0;
  double a = 0.25;
};

struct BoundaryPoint {
  Vec3 z;
  Vec3 n;
};

inline constexpr double kGrazingTolerance = 1e-14;

class ConvexDomain {
 public:
  ConvexDomain() = default;
  explicit ConvexDomain(Ball b) : shape_(b) {
    if (!(b.r > 0)) throw GeometryError("ball radius must be positive");
  }
  explicit ConvexDomain(FlatCap f) : shape_(f) {
    if (!(f.a > 0 && f.a < f.R)) throw GeometryError("flat cap requires 0 < a < R");
  }
  // Also enforces the half-ball containment radius r1 <= R - a.
  static ConvexDomain flat_cap(double R, double a, double r1) {
    ConvexDomain d(FlatCap{R, a});
    if (!(r1 > 0 && R >= r1 + a)) throw GeometryError("flat cap requires 0 < r1 <= R - a");
    return d;
  }

  bool is_ball() const { return std::holds_alternative<Ball>(shape_); }
  bool is_flat_cap() const { return std::holds_alternative<FlatCap>(shape_); }
  const Ball& ball() const { return std::get<Ball>(shape_); }
  const FlatCap& cap() const { return std::get<FlatCap>(shape_); }

  double diam() const {
    return is_ball() ? 2 * ball().r : 2 * cap().R;
  }
  double flat_radius() const {
    const auto& f = cap();
    return std::sqrt(f.R * f.R - f.a * f.a);
  }
  double volume() const {
    if (is_ball()) return 4.0 / 3.0 * kPi * std::pow(ball().r, 3);
    const auto& f = cap();
    // sphere minus the cap of height R - a beyond the plane x1 = 0
    const double h = f.R - f.a;
    return 4.0 / 3.0 * kPi * f.R * f.R * f.R - kPi * h * h * (3 * f.R - h) / 3.0;
  }
  double surface_area() const {
    if (is_ball()) return 4 * kPi * ball().r * ball().r;
    const auto& f = cap();
    return kPi * (f.R * f.R - f.a * f.a) + 2 * kPi * f.R * (f.R + f.a);
  }
  // Axis-aligned bounding box.
  void bounds(Vec3& lo, Vec3& hi) const {
    if (is_ball()) {
      lo = Vec3::Constant(-ball().r);
      hi = Vec3::Constant(ball().r);
    } else {
      const auto& f = cap();
      const double rho = f.R;
      lo = Vec3(-f.a - f.R, -rho, -rho);
      hi = Vec3(0, rho, rho);
    }
  }

  // Closed membership with relative slack tol.
  bool contains(const Vec3& x, double tol = 0.0) const {
    const double slack = tol * diam();
    if (is_ball()) return x.norm() <= ball().r + slack;
    const auto& f = cap();
    return x.x() <= slack && (x + Vec3(f.a, 0, 0)).norm() <= f.R + slack;
  }
  bool contains_open(const Vec3& x) const {
    if (is_ball()) return x.norm() < ball().r;
    const auto& f = cap();
    return x.x() < 0 && (x + Vec3(f.a, 0, 0)).norm() < f.R;
  }

  // Backward exit time and footpoint normal.
  double exit_time(const Vec3& x, const Vec3& v, Vec3* normal = nullptr) const {
    const double v2 = v.squaredNorm();
    if (v2 == 0) throw GeometryError("exit time undefined for v = 0");
    if (!contains(x, 1e-12)) throw GeometryError("exit time requires x in the closed domain");
    if (is_ball()) {
      const double r = ball().r;
      const double tau = sphere_root(x, v, v2, r);
      if (normal) *normal = (x - tau * v) / r;
      return tau;
    }
    const auto& f = cap();
    const Vec3 c = x + Vec3(f.a, 0, 0);
    const double ts = sphere_root(c, v, v2, f.R);
    double tau = ts;
    bool plane = false;
    if (v.x() < 0) {
      const double tp = x.x() / v.x();
      if (tp < ts) {
        tau = std::max(tp, 0.0);
        plane = true;
      }
    }
    if (normal) *normal = plane ? Vec3(1, 0, 0) : Vec3((c - tau * v) / f.R);
    return tau;
  }

  BoundaryPoint footpoint(const Vec3& x, const Vec3& v, double* tau_out = nullptr) const {
    Vec3 n;
    const double tau = exit_time(x, v, &n);
    if (tau_out) *tau_out = tau;
    return {x - tau * v, n};
  }

  // Bisection on the membership predicate over [0, diam/|v|].
  double exit_time_bisect(const Vec3& x, const Vec3& v, int iterations = 60) const {
    if (v.squaredNorm() == 0) throw GeometryError("exit time undefined for v = 0");
    double lo = 0, hi = diam() / v.norm() * (1 + 1e-12);
    for (int i = 0; i < iterations; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (contains(x - mid * v)) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  // Outward normal at a boundary point; flat face wins on the edge circle.
  Vec3 normal(const Vec3& z) const {
    if (is_ball()) return z.normalized();
    const auto& f = cap();
    if (std::abs(z.x()) <= 1e-12 * diam()) return Vec3(1, 0, 0);
    return (z + Vec3(f.a, 0, 0)).normalized();
  }

  // Chord length over incidence cosine; 2r on the ball.
  double chord_bound() const {
    if (is_ball()) return 2 * ball().r;
    return std::numeric_limits<double>::infinity();
  }

 private:
  // Positive root s of |c - s v| = radius for c inside the sphere.
  static double sphere_root(const Vec3& c, const Vec3& v, double v2, double radius) {
    const double b = c.dot(v);
    const double gap = std::max(0.0, radius * radius - c.squaredNorm());
    const double root = std::sqrt(b * b + v2 * gap);
    if (b >= 0) return (b + root) / v2;
    return gap / (root - b);
  }

  std::variant<Ball, FlatCap> shape_;
};

inline double exit_time(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  return d.exit_time(x, v);
}

inline BoundaryPoint footpoint(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  return d.footpoint(x, v);
}

inline double grazing_factor(const ConvexDomain&, const BoundaryPoint& z, const Vec3& v) {
  const double s = v.norm();
  if (s == 0) throw GeometryError("grazing factor undefined for v = 0");
  return std::min(1.0, std::abs(z.n.dot(v)) / s);
}

inline double grazing_factor(const ConvexDomain& d, const Vec3& z, const Vec3& v) {
  return grazing_factor(d, BoundaryPoint{z, d.normal(z)}, v);
}

// Exact τ-gradients from implicit differentiation of the footpoint equation.
struct TauDerivatives {
  double tau;
  BoundaryPoint q;
  double N;     // grazing factor at the footpoint
  Vec3 dx;      // ∇_x τ = -n(q) / (N |v|)
  Vec3 dv;      // ∇_v τ = -τ ∇_x τ
};

inline TauDerivatives tau_derivatives(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  TauDerivatives out;
  out.q = d.footpoint(x, v, &out.tau);
  out.N = grazing_factor(d, out.q, v);
  if (out.N < kGrazingTolerance) throw GrazingSingularity("grazing footpoint");
  out.dx = -out.q.n / (out.N * v.norm());
  out.dv = -out.tau * out.dx;
  return out;
}

inline Vec3 grad_x_tau(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  return tau_derivatives(d, x, v).dx;
}

inline Vec3 grad_v_tau(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  return tau_derivatives(d, x, v).dv;
}

inline double grad_v_tau_bound(const ConvexDomain& d, const Vec3& x, const Vec3& v) {
  const auto t = tau_derivatives(d, x, v);
  return t.dx.norm() * t.tau;
}

// Central differences of τ in x (which = 0) or v (which = 1).
inline Vec3 grad_tau_fd(const ConvexDomain& d, const Vec3& x, const Vec3& v, int which,
                        double h) {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = h;
    if (which == 0) g[i] = (d.exit_time(x + e, v) - d.exit_time(x - e, v)) / (2 * h);
    else g[i] = (d.exit_time(x, v + e) - d.exit_time(x, v - e)) / (2 * h);
  }
  return g;
}

inline double chord_bound(const ConvexDomain& d) { return d.chord_bound(); }

}  // namespace gkin
