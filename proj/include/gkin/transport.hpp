#pragma once

#include <cmath>
#include <functional>
#include <variant>

#include "gkin/collision.hpp"
#include "gkin/geometry.hpp"
#include "gkin/quadrature.hpp"

namespace gkin {

// C-infinity step: 0 for u <= 0, 1 for u >= 1.
inline double smooth_step(double u) {
  if (u <= 0) return 0;
  if (u >= 1) return 1;
  const double a = std::exp(-1 / u), b = std::exp(-1 / (1 - u));
  return a / (a + b);
}

inline double smooth_step_prime(double u) {
  if (u <= 0 || u >= 1) return 0;
  const double a = std::exp(-1 / u), b = std::exp(-1 / (1 - u));
  const double da = a / (u * u), db = -b / ((1 - u) * (1 - u));
  return (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
}

inline double maxwellian(const Vec3& v) { return std::exp(-0.5 * v.squaredNorm()); }

// Nearest point of the boundary piece carrying z (flat face or sphere).
inline Vec3 project_to_piece(const ConvexDomain& d, const BoundaryPoint& z, const Vec3& y) {
  if (d.is_ball()) return d.ball().r * y.normalized();
  if (z.n == Vec3(1, 0, 0)) return Vec3(0, y.y(), y.z());
  const Vec3 c(-d.cap().a, 0, 0);
  return c + d.cap().R * (y - c).normalized();
}

// Profile φ1 on the flat face, radial in the face.
struct FlatCutoff {
  double r1 = 0.5;
};

// Profile φ2 on the sphere, function of the polar angle from +e1.
struct CapCutoff {
  double theta1 = 0.3;
  double theta2 = 0.6;
};

struct CustomData {
  std::function<double(const BoundaryPoint&, const Vec3&)> g;
  bool axisymmetric = false;
};

class BoundaryData {
 public:
  BoundaryData() : kind_(CapCutoff{}) {}
  explicit BoundaryData(FlatCutoff f) : kind_(f) {
    if (!(f.r1 > 0)) throw std::invalid_argument("flat cutoff requires r1 > 0");
  }
  explicit BoundaryData(CapCutoff c) : kind_(c) {
    if (!(0 < c.theta1 && c.theta1 < c.theta2 && c.theta2 < kPi))
      throw std::invalid_argument("cap cutoff requires 0 < theta1 < theta2 < pi");
  }
  explicit BoundaryData(CustomData c) : kind_(std::move(c)) {}

  bool is_flat() const { return std::holds_alternative<FlatCutoff>(kind_); }
  bool is_cap() const { return std::holds_alternative<CapCutoff>(kind_); }
  bool is_custom() const { return std::holds_alternative<CustomData>(kind_); }
  const FlatCutoff& flat() const { return std::get<FlatCutoff>(kind_); }
  const CapCutoff& cap() const { return std::get<CapCutoff>(kind_); }

  // Invariant under rotations about e1.
  bool axisymmetric() const {
    if (const auto* c = std::get_if<CustomData>(&kind_)) return c->axisymmetric;
    return true;
  }

  // Spatial profile φ(z) for the cutoff kinds.
  double profile(const BoundaryPoint& z) const {
    if (const auto* f = std::get_if<FlatCutoff>(&kind_)) {
      if (std::abs(z.z.x()) > 1e-12 || z.n != Vec3(1, 0, 0)) return 0;
      const double rho = z.z.tail<2>().norm();
      const double q = 0.25 * f->r1;
      return 1 - smooth_step((rho - q) / q);
    }
    if (const auto* c = std::get_if<CapCutoff>(&kind_)) {
      const double cosang = std::clamp(z.z.x() / z.z.norm(), -1.0, 1.0);
      const double th = std::acos(cosang);
      return 1 - smooth_step((th - c->theta1) / (c->theta2 - c->theta1));
    }
    throw std::logic_error("custom boundary data has no separate profile");
  }

  double operator()(const BoundaryPoint& z, const Vec3& v) const {
    if (const auto* c = std::get_if<CustomData>(&kind_)) return c->g(z, v);
    const double phi = profile(z);
    return phi == 0 ? 0.0 : phi * maxwellian(v);
  }

  // Tangential gradient of g(·, v) at z by central differences along the surface.
  Vec3 tangential_gradient(const ConvexDomain& d, const BoundaryPoint& z, const Vec3& v) const {
    Vec3 t1, t2;
    orthonormal_frame(z.n, t1, t2);
    const double h = 1e-5 * d.diam();
    Vec3 grad = Vec3::Zero();
    for (const Vec3& t : {t1, t2}) {
      const Vec3 yp = project_to_piece(d, z, z.z + h * t), ym = project_to_piece(d, z, z.z - h * t);
      const double gp = (*this)(BoundaryPoint{yp, z.n}, v), gm = (*this)(BoundaryPoint{ym, z.n}, v);
      grad += (gp - gm) / (yp - ym).norm() * t;
    }
    return grad;
  }

  // Velocity gradient of g(z, ·) with z held fixed.
  Vec3 velocity_gradient(const BoundaryPoint& z, const Vec3& v) const {
    if (!is_custom()) return -(*this)(z, v) * v;
    const double h = 1e-6 * (1 + v.norm());
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = h;
      g[i] = ((*this)(z, v + e) - (*this)(z, v - e)) / (2 * h);
    }
    return g;
  }

 private:
  std::variant<FlatCutoff, CapCutoff, CustomData> kind_;
};

// Cut long rays where exp(-ν s) is below double precision.
inline double effective_length(double tau, double nu) { return std::min(tau, 40.0 / nu); }

template <class G>
double apply_J(const ConvexDomain& d, const KernelModel& m, const G& g, const Vec3& x, const Vec3& v) {
  if (v.squaredNorm() == 0) return 0;
  double tau;
  const auto q = d.footpoint(x, v, &tau);
  const double val = g(q, v);
  return val == 0 ? 0.0 : std::exp(-m.nu(v) * tau) * val;
}

// ∫_0^τ e^{-νs} h(x - s v, v) ds; the v = 0 ray never exits and gives h(x,0)/ν(0).
template <class H>
double apply_S(const ConvexDomain& d, const KernelModel& m, H&& h, const Vec3& x, const Vec3& v,
               const LineQuadrature& lq = {}) {
  const double n = m.nu(v);
  if (v.squaredNorm() == 0) return h(x, v) / n;
  const double tau = effective_length(d.exit_time(x, v), n);
  return lq.integrate(tau, n, [&](double s) { return std::exp(-n * s) * h(Vec3(x - s * v), v); });
}

template <class H>
double apply_S_s(const ConvexDomain& d, const KernelModel& m, H&& h, const Vec3& x, const Vec3& v,
                 const LineQuadrature& lq = {}) {
  const double n = m.nu(v);
  if (v.squaredNorm() == 0) return h(x, v) / (n * n);
  const double tau = effective_length(d.exit_time(x, v), n);
  return lq.integrate(tau, n, [&](double s) { return s * std::exp(-n * s) * h(Vec3(x - s * v), v); });
}

template <class G>
Vec3 apply_S_x(const ConvexDomain& d, const KernelModel& m, const G& hb, const Vec3& x, const Vec3& v) {
  const auto t = tau_derivatives(d, x, v);
  return t.dx * (std::exp(-m.nu(v) * t.tau) * hb(t.q, v));
}

template <class G>
Vec3 apply_S_v(const ConvexDomain& d, const KernelModel& m, const G& hb, const Vec3& x, const Vec3& v) {
  const auto t = tau_derivatives(d, x, v);
  return t.dv * (std::exp(-m.nu(v) * t.tau) * hb(t.q, v));
}

// ∇_x Jg = -ν ∇_xτ Jg + e^{-ντ} (I - ∇_xτ ⊗ v)^T ∇_X g(q, v).
struct JgGradient {
  double value;
  Vec3 transport;  // -ν ∇_xτ Jg
  Vec3 data;       // footpoint-motion term
  Vec3 total() const { return transport + data; }
};

inline JgGradient grad_x_Jg(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                            const Vec3& x, const Vec3& v) {
  const auto t = tau_derivatives(d, x, v);
  const double att = std::exp(-m.nu(v) * t.tau);
  JgGradient out;
  out.value = att * g(t.q, v);
  out.transport = -m.nu(v) * out.value * t.dx;
  const Vec3 G = g.tangential_gradient(d, t.q, v);
  out.data = att * (G - t.dx * v.dot(G));
  return out;
}

// ∇_v Jg from ∇_v q = -τ I - v ⊗ ∇_vτ and the velocity dependence of ν and g.
inline Vec3 grad_v_Jg(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                      const Vec3& x, const Vec3& v) {
  const auto t = tau_derivatives(d, x, v);
  const double n = m.nu(v);
  const double att = std::exp(-n * t.tau);
  const double gq = g(t.q, v);
  const Vec3 G = g.tangential_gradient(d, t.q, v);
  const Vec3 dnu = m.nu_grad(v) * t.tau + n * t.dv;
  return att * (-gq * dnu - t.tau * G - t.dv * v.dot(G) + g.velocity_gradient(t.q, v));
}

}  // namespace gkin
