#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gkin/quadrature.hpp"
#include "gkin/types.hpp"

namespace gkin {

namespace hs {

inline constexpr double kC = 0.35355339059327376220;  // 2^{-3/2}
inline constexpr double kSqrtPiHalf = 0.88622692545275801365;

// Collision frequency as a function of speed.
inline double nu(double s) {
  if (s == 0) return 2 * kC;
  return kC * (std::exp(-s * s) + (2 * s + 1 / s) * kSqrtPiHalf * std::erf(s));
}

inline double nu_prime(double s) {
  if (s < 1e-3) return kC * (4.0 / 3.0 * s - 4.0 / 15.0 * s * s * s);
  return kC * ((2 - 1 / (s * s)) * kSqrtPiHalf * std::erf(s) + std::exp(-s * s) / s);
}

inline double kernel(const Vec3& v, const Vec3& u) {
  const double d2 = (v - u).squaredNorm();
  if (d2 == 0) throw std::invalid_argument("kernel evaluated on the diagonal v = v*");
  const double d = std::sqrt(d2);
  const double a2 = v.squaredNorm(), b2 = u.squaredNorm();
  const double diff = b2 - a2;
  return kC / kPi *
         (2 / d * std::exp(-0.25 * diff * diff / d2 - 0.25 * d2) - d * std::exp(-0.5 * (a2 + b2)));
}

}  // namespace hs

struct KernelModel {
  enum class Kind { hard_sphere, bound_only };
  Kind kind = Kind::hard_sphere;
  bool gain = true;  // false zeroes the gain kernel, keeps ν
  double nu0 = 0, nu1 = 0, gamma = 1, rho = 0.5;

  static KernelModel hard_sphere();
  static KernelModel bound_only(double nu0, double nu1, double gamma, double rho) {
    if (!(nu0 > 0 && nu0 <= nu1 && gamma >= 0 && gamma <= 1 && rho > 0 && rho < 1))
      throw std::invalid_argument("invalid kernel bound parameters");
    KernelModel m;
    m.kind = Kind::bound_only;
    m.nu0 = nu0;
    m.nu1 = nu1;
    m.gamma = gamma;
    m.rho = rho;
    return m;
  }

  double nu(double s) const {
    require_explicit();
    return hs::nu(s);
  }
  double nu(const Vec3& v) const { return nu(v.norm()); }
  Vec3 nu_grad(const Vec3& v) const {
    require_explicit();
    const double s = v.norm();
    if (s == 0) return Vec3::Zero();
    return hs::nu_prime(s) / s * v;
  }
  double k(const Vec3& v, const Vec3& u) const {
    require_explicit();
    return gain ? hs::kernel(v, u) : 0.0;
  }
  // Lower rate used by the operator bounds: ν(v) >= nu0 (1+|v|)^γ.
  double rate_floor() const { return nu0; }

 private:
  void require_explicit() const {
    if (kind != Kind::hard_sphere)
      throw std::logic_error("bound-only kernel model has no explicit rates");
  }
};

namespace detail {

// inf and sup of ν(s)/(1 + s) by a dense scan refined with golden sections.
inline std::pair<double, double> hard_sphere_rate_bounds() {
  auto f = [](double s) { return hs::nu(s) / (1 + s); };
  const int n = 4000;
  const double smax = 400;
  double lo = f(0), hi = f(0);
  int ilo = 0, ihi = 0;
  auto at = [&](int i) { return smax * std::pow(double(i) / n, 2); };
  for (int i = 1; i <= n; ++i) {
    const double val = f(at(i));
    if (val < lo) lo = val, ilo = i;
    if (val > hi) hi = val, ihi = i;
  }
  auto refine = [&](int i, double sign) {
    double a = at(std::max(0, i - 1)), b = at(std::min(n, i + 1));
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    for (int it = 0; it < 100; ++it) {
      const double c = b - g * (b - a), d = a + g * (b - a);
      if (sign * f(c) < sign * f(d)) b = d;
      else a = c;
    }
    return f(0.5 * (a + b));
  };
  lo = std::min(lo, refine(ilo, 1.0));
  hi = std::max(hi, refine(ihi, -1.0));
  // the tail tends to 2^{-3/2} sqrt(pi) from one side
  const double tail = hs::kC * 2 * hs::kSqrtPiHalf;
  return {std::min(lo, tail), std::max(hi, tail)};
}

}  // namespace detail

inline KernelModel KernelModel::hard_sphere() {
  static const auto bounds = detail::hard_sphere_rate_bounds();
  KernelModel m;
  m.nu0 = bounds.first;
  m.nu1 = bounds.second;
  m.gamma = 1;
  m.rho = 0.5;
  return m;
}

inline double nu(const KernelModel& m, const Vec3& v) { return m.nu(v); }
inline double kernel(const KernelModel& m, const Vec3& v, const Vec3& u) { return m.k(v, u); }

// Gaussian envelope dominating the kernel.
inline double envelope_E(const Vec3& v, const Vec3& u, double rho) {
  const double d2 = (v - u).squaredNorm();
  if (d2 == 0) throw std::invalid_argument("envelope evaluated on the diagonal");
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("envelope requires 0 < rho < 1");
  const double diff = v.squaredNorm() - u.squaredNorm();
  return std::exp(-0.25 * (1 - rho) * (d2 + diff * diff / d2));
}

struct IdentityTerms {
  double lhs, rhs1, rhs2;
};

inline double alpha1(double a, double rho) {
  return (1 - rho + 2 * a) * (1 - rho - 2 * a) / (4 * (1 - rho));
}
inline double alpha2(double a, double rho) { return (1 - rho - 2 * a) / (2 * (1 - rho)); }

// Three equal forms of the envelope exponent.
inline IdentityTerms identity_check(const Vec3& v, const Vec3& u, double a, double rho) {
  const Vec3 d = v - u;
  const double d2 = d.squaredNorm();
  if (d2 == 0) throw std::invalid_argument("identity undefined on the diagonal");
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("identity requires 0 < rho < 1");
  const double dn = std::sqrt(d2);
  const double v2 = v.squaredNorm(), u2 = u.squaredNorm();
  const double q = (v2 - u2) / dn;
  const double a1 = alpha1(a, rho), a2 = alpha2(a, rho);
  IdentityTerms t;
  t.lhs = -0.25 * (1 - rho) * (d2 + q * q);
  const double s1 = d.dot(v) / dn - a2 * dn;
  t.rhs1 = a * v2 - a1 * d2 - (1 - rho) * s1 * s1 - a * u2;
  const double s2 = d.dot(u) / dn + a2 * dn;
  t.rhs2 = -a * v2 - a1 * d2 - (1 - rho) * s2 * s2 + a * u2;
  return t;
}

template <class H>
double apply_K(const KernelModel& m, H&& h, const Vec3& v, const VelocityQuadrature& quad,
               const VelocityRegion& region = VelocityRegion::full()) {
  if (!m.gain) return 0.0;
  return quad.integrate(v, region, [&](const Vec3& u) { return m.k(v, u) * h(u); });
}

// Central difference of the kernel in v with one Richardson step.
inline Vec3 kernel_grad_v(const KernelModel& m, const Vec3& v, const Vec3& u) {
  const double h = 1e-5 * (1 + v.norm());
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = h;
    const double d1 = (m.k(v + e, u) - m.k(v - e, u)) / (2 * h);
    const double d2 = (m.k(v + 0.5 * e, u) - m.k(v - 0.5 * e, u)) / h;
    g[i] = (4 * d2 - d1) / 3;
  }
  return g;
}

template <class H>
Vec3 apply_K_grad(const KernelModel& m, H&& h, const Vec3& v, const VelocityQuadrature& quad,
                  const VelocityRegion& region = VelocityRegion::full()) {
  Vec3 sum = Vec3::Zero();
  if (!m.gain) return sum;
  quad.for_each_node(v, region, [&](const Vec3& u, double w) {
    const double hu = h(u);
    if (hu != 0) sum += (w * hu) * kernel_grad_v(m, v, u);
  });
  return sum;
}

struct EnvelopeSweep {
  double rho;
  double pointwise_max_ratio;  // |k| |v - v*| / E_rho over sampled pairs
  struct Row {
    double speed, mu, a, lhs, rhs, ratio;
  };
  std::vector<Row> integrated;  // (1+|v|) e^{-a|v|^2} ∫ |k|^mu e^{a|v*|^2}
};

// Pointwise bound over the given pairs and integrated bound at the given speeds.
inline EnvelopeSweep envelope_sweep(const KernelModel& m, double rho,
                                    const std::vector<std::pair<Vec3, Vec3>>& pairs,
                                    const std::vector<double>& speeds,
                                    const std::vector<std::pair<double, double>>& mu_a,
                                    const VelocityQuadrature& quad) {
  EnvelopeSweep out;
  out.rho = rho;
  out.pointwise_max_ratio = 0;
  for (const auto& [v, u] : pairs) {
    const double ratio = std::abs(m.k(v, u)) * (v - u).norm() / envelope_E(v, u, rho);
    out.pointwise_max_ratio = std::max(out.pointwise_max_ratio, ratio);
  }
  const Vec3 dir = Vec3(1, 2, 3).normalized();
  for (const auto& [mu, a] : mu_a) {
    if (!(std::abs(a) < mu * (1 - rho) / 2))
      throw std::invalid_argument("weight exponent outside the admissible band");
    for (double s : speeds) {
      const Vec3 v = s * dir;
      const double lhs = quad.integrate(v, VelocityRegion::full(), [&](const Vec3& u) {
        return std::pow(std::abs(m.k(v, u)), mu) * std::exp(a * u.squaredNorm());
      });
      const double rhs = std::exp(a * s * s) / (1 + s);
      out.integrated.push_back({s, mu, a, lhs, rhs, lhs / rhs});
    }
  }
  return out;
}

}  // namespace gkin
