#pragma once

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gkin/types.hpp"

namespace gkin {

// Gauss-Legendre nodes and weights on [-1, 1], ascending.
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;

  GaussRule() = default;
  explicit GaussRule(int n) {
    if (n < 1) throw std::invalid_argument("Gauss rule order must be positive");
    const auto zeros = boost::math::legendre_p_zeros<double>(n);
    for (auto it = zeros.rbegin(); it != zeros.rend(); ++it) {
      if (*it == 0.0) continue;
      push(-*it, n);
    }
    for (double z : zeros) push(z, n);
  }

  int size() const { return static_cast<int>(x.size()); }

  // Integral of f over [a, b].
  template <class F>
  double integrate(double a, double b, F&& f) const {
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    double sum = 0;
    for (int i = 0; i < size(); ++i) sum += w[i] * f(m + h * x[i]);
    return sum * h;
  }

 private:
  void push(double z, int n) {
    const double dp = boost::math::legendre_p_prime(n, z);
    x.push_back(z);
    w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
  }
};

// Composite Gauss rule on [0, tau] for integrands carrying exp(-nu s).
struct LineQuadrature {
  GaussRule rule{8};
  double panel_rate = 2.0;  // panels per unit of nu * tau
  int min_panels = 1;

  int panels(double tau, double nu) const {
    const double n = std::ceil(panel_rate * nu * tau);
    return std::max(min_panels, static_cast<int>(std::min(n, 1e6)));
  }

  template <class F>
  double integrate(double tau, double nu, F&& f) const {
    const int n = panels(tau, nu);
    const double h = tau / n;
    double sum = 0;
    for (int k = 0; k < n; ++k) sum += rule.integrate(k * h, (k + 1) * h, f);
    return sum;
  }

  // Visit every node s with its weight.
  template <class Visit>
  void for_each_node(double tau, double nu, Visit&& visit) const {
    const int n = panels(tau, nu);
    const double h = tau / n, half = 0.5 * h;
    for (int k = 0; k < n; ++k) {
      const double mid = (k + 0.5) * h;
      for (int i = 0; i < rule.size(); ++i) visit(mid + half * rule.x[i], half * rule.w[i]);
    }
  }
};

struct VelocityQuadratureSpec {
  double v_max = 8.0;
  int n_r = 48;
  int n_theta = 32;
  int n_phi = 32;
  bool singular_shift = true;
};

// Velocity region {|u| <= v_max}, optionally intersected with {u . normal < 0}.
struct VelocityRegion {
  bool half_space = false;
  Vec3 normal = Vec3(1, 0, 0);

  static VelocityRegion full() { return {}; }
  static VelocityRegion incoming(const Vec3& n) { return {true, n.normalized()}; }
};

// Product rule in spherical coordinates around a center; with the singular shift
// the center is the evaluation velocity so that |u - v|^-1 and |u - v|^-2
// singularities are absorbed by the radial Jacobian.
class VelocityQuadrature {
 public:
  VelocityQuadrature() : VelocityQuadrature(VelocityQuadratureSpec{}) {}
  explicit VelocityQuadrature(const VelocityQuadratureSpec& spec)
      : spec_(spec), radial_(spec.n_r) {
    if (spec.v_max <= 0 || spec.n_theta < 2 || spec.n_phi < 1)
      throw std::invalid_argument("invalid velocity quadrature spec");
    const int half = (spec.n_theta + 1) / 2;
    polar_ = GaussRule(half);
  }

  const VelocityQuadratureSpec& spec() const { return spec_; }
  int max_nodes() const { return spec_.n_r * 2 * polar_.size() * spec_.n_phi; }

  // Calls visit(u, weight) for every node inside the region.
  template <class Visit>
  void for_each_node(const Vec3& v, const VelocityRegion& region, Visit&& visit) const {
    const Vec3 c = spec_.singular_shift ? v : Vec3::Zero();
    const Vec3 axis = region.half_space ? region.normal : Vec3(1, 0, 0);
    Vec3 e1, e2;
    orthonormal_frame(axis, e1, e2);
    const double vmax2 = spec_.v_max * spec_.v_max;
    const double c2 = c.squaredNorm();
    const double cn = c.dot(axis);
    const double dphi = 2 * kPi / spec_.n_phi;
    for (int hemi = 0; hemi < 2; ++hemi) {
      for (int it = 0; it < polar_.size(); ++it) {
        // t in [-1, 0] for hemi 0 and [0, 1] for hemi 1
        const double t = hemi == 0 ? 0.5 * (polar_.x[it] - 1) : 0.5 * (polar_.x[it] + 1);
        const double wt = 0.5 * polar_.w[it];
        const double st = std::sqrt(std::max(0.0, 1 - t * t));
        for (int ip = 0; ip < spec_.n_phi; ++ip) {
          const double phi = (ip + 0.5) * dphi;
          const Vec3 w = t * axis + st * (std::cos(phi) * e1 + std::sin(phi) * e2);
          const double cw = c.dot(w);
          const double disc = cw * cw - c2 + vmax2;
          if (disc <= 0) continue;
          const double root = std::sqrt(disc);
          double lo = std::max(0.0, -cw - root);
          double hi = -cw + root;
          if (region.half_space) {
            if (t > 0) {
              hi = std::min(hi, -cn / t);
            } else if (t < 0) {
              lo = std::max(lo, -cn / t);
            } else if (cn >= 0) {
              continue;
            }
          }
          if (hi - lo <= 1e-9 * spec_.v_max) continue;
          const double h = 0.5 * (hi - lo), m = 0.5 * (hi + lo);
          const double wang = wt * dphi;
          for (int ir = 0; ir < radial_.size(); ++ir) {
            const double s = m + h * radial_.x[ir];
            visit(Vec3(c + s * w), radial_.w[ir] * h * s * s * wang);
          }
        }
      }
    }
  }

  template <class F>
  double integrate(const Vec3& v, const VelocityRegion& region, F&& f) const {
    double sum = 0;
    for_each_node(v, region, [&](const Vec3& u, double w) { sum += w * f(u); });
    return sum;
  }

 private:
  VelocityQuadratureSpec spec_;
  GaussRule radial_;
  GaussRule polar_;
};

}  // namespace gkin
