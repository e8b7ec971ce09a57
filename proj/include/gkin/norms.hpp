#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gkin/geometry.hpp"
#include "gkin/parallel.hpp"
#include "gkin/quadrature.hpp"
#include "gkin/random.hpp"

namespace gkin {

class NonIntegrableWeight : public std::domain_error {
 public:
  explicit NonIntegrableWeight(const std::string& what) : std::domain_error(what) {}
};

// Weighted norm (∫ |f|^p e^{pα|v|²})^{1/p}.
struct NormSpec {
  double p = 2;
  double alpha = 0;

  void validate() const {
    if (!(p >= 1)) throw std::invalid_argument("norm exponent p must be >= 1");
    if (!(alpha >= 0)) throw std::invalid_argument("norm weight alpha must be >= 0");
  }
  bool admissible(double rho) const { return alpha < (1 - rho) / 2; }
  // Data decaying like e^{-decay |v|²} are integrable against the weight only for α < decay.
  void require_integrable(double decay) const {
    if (!(alpha < decay)) throw NonIntegrableWeight("weight e^{p alpha |v|^2} not integrable against the data decay");
  }
  double weight(const Vec3& v) const { return std::exp(p * alpha * v.squaredNorm()); }
  double density(double f, const Vec3& v) const { return std::pow(std::abs(f), p) * weight(v); }
};

struct Estimate {
  double value = 0;
  double error = 0;  // standard error (Monte Carlo) or refinement delta (quadrature)
};

// p-th root of an integral estimate with the error propagated to first order.
inline Estimate root_estimate(const Estimate& integral, double p) {
  Estimate out;
  out.value = std::pow(std::max(integral.value, 0.0), 1 / p);
  out.error = out.value > 0 ? integral.error * out.value / (p * integral.value) : integral.error;
  return out;
}

struct WeightedPoint {
  Vec3 x;
  double w;
};

struct WeightedBoundaryPoint {
  BoundaryPoint z;
  double w;
};

// Product rule over Ω: radial x polar x azimuth (ball) or axial x disc (flat cap).
inline std::vector<WeightedPoint> spatial_nodes(const ConvexDomain& d, int n) {
  const GaussRule g(n);
  const int nphi = 2 * n;
  const double dphi = 2 * kPi / nphi;
  std::vector<WeightedPoint> out;
  out.reserve(static_cast<std::size_t>(n) * n * nphi);
  auto ring = [&](double x1, double rho, double w) {
    for (int k = 0; k < nphi; ++k) {
      const double phi = (k + 0.5) * dphi;
      out.push_back({Vec3(x1, rho * std::cos(phi), rho * std::sin(phi)), w * dphi});
    }
  };
  if (d.is_ball()) {
    const double r = d.ball().r;
    for (int i = 0; i < n; ++i) {
      const double s = 0.5 * r * (1 + g.x[i]), ws = 0.5 * r * g.w[i] * s * s;
      for (int j = 0; j < n; ++j) {
        const double t = g.x[j], st = std::sqrt(1 - t * t);
        ring(s * t, s * st, ws * g.w[j]);
      }
    }
    return out;
  }
  const auto& f = d.cap();
  const double lo = -f.a - f.R;
  for (int i = 0; i < n; ++i) {
    const double x1 = 0.5 * lo * (1 - g.x[i]), wx = -0.5 * lo * g.w[i];
    const double rmax = std::sqrt(std::max(0.0, f.R * f.R - (x1 + f.a) * (x1 + f.a)));
    for (int j = 0; j < n; ++j) {
      const double rho = 0.5 * rmax * (1 + g.x[j]);
      ring(x1, rho, wx * 0.5 * rmax * g.w[j] * rho);
    }
  }
  return out;
}

// Spherical product rule over { |v| <= v_max } centred at 0.
inline std::vector<WeightedPoint> velocity_nodes(double v_max, int n) {
  const GaussRule g(n);
  const int nphi = 2 * n;
  const double dphi = 2 * kPi / nphi;
  std::vector<WeightedPoint> out;
  out.reserve(static_cast<std::size_t>(n) * n * nphi);
  for (int i = 0; i < n; ++i) {
    const double s = 0.5 * v_max * (1 + g.x[i]), ws = 0.5 * v_max * g.w[i] * s * s;
    for (int j = 0; j < n; ++j) {
      const double t = g.x[j], st = std::sqrt(1 - t * t);
      for (int k = 0; k < nphi; ++k) {
        const double phi = (k + 0.5) * dphi;
        out.push_back({Vec3(s * t, s * st * std::cos(phi), s * st * std::sin(phi)), ws * g.w[j] * dphi});
      }
    }
  }
  return out;
}

// Surface rule on ∂Ω, piecewise for the flat cap (disc face and spherical part).
inline std::vector<WeightedBoundaryPoint> surface_nodes(const ConvexDomain& d, int n) {
  const GaussRule g(n);
  const int nphi = 2 * n;
  const double dphi = 2 * kPi / nphi;
  std::vector<WeightedBoundaryPoint> out;
  auto sphere_band = [&](const Vec3& c, double R, double tlo, double thi) {
    for (int j = 0; j < n; ++j) {
      const double t = 0.5 * (thi + tlo) + 0.5 * (thi - tlo) * g.x[j];
      const double wt = 0.5 * (thi - tlo) * g.w[j] * R * R;
      const double st = std::sqrt(std::max(0.0, 1 - t * t));
      for (int k = 0; k < nphi; ++k) {
        const double phi = (k + 0.5) * dphi;
        const Vec3 w(t, st * std::cos(phi), st * std::sin(phi));
        out.push_back({{c + R * w, w}, wt * dphi});
      }
    }
  };
  if (d.is_ball()) {
    sphere_band(Vec3::Zero(), d.ball().r, -1, 1);
    return out;
  }
  const auto& f = d.cap();
  sphere_band(Vec3(-f.a, 0, 0), f.R, -1, f.a / f.R);
  const double rf = d.flat_radius();
  for (int i = 0; i < n; ++i) {
    const double rho = 0.5 * rf * (1 + g.x[i]), w = 0.5 * rf * g.w[i] * rho;
    for (int k = 0; k < nphi; ++k) {
      const double phi = (k + 0.5) * dphi;
      out.push_back({{Vec3(0, rho * std::cos(phi), rho * std::sin(phi)), Vec3(1, 0, 0)}, w * dphi});
    }
  }
  return out;
}

inline Vec3 sample_domain(const ConvexDomain& d, BlockRng& rng) {
  Vec3 lo, hi;
  d.bounds(lo, hi);
  for (;;) {
    const Vec3 x(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
    if (d.contains_open(x)) return x;
  }
}

// Area-uniform boundary point.
inline BoundaryPoint sample_surface(const ConvexDomain& d, BlockRng& rng) {
  if (d.is_ball()) {
    const Vec3 w = rng.unit_vector();
    return {d.ball().r * w, w};
  }
  const auto& f = d.cap();
  const double face = kPi * (f.R * f.R - f.a * f.a);
  if (rng.uniform() * d.surface_area() < face) {
    const double rho = d.flat_radius() * std::sqrt(rng.uniform());
    const double phi = 2 * kPi * rng.uniform();
    return {Vec3(0, rho * std::cos(phi), rho * std::sin(phi)), Vec3(1, 0, 0)};
  }
  // cos of the polar angle is uniform on the spherical zone
  const double t = rng.uniform(-1, f.a / f.R);
  const double phi = 2 * kPi * rng.uniform();
  const double st = std::sqrt(std::max(0.0, 1 - t * t));
  const Vec3 w(t, st * std::cos(phi), st * std::sin(phi));
  return {Vec3(-f.a, 0, 0) + f.R * w, w};
}

struct McSpec {
  std::size_t samples = 1 << 17;
  std::size_t block = 4096;
  std::uint64_t seed = 1;
  int workers = 1;
  int shells = 16;  // equal-width |v| strata on [0, v_max]
  double v_max = 8;
};

// Σ_k measure_k · mean_k of draw(rng, k), strata filled round-robin within blocks.
template <class Draw>
Estimate stratified_mc(const McSpec& mc, const std::vector<double>& measure, Draw&& draw) {
  const std::size_t K = measure.size();
  if (K == 0 || mc.samples == 0 || mc.block == 0) throw std::invalid_argument("empty Monte Carlo spec");
  const std::size_t nblocks = (mc.samples + mc.block - 1) / mc.block;
  struct Acc {
    std::vector<double> sum, sq;
    std::vector<std::size_t> n;
  };
  std::vector<Acc> acc(nblocks);
  parallel_for(nblocks, mc.workers, [&](std::size_t b) {
    BlockRng rng(mc.seed, b);
    Acc& a = acc[b];
    a.sum.assign(K, 0);
    a.sq.assign(K, 0);
    a.n.assign(K, 0);
    const std::size_t begin = b * mc.block, end = std::min(mc.samples, begin + mc.block);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t k = i % K;
      const double val = draw(rng, static_cast<int>(k));
      a.sum[k] += val;
      a.sq[k] += val * val;
      ++a.n[k];
    }
  });
  Estimate out;
  double var = 0;
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0, q = 0;
    std::size_t n = 0;
    for (const auto& a : acc) {
      s += a.sum[k];
      q += a.sq[k];
      n += a.n[k];
    }
    if (n == 0) continue;
    const double mean = s / n;
    const double v = n > 1 ? std::max(0.0, (q - n * mean * mean) / (n - 1)) : 0.0;
    out.value += measure[k] * mean;
    var += measure[k] * measure[k] * v / n;
  }
  out.error = std::sqrt(var);
  return out;
}

struct SpeedShells {
  std::vector<double> edges;
  explicit SpeedShells(const McSpec& mc) {
    for (int k = 0; k <= mc.shells; ++k) edges.push_back(mc.v_max * k / mc.shells);
  }
  int size() const { return static_cast<int>(edges.size()) - 1; }
  double volume(int k) const {
    return 4.0 / 3.0 * kPi * (std::pow(edges[k + 1], 3) - std::pow(edges[k], 3));
  }
  // Speed uniform in volume within shell k.
  double speed(int k, BlockRng& rng) const {
    const double a = std::pow(edges[k], 3), b = std::pow(edges[k + 1], 3);
    return std::cbrt(a + (b - a) * rng.uniform());
  }
};

// Monte Carlo ∫_Ω ∫_{|v|<=v_max} F(x, v) dv dx.
template <class F>
Estimate mc_phase_integral(F&& integrand, const ConvexDomain& d, const McSpec& mc) {
  const SpeedShells shells(mc);
  std::vector<double> measure;
  for (int k = 0; k < shells.size(); ++k) measure.push_back(d.volume() * shells.volume(k));
  return stratified_mc(mc, measure, [&](BlockRng& rng, int k) {
    const Vec3 x = sample_domain(d, rng);
    const Vec3 v = shells.speed(k, rng) * rng.unit_vector();
    return integrand(x, v);
  });
}

enum class BoundaryMeasure { plain, incoming };

// Monte Carlo ∫_∂Ω ∫ F(z, v) dv dΣ, with the incoming measure N|v| on {n·v < 0}.
template <class F>
Estimate mc_boundary_integral(F&& integrand, const ConvexDomain& d, BoundaryMeasure m, const McSpec& mc) {
  const SpeedShells shells(mc);
  std::vector<double> measure;
  const double frac = m == BoundaryMeasure::incoming ? 0.5 : 1.0;
  for (int k = 0; k < shells.size(); ++k) measure.push_back(d.surface_area() * shells.volume(k) * frac);
  return stratified_mc(mc, measure, [&](BlockRng& rng, int k) {
    const BoundaryPoint z = sample_surface(d, rng);
    const double s = shells.speed(k, rng);
    if (m == BoundaryMeasure::plain) return integrand(z, Vec3(s * rng.unit_vector()));
    const Vec3 v = s * rng.incoming_direction(z.n);
    return integrand(z, v) * std::abs(z.n.dot(v));
  });
}

template <class F>
Estimate lp_norm_mc(F&& f, const ConvexDomain& d, const NormSpec& spec, const McSpec& mc) {
  spec.validate();
  const auto I = mc_phase_integral(
      [&](const Vec3& x, const Vec3& v) { return spec.density(f(x, v), v); }, d, mc);
  return root_estimate(I, spec.p);
}

template <class H>
Estimate boundary_lp_norm_mc(H&& h, const ConvexDomain& d, const NormSpec& spec, BoundaryMeasure m,
                             const McSpec& mc) {
  spec.validate();
  const auto I = mc_boundary_integral(
      [&](const BoundaryPoint& z, const Vec3& v) { return spec.density(h(z, v), v); }, d, m, mc);
  return root_estimate(I, spec.p);
}

struct GridNormSpec {
  int n_x = 8;
  int n_v = 16;
  double v_max = 8;
};

template <class F>
double phase_quadrature(F&& integrand, const ConvexDomain& d, int n_x, int n_v, double v_max) {
  const auto xs = spatial_nodes(d, n_x);
  const auto vs = velocity_nodes(v_max, n_v);
  double sum = 0;
  for (const auto& x : xs) {
    double inner = 0;
    for (const auto& v : vs) inner += v.w * integrand(x.x, v.x);
    sum += x.w * inner;
  }
  return sum;
}

// Deterministic norm; error is the change against half resolution.
template <class F>
Estimate lp_norm_grid(F&& f, const ConvexDomain& d, const NormSpec& spec, const GridNormSpec& g = {}) {
  spec.validate();
  auto dens = [&](const Vec3& x, const Vec3& v) { return spec.density(f(x, v), v); };
  const double fine = std::pow(phase_quadrature(dens, d, g.n_x, g.n_v, g.v_max), 1 / spec.p);
  const double coarse = std::pow(
      phase_quadrature(dens, d, std::max(1, g.n_x / 2), std::max(1, g.n_v / 2), g.v_max), 1 / spec.p);
  return {fine, std::abs(fine - coarse)};
}

struct BoundaryNormSpec {
  int n_surface = 16;
  VelocityQuadratureSpec quad{8.0, 32, 16, 16, false};
};

template <class H>
double boundary_quadrature(H&& integrand, const ConvexDomain& d, BoundaryMeasure m, int n_surface,
                           const VelocityQuadratureSpec& q) {
  VelocityQuadratureSpec spec = q;
  spec.singular_shift = false;
  const VelocityQuadrature quad(spec);
  double sum = 0;
  for (const auto& zp : surface_nodes(d, n_surface)) {
    const auto region = m == BoundaryMeasure::incoming ? VelocityRegion::incoming(zp.z.n) : VelocityRegion::full();
    const double inner = quad.integrate(Vec3::Zero(), region, [&](const Vec3& v) {
      const double val = integrand(zp.z, v);
      return m == BoundaryMeasure::incoming ? val * std::abs(zp.z.n.dot(v)) : val;
    });
    sum += zp.w * inner;
  }
  return sum;
}

template <class H>
Estimate boundary_lp_norm(H&& h, const ConvexDomain& d, const NormSpec& spec, BoundaryMeasure m,
                          const BoundaryNormSpec& b = {}) {
  spec.validate();
  auto dens = [&](const BoundaryPoint& z, const Vec3& v) { return spec.density(h(z, v), v); };
  auto half = b.quad;
  half.n_r = std::max(2, half.n_r / 2);
  half.n_theta = std::max(2, half.n_theta / 2);
  half.n_phi = std::max(1, half.n_phi / 2);
  const double fine = std::pow(boundary_quadrature(dens, d, m, b.n_surface, b.quad), 1 / spec.p);
  const double coarse = std::pow(boundary_quadrature(dens, d, m, std::max(1, b.n_surface / 2), half), 1 / spec.p);
  return {fine, std::abs(fine - coarse)};
}

}  // namespace gkin
