#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gkin/collision.hpp"
#include "gkin/geometry.hpp"
#include "gkin/norms.hpp"
#include "gkin/parallel.hpp"
#include "gkin/transport.hpp"

namespace gkin {

enum class ScanStatus { convergent, divergent, inconclusive };

inline const char* to_string(ScanStatus s) {
  switch (s) {
    case ScanStatus::convergent: return "CONVERGENT";
    case ScanStatus::divergent: return "DIVERGENT";
    default: return "INCONCLUSIVE";
  }
}

struct VerdictRules {
  double rate_min = 0.05;    // |κ| below this is read as logarithmic growth
  double ratio_min = 1.5;    // increment growth factor for power divergence
  int min_refinements = 4;
  double fit_tol = 0.1;
  int tail = 3;              // increment ratios averaged for κ
};

// Outcome of a cutoff-refinement scan V(ε_k).
struct DivergenceVerdict {
  ScanStatus status = ScanStatus::inconclusive;
  std::vector<double> eps;
  std::vector<double> values;
  std::vector<double> reference;  // closed-form values where available
  std::string model;              // "power-tail", "log", "power", "constant"
  double rate = std::numeric_limits<double>::quiet_NaN();  // increments scale like ε^rate
  double limit = std::numeric_limits<double>::quiet_NaN();
  double reference_limit = std::numeric_limits<double>::quiet_NaN();
  double fit_deviation = std::numeric_limits<double>::quiet_NaN();
  double increment_ratio_min = std::numeric_limits<double>::quiet_NaN();
  std::string diagnostics;
};

namespace detail {

// Least squares for V ≈ A + B·basis.
inline double linear_fit_deviation(const std::vector<double>& basis, const std::vector<double>& y, double* slope) {
  const std::size_t n = y.size();
  double sb = 0, sy = 0, sbb = 0, sby = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sb += basis[i];
    sy += y[i];
    sbb += basis[i] * basis[i];
    sby += basis[i] * y[i];
  }
  const double den = n * sbb - sb * sb;
  const double B = den != 0 ? (n * sby - sb * sy) / den : 0.0;
  const double A = (sy - B * sb) / n;
  double dev = 0;
  for (std::size_t i = 0; i < n; ++i)
    dev = std::max(dev, std::abs(y[i] - (A + B * basis[i])) / std::max(std::abs(y[i]), 1e-300));
  if (slope) *slope = B;
  return dev;
}

}  // namespace detail

// Reads the growth law off successive increments of a geometric cutoff sequence.
inline DivergenceVerdict classify_scan(const std::vector<double>& eps, const std::vector<double>& values,
                                       const VerdictRules& rules = {}) {
  DivergenceVerdict out;
  out.eps = eps;
  out.values = values;
  const int n = static_cast<int>(values.size());
  std::ostringstream diag;
  if (n < rules.min_refinements + 2 || static_cast<int>(eps.size()) != n) {
    out.diagnostics = "too few cutoff levels";
    return out;
  }
  std::vector<double> inc(n - 1);
  double scale = 0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(values[i]));
  bool monotone = true, flat = true;
  for (int i = 0; i + 1 < n; ++i) {
    inc[i] = values[i + 1] - values[i];
    if (!(inc[i] > 0)) monotone = false;
    if (std::abs(inc[i]) > 1e-14 * std::max(scale, 1e-300)) flat = false;
  }
  if (flat) {
    out.status = ScanStatus::convergent;
    out.model = "constant";
    out.rate = std::numeric_limits<double>::infinity();
    out.limit = values.back();
    out.fit_deviation = 0;
    out.diagnostics = "values unchanged under refinement";
    return out;
  }
  const double h = eps[n - 1] / eps[n - 2];
  double rate = 0;
  out.increment_ratio_min = std::numeric_limits<double>::infinity();
  int used = 0;
  for (int i = n - 2 - rules.tail; i < n - 2; ++i) {
    if (i < 0) continue;
    if (!(inc[i] > 0 && inc[i + 1] > 0)) {
      diag << "non-positive increment at level " << i << "; ";
      continue;
    }
    rate += std::log(inc[i + 1] / inc[i]) / std::log(h);
    ++used;
  }
  for (int i = n - 1 - rules.min_refinements; i < n - 1; ++i) {
    if (i < 1) continue;
    out.increment_ratio_min = std::min(out.increment_ratio_min, inc[i] / inc[i - 1]);
  }
  if (used == 0) {
    out.diagnostics = diag.str() + "increments change sign, no growth law";
    return out;
  }
  rate /= used;
  out.rate = rate;
  const int m = std::min(n, rules.min_refinements + 2);
  std::vector<double> ys(values.end() - m, values.end()), basis(m);
  if (rate > rules.rate_min) {
    const double q = std::pow(h, rate);
    out.model = "power-tail";
    out.limit = values.back() + inc.back() * q / (1 - q);
    // V_i = L - C ε_i^rate
    for (int i = 0; i < m; ++i) basis[i] = std::pow(eps[n - m + i], rate);
    out.fit_deviation = detail::linear_fit_deviation(basis, ys, nullptr);
    out.status = out.fit_deviation <= rules.fit_tol ? ScanStatus::convergent : ScanStatus::inconclusive;
    diag << "increments decay like eps^" << rate;
  } else if (rate >= -rules.rate_min) {
    out.model = "log";
    for (int i = 0; i < m; ++i) basis[i] = -std::log(eps[n - m + i]);
    double slope = 0;
    out.fit_deviation = detail::linear_fit_deviation(basis, ys, &slope);
    const bool grows = monotone && slope > 0;
    out.status = grows && out.fit_deviation <= rules.fit_tol ? ScanStatus::divergent : ScanStatus::inconclusive;
    diag << "increments constant, |log eps| growth with slope " << slope;
  } else {
    out.model = "power";
    for (int i = 0; i < m; ++i) basis[i] = std::pow(eps[n - m + i], rate);
    out.fit_deviation = detail::linear_fit_deviation(basis, ys, nullptr);
    const bool ratio_ok = out.increment_ratio_min >= rules.ratio_min;
    out.status = monotone && (ratio_ok || out.fit_deviation <= rules.fit_tol) ? ScanStatus::divergent
                                                                             : ScanStatus::inconclusive;
    diag << "values grow like eps^" << rate;
  }
  if (!monotone && out.status != ScanStatus::convergent) diag << "; not monotone";
  out.diagnostics = diag.str();
  return out;
}

// ---------------------------------------------------------------------------
// Grazing integrals ∫ |∇_xτ|^p |v|^b e^{-ap|v|²} over {N(q, v) >= ε}.

struct GrazingSpec {
  double p = 2;
  double a = 1;
  double b = 1;
  double r1 = 0.5;  // flat patch radius; the flat scan uses the footpoint disc of radius r1/4
};

struct GrazingResolution {
  int n_z = 6;
  int n_rho = 32;
  int n_phi = 16;
  int t_order = 8;
};

namespace detail {

inline void check_grazing(const GrazingSpec& s) {
  if (!(s.p >= 1 && s.a > 0 && s.b >= 0)) throw std::invalid_argument("grazing integral needs p >= 1, a > 0, b >= 0");
}

// ∫_ε^1 t^{c}dt moved to the q = c + 1 form: (1 - ε^q)/q, or -log ε at q = 0.
inline double power_integral(double q, double eps) {
  if (std::abs(q) < 1e-12) return -std::log(eps);
  return (1 - std::pow(eps, q)) / q;
}

inline Vec3 incoming_dir(const Vec3& n, const Vec3& e1, const Vec3& e2, double t, double phi) {
  const double st = std::sqrt(std::max(0.0, 1 - t * t));
  return -t * n + st * (std::cos(phi) * e1 + std::sin(phi) * e2);
}

// Breakpoints 1, 1/2, ..., down to eps (last panel possibly partial).
inline std::vector<double> octave_breaks(double top, double eps) {
  std::vector<double> b{top};
  while (b.back() * 0.5 > eps * (1 + 1e-12)) b.push_back(b.back() * 0.5);
  b.push_back(eps);
  return b;
}

}  // namespace detail

// Closed form. Ball: whole phase space. Flat cap: footpoint in the r1/4 disc, τ <= 1, |v| < r1/2.
inline double grazing_integral_reduced(const ConvexDomain& d, const GrazingSpec& s, double eps) {
  detail::check_grazing(s);
  const double ap = s.a * s.p;
  if (d.is_ball()) {
    const double r = d.ball().r;
    const double c = 3 + s.b - s.p;
    if (!(c > 0)) return std::numeric_limits<double>::infinity();
    const double radial = std::tgamma(c / 2) / (2 * std::pow(ap, c / 2));
    return 2 * r * d.surface_area() * 2 * kPi * detail::power_integral(3 - s.p, eps) * radial;
  }
  const double r2 = s.r1 / 2, rq = s.r1 / 4;
  const double c = 4 + s.b - s.p;
  if (!(c > 0)) return std::numeric_limits<double>::infinity();
  const double radial = boost::math::tgamma_lower(c / 2, ap * r2 * r2) / (2 * std::pow(ap, c / 2));
  return kPi * rq * rq * 2 * kPi * detail::power_integral(2 - s.p, eps) * radial;
}

// ε -> 0 limit of the closed form; infinite at and beyond the threshold.
inline double grazing_reduced_limit(const ConvexDomain& d, const GrazingSpec& s) {
  const double q = d.is_ball() ? 3 - s.p : 2 - s.p;
  if (q <= 0) return std::numeric_limits<double>::infinity();
  return grazing_integral_reduced(d, s, 0.0);
}

// Direct quadrature over boundary footpoints and incoming velocities with chords from
// the exit-time solver; returns the integral over each t-panel between breakpoints.
inline std::vector<double> grazing_panels(const ConvexDomain& d, const GrazingSpec& s,
                                          const std::vector<double>& breaks, const GrazingResolution& res) {
  detail::check_grazing(s);
  const GaussRule gz(res.n_z), gr(res.n_rho), gt(res.t_order);
  const double ap = s.a * s.p;
  const bool flat = d.is_flat_cap();
  const double rho_max = flat ? s.r1 / 2 : std::sqrt(46.0 / ap);
  std::vector<double> panels(breaks.size() - 1, 0.0);

  struct Z {
    BoundaryPoint z;
    double w;
  };
  std::vector<Z> zs;
  if (flat) {
    const double rq = s.r1 / 4;
    for (int i = 0; i < gz.size(); ++i) {
      const double rho = 0.5 * rq * (1 + gz.x[i]);
      zs.push_back({{Vec3(0, rho, 0), Vec3(1, 0, 0)}, 2 * kPi * rho * 0.5 * rq * gz.w[i]});
    }
  } else {
    const double r = d.ball().r;
    for (int i = 0; i < gz.size(); ++i) {
      const double c = gz.x[i], sn = std::sqrt(1 - c * c);
      const Vec3 w(c, sn, 0);
      zs.push_back({{r * w, w}, 2 * kPi * r * r * gz.w[i]});
    }
  }
  const double dphi = 2 * kPi / res.n_phi;
  for (const auto& zp : zs) {
    Vec3 e1, e2;
    orthonormal_frame(zp.z.n, e1, e2);
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
      const double s0 = std::log(breaks[j + 1]), s1 = std::log(breaks[j]);
      double panel = 0;
      for (int it = 0; it < gt.size(); ++it) {
        const double lt = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * gt.x[it];
        const double t = std::exp(lt);
        const double wt = 0.5 * (s1 - s0) * gt.w[it] * t;
        for (int ip = 0; ip < res.n_phi; ++ip) {
          const Vec3 w = detail::incoming_dir(zp.z.n, e1, e2, t, (ip + 0.5) * dphi);
          for (int ir = 0; ir < gr.size(); ++ir) {
            const double u = 0.5 * (1 + gr.x[ir]);
            const double rho = rho_max * u * u;
            const double wr = 0.5 * gr.w[ir] * 2 * rho_max * u;
            const Vec3 v = rho * w;
            double chord = d.exit_time(zp.z.z, -v);
            if (flat) chord = std::min(chord, 1.0);
            const double g = std::pow(t * rho, 1 - s.p) * std::pow(rho, s.b) * std::exp(-ap * rho * rho);
            panel += wt * dphi * wr * rho * rho * g * chord;
          }
        }
      }
      panels[j] += zp.w * panel;
    }
  }
  return panels;
}

inline double grazing_integral(const ConvexDomain& d, const GrazingSpec& s, double eps,
                               const GrazingResolution& res = {}) {
  double sum = 0;
  for (double p : grazing_panels(d, s, detail::octave_breaks(1.0, eps), res)) sum += p;
  return sum;
}

struct ScanSpec {
  int k_min = 4;
  int k_max = 14;
  VerdictRules rules;
};

inline std::vector<double> cutoff_sequence(const ScanSpec& sc) {
  std::vector<double> eps;
  for (int k = sc.k_min; k <= sc.k_max; ++k) eps.push_back(std::ldexp(1.0, -k));
  return eps;
}

// Values at ε_k = 2^{-k} by cumulative octave panels, then the growth verdict.
inline DivergenceVerdict divergence_scan(const ConvexDomain& d, const GrazingSpec& s, const ScanSpec& sc = {},
                                         const GrazingResolution& res = {}) {
  const auto eps = cutoff_sequence(sc);
  const auto panels = grazing_panels(d, s, detail::octave_breaks(1.0, eps.back()), res);
  std::vector<double> values;
  double cum = 0;
  for (int k = 1; k <= sc.k_max; ++k) {
    cum += panels[k - 1];
    if (k >= sc.k_min) values.push_back(cum);
  }
  auto out = classify_scan(eps, values, sc.rules);
  for (double e : eps) out.reference.push_back(grazing_integral_reduced(d, s, e));
  out.reference_limit = grazing_reduced_limit(d, s);
  return out;
}

// ---------------------------------------------------------------------------
// ∫ |∇_x Jg|^p e^{pα|v|²} over {N(q, v) >= ε} for the two cutoff data.

enum class JgTerm { total, transport, data };

struct W1pSpec {
  ScanSpec scan;
  int n_z = 8;       // per support panel
  int rho_order = 3;  // Gauss order per octave of |v|
  int rho_octaves = 30;
  int n_phi = 16;
  int t_order = 8;
  double v_max = 8;
  JgTerm term = JgTerm::total;
  bool probe_region_only = false;  // footpoints where the profile is identically 1
  int workers = 1;
};

inline std::vector<DivergenceVerdict> w1p_of_Jg_scans(const ConvexDomain& d, const KernelModel& m,
                                                      const BoundaryData& g, const std::vector<NormSpec>& specs,
                                                      const W1pSpec& ws = {}) {
  for (const auto& s : specs) {
    s.validate();
    s.require_integrable(0.5);
  }
  struct Z {
    BoundaryPoint z;
    double w;
  };
  std::vector<Z> zs;
  const GaussRule gz(ws.n_z), gt(ws.t_order);
  // |v| nodes: octaves in log|v| down to v_max 2^{-octaves}, then a u² panel at the origin
  std::vector<std::pair<double, double>> speeds;
  {
    const GaussRule gr(ws.rho_order);
    double hi = ws.v_max;
    for (int o = 0; o < ws.rho_octaves; ++o, hi *= 0.5) {
      const double l0 = std::log(0.5 * hi), l1 = std::log(hi);
      for (int i = 0; i < gr.size(); ++i) {
        const double rho = std::exp(0.5 * (l0 + l1) + 0.5 * (l1 - l0) * gr.x[i]);
        speeds.push_back({rho, 0.5 * (l1 - l0) * gr.w[i] * rho});
      }
    }
    for (int i = 0; i < gr.size(); ++i) {
      const double u = 0.5 * (1 + gr.x[i]);
      speeds.push_back({hi * u * u, 0.5 * gr.w[i] * 2 * hi * u});
    }
  }
  auto add_panel = [&](double lo, double hi, auto&& make) {
    for (int i = 0; i < gz.size(); ++i) {
      const double s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gz.x[i];
      make(s, 0.5 * (hi - lo) * gz.w[i]);
    }
  };
  if (g.is_flat()) {
    if (!d.is_flat_cap()) throw std::invalid_argument("flat cutoff data needs a flat cap domain");
    const double q = g.flat().r1 / 4;
    auto make = [&](double rho, double w) { zs.push_back({{Vec3(0, rho, 0), Vec3(1, 0, 0)}, 2 * kPi * rho * w}); };
    add_panel(0, q, make);
    if (!ws.probe_region_only) add_panel(q, 2 * q, make);
  } else if (g.is_cap()) {
    if (!d.is_ball()) throw std::invalid_argument("cap cutoff data needs a ball domain");
    const double r = d.ball().r;
    auto make = [&](double th, double w) {
      const Vec3 n(std::cos(th), std::sin(th), 0);
      zs.push_back({{r * n, n}, 2 * kPi * r * r * std::sin(th) * w});
    };
    add_panel(0, g.cap().theta1, make);
    if (!ws.probe_region_only) add_panel(g.cap().theta1, g.cap().theta2, make);
  } else {
    throw std::invalid_argument("gradient scan needs flat or cap cutoff data");
  }

  const auto eps = cutoff_sequence(ws.scan);
  const auto breaks = detail::octave_breaks(1.0, eps.back());
  const std::size_t np = breaks.size() - 1, ns = specs.size();
  // panel sums per footpoint, reduced in footpoint order
  std::vector<std::vector<double>> acc(zs.size(), std::vector<double>(np * ns, 0.0));
  const double dphi = 2 * kPi / ws.n_phi;
  parallel_for(zs.size(), ws.workers, [&](std::size_t iz) {
    const auto& zp = zs[iz];
    Vec3 e1, e2;
    orthonormal_frame(zp.z.n, e1, e2);
    auto& a = acc[iz];
    for (std::size_t j = 0; j < np; ++j) {
      const double s0 = std::log(breaks[j + 1]), s1 = std::log(breaks[j]);
      for (int it = 0; it < gt.size(); ++it) {
        const double t = std::exp(0.5 * (s0 + s1) + 0.5 * (s1 - s0) * gt.x[it]);
        const double wt = 0.5 * (s1 - s0) * gt.w[it] * t;
        for (int ip = 0; ip < ws.n_phi; ++ip) {
          const Vec3 w = detail::incoming_dir(zp.z.n, e1, e2, t, (ip + 0.5) * dphi);
          for (const auto& [rho, wr] : speeds) {
            const Vec3 v = rho * w;
            const double gq = g(zp.z, v);
            const Vec3 G = g.tangential_gradient(d, zp.z, v);
            if (gq == 0 && G.squaredNorm() == 0) continue;
            const double nu = m.nu(rho);
            const Vec3 dx = -zp.z.n / (t * rho);
            Vec3 A = Vec3::Zero();
            if (ws.term != JgTerm::data) A += -nu * gq * dx;
            if (ws.term != JgTerm::transport) A += G - dx * v.dot(G);
            const double an = A.norm();
            const double chord = d.exit_time(zp.z.z, -v);
            const double base = zp.w * wt * dphi * wr * rho * rho * t * rho;
            for (std::size_t k = 0; k < ns; ++k) {
              const double p = specs[k].p;
              const double along = -std::expm1(-p * nu * chord) / (p * nu);
              a[j * ns + k] += base * std::pow(an, p) * specs[k].weight(v) * along;
            }
          }
        }
      }
    }
  });
  std::vector<DivergenceVerdict> out;
  for (std::size_t k = 0; k < ns; ++k) {
    std::vector<double> values;
    double cum = 0;
    for (std::size_t j = 0; j < np; ++j) {
      for (const auto& a : acc) cum += a[j * ns + k];
      const int level = static_cast<int>(j) + 1;
      if (level >= ws.scan.k_min) values.push_back(cum);
    }
    out.push_back(classify_scan(eps, values, ws.scan.rules));
  }
  return out;
}

inline DivergenceVerdict w1p_of_Jg_scan(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                        const NormSpec& spec, const W1pSpec& ws = {}) {
  return w1p_of_Jg_scans(d, m, g, {spec}, ws).front();
}

// ---------------------------------------------------------------------------
// 2π ∫_ε^{r0/2r} ∫_{ℓ}^{r0} dρ/ρ dt/t on a ball, ℓ the unit-speed chord from the boundary.

struct LogDivergenceRow {
  double eps, numeric, closed;
};

inline std::vector<LogDivergenceRow> log_divergence_check(double r, double r0, const std::vector<double>& eps,
                                                          int order = 8, int n_phi = 8) {
  if (!(r > 0 && r0 > 0)) throw std::invalid_argument("log divergence check needs r, r0 > 0");
  const ConvexDomain ball(Ball{r});
  const BoundaryPoint z{Vec3(r, 0, 0), Vec3(1, 0, 0)};
  Vec3 e1, e2;
  orthonormal_frame(z.n, e1, e2);
  const GaussRule g(order);
  const double top = r0 / (2 * r);
  const double dphi = 2 * kPi / n_phi;
  std::vector<LogDivergenceRow> out;
  for (double e : eps) {
    if (!(e > 0 && e < top)) throw std::invalid_argument("cutoff outside (0, r0/2r)");
    const auto breaks = detail::octave_breaks(top, e);
    double sum = 0;
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
      const double s0 = std::log(breaks[j + 1]), s1 = std::log(breaks[j]);
      for (int it = 0; it < g.size(); ++it) {
        const double t = std::exp(0.5 * (s0 + s1) + 0.5 * (s1 - s0) * g.x[it]);
        const double wt = 0.5 * (s1 - s0) * g.w[it];  // dt / t
        for (int ip = 0; ip < n_phi; ++ip) {
          const Vec3 w = detail::incoming_dir(z.n, e1, e2, t, (ip + 0.5) * dphi);
          // τ(z, -ρω) <= 1 exactly when ρ is at least the unit-speed chord time
          const double lo = ball.exit_time(z.z, -w);
          if (lo >= r0) continue;
          const double l0 = std::log(lo), l1 = std::log(r0);
          const double inner = g.integrate(l0, l1, [](double) { return 1.0; });
          sum += wt * dphi * inner;
        }
      }
    }
    const double L = std::log(r0 / (2 * r * e));
    out.push_back({e, sum, kPi * L * L});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gap ν(v)M(v) - ∫_{u·n<0} k(v,u) M(u) du on |v| <= r0.

inline double eta_gap(const KernelModel& m, const Vec3& v, const Vec3& n, const VelocityQuadrature& quad) {
  const double gain = apply_K(m, [](const Vec3& u) { return maxwellian(u); }, v, quad, VelocityRegion::incoming(n));
  return m.nu(v) * maxwellian(v) - gain;
}

// Half-space gain at v = 0 by adaptive Gauss-Kronrod on the radial profile.
inline double half_space_gain_at_rest(const KernelModel& m) {
  auto f = [&](double s) {
    if (s == 0) return 0.0;
    return m.k(Vec3::Zero(), Vec3(s, 0, 0)) * std::exp(-0.5 * s * s) * s * s;
  };
  const double radial = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-14);
  return 2 * kPi * radial;
}

struct EtaGapSpec {
  double r0 = 0.5;
  int n_speed = 21;
  int n_angle = 17;
  VelocityQuadratureSpec quad{};
  Vec3 normal = Vec3(1, 0, 0);
  int workers = 1;
};

struct EtaGapResult {
  double limit = 0;        // gap at v = 0
  double limit_error = 0;  // coarse-fine quadrature difference at v = 0
  double min_gap = 0;
  Vec3 argmin = Vec3::Zero();
  double quad_error = 0;   // max coarse-fine difference over the grid
  double lipschitz = 0;
  double covering = 0;     // grid covering radius in velocity
  double certified = 0;    // min_gap - quad_error - lipschitz * covering
  struct Row {
    double speed, cos_angle, gap, error;
  };
  std::vector<Row> rows;
};

inline EtaGapResult eta_gap_scan(const KernelModel& m, const EtaGapSpec& s = {}) {
  if (!(s.r0 > 0 && s.n_speed >= 2 && s.n_angle >= 2)) throw std::invalid_argument("invalid eta-gap grid");
  const Vec3 n = s.normal.normalized();
  Vec3 e1, e2;
  orthonormal_frame(n, e1, e2);
  const VelocityQuadrature coarse(s.quad);
  VelocityQuadratureSpec fs = s.quad;
  fs.n_r = fs.n_r * 3 / 2;
  fs.n_theta = fs.n_theta * 3 / 2;
  fs.n_phi = fs.n_phi * 3 / 2;
  const VelocityQuadrature fine(fs);
  auto node = [&](int i, int j) {
    const double sp = s.r0 * i / (s.n_speed - 1);
    const double psi = kPi * j / (s.n_angle - 1);
    const double c = std::cos(psi), sn = std::sin(psi);
    return Vec3(sp * (c * n + sn * e1));
  };
  const std::size_t total = static_cast<std::size_t>(s.n_speed) * s.n_angle;
  std::vector<double> gap(total), err(total);
  parallel_for(total, s.workers, [&](std::size_t idx) {
    const int i = static_cast<int>(idx) / s.n_angle, j = static_cast<int>(idx) % s.n_angle;
    if (i == 0 && j > 0) return;  // v = 0 computed once
    const Vec3 v = node(i, j);
    const double a = eta_gap(m, v, n, coarse), b = eta_gap(m, v, n, fine);
    gap[idx] = b;
    err[idx] = std::abs(a - b);
  });
  for (int j = 1; j < s.n_angle; ++j) {
    gap[j] = gap[0];
    err[j] = err[0];
  }
  EtaGapResult out;
  out.limit = gap[0];
  out.limit_error = err[0];
  out.min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s.n_speed; ++i) {
    for (int j = 0; j < s.n_angle; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * s.n_angle + j;
      const Vec3 v = node(i, j);
      out.rows.push_back({v.norm(), std::cos(kPi * j / (s.n_angle - 1)), gap[idx], err[idx]});
      out.quad_error = std::max(out.quad_error, err[idx]);
      if (gap[idx] < out.min_gap) {
        out.min_gap = gap[idx];
        out.argmin = v;
      }
      auto pair = [&](int i2, int j2) {
        if (i2 >= s.n_speed || j2 >= s.n_angle) return;
        const Vec3 w = node(i2, j2);
        const double dist = (v - w).norm();
        if (dist == 0) return;
        const double dg = std::abs(gap[static_cast<std::size_t>(i2) * s.n_angle + j2] - gap[idx]);
        out.lipschitz = std::max(out.lipschitz, dg / dist);
        out.covering = std::max(out.covering, 0.5 * std::sqrt(2.0) * dist);
      };
      pair(i + 1, j);
      pair(i, j + 1);
    }
  }
  out.certified = out.min_gap - out.quad_error - out.lipschitz * out.covering;
  return out;
}

}  // namespace gkin
