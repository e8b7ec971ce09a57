#pragma once

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gkin/analysis.hpp"
#include "gkin/solver.hpp"

namespace gkin {

// Numeric claim with its acceptance rule.
struct Claim {
  std::string tag;
  std::string relation;  // near: |measured - target| <= tolerance; le: measured <= target; ge: measured >= target
  double measured = 0;
  double target = 0;
  double tolerance = 0;
  bool pass = false;
};

inline Claim claim_near(std::string tag, double measured, double target, double tol) {
  return {std::move(tag), "near", measured, target, tol, std::abs(measured - target) <= tol};
}
inline Claim claim_le(std::string tag, double measured, double bound) {
  return {std::move(tag), "le", measured, bound, 0.0, measured <= bound};
}
inline Claim claim_ge(std::string tag, double measured, double bound) {
  return {std::move(tag), "ge", measured, bound, 0.0, measured >= bound};
}

inline bool all_pass(const std::vector<Claim>& cs) {
  return std::all_of(cs.begin(), cs.end(), [](const Claim& c) { return c.pass; });
}

namespace detail {

inline Vec3 random_velocity(BlockRng& rng, double scale) {
  return scale * std::cbrt(rng.uniform()) * rng.unit_vector();
}

// Least-squares slope of log y against log x.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Collision constants and kernel checks.

struct KernelCheckSpec {
  int identity_samples = 10000;
  int invariant_samples = 6;
  int envelope_pairs = 10000;
  double rho = 0.5;
  std::uint64_t seed = 1;
  VelocityQuadratureSpec quad{};
};

struct KernelCheckResult {
  double nu_zero = 0;
  double half_gain = 0;        // adaptive radial quadrature at v = 0
  double half_gain_grid = 0;   // product velocity quadrature at v = 0
  double gap_at_rest = 0;      // ν(0) - half-space gain
  double identity_worst = 0;   // relative, over random inputs
  double invariant_worst = 0;  // |K(φM) - νφM| for φ ∈ {1, v_2, |v|²}
  double envelope_pointwise = 0;
  double envelope_fit = 0;     // max (1+|v|)∫|k| over |v| <= 4
  double envelope_far = 0;     // max of the same at |v| ∈ {8, 16, 32}
};

inline double identity_sweep(int n, std::uint64_t seed) {
  BlockRng rng(seed, 0);
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 v = detail::random_velocity(rng, 4), u = detail::random_velocity(rng, 4);
    const double a = rng.uniform(-1, 1), rho = rng.uniform(0.01, 0.99);
    const auto t = identity_check(v, u, a, rho);
    const double scale = 1 + std::abs(t.lhs);
    worst = std::max({worst, std::abs(t.lhs - t.rhs1) / scale, std::abs(t.lhs - t.rhs2) / scale});
  }
  return worst;
}

inline KernelCheckResult kernel_check(const KernelModel& m, const KernelCheckSpec& s = {}) {
  KernelCheckResult r;
  const VelocityQuadrature q(s.quad);
  r.nu_zero = m.nu(Vec3::Zero());
  r.half_gain = half_space_gain_at_rest(m);
  r.half_gain_grid = apply_K(m, maxwellian, Vec3::Zero(), q, VelocityRegion::incoming(Vec3(1, 0, 0)));
  r.gap_at_rest = r.nu_zero - r.half_gain;
  r.identity_worst = identity_sweep(s.identity_samples, s.seed);
  BlockRng rng(s.seed, 1);
  for (int i = 0; i < s.invariant_samples; ++i) {
    const Vec3 v = detail::random_velocity(rng, 2);
    const double M = maxwellian(v), n = m.nu(v);
    r.invariant_worst = std::max({r.invariant_worst, std::abs(apply_K(m, maxwellian, v, q) - n * M),
                                  std::abs(apply_K(m, [](const Vec3& u) { return u.y() * maxwellian(u); }, v, q) -
                                           n * v.y() * M),
                                  std::abs(apply_K(m, [](const Vec3& u) { return u.squaredNorm() * maxwellian(u); },
                                                   v, q) -
                                           n * v.squaredNorm() * M)});
  }
  std::vector<std::pair<Vec3, Vec3>> pairs;
  for (int i = 0; i < s.envelope_pairs; ++i)
    pairs.emplace_back(detail::random_velocity(rng, 4), detail::random_velocity(rng, 4));
  r.envelope_pointwise = envelope_sweep(m, s.rho, pairs, {}, {}, q).pointwise_max_ratio;
  const VelocityQuadrature wide({64.0, 64, 32, 32, true});
  for (const auto& row : envelope_sweep(m, s.rho, {}, {0, 1, 2, 3, 4}, {{1.0, 0.0}}, wide).integrated)
    r.envelope_fit = std::max(r.envelope_fit, row.ratio);
  for (const auto& row : envelope_sweep(m, s.rho, {}, {8, 16, 32}, {{1.0, 0.0}}, wide).integrated)
    r.envelope_far = std::max(r.envelope_far, row.ratio);
  return r;
}

inline std::vector<Claim> kernel_claims(const KernelCheckResult& r) {
  return {claim_near("nu-at-zero", r.nu_zero, std::pow(2.0, -0.5), 1e-10),
          claim_near("half-space-gain-at-rest", r.half_gain, std::pow(2.0, -1.5), 1e-4),
          claim_near("half-space-gain-at-rest-grid", r.half_gain_grid, std::pow(2.0, -1.5), 1e-4),
          claim_near("gap-at-rest", r.gap_at_rest, std::pow(2.0, -1.5), 1e-4),
          claim_le("exponent-identity-relative-error", r.identity_worst, 1e-12),
          claim_le("collision-invariants-error", r.invariant_worst, 1e-8),
          claim_le("envelope-pointwise-ratio-finite", r.envelope_pointwise, 1e300),
          claim_le("integrated-kernel-decay", r.envelope_far, r.envelope_fit)};
}

// ---------------------------------------------------------------------------
// Exit-time and chord oracles.

struct GeometryCheckResult {
  double tau_worst = 0;     // max |τ - τ_bisect| |v| / diam
  double circle_worst = 0;  // ball: max | |z - q(z,-v)| - 2rN |
  double chord_ratio_small = 0, chord_ratio_tiny = 0;  // flat face: chord/N at N = 1e-3, 1e-6
  int samples = 0;
};

inline GeometryCheckResult geometry_check(const ConvexDomain& d, int n = 10000, std::uint64_t seed = 1) {
  GeometryCheckResult r;
  r.samples = n;
  BlockRng rng(seed, 0);
  for (int i = 0; i < n; ++i) {
    const Vec3 x = sample_domain(d, rng);
    const Vec3 v = detail::random_velocity(rng, 4);
    if (v.squaredNorm() == 0) continue;
    r.tau_worst = std::max(r.tau_worst, std::abs(d.exit_time(x, v) - d.exit_time_bisect(x, v)) * v.norm() / d.diam());
  }
  if (d.is_ball()) {
    const double rad = d.ball().r;
    for (int i = 0; i < n; ++i) {
      const Vec3 z = rad * rng.unit_vector();
      const Vec3 v = std::sqrt(rng.uniform()) * 3 * rng.incoming_direction(z.normalized());
      const double N = grazing_factor(d, z, v);
      if (N < 1e-6) continue;
      const auto q = d.footpoint(z, -v);
      r.circle_worst = std::max(r.circle_worst, std::abs((z - q.z).norm() - 2 * rad * N));
    }
  } else {
    const Vec3 z(0, 0.05 * d.flat_radius(), 0);
    auto ratio = [&](double N) {
      const Vec3 v(-N, std::sqrt(1 - N * N), 0);
      return (z - d.footpoint(z, -v).z).norm() / N;
    };
    r.chord_ratio_small = ratio(1e-3);
    r.chord_ratio_tiny = ratio(1e-6);
  }
  return r;
}

inline std::vector<Claim> geometry_claims(const ConvexDomain& d, const GeometryCheckResult& r) {
  std::vector<Claim> out{claim_le("exit-time-closed-form-vs-bisection", r.tau_worst, 1e-9)};
  if (d.is_ball()) {
    out.push_back(claim_le("ball-chord-equals-2rN", r.circle_worst, 1e-10));
  } else {
    out.push_back(claim_ge("flat-chord-ratio-growth", r.chord_ratio_tiny / r.chord_ratio_small, 100));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norm bounds for J and S on random test functions.

// φ(x) P(v) e^{-c|v|²} with random smooth factors.
struct RandomTestFunction {
  Vec3 wave;
  double phase = 0, amp = 0;
  Vec3 lin;
  double quad = 0;
  double c = 0.5;

  static RandomTestFunction draw(BlockRng& rng, double diam) {
    RandomTestFunction f;
    f.wave = (kPi / diam) * rng.uniform(0.5, 2.0) * rng.unit_vector();
    f.phase = rng.uniform(0, 2 * kPi);
    f.amp = rng.uniform(0, 0.9);
    f.lin = 0.5 * rng.uniform() * rng.unit_vector();
    f.quad = rng.uniform(0, 0.2);
    f.c = rng.uniform(0.3, 0.8);
    return f;
  }
  double operator()(const Vec3& x, const Vec3& v) const {
    return (1 + amp * std::cos(wave.dot(x) + phase)) * (1 + lin.dot(v) + quad * v.squaredNorm()) *
           std::exp(-c * v.squaredNorm());
  }
};

struct OperatorNormSpec {
  int functions = 20;
  std::vector<NormSpec> norms = {{1, 0}, {1, 0.1}, {2, 0}, {2, 0.1}, {3, 0}, {3, 0.1}};
  McSpec mc{1 << 14, 4096, 11, 1, 16, 8.0};
  LineQuadrature line;
};

struct NormRatioRow {
  int function;
  NormSpec norm;
  double ratio, error, bound;
};

struct OperatorNormResult {
  double nu0 = 0;
  std::vector<NormRatioRow> j_rows, s_rows;
  int violations = 0;             // ratio - 3σ above the bound
  double worst_j = 0, worst_s = 0;  // max (ratio - 3σ) / bound
};

inline Estimate ratio_estimate(const Estimate& a, const Estimate& b) {
  Estimate r;
  r.value = a.value / b.value;
  r.error = r.value * std::hypot(a.error / a.value, b.error / b.value);
  return r;
}

inline OperatorNormResult operator_norm_bounds(const ConvexDomain& d, const KernelModel& m,
                                               const OperatorNormSpec& s = {}) {
  OperatorNormResult out;
  out.nu0 = m.nu0;
  BlockRng rng(s.mc.seed, 1u << 20);
  std::vector<RandomTestFunction> fs;
  for (int i = 0; i < s.functions; ++i) fs.push_back(RandomTestFunction::draw(rng, d.diam()));
  for (int i = 0; i < s.functions; ++i) {
    const auto& f = fs[i];
    auto g = [&](const BoundaryPoint& z, const Vec3& v) { return f(z.z, v); };
    auto Jg = [&](const Vec3& x, const Vec3& v) { return apply_J(d, m, g, x, v); };
    auto Sf = [&](const Vec3& x, const Vec3& v) {
      return apply_S(d, m, [&](const Vec3& y, const Vec3& u) { return f(y, u); }, x, v, s.line);
    };
    for (const auto& n : s.norms) {
      McSpec mc = s.mc;
      mc.seed = s.mc.seed + 1000 * i;
      const auto jn = lp_norm_mc(Jg, d, n, mc);
      const auto gn = boundary_lp_norm_mc(g, d, n, BoundaryMeasure::incoming, mc);
      const auto sn = lp_norm_mc(Sf, d, n, mc);
      const auto fn = lp_norm_mc(f, d, n, mc);
      const auto rj = ratio_estimate(jn, gn), rs = ratio_estimate(sn, fn);
      const double bj = std::pow(n.p * out.nu0, -1 / n.p), bs = 1 / out.nu0;
      out.j_rows.push_back({i, n, rj.value, rj.error, bj});
      out.s_rows.push_back({i, n, rs.value, rs.error, bs});
      const double mj = (rj.value - 3 * rj.error) / bj, ms = (rs.value - 3 * rs.error) / bs;
      out.worst_j = std::max(out.worst_j, mj);
      out.worst_s = std::max(out.worst_s, ms);
      out.violations += (mj > 1) + (ms > 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contraction of S K with the domain size, on the Maxwellian input.

struct ContractionSpec {
  std::vector<double> radii = {0.4, 0.2, 0.1, 0.05};
  GridNormSpec grid{8, 16, 8.0};
  VelocityQuadratureSpec quad{};
  LineQuadrature line;
  int spline_nodes = 257;
  std::vector<double> probe_speeds = {0.0, 0.5, 1.0, 2.0};
  std::vector<double> probe_radii = {0.0, 0.5, 0.9};  // in units of r
  int workers = 1;
};

struct ContractionRow {
  double r, diam;
  double ratio, ratio_error;  // ‖S K h‖_1 / ‖h‖_1
  double second;              // sup |K S K h| / sup |h|
};

struct ContractionResult {
  std::vector<ContractionRow> rows;
  double slope = 0;           // log-log slope of ratio against diam
  bool monotone = true;       // ratio decreases with r
  double second_constant = 0; // second / diam at the largest radius
  double second_check = 0;    // (second / diam) at the smallest radius over the constant
};

inline ContractionResult contraction_scaling(const KernelModel& m, const ContractionSpec& s = {}) {
  const VelocityQuadrature q(s.quad);
  // K M is radial: tabulate it on [0, v_max]
  const double vmax = s.quad.v_max;
  const double h = vmax / (s.spline_nodes - 1);
  std::vector<double> table(s.spline_nodes);
  parallel_for(table.size(), s.workers, [&](std::size_t i) {
    table[i] = apply_K(m, maxwellian, Vec3(h * i, 0, 0), q);
  });
  const boost::math::interpolators::cardinal_cubic_b_spline<double> kh(table.begin(), table.end(), 0.0, h);
  auto Kh = [&](const Vec3& u) {
    const double su = u.norm();
    return su > vmax ? 0.0 : kh(su);
  };
  ContractionResult out;
  std::vector<double> diams, ratios;
  for (double r : s.radii) {
    const ConvexDomain d(Ball{r});
    auto SKh = [&](const Vec3& x, const Vec3& v) {
      return apply_S(d, m, [&](const Vec3&, const Vec3& u) { return Kh(u); }, x, v, s.line);
    };
    const auto num = lp_norm_grid(SKh, d, {1, 0}, s.grid);
    const auto den = lp_norm_grid([](const Vec3&, const Vec3& v) { return maxwellian(v); }, d, {1, 0}, s.grid);
    const auto ratio = ratio_estimate(num, den);
    std::vector<std::pair<Vec3, Vec3>> probes;
    const Vec3 dirs[] = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0)};
    for (double pr : s.probe_radii)
      for (double sp : s.probe_speeds)
        for (const Vec3& dv : dirs) {
          probes.emplace_back(Vec3(pr * r, 0, 0), sp * dv);
          if (sp == 0) break;
        }
    std::vector<double> vals(probes.size());
    parallel_for(probes.size(), s.workers, [&](std::size_t i) {
      const Vec3 x = probes[i].first;
      vals[i] = std::abs(apply_K(m, [&](const Vec3& u) { return SKh(x, u); }, probes[i].second, q));
    });
    const double second = *std::max_element(vals.begin(), vals.end());  // sup |h| = M(0) = 1
    out.rows.push_back({r, 2 * r, ratio.value, ratio.error, second});
    diams.push_back(2 * r);
    ratios.push_back(ratio.value);
  }
  out.slope = detail::log_log_slope(diams, ratios);
  // rows ordered as given; compare by radius
  std::vector<ContractionRow> sorted = out.rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.r < b.r; });
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    if (!(sorted[i].ratio < sorted[i + 1].ratio)) out.monotone = false;
  out.second_constant = sorted.back().second / sorted.back().diam;
  out.second_check = sorted.front().second / sorted.front().diam / out.second_constant;
  return out;
}

inline std::vector<Claim> contraction_claims(const ContractionResult& r) {
  return {claim_ge("contraction-ratio-decreases-with-radius", r.monotone ? 1.0 : 0.0, 1.0),
          claim_ge("contraction-log-log-slope", r.slope, 0.9),
          claim_le("second-iterate-constant-ratio", r.second_check, 1.0)};
}

// ---------------------------------------------------------------------------
// Change of variables along rays and the volume-to-boundary identity.

struct ChangeOfVariablesSpec {
  int identity_samples = 10000;
  McSpec mc{1 << 17, 4096, 5, 1, 16, 8.0};
  int chord_order = 16;
};

struct ChangeOfVariablesResult {
  double identity_worst = 0;
  Estimate ray_forward, ray_backward;  // ∫∫∫_0^τ h(x - s v, v, s) and ∫∫∫_0^{τ(y,-u)} h(y, u, t)
  double ray_z = 0;
  Estimate volume, boundary;           // ∫_Ω∫ f and ∫_{Γ⁻} ∫_0^{τ(z,-v)} f(z + s v, v) ds N|v|
  double boundary_z = 0;
};

inline double combined_z(const Estimate& a, const Estimate& b) {
  const double s = std::hypot(a.error, b.error);
  return s > 0 ? std::abs(a.value - b.value) / s : (a.value == b.value ? 0.0 : INFINITY);
}

inline ChangeOfVariablesResult change_of_variables(const ConvexDomain& d, const ChangeOfVariablesSpec& s = {}) {
  ChangeOfVariablesResult out;
  out.identity_worst = identity_sweep(s.identity_samples, s.mc.seed);
  auto h = [](const Vec3& y, const Vec3& u, double t) {
    return maxwellian(u) * (1 + y.x() + 0.5 * t * u.norm()) * std::cos(y.y());
  };
  const SpeedShells shells(s.mc);
  std::vector<double> measure;
  for (int k = 0; k < shells.size(); ++k) measure.push_back(d.volume() * shells.volume(k));
  McSpec a = s.mc, b = s.mc;
  b.seed = s.mc.seed + 1;
  out.ray_forward = stratified_mc(a, measure, [&](BlockRng& rng, int k) {
    const Vec3 x = sample_domain(d, rng);
    const Vec3 v = shells.speed(k, rng) * rng.unit_vector();
    if (v.squaredNorm() == 0) return 0.0;
    const double tau = d.exit_time(x, v), t = tau * rng.uniform();
    return tau * h(Vec3(x - t * v), v, t);
  });
  out.ray_backward = stratified_mc(b, measure, [&](BlockRng& rng, int k) {
    const Vec3 y = sample_domain(d, rng);
    const Vec3 u = shells.speed(k, rng) * rng.unit_vector();
    if (u.squaredNorm() == 0) return 0.0;
    const double tau = d.exit_time(y, -u), t = tau * rng.uniform();
    return tau * h(y, u, t);
  });
  out.ray_z = combined_z(out.ray_forward, out.ray_backward);

  auto f = [](const Vec3& x, const Vec3& v) {
    return maxwellian(v) * (1 + x.x() + x.y() * x.y()) * (1 + 0.3 * v.x());
  };
  McSpec c = s.mc, e = s.mc;
  c.seed = s.mc.seed + 2;
  e.seed = s.mc.seed + 3;
  out.volume = mc_phase_integral(f, d, c);
  const GaussRule g(s.chord_order);
  out.boundary = mc_boundary_integral(
      [&](const BoundaryPoint& z, const Vec3& v) {
        const double tau = d.exit_time(z.z, -v);
        return g.integrate(0.0, tau, [&](double t) { return f(Vec3(z.z + t * v), v); });
      },
      d, BoundaryMeasure::incoming, e);
  out.boundary_z = combined_z(out.volume, out.boundary);
  return out;
}

inline std::vector<Claim> change_of_variables_claims(const ChangeOfVariablesResult& r) {
  return {claim_le("exponent-identity-relative-error", r.identity_worst, 1e-12),
          claim_le("ray-change-of-variables-sigma", r.ray_z, 3.0),
          claim_le("volume-to-boundary-sigma", r.boundary_z, 3.0)};
}

// ---------------------------------------------------------------------------
// Grazing threshold scans.

struct GrazingRow {
  double p;
  DivergenceVerdict verdict;
  ScanStatus expected;
  double closed_form_error;  // relative, convergent rows only
};

inline std::vector<GrazingRow> grazing_thresholds(const ConvexDomain& d, const std::vector<double>& p_values,
                                                  double a = 1, double b = 1, double r1 = 0.5,
                                                  const ScanSpec& sc = {}, int workers = 1) {
  std::vector<GrazingRow> rows(p_values.size());
  const double crit = d.is_ball() ? 3 : 2;
  parallel_for(p_values.size(), workers, [&](std::size_t i) {
    const double p = p_values[i];
    auto v = divergence_scan(d, {p, a, b, r1}, sc);
    const double err = v.status == ScanStatus::convergent ? std::abs(v.limit - v.reference_limit) / v.reference_limit
                                                          : std::numeric_limits<double>::quiet_NaN();
    rows[i] = {p, std::move(v), p < crit ? ScanStatus::convergent : ScanStatus::divergent, err};
  });
  return rows;
}

inline std::vector<Claim> grazing_claims(const ConvexDomain& d, const std::vector<GrazingRow>& rows) {
  std::vector<Claim> out;
  const std::string kind = d.is_ball() ? "ball" : "flat";
  for (const auto& row : rows) {
    std::ostringstream tag;
    tag << "grazing-verdict-" << kind << "-p" << row.p;
    out.push_back(claim_ge(tag.str(), row.verdict.status == row.expected ? 1.0 : 0.0, 1.0));
    if (row.expected == ScanStatus::convergent && row.verdict.status == ScanStatus::convergent) {
      std::ostringstream t2;
      t2 << "grazing-closed-form-" << kind << "-p" << row.p;
      out.push_back(claim_le(t2.str(), row.closed_form_error, 0.02));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counterexample scans for the actual cutoff data.

struct CounterexampleSpec {
  std::vector<double> p_values = {1.0, 1.5, 1.9, 2.0, 2.5, 2.9, 3.0};
  double alpha = 0.1;
  W1pSpec w1p;
  double log_r0 = 0.5;
};

struct CounterexampleRow {
  double p;
  DivergenceVerdict verdict;
  ScanStatus expected;
};

struct CounterexampleResult {
  std::vector<CounterexampleRow> rows;
  std::vector<LogDivergenceRow> log_rows;  // ball only
  double log_worst = 0;                    // relative
};

inline CounterexampleResult counterexample(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                           const CounterexampleSpec& s = {}) {
  std::vector<NormSpec> specs;
  for (double p : s.p_values) specs.push_back({p, s.alpha});
  const auto v = w1p_of_Jg_scans(d, m, g, specs, s.w1p);
  CounterexampleResult out;
  const double crit = d.is_ball() ? 3 : 2;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.rows.push_back({s.p_values[i], v[i], s.p_values[i] < crit ? ScanStatus::convergent : ScanStatus::divergent});
  if (d.is_ball()) {
    out.log_rows = log_divergence_check(d.ball().r, s.log_r0, cutoff_sequence(s.w1p.scan));
    for (const auto& row : out.log_rows)
      out.log_worst = std::max(out.log_worst, std::abs(row.numeric - row.closed) / row.closed);
  }
  return out;
}

inline std::vector<Claim> counterexample_claims(const ConvexDomain& d, const CounterexampleResult& r) {
  std::vector<Claim> out;
  const std::string kind = d.is_ball() ? "ball" : "flat";
  for (const auto& row : r.rows) {
    std::ostringstream tag;
    tag << "jg-gradient-verdict-" << kind << "-p" << row.p;
    out.push_back(claim_ge(tag.str(), row.verdict.status == row.expected ? 1.0 : 0.0, 1.0));
  }
  if (d.is_ball()) out.push_back(claim_le("squared-log-divergence-relative-error", r.log_worst, 1e-3));
  return out;
}

// ---------------------------------------------------------------------------

inline std::vector<Claim> eta_gap_claims(const EtaGapResult& r, double required_margin) {
  double min_row = INFINITY;
  for (const auto& row : r.rows) min_row = std::min(min_row, row.gap);
  return {claim_near("gap-limit-at-rest", r.limit, std::pow(2.0, -1.5), 1e-4),
          claim_ge("gap-positive-on-grid", min_row, 0.0),
          claim_ge("gap-certified-margin", r.certified, required_margin)};
}

// ---------------------------------------------------------------------------
// Neumann solve with Monte Carlo cross-check at probe points.

struct SolveExperimentSpec {
  NeumannSpec neumann;
  McSolveSpec mc;
  int probes = 20;
  std::uint64_t seed = 7;
  VelocityQuadratureSpec probe_quad{8.0, 64, 48, 48, true};
};

struct ProbeRow {
  Vec3 x, v;
  double deterministic, mc, std_error, z;
};

struct SolveExperimentResult {
  SolveReport report;
  std::vector<ProbeRow> probes;
  double max_z = 0;
  double zero_kernel_grid_diff = 0;   // max |f - Jg| on the grid with K ≡ 0
  double zero_kernel_point_diff = 0;  // max |f(x,v) - Jg(x,v)| and MC spread at the probes
};

// Probe points: half aimed at the data support along -e1, half in random directions.
inline std::vector<std::pair<Vec3, Vec3>> solve_probes(const ConvexDomain& d, int n, std::uint64_t seed) {
  BlockRng rng(seed, 1u << 24);
  std::vector<std::pair<Vec3, Vec3>> out;
  for (int i = 0; i < n; ++i) {
    const Vec3 x = 0.9 * sample_domain(d, rng);
    const double speed = 0.3 + 1.5 * rng.uniform();
    const Vec3 dir = i % 2 == 0 ? Vec3((Vec3(-1, 0, 0) + 0.6 * rng.unit_vector()).normalized()) : rng.unit_vector();
    out.emplace_back(x, speed * dir);
  }
  return out;
}

inline SolveExperimentResult solve_experiment(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                              const SolveExperimentSpec& s = {}) {
  SolveExperimentResult out;
  const auto sol = neumann_solve(d, m, g, s.neumann);
  out.report = sol.report;
  const VelocityQuadrature q(s.probe_quad);
  const auto pts = solve_probes(d, s.probes, s.seed);
  KernelModel off = m;
  off.gain = false;
  NeumannSpec ns = s.neumann;
  const auto zero = neumann_solve(d, off, g, ns);
  out.zero_kernel_grid_diff = (zero.f.values() - zero.jg.values()).cwiseAbs().maxCoeff();
  for (const auto& [x, v] : pts) {
    ProbeRow row{x, v, evaluate_point(d, m, g, sol, x, v, q), 0, 0, 0};
    const auto mc = mc_solve_point(d, m, g, x, v, s.mc);
    row.mc = mc.estimate;
    row.std_error = mc.std_error;
    row.z = combined_z({row.mc, row.std_error}, {row.deterministic, 0.0});
    out.max_z = std::max(out.max_z, row.z);
    out.probes.push_back(row);
    const double jg = apply_J(d, off, g, x, v);
    McSolveSpec light = s.mc;
    light.paths = std::min<std::size_t>(s.mc.paths, 1000);
    const auto mz = mc_solve_point(d, off, g, x, v, light);
    out.zero_kernel_point_diff = std::max({out.zero_kernel_point_diff, std::abs(evaluate_point(d, off, g, zero, x, v, q) - jg),
                                           std::abs(mz.estimate - jg), mz.std_error});
  }
  return out;
}

inline std::vector<Claim> solve_claims(const SolveExperimentResult& r) {
  return {claim_le("neumann-relative-residual", r.report.residual_relative, 1e-6),
          claim_le("neumann-contraction-ratio", r.report.ratio_max, 1.0),
          claim_le("mc-vs-deterministic-max-sigma", r.max_z, 3.0),
          claim_le("zero-kernel-grid-deviation", r.zero_kernel_grid_diff, 0.0),
          claim_le("zero-kernel-point-deviation", r.zero_kernel_point_diff, 0.0)};
}

}  // namespace gkin
