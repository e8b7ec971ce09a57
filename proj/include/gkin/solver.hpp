#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "gkin/collision.hpp"
#include "gkin/geometry.hpp"
#include "gkin/norms.hpp"
#include "gkin/parallel.hpp"
#include "gkin/quadrature.hpp"
#include "gkin/random.hpp"
#include "gkin/transport.hpp"

namespace gkin {

struct GridSpec {
  int n_x = 12;
  int n_v_r = 10;
  int n_v_ang = 8;
  double v_max = 8;
};

// Grid axis with clamped (or periodic) linear location.
struct Axis {
  std::vector<double> nodes;
  bool periodic = false;
  double period = 0;

  int size() const { return static_cast<int>(nodes.size()); }

  void locate(double x, int& i0, int& i1, double& w) const {
    const int n = size();
    if (n == 1) {
      i0 = i1 = 0;
      w = 0;
      return;
    }
    if (periodic) {
      x -= period * std::floor((x - nodes[0]) / period);
      int k = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
      k = std::clamp(k, 0, n - 1);
      const double x1 = k + 1 < n ? nodes[k + 1] : nodes[0] + period;
      i0 = k;
      i1 = (k + 1) % n;
      w = std::clamp((x - nodes[k]) / (x1 - nodes[k]), 0.0, 1.0);
      return;
    }
    if (x <= nodes.front()) {
      i0 = i1 = 0;
      w = 0;
      return;
    }
    if (x >= nodes.back()) {
      i0 = i1 = n - 1;
      w = 0;
      return;
    }
    const int k = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
    i0 = k;
    i1 = k + 1;
    w = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
  }

  // Trapezoid weights in the axis coordinate.
  std::vector<double> weights() const {
    const int n = size();
    std::vector<double> w(n, 0.0);
    if (periodic) {
      std::fill(w.begin(), w.end(), period / n);
      return w;
    }
    if (n == 1) return {1.0};
    for (int i = 0; i + 1 < n; ++i) {
      const double h = nodes[i + 1] - nodes[i];
      w[i] += 0.5 * h;
      w[i + 1] += 0.5 * h;
    }
    return w;
  }
};

struct Stencil {
  std::array<int, 8> idx{};
  std::array<double, 8> w{};
  int n = 0;
};

// Collocation nodes over Ω × {|v| <= v_max}. With axial symmetry about e1 only the
// half-plane {x3 = 0, x2 >= 0} is stored and queries are rotated into it.
class PhaseGrid {
 public:
  static constexpr double kShrink = 0.995;

  PhaseGrid(const ConvexDomain& d, const GridSpec& s, bool axisymmetric)
      : dom_(d), spec_(s), axisym_(axisymmetric) {
    if (s.n_x < 2 || s.n_v_r < 2 || s.n_v_ang < 2 || !(s.v_max > 0))
      throw std::invalid_argument("grid needs n_x, n_v_r, n_v_ang >= 2 and v_max > 0");
    const int n = s.n_x;
    auto clustered = [&](int i) { return std::sin(kPi * i / (2.0 * (n - 1))); };
    for (int i = 0; i < n; ++i) {
      if (d.is_ball()) {
        ax_[0].nodes.push_back(kShrink * d.ball().r * clustered(i));
      } else {
        const double h = 0.5 * (d.cap().a + d.cap().R);
        ax_[0].nodes.push_back(-h - h * kShrink * std::cos(kPi * i / (n - 1)));
      }
      ax_[1].nodes.push_back(d.is_ball() ? kPi * i / (n - 1) : clustered(i));
    }
    const int nphi = axisym_ ? 1 : 2 * n;
    ax_[2].periodic = true;
    ax_[2].period = 2 * kPi;
    for (int k = 0; k < nphi; ++k) ax_[2].nodes.push_back(2 * kPi * k / nphi);

    for (int i = 0; i < s.n_v_r; ++i) {
      const double u = double(i) / (s.n_v_r - 1);
      av_[0].nodes.push_back(s.v_max * u * u);
    }
    for (int j = 0; j < s.n_v_ang; ++j) av_[1].nodes.push_back(kPi * j / (s.n_v_ang - 1));
    av_[2].periodic = true;
    av_[2].period = 2 * kPi;
    for (int k = 0; k < 2 * s.n_v_ang; ++k) av_[2].nodes.push_back(kPi * k / s.n_v_ang);

    build_nodes();
  }

  const ConvexDomain& domain() const { return dom_; }
  const GridSpec& spec() const { return spec_; }
  bool axisymmetric() const { return axisym_; }
  int nx() const { return static_cast<int>(xs_.size()); }
  int nv() const { return static_cast<int>(vs_.size()); }
  const Vec3& x_node(int i) const { return xs_[i]; }
  const Vec3& v_node(int j) const { return vs_[j]; }
  double x_weight(int i) const { return xw_[i]; }
  double v_weight(int j) const { return vw_[j]; }

  // Rotation angle about e1 taking x into the stored half-plane.
  double reduction_angle(const Vec3& x) const { return axisym_ ? std::atan2(x.z(), x.y()) : 0.0; }
  static Vec3 rotate(const Vec3& v, double beta) {
    const double c = std::cos(beta), s = std::sin(beta);
    return Vec3(v.x(), c * v.y() + s * v.z(), -s * v.y() + c * v.z());
  }

  void x_stencil(const Vec3& x, Stencil& st) const {
    double c[3];
    if (dom_.is_ball()) {
      const double r = x.norm();
      c[0] = r;
      c[1] = r > 0 ? std::acos(std::clamp(x.x() / r, -1.0, 1.0)) : 0.0;
    } else {
      c[0] = x.x();
      const double rmax = cap_radius(x.x());
      const double rho = std::hypot(x.y(), x.z());
      c[1] = rmax > 0 ? std::clamp(rho / (kShrink * rmax), 0.0, 1.0) : 0.0;
    }
    c[2] = std::atan2(x.z(), x.y());
    combine(ax_, c, axisym_ ? 2 : 3, st);
  }

  // False when |v| exceeds v_max (the field vanishes there). Multilinear in f e^{|v|²/2},
  // so the weights carry the Maxwellian ratio M(v)/M(v_node).
  bool v_stencil(const Vec3& v, Stencil& st) const {
    const double s = v.norm();
    if (s > spec_.v_max) return false;
    double c[3];
    c[0] = s;
    c[1] = s > 0 ? std::acos(std::clamp(v.x() / s, -1.0, 1.0)) : 0.0;
    c[2] = std::atan2(v.z(), v.y());
    combine(av_, c, 3, st);
    for (int k = 0; k < st.n; ++k) st.w[k] *= std::exp(0.5 * (vs_[st.idx[k]].squaredNorm() - s * s));
    return true;
  }

 private:
  double cap_radius(double x1) const {
    const auto& f = dom_.cap();
    return std::sqrt(std::max(0.0, f.R * f.R - (x1 + f.a) * (x1 + f.a)));
  }

  static void combine(const std::array<Axis, 3>& ax, const double* c, int dims, Stencil& st) {
    int i0[3] = {0, 0, 0}, i1[3] = {0, 0, 0};
    double w[3] = {0, 0, 0};
    for (int k = 0; k < dims; ++k) ax[k].locate(c[k], i0[k], i1[k], w[k]);
    const int n0 = ax[0].size(), n1 = ax[1].size();
    st.n = 1 << dims;
    for (int corner = 0; corner < st.n; ++corner) {
      int idx[3] = {0, 0, 0};
      double wt = 1;
      for (int k = 0; k < dims; ++k) {
        const bool hi = (corner >> k) & 1;
        idx[k] = hi ? i1[k] : i0[k];
        wt *= hi ? w[k] : 1 - w[k];
      }
      st.idx[corner] = idx[0] + n0 * (idx[1] + n1 * idx[2]);
      st.w[corner] = wt;
    }
  }

  void build_nodes() {
    const auto w0 = ax_[0].weights(), w1 = ax_[1].weights(), w2 = ax_[2].weights();
    const double wphi = axisym_ ? 2 * kPi : 1.0;
    for (int k = 0; k < ax_[2].size(); ++k) {
      const double phi = ax_[2].nodes[k];
      const double wk = axisym_ ? wphi : w2[k];
      for (int j = 0; j < ax_[1].size(); ++j) {
        for (int i = 0; i < ax_[0].size(); ++i) {
          const double a = ax_[0].nodes[i], b = ax_[1].nodes[j];
          Vec3 x;
          double jac;
          if (dom_.is_ball()) {
            x = a * Vec3(std::cos(b), std::sin(b) * std::cos(phi), std::sin(b) * std::sin(phi));
            jac = a * a * std::sin(b);
          } else {
            const double rmax = kShrink * cap_radius(a);
            const double rho = b * rmax;
            x = Vec3(a, rho * std::cos(phi), rho * std::sin(phi));
            jac = rmax * rmax * b;
          }
          xs_.push_back(x);
          xw_.push_back(w0[i] * w1[j] * wk * jac);
        }
      }
    }
    const auto u0 = av_[0].weights(), u1 = av_[1].weights(), u2 = av_[2].weights();
    for (int k = 0; k < av_[2].size(); ++k) {
      const double phi = av_[2].nodes[k];
      for (int j = 0; j < av_[1].size(); ++j) {
        const double th = av_[1].nodes[j];
        for (int i = 0; i < av_[0].size(); ++i) {
          const double s = av_[0].nodes[i];
          vs_.push_back(s * Vec3(std::cos(th), std::sin(th) * std::cos(phi), std::sin(th) * std::sin(phi)));
          vw_.push_back(u0[i] * u1[j] * u2[k] * s * s * std::sin(th));
        }
      }
    }
  }

  ConvexDomain dom_;
  GridSpec spec_;
  bool axisym_;
  std::array<Axis, 3> ax_, av_;
  std::vector<Vec3> xs_, vs_;
  std::vector<double> xw_, vw_;
};

// Field values on a PhaseGrid, stored as (velocity node, space node).
class PhaseField {
 public:
  PhaseField() = default;
  explicit PhaseField(std::shared_ptr<const PhaseGrid> g)
      : grid_(std::move(g)), values_(Eigen::MatrixXd::Zero(grid_->nv(), grid_->nx())) {}

  const PhaseGrid& grid() const { return *grid_; }
  std::shared_ptr<const PhaseGrid> grid_ptr() const { return grid_; }
  Eigen::MatrixXd& values() { return values_; }
  const Eigen::MatrixXd& values() const { return values_; }
  double& at(int iv, int ix) { return values_(iv, ix); }
  double at(int iv, int ix) const { return values_(iv, ix); }

  // Multilinear interpolation; 0 beyond v_max.
  double value(const Vec3& x, const Vec3& v) const {
    const double beta = grid_->reduction_angle(x);
    const Vec3 xr = PhaseGrid::rotate(x, beta), vr = PhaseGrid::rotate(v, beta);
    Stencil sx, sv;
    if (!grid_->v_stencil(vr, sv)) return 0.0;
    grid_->x_stencil(xr, sx);
    double sum = 0;
    for (int a = 0; a < sx.n; ++a) {
      if (sx.w[a] == 0) continue;
      double inner = 0;
      for (int b = 0; b < sv.n; ++b) inner += sv.w[b] * values_(sv.idx[b], sx.idx[a]);
      sum += sx.w[a] * inner;
    }
    return sum;
  }

  double lp_norm(const NormSpec& s) const {
    double sum = 0;
    for (int ix = 0; ix < grid_->nx(); ++ix)
      for (int iv = 0; iv < grid_->nv(); ++iv)
        sum += grid_->x_weight(ix) * grid_->v_weight(iv) * s.density(values_(iv, ix), grid_->v_node(iv));
    return std::pow(sum, 1 / s.p);
  }

  // max |f| e^{α|v|²} over nodes.
  double sup_norm(double alpha) const {
    double m = 0;
    for (int ix = 0; ix < grid_->nx(); ++ix)
      for (int iv = 0; iv < grid_->nv(); ++iv)
        m = std::max(m, std::abs(values_(iv, ix)) * std::exp(alpha * grid_->v_node(iv).squaredNorm()));
    return m;
  }

 private:
  std::shared_ptr<const PhaseGrid> grid_;
  Eigen::MatrixXd values_;
};

template <class F>
PhaseField sample_field(std::shared_ptr<const PhaseGrid> g, F&& f, int workers = 1) {
  PhaseField out(g);
  parallel_for(static_cast<std::size_t>(g->nx()), workers, [&](std::size_t ix) {
    for (int iv = 0; iv < g->nv(); ++iv) out.at(iv, static_cast<int>(ix)) = f(g->x_node(static_cast<int>(ix)), g->v_node(iv));
  });
  return out;
}

// Discrete S_Ω K: K by a hat-basis kernel matrix, S by line quadrature through the interpolated field.
class CollocationOperator {
 public:
  CollocationOperator(const ConvexDomain& d, const KernelModel& m, std::shared_ptr<const PhaseGrid> g,
                      const VelocityQuadratureSpec& kernel_quad, LineQuadrature lq = {}, int workers = 1)
      : dom_(d), model_(m), grid_(std::move(g)), lq_(std::move(lq)), workers_(workers) {
    const int nv = grid_->nv();
    kmat_ = Eigen::MatrixXd::Zero(nv, nv);
    if (!model_.gain) return;
    VelocityQuadratureSpec qs = kernel_quad;
    qs.singular_shift = true;
    qs.v_max = grid_->spec().v_max;
    const VelocityQuadrature quad(qs);
    parallel_for(static_cast<std::size_t>(nv), workers_, [&](std::size_t row) {
      const Vec3& v = grid_->v_node(static_cast<int>(row));
      Stencil st;
      quad.for_each_node(v, VelocityRegion::full(), [&](const Vec3& u, double w) {
        if (!grid_->v_stencil(u, st)) return;
        const double kw = w * model_.k(v, u);
        for (int c = 0; c < st.n; ++c) kmat_(static_cast<Eigen::Index>(row), st.idx[c]) += kw * st.w[c];
      });
    });
  }

  const PhaseGrid& grid() const { return *grid_; }
  std::shared_ptr<const PhaseGrid> grid_ptr() const { return grid_; }
  const Eigen::MatrixXd& kernel_matrix() const { return kmat_; }

  PhaseField apply_K(const PhaseField& f) const {
    PhaseField out(grid_);
    out.values().noalias() = kmat_ * f.values();
    return out;
  }

  PhaseField apply_S(const PhaseField& h) const {
    PhaseField out(grid_);
    parallel_for(static_cast<std::size_t>(grid_->nx()), workers_, [&](std::size_t ixs) {
      const int ix = static_cast<int>(ixs);
      const Vec3& x = grid_->x_node(ix);
      for (int iv = 0; iv < grid_->nv(); ++iv) {
        const Vec3& v = grid_->v_node(iv);
        const double n = model_.nu(v);
        if (v.squaredNorm() == 0) {
          out.at(iv, ix) = h.at(iv, ix) / n;
          continue;
        }
        const double tau = effective_length(dom_.exit_time(x, v), n);
        double sum = 0;
        lq_.for_each_node(tau, n, [&](double s, double w) {
          sum += w * std::exp(-n * s) * h.value(Vec3(x - s * v), v);
        });
        out.at(iv, ix) = sum;
      }
    });
    return out;
  }

  PhaseField apply(const PhaseField& f) const { return apply_S(apply_K(f)); }

 private:
  ConvexDomain dom_;
  KernelModel model_;
  std::shared_ptr<const PhaseGrid> grid_;
  LineQuadrature lq_;
  int workers_;
  Eigen::MatrixXd kmat_;
};

struct IterateResult {
  PhaseField field;
  double norm;
};

inline IterateResult iterate_term(const CollocationOperator& op, const PhaseField& field, const NormSpec& spec) {
  spec.validate();
  IterateResult r{op.apply(field), 0.0};
  r.norm = r.field.lp_norm(spec);
  return r;
}

struct NeumannSpec {
  GridSpec grid;
  double tol = 1e-6;
  int max_iter = 30;
  double interp_tol = 1.0;  // on the mean relative interpolation error of Jg
  int interp_samples = 400;
  VelocityQuadratureSpec kernel_quad{8.0, 16, 12, 16, true};
  LineQuadrature line;
  NormSpec norm{1, 0};
  int workers = 1;
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> increments;      // L^p_α grid norms of (S_Ω K)^i Jg, i = 0, 1, ...
  std::vector<double> sup_increments;  // weighted sup norms of the same terms
  std::vector<double> ratios;          // increments[i+1] / increments[i]
  double ratio_max = 0;
  double residual = 0;                 // ‖f - Jg - S K f‖ on the grid
  double residual_relative = 0;        // residual / ‖Jg‖
  double interp_error = 0;             // mean relative interpolation error of Jg at random points
};

struct NeumannSolution {
  PhaseField f;
  PhaseField jg;
  SolveReport report;
};

// Mean relative error Σ|Jg - I_h Jg| / Σ|Jg| of the interpolated Jg at random phase points.
inline double interpolation_error(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                  const PhaseField& jg, int samples, std::uint64_t seed = 0x5eed) {
  BlockRng rng(seed, 0);
  const double vmax = jg.grid().spec().v_max;
  double scale = 0, err = 0;
  for (int i = 0; i < samples; ++i) {
    Vec3 x = sample_domain(d, rng);
    const Vec3 v = vmax * std::cbrt(rng.uniform()) * rng.unit_vector();
    const double exact = apply_J(d, m, g, x, v);
    scale += std::abs(exact);
    err += std::abs(exact - jg.value(x, v));
  }
  return scale > 0 ? err / scale : err;
}

inline NeumannSolution neumann_solve(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                     const NeumannSpec& s = {}) {
  s.norm.validate();
  auto grid = std::make_shared<const PhaseGrid>(d, s.grid, g.axisymmetric());
  NeumannSolution sol;
  sol.jg = sample_field(grid, [&](const Vec3& x, const Vec3& v) { return apply_J(d, m, g, x, v); }, s.workers);
  auto& rep = sol.report;
  rep.interp_error = interpolation_error(d, m, g, sol.jg, s.interp_samples);
  if (rep.interp_error > s.interp_tol) {
    std::ostringstream msg;
    msg << "grid resolution: interpolation error " << rep.interp_error << " exceeds " << s.interp_tol;
    throw SolverError(SolverError::Kind::grid_resolution, msg.str());
  }
  const CollocationOperator op(d, m, grid, s.kernel_quad, s.line, s.workers);
  const double jg_sup = sol.jg.sup_norm(s.norm.alpha);
  sol.f = sol.jg;
  PhaseField term = sol.jg;
  rep.increments.push_back(term.lp_norm(s.norm));
  rep.sup_increments.push_back(jg_sup);
  int growing = 0;
  for (int it = 1; it <= s.max_iter; ++it) {
    auto next = iterate_term(op, term, s.norm);
    sol.f.values() += next.field.values();
    rep.iterations = it;
    rep.increments.push_back(next.norm);
    rep.sup_increments.push_back(next.field.sup_norm(s.norm.alpha));
    const double prev = rep.increments[rep.increments.size() - 2];
    if (prev > 0) {
      const double ratio = next.norm / prev;
      rep.ratios.push_back(ratio);
      rep.ratio_max = std::max(rep.ratio_max, ratio);
      growing = ratio >= 1 ? growing + 1 : 0;
      if (growing >= 3) {
        std::ostringstream msg;
        msg << "non-contractive: increment ratio >= 1 for 3 iterations, last " << ratio;
        throw SolverError(SolverError::Kind::non_contractive, msg.str());
      }
    }
    term = std::move(next.field);
    if (rep.sup_increments.back() <= s.tol * jg_sup) {
      rep.converged = true;
      break;
    }
  }
  PhaseField r = op.apply(sol.f);
  r.values() = sol.f.values() - sol.jg.values() - r.values();
  rep.residual = r.lp_norm(s.norm);
  const double jn = sol.jg.lp_norm(s.norm);
  rep.residual_relative = jn > 0 ? rep.residual / jn : rep.residual;
  return sol;
}

// f(x, v) = Jg + S_Ω K (Jg + u) with u the collided part on the grid and K, S by
// fine quadrature at the point.
inline double evaluate_point(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                             const NeumannSolution& sol, const Vec3& x, const Vec3& v,
                             const VelocityQuadrature& quad = VelocityQuadrature(), const LineQuadrature& lq = {}) {
  const double jg = apply_J(d, m, g, x, v);
  if (!m.gain) return jg;
  PhaseField u(sol.f.grid_ptr());
  u.values() = sol.f.values() - sol.jg.values();
  auto kf = [&](const Vec3& y, const Vec3& w) {
    return apply_K(m, [&](const Vec3& z) { return apply_J(d, m, g, y, z) + u.value(y, z); }, w, quad);
  };
  return jg + apply_S(d, m, kf, x, v, lq);
}

// ---------------------------------------------------------------------------
// Backward random walk for the Neumann series.

struct McSolveSpec {
  std::size_t paths = 100000;
  std::size_t block = 1000;
  std::uint64_t seed = 7;
  int workers = 1;
  double v_max = 8;
  int roulette_depth = 4;
  double survival = 0.5;
  int max_depth = 10000;
};

struct McSolveResult {
  double estimate = 0;
  double std_error = 0;
  double mean_collisions = 0;
};

namespace detail {

// Draw u from a density shaped like the dominant kernel term around v; returns the density.
inline double propose_velocity(const Vec3& v, BlockRng& rng, Vec3& u) {
  const double s = std::sqrt(-4 * std::log(rng.uniform()));
  const double sv = v.norm();
  double t, pt;
  if (sv < 1e-10) {
    t = rng.uniform(-1, 1);
    pt = 0.5;
  } else {
    // y = |v| t + s/2 has density ∝ e^{-y²} on [a, b]
    const double a = -sv + 0.5 * s, b = sv + 0.5 * s;
    const double U = rng.uniform();
    double y, z;
    using boost::math::erf_inv;
    using boost::math::erfc_inv;
    if (a >= 0) {
      const double ea = std::erfc(a), eb = std::erfc(b);
      z = ea - eb;
      if (!(z > 0)) return 0;
      y = erfc_inv(std::max(ea - U * z, std::numeric_limits<double>::min()));
    } else {
      const double ea = std::erf(a), eb = std::erf(b);
      z = eb - ea;
      if (!(z > 0)) return 0;
      const double arg = std::clamp(ea + U * z, -1 + 1e-16, 1 - 1e-16);
      y = erf_inv(arg);
    }
    y = std::clamp(y, a, b);
    t = std::clamp((y - 0.5 * s) / sv, -1.0, 1.0);
    pt = sv * std::exp(-y * y) / (hs::kSqrtPiHalf * z);
  }
  const Vec3 axis = sv < 1e-10 ? Vec3(1, 0, 0) : Vec3(v / sv);
  Vec3 e1, e2;
  orthonormal_frame(axis, e1, e2);
  const double phi = 2 * kPi * rng.uniform();
  const double st = std::sqrt(std::max(0.0, 1 - t * t));
  u = v + s * (t * axis + st * (std::cos(phi) * e1 + std::sin(phi) * e2));
  const double ps = 0.5 * s * std::exp(-0.25 * s * s);
  return ps * pt / (2 * kPi * s * s);
}

}  // namespace detail

// Paths score the collided terms; the uncollided Jg(x, v) is added exactly.
inline McSolveResult mc_solve_point(const ConvexDomain& d, const KernelModel& m, const BoundaryData& g,
                                    const Vec3& x, const Vec3& v, const McSolveSpec& s = {}) {
  if (!d.contains(x)) throw GeometryError("probe point outside the domain");
  if (s.paths == 0 || s.block == 0) throw std::invalid_argument("empty Monte Carlo spec");
  const std::size_t nblocks = (s.paths + s.block - 1) / s.block;
  struct Acc {
    double sum = 0, sq = 0, coll = 0;
  };
  std::vector<Acc> acc(nblocks);
  parallel_for(nblocks, s.workers, [&](std::size_t b) {
    BlockRng rng(s.seed, b);
    const std::size_t begin = b * s.block, end = std::min(s.paths, begin + s.block);
    Acc a;
    for (std::size_t p = begin; p < end; ++p) {
      double score = 0, W = 1;
      Vec3 X = x, V = v;
      int depth = 0;
      for (;;) {
        if (depth > 0) score += W * apply_J(d, m, g, X, V);
        if (!m.gain || depth >= s.max_depth) break;
        const double n = m.nu(V);
        double flight;
        if (V.squaredNorm() == 0) {
          W *= 1 / n;
          flight = 0;
        } else {
          const double tau = d.exit_time(X, V);
          const double hit = -std::expm1(-n * tau);
          W *= hit / n;
          flight = std::min(tau, -std::log1p(-rng.uniform() * hit) / n);
        }
        X = X - flight * V;
        Vec3 U;
        const double q = detail::propose_velocity(V, rng, U);
        if (!(q > 0) || U.norm() > s.v_max) break;
        W *= m.k(V, U) / q;
        V = U;
        ++depth;
        a.coll += 1;
        if (depth >= s.roulette_depth) {
          if (rng.uniform() > s.survival) break;
          W /= s.survival;
        }
      }
      a.sum += score;
      a.sq += score * score;
    }
    acc[b] = a;
  });
  double sum = 0, sq = 0, coll = 0;
  for (const auto& a : acc) {
    sum += a.sum;
    sq += a.sq;
    coll += a.coll;
  }
  const double n = static_cast<double>(s.paths);
  McSolveResult r;
  const double mean = sum / n;
  r.estimate = apply_J(d, m, g, x, v) + mean;
  const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1)) : 0.0;
  r.std_error = std::sqrt(var / n);
  r.mean_collisions = coll / n;
  return r;
}

}  // namespace gkin
