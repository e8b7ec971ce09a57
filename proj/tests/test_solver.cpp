#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "gkin/solver.hpp"

using namespace gkin;

namespace {

KernelModel no_gain() {
  auto m = KernelModel::hard_sphere();
  m.gain = false;
  return m;
}

GridSpec small_grid() { return {8, 8, 6, 8.0}; }

double smooth(const Vec3& x, const Vec3& v) {
  return (1 + x.x() - 0.5 * x.y() * x.z()) * std::exp(-0.5 * v.squaredNorm()) * (1 + 0.3 * v.x() + 0.1 * v.y() * v.z());
}

}  // namespace

TEST(Axis, ClampedLocation) {
  Axis a{{0.0, 1.0, 3.0}};
  int i0, i1;
  double w;
  a.locate(2.0, i0, i1, w);
  EXPECT_EQ(i0, 1);
  EXPECT_EQ(i1, 2);
  EXPECT_DOUBLE_EQ(w, 0.5);
  a.locate(-1.0, i0, i1, w);
  EXPECT_EQ(i0, 0);
  EXPECT_EQ(w, 0);
  a.locate(5.0, i0, i1, w);
  EXPECT_EQ(i0, 2);
  EXPECT_EQ(i1, 2);
}

TEST(Axis, PeriodicWrap) {
  Axis a{{0.0, kPi / 2, kPi, 3 * kPi / 2}, true, 2 * kPi};
  int i0, i1;
  double w;
  a.locate(7 * kPi / 4, i0, i1, w);
  EXPECT_EQ(i0, 3);
  EXPECT_EQ(i1, 0);
  EXPECT_NEAR(w, 0.5, 1e-14);
  a.locate(-kPi / 4, i0, i1, w);
  EXPECT_EQ(i0, 3);
  EXPECT_NEAR(w, 0.5, 1e-14);
}

TEST(PhaseGrid, NodesStrictlyInterior) {
  for (const auto& d : {ConvexDomain(Ball{0.3}), ConvexDomain::flat_cap(1.0, 0.25, 0.5)}) {
    for (bool axi : {true, false}) {
      const PhaseGrid g(d, small_grid(), axi);
      for (int i = 0; i < g.nx(); ++i) EXPECT_TRUE(d.contains_open(g.x_node(i)));
      for (int j = 0; j < g.nv(); ++j) EXPECT_LE(g.v_node(j).norm(), 8.0 + 1e-12);
    }
  }
}

TEST(PhaseGrid, QuadratureWeightsIntegrateVolume) {
  // trapezoid in the mapped coordinates; exact volume of the shrunken region up to O(h²)
  const auto d = ConvexDomain(Ball{0.3});
  const PhaseGrid g(d, {24, 8, 6, 8.0}, true);
  double vol = 0;
  for (int i = 0; i < g.nx(); ++i) vol += g.x_weight(i);
  const double exact = 4 * kPi / 3 * std::pow(PhaseGrid::kShrink * 0.3, 3);
  EXPECT_NEAR(vol, exact, 5e-3 * exact);
}

TEST(PhaseField, InterpolationExactAtNodes) {
  for (const auto& d : {ConvexDomain(Ball{0.3}), ConvexDomain::flat_cap(1.0, 0.25, 0.5)}) {
    for (bool axi : {true, false}) {
      auto g = std::make_shared<const PhaseGrid>(d, small_grid(), axi);
      const auto f = sample_field(g, smooth);
      for (int ix = 0; ix < g->nx(); ix += 3)
        for (int iv = 0; iv < g->nv(); iv += 5)
          EXPECT_NEAR(f.value(g->x_node(ix), g->v_node(iv)), f.at(iv, ix), 1e-12);
    }
  }
}

TEST(PhaseField, AxisymmetricQueryRotatesIntoStoredPlane) {
  const auto d = ConvexDomain(Ball{0.3});
  auto g = std::make_shared<const PhaseGrid>(d, small_grid(), true);
  auto radial = [](const Vec3& x, const Vec3& v) { return (1 + x.x() + x.dot(v)) * std::exp(-0.5 * v.squaredNorm()); };
  const auto f = sample_field(g, radial);
  const Vec3 x(0.05, 0.1, 0.0), v(0.3, 0.5, -0.2);
  const double beta = 1.1;
  const Vec3 xr = PhaseGrid::rotate(x, -beta), vr = PhaseGrid::rotate(v, -beta);
  EXPECT_NEAR(f.value(x, v), f.value(xr, vr), 1e-12);
}

TEST(PhaseField, VanishesBeyondVelocityCutoff) {
  auto g = std::make_shared<const PhaseGrid>(ConvexDomain(Ball{0.3}), small_grid(), true);
  const auto f = sample_field(g, [](const Vec3&, const Vec3& v) { return maxwellian(v); });
  EXPECT_EQ(f.value(Vec3::Zero(), Vec3(8.1, 0, 0)), 0.0);
  const Vec3 v(7.9, 0, 0);
  EXPECT_NEAR(f.value(Vec3::Zero(), v), maxwellian(v), 1e-12 * maxwellian(v));
}

TEST(IterateTerm, ZeroFieldMapsToZero) {
  const auto d = ConvexDomain(Ball{0.1});
  auto g = std::make_shared<const PhaseGrid>(d, small_grid(), true);
  const CollocationOperator op(d, KernelModel::hard_sphere(), g, {8.0, 8, 6, 8, true});
  const auto r = iterate_term(op, PhaseField(g), {1, 0});
  EXPECT_EQ(r.norm, 0);
  EXPECT_EQ(r.field.values().cwiseAbs().maxCoeff(), 0);
}

TEST(PhaseField, MaxwellianProfileReproducedBetweenNodes) {
  auto g = std::make_shared<const PhaseGrid>(ConvexDomain(Ball{0.3}), small_grid(), true);
  const auto f = sample_field(g, [](const Vec3& x, const Vec3& v) { return (2 + x.x()) * maxwellian(v); });
  const Vec3 x(0.0, 0.1, 0.0);
  for (const Vec3& v : {Vec3(0.3, -0.2, 0.1), Vec3(-1.7, 0.4, 2.2), Vec3(3.3, 3.1, -2.0)})
    EXPECT_NEAR(f.value(x, v), 2 * maxwellian(v), 1e-12 * maxwellian(v));
}

TEST(CollocationOperator, KernelMatrixMatchesDirectQuadratureOnMaxwellian) {
  // M lies in the span of the weighted hat basis, so K_h M is the quadrature of k M over |u| <= v_max
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  auto g = std::make_shared<const PhaseGrid>(d, GridSpec{4, 10, 6, 8.0}, true);
  const VelocityQuadratureSpec qs{8.0, 16, 12, 16, true};
  const CollocationOperator op(d, m, g, qs);
  const auto kf = op.apply_K(sample_field(g, [](const Vec3&, const Vec3& v) { return maxwellian(v); }));
  const VelocityQuadrature q(qs);
  for (int iv = 0; iv < g->nv(); iv += 11) {
    const Vec3& v = g->v_node(iv);
    const double direct = apply_K(m, [](const Vec3& u) { return maxwellian(u); }, v, q);
    EXPECT_NEAR(kf.at(iv, 0), direct, 1e-10 * std::abs(direct) + 1e-300);
  }
}

TEST(CollocationOperator, KernelMatrixReproducesMaxwellianNullSpace) {
  // K M = ν M; the weighted hat basis carries M exactly, leaving quadrature error
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  auto g = std::make_shared<const PhaseGrid>(d, GridSpec{4, 10, 4, 8.0}, true);
  const CollocationOperator fine(d, m, g, VelocityQuadratureSpec{});
  const CollocationOperator solver_quad(d, m, g, NeumannSpec{}.kernel_quad);
  const auto f = sample_field(g, [](const Vec3&, const Vec3& v) { return maxwellian(v); });
  const auto kf = fine.apply_K(f), ks = solver_quad.apply_K(f);
  for (int iv = 0; iv < g->nv(); ++iv) {
    const Vec3& v = g->v_node(iv);
    if (v.norm() > 4) continue;
    const double ref = m.nu(v) * maxwellian(v);
    EXPECT_NEAR(kf.at(iv, 0), ref, 1e-3 * ref) << v.norm();
    if (v.norm() <= 2) {
      EXPECT_NEAR(ks.at(iv, 0), ref, 1e-2 * ref) << v.norm();
    }
  }
}

TEST(Neumann, ZeroKernelReproducesJgInOneIteration) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = no_gain();
  const BoundaryData data;
  NeumannSpec s;
  s.grid = small_grid();
  s.interp_tol = 10;
  const auto sol = neumann_solve(d, m, data, s);
  EXPECT_EQ(sol.report.iterations, 1);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_EQ((sol.f.values() - sol.jg.values()).cwiseAbs().maxCoeff(), 0.0);
  const Vec3 x(0.02, 0.01, -0.03), v(0.7, -0.2, 0.4);
  EXPECT_EQ(evaluate_point(d, m, data, sol, x, v), apply_J(d, m, data, x, v));
}

TEST(Neumann, ResidualAndGeometricDecay) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data(CapCutoff{});
  const auto sol = neumann_solve(d, m, data);
  const auto& r = sol.report;
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.residual_relative, 1e-6);
  EXPECT_LT(r.ratio_max, 1);
  for (std::size_t i = 1; i + 1 < r.increments.size(); ++i) {
    EXPECT_GE(r.increments[i], 0);
    EXPECT_LE(r.increments[i + 1], r.ratio_max * r.increments[i] * (1 + 1e-12));
  }
}

TEST(Neumann, FixedPointUnderOneMoreIterate) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data(CapCutoff{});
  NeumannSpec s;
  s.grid = small_grid();
  s.interp_tol = 10;
  const auto sol = neumann_solve(d, m, data, s);
  auto grid = sol.f.grid_ptr();
  const CollocationOperator op(d, m, grid, s.kernel_quad, s.line);
  auto next = op.apply(sol.f);
  next.values() += sol.jg.values();
  next.values() -= sol.f.values();
  EXPECT_LE(next.sup_norm(0), s.tol * sol.jg.sup_norm(0) * 2);
}

TEST(Neumann, ContractionRatioShrinksWithRadius) {
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data(CapCutoff{});
  NeumannSpec s;
  s.grid = small_grid();
  s.interp_tol = 10;
  const auto a = neumann_solve(ConvexDomain(Ball{0.1}), m, data, s);
  const auto b = neumann_solve(ConvexDomain(Ball{0.05}), m, data, s);
  EXPECT_LE(b.report.ratios.back() / a.report.ratios.back(), 0.75);
}

TEST(Neumann, GridResolutionFailure) {
  NeumannSpec s;
  s.grid = {4, 3, 2, 8.0};
  s.interp_tol = 1e-6;
  try {
    neumann_solve(ConvexDomain(Ball{0.1}), KernelModel::hard_sphere(), BoundaryData(CapCutoff{}), s);
    FAIL() << "expected a grid resolution error";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::grid_resolution);
  }
}

// Property: doubling the grid changes the converged L²_α norm by less than 5 tol.
TEST(Neumann, GridRefinementStability) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data(CapCutoff{});
  NeumannSpec coarse;
  coarse.grid = {6, 5, 4, 8.0};
  coarse.interp_tol = 10.0;
  coarse.norm = {2, 0.1};
  NeumannSpec fine = coarse;
  fine.grid = {12, 10, 8, 8.0};
  const double a = neumann_solve(d, m, data, coarse).f.lp_norm(coarse.norm);
  const double b = neumann_solve(d, m, data, fine).f.lp_norm(fine.norm);
  EXPECT_LT(std::abs(a - b) / b, 5 * coarse.tol);
}

TEST(MonteCarloSolve, ZeroKernelHasZeroVariance) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = no_gain();
  const BoundaryData data;
  const Vec3 x(0.01, 0.02, 0.0), v(-0.5, 0.3, 0.2);
  McSolveSpec s;
  s.paths = 2000;
  const auto r = mc_solve_point(d, m, data, x, v, s);
  EXPECT_EQ(r.estimate, apply_J(d, m, data, x, v));
  EXPECT_EQ(r.std_error, 0);
}

TEST(MonteCarloSolve, SeedDeterminism) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data;
  const Vec3 x(0.01, 0.02, 0.0), v(-0.5, 0.3, 0.2);
  McSolveSpec s;
  s.paths = 4000;
  const auto a = mc_solve_point(d, m, data, x, v, s);
  const auto b = mc_solve_point(d, m, data, x, v, s);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.std_error, b.std_error);
  s.workers = 3;
  const auto c = mc_solve_point(d, m, data, x, v, s);
  EXPECT_EQ(a.estimate, c.estimate);
  s.workers = 1;
  s.seed = 8;
  EXPECT_NE(mc_solve_point(d, m, data, x, v, s).estimate, a.estimate);
}

TEST(MonteCarloSolve, RejectsExteriorPoint) {
  EXPECT_THROW(mc_solve_point(ConvexDomain(Ball{0.1}), KernelModel::hard_sphere(), BoundaryData(), Vec3(0.2, 0, 0),
                              Vec3(1, 0, 0)),
               GeometryError);
}

TEST(MonteCarloSolve, AgreesWithDeterministicSolution) {
  const auto d = ConvexDomain(Ball{0.1});
  const auto m = KernelModel::hard_sphere();
  const BoundaryData data(CapCutoff{});
  const auto sol = neumann_solve(d, m, data);
  const VelocityQuadrature q;
  const Vec3 probes[][2] = {{Vec3(0, 0, 0), Vec3(-1, 0, 0)},
                            {Vec3(0.05, 0, 0), Vec3(-0.3, 0.5, 0)},
                            {Vec3(0, 0.03, 0.02), Vec3(-1, 0.2, 0.4)},
                            {Vec3(-0.04, 0.04, 0), Vec3(0.2, -1.2, 0.3)}};
  McSolveSpec s;
  s.paths = 50000;
  for (const auto& p : probes) {
    const double det = evaluate_point(d, m, data, sol, p[0], p[1], q);
    const auto mc = mc_solve_point(d, m, data, p[0], p[1], s);
    EXPECT_NEAR(mc.estimate, det, 3 * mc.std_error) << p[0].transpose() << " | " << p[1].transpose();
  }
}
