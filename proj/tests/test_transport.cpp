#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <random>

#include "gkin/transport.hpp"

using namespace gkin;

namespace {

const KernelModel kHS = KernelModel::hard_sphere();
const ConvexDomain kUnitBall{Ball{1.0}};
const ConvexDomain kCap = ConvexDomain::flat_cap(1.0, 0.25, 0.5);
const BoundaryData kOne{CustomData{[](const BoundaryPoint&, const Vec3&) { return 1.0; }, true}};
const BoundaryData kCapData{CapCutoff{0.3, 0.6}};
const BoundaryData kFlatData{FlatCutoff{0.5}};

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

Vec3 random_interior(const ConvexDomain& d, std::mt19937_64& rng) {
  Vec3 lo, hi;
  d.bounds(lo, hi);
  std::uniform_real_distribution<double> u(0, 1);
  for (;;) {
    const Vec3 x = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo);
    if (d.contains_open(x)) return x;
  }
}

double smooth_field(const Vec3& x, const Vec3& v) {
  return std::cos(x.x() + 2 * x.y()) * std::exp(-0.3 * v.squaredNorm()) + x.z() * x.z();
}

}  // namespace

TEST(SmoothStep, LimitsMonotoneAndDerivative) {
  EXPECT_EQ(smooth_step(-0.1), 0.0);
  EXPECT_EQ(smooth_step(0.0), 0.0);
  EXPECT_EQ(smooth_step(1.0), 1.0);
  EXPECT_NEAR(smooth_step(0.5), 0.5, 1e-15);
  double prev = 0;
  for (double u = 0.01; u < 1; u += 0.01) {
    EXPECT_GE(smooth_step(u), prev);
    prev = smooth_step(u);
    const double fd = (smooth_step(u + 1e-6) - smooth_step(u - 1e-6)) / 2e-6;
    EXPECT_NEAR(smooth_step_prime(u), fd, 1e-6);
  }
}

TEST(BoundaryData, FlatCutoffSupport) {
  const double r1 = 0.5;
  for (double rho = 0; rho < 0.9; rho += 0.01) {
    const double phi = kFlatData.profile({Vec3(0, rho, 0), Vec3(1, 0, 0)});
    EXPECT_GE(phi, 0);
    EXPECT_LE(phi, 1);
    if (rho <= r1 / 4) {
      EXPECT_EQ(phi, 1.0);
    }
    if (rho >= r1 / 2) {
      EXPECT_EQ(phi, 0.0);
    }
  }
  // zero on the spherical part
  EXPECT_EQ(kFlatData.profile(kCap.footpoint(Vec3(-0.5, 0, 0), Vec3(1, 0, 0))), 0.0);
}

TEST(BoundaryData, CapCutoffSupport) {
  for (double th = 0; th < kPi; th += 0.01) {
    const BoundaryPoint z{Vec3(std::cos(th), std::sin(th), 0), Vec3(std::cos(th), std::sin(th), 0)};
    const double phi = kCapData.profile(z);
    EXPECT_GE(phi, 0);
    EXPECT_LE(phi, 1);
    if (th <= 0.3) {
      EXPECT_EQ(phi, 1.0);
    }
    if (th >= 0.6) {
      EXPECT_EQ(phi, 0.0);
    }
  }
  EXPECT_THROW(BoundaryData(CapCutoff{0.6, 0.3}), std::invalid_argument);
}

TEST(BoundaryData, TangentialGradientMatchesAnalyticProfileDerivative) {
  const double r = 1.0, th = 0.45;
  const Vec3 z(r * std::cos(th), r * std::sin(th), 0);
  const BoundaryPoint bp{z, z / r};
  const Vec3 v(-0.3, 0.2, 0.5);
  const Vec3 G = kCapData.tangential_gradient(kUnitBall, bp, v);
  // dφ/dθ along the meridian unit vector (-sin θ, cos θ, 0) divided by r
  const double dphi = -smooth_step_prime((th - 0.3) / 0.3) / 0.3 / r;
  const Vec3 ref = dphi * maxwellian(v) * Vec3(-std::sin(th), std::cos(th), 0);
  EXPECT_LE((G - ref).norm(), 1e-7);
  EXPECT_NEAR(G.dot(bp.n), 0, 1e-12);
}

TEST(ApplyJ, UnitDataIsAttenuation) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = random_interior(kCap, rng), v = 1.5 * random_unit(rng);
    EXPECT_NEAR(apply_J(kCap, kHS, kOne, x, v), std::exp(-kHS.nu(v) * kCap.exit_time(x, v)), 1e-15);
  }
}

TEST(ApplyJ, CapDataFromCentre) {
  const Vec3 v(-1, 0, 0);  // footpoint at the pole of the cap
  EXPECT_NEAR(apply_J(kUnitBall, kHS, kCapData, Vec3::Zero(), v), std::exp(-kHS.nu(v)) * std::exp(-0.5),
              1e-15);
  EXPECT_EQ(apply_J(kUnitBall, kHS, kCapData, Vec3::Zero(), Vec3(1, 0, 0)), 0.0);
  EXPECT_EQ(apply_J(kUnitBall, kHS, kCapData, Vec3(0.2, 0, 0), Vec3::Zero()), 0.0);
}

TEST(LineQuadrature, ExponentialClosedForm) {
  const LineQuadrature lq;
  for (double a : {0.1, 0.7, 3.0, 25.0})
    for (double tau : {0.01, 0.5, 2.0, 10.0})
      EXPECT_NEAR(lq.integrate(tau, a, [&](double t) { return std::exp(-a * t); }),
                  (1 - std::exp(-a * tau)) / a, 1e-10);
}

TEST(LineQuadrature, ExactOnPolynomialsOfRuleDegree) {
  const LineQuadrature lq;
  // 8-point rule integrates degree 15 exactly on each panel
  EXPECT_NEAR(lq.integrate(1.3, 0.1, [](double t) { return std::pow(t, 15); }), std::pow(1.3, 16) / 16,
              1e-13);
}

TEST(ApplyS, UnitFieldClosedForm) {
  std::mt19937_64 rng(32);
  for (const auto* d : {&kUnitBall, &kCap}) {
    for (int i = 0; i < 200; ++i) {
      const Vec3 x = random_interior(*d, rng), v = 2.0 * random_unit(rng) * (0.05 + i / 100.0);
      const double n = kHS.nu(v), tau = d->exit_time(x, v);
      const double got = apply_S(*d, kHS, [](const Vec3&, const Vec3&) { return 1.0; }, x, v);
      EXPECT_NEAR(got, (1 - std::exp(-n * tau)) / n, 1e-10);
      // sup bound min{1/ν0, diam/|v|}
      EXPECT_LE(got, std::min(1 / kHS.nu0, d->diam() / v.norm()));
    }
  }
}

TEST(ApplyS, ZeroVelocityLimitAndZeroField) {
  auto h = [](const Vec3& x, const Vec3&) { return 1 + x.x(); };
  const Vec3 x(0.2, 0.1, 0);
  EXPECT_NEAR(apply_S(kUnitBall, kHS, h, x, Vec3::Zero()), 1.2 / kHS.nu(0.0), 1e-15);
  // continuity of the limit
  EXPECT_NEAR(apply_S(kUnitBall, kHS, h, Vec3::Zero(), Vec3(1e-4, 0, 0)), 1.0 / kHS.nu(0.0), 1e-3);
  EXPECT_EQ(apply_S(kUnitBall, kHS, [](const Vec3&, const Vec3&) { return 0.0; }, x, Vec3(1, 0, 0)), 0.0);
}

TEST(ApplyS, MatchesAdaptiveQuadrature) {
  using boost::math::quadrature::gauss_kronrod;
  std::mt19937_64 rng(33);
  for (int i = 0; i < 50; ++i) {
    const Vec3 x = random_interior(kCap, rng), v = 1.3 * random_unit(rng);
    const double n = kHS.nu(v), tau = kCap.exit_time(x, v);
    const double ref = gauss_kronrod<double, 61>::integrate(
        [&](double s) { return std::exp(-n * s) * smooth_field(x - s * v, v); }, 0.0, tau, 10, 1e-14);
    EXPECT_NEAR(apply_S(kCap, kHS, smooth_field, x, v), ref, 1e-10);
  }
}

TEST(ApplyS, DuhamelIdentityAlongRays) {
  std::mt19937_64 rng(34);
  int checked = 0;
  while (checked < 200) {
    const Vec3 x = random_interior(kUnitBall, rng), v = 1.1 * random_unit(rng);
    const auto t = tau_derivatives(kUnitBall, x, v);
    if (t.N < 0.1 || (x + 1e-3 * v).norm() > 0.999) continue;
    auto u = [&](const Vec3& y) { return apply_S(kUnitBall, kHS, smooth_field, y, v); };
    const double dlt = 1e-4;
    const double deriv = (u(x + dlt * v) - u(x - dlt * v)) / (2 * dlt);
    const double lhs = deriv + kHS.nu(v) * u(x), rhs = smooth_field(x, v);
    EXPECT_LE(std::abs(lhs - rhs), 1e-4 * std::max(1.0, std::abs(rhs)));
    ++checked;
  }
}

TEST(ApplySs, UnitFieldClosedFormAndEnvelope) {
  std::mt19937_64 rng(35);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = random_interior(kUnitBall, rng), v = (0.1 + 0.03 * i) * random_unit(rng);
    const double n = kHS.nu(v), tau = kUnitBall.exit_time(x, v);
    const double got = apply_S_s(kUnitBall, kHS, [](const Vec3&, const Vec3&) { return 1.0; }, x, v);
    EXPECT_NEAR(got, (1 - std::exp(-n * tau) * (1 + n * tau)) / (n * n), 1e-10);
    // t e^{-νt} <= (sup t e^{-νt/2}) e^{-νt/2}
    const double sup = 2 / (std::exp(1.0) * n);
    EXPECT_LE(got, sup * 2 / n * (1 - std::exp(-0.5 * n * tau)) * (1 + 1e-12));
  }
  EXPECT_EQ(apply_S_s(kUnitBall, kHS, [](const Vec3&, const Vec3&) { return 0.0; }, Vec3::Zero(), Vec3(1, 0, 0)), 0.0);
}

TEST(ApplySx, ExampleAndMagnitudeLaw) {
  const Vec3 v(1, 0, 0);
  const Vec3 got = apply_S_x(kUnitBall, kHS, kOne, Vec3::Zero(), v);
  EXPECT_LE((got - Vec3(1, 0, 0) * std::exp(-kHS.nu(v))).norm(), 1e-15);
  std::mt19937_64 rng(36);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = random_interior(kUnitBall, rng), w = 0.8 * random_unit(rng);
    const auto t = tau_derivatives(kUnitBall, x, w);
    const double mag = std::exp(-kHS.nu(w) * t.tau) * std::abs(kCapData(t.q, w)) / (t.N * w.norm());
    EXPECT_NEAR(apply_S_x(kUnitBall, kHS, kCapData, x, w).norm(), mag, 1e-12 * (1 + mag));
  }
}

TEST(GradJg, ChainRuleAgainstFiniteDifferences) {
  std::mt19937_64 rng(37);
  for (const auto& [d, g] : {std::pair{&kUnitBall, &kCapData}, std::pair{&kCap, &kFlatData}}) {
    int checked = 0, with_data = 0;
    while (checked < 3000) {
      const Vec3 x = random_interior(*d, rng), v = (0.3 + checked * 0.0005) * random_unit(rng);
      const auto t = tau_derivatives(*d, x, v);
      if (t.N < 0.1) continue;
      auto J = [&](const Vec3& y) { return apply_J(*d, kHS, *g, y, v); };
      const double h = 1e-6;
      Vec3 fd;
      for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e[i] = h;
        fd[i] = (J(x + e) - J(x - e)) / (2 * h);
      }
      const auto grad = grad_x_Jg(*d, kHS, *g, x, v);
      EXPECT_LE((fd - grad.total()).norm(), 1e-5 * (1 + grad.total().norm()));
      if (grad.data.norm() > 1e-3) ++with_data;
      // tangentially constant data: the transport term alone
      if (g->profile(t.q) == 1.0 && grad.data.norm() == 0) {
        EXPECT_LE((fd + kHS.nu(v) * apply_S_x(*d, kHS, *g, x, v)).norm(), 1e-5 * (1 + fd.norm()));
      }
      ++checked;
    }
    EXPECT_GT(with_data, 5);
  }
}

TEST(GradJg, VelocityGradientAgainstFiniteDifferences) {
  std::mt19937_64 rng(38);
  int checked = 0;
  while (checked < 300) {
    const Vec3 x = random_interior(kUnitBall, rng), v = (0.3 + checked * 0.005) * random_unit(rng);
    const auto t = tau_derivatives(kUnitBall, x, v);
    if (t.N < 0.1) continue;
    const double h = 1e-6;
    Vec3 fd;
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = h;
      fd[i] = (apply_J(kUnitBall, kHS, kCapData, x, v + e) - apply_J(kUnitBall, kHS, kCapData, x, v - e)) /
              (2 * h);
    }
    const Vec3 got = grad_v_Jg(kUnitBall, kHS, kCapData, x, v);
    EXPECT_LE((fd - got).norm(), 1e-5 * (1 + got.norm()));
    ++checked;
  }
}

TEST(ApplySv, CentreFormulaFiniteDifferencesAndBound) {
  const double r = 1.0;
  for (const Vec3& v : {Vec3(1, 0, 0), Vec3(0.3, -0.4, 0.2), Vec3(0, 2, 1)}) {
    const double s = v.norm();
    const Vec3 ref = -r * v / (s * s * s) * std::exp(-kHS.nu(v) * r / s);
    EXPECT_LE((apply_S_v(kUnitBall, kHS, kOne, Vec3::Zero(), v) - ref).norm(), 1e-12 * ref.norm());
    const Vec3 fd = grad_tau_fd(kUnitBall, Vec3::Zero(), v, 1, 1e-7) * std::exp(-kHS.nu(v) * r / s);
    EXPECT_LE((fd - ref).norm(), 1e-5 * ref.norm());
  }
  std::mt19937_64 rng(39);
  for (int i = 0; i < 500; ++i) {
    const Vec3 x = random_interior(kUnitBall, rng), v = 1.2 * random_unit(rng);
    const auto t = tau_derivatives(kUnitBall, x, v);
    const double bound = t.dx.norm() * t.tau * std::exp(-kHS.nu(v) * t.tau) * std::abs(kCapData(t.q, v));
    EXPECT_LE(apply_S_v(kUnitBall, kHS, kCapData, x, v).norm(), bound * (1 + 1e-12) + 1e-300);
  }
  const BoundaryData zero{CustomData{[](const BoundaryPoint&, const Vec3&) { return 0.0; }, true}};
  EXPECT_EQ(apply_S_v(kUnitBall, kHS, zero, Vec3::Zero(), Vec3(1, 0, 0)), Vec3::Zero());
}
