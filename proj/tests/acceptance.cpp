// Acceptance criteria 1-9. One PASS/FAIL line per criterion; exit 1 if any selected criterion fails.
// Usage: acceptance [--criterion N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gkin/experiments.hpp"

using namespace gkin;

namespace {

const int kWorkers = default_workers();

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [miss]");
  }
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

const std::vector<double> kPValues = {1.0, 1.5, 1.9, 2.0, 2.5, 2.9, 3.0};

ConvexDomain ball(double r) { return ConvexDomain(Ball{r}); }
ConvexDomain flat() { return ConvexDomain::flat_cap(1.0, 0.25, 0.5); }

void criterion1(Outcome& o) {
  const auto m = KernelModel::hard_sphere();
  const double nu0 = m.nu(Vec3::Zero()), gain = half_space_gain_at_rest(m);
  o.check(std::abs(nu0 - std::pow(2.0, -0.5)) <= 1e-10, "nu(0)=" + fmt(nu0) + " vs 2^-1/2 tol 1e-10");
  o.check(std::abs(gain - std::pow(2.0, -1.5)) <= 1e-4, "half-space gain=" + fmt(gain) + " vs 2^-3/2 tol 1e-4");
}

void criterion2(Outcome& o) {
  EtaGapSpec s;
  s.r0 = 0.5;
  s.workers = kWorkers;
  const auto r = eta_gap_scan(KernelModel::hard_sphere(), s);
  o.check(r.min_gap > 0, "min gap=" + fmt(r.min_gap) + " > 0");
  o.check(r.certified >= 0.2, "certified margin=" + fmt(r.certified) + " >= 0.2");
  o.check(std::abs(r.limit - std::pow(2.0, -1.5)) <= 1e-3, "limit=" + fmt(r.limit) + " vs 2^-3/2 tol 1e-3");
}

void criterion3(Outcome& o) {
  for (const auto& d : {flat(), ball(0.5)}) {
    const double crit = d.is_ball() ? 3 : 2;
    const auto rows = grazing_thresholds(d, kPValues, 1, 1, 0.5, {}, kWorkers);
    int matched = 0;
    double worst = 0, worst_eps = 0;
    for (const auto& row : rows) {
      const bool want = row.p < crit;
      for (std::size_t i = 0; i < row.verdict.values.size(); ++i)
        worst_eps = std::max(worst_eps, std::abs(row.verdict.values[i] - row.verdict.reference[i]) /
                                            row.verdict.reference[i]);
      matched += (row.verdict.status == ScanStatus::convergent) == want &&
                 row.verdict.status != ScanStatus::inconclusive;
      if (want) worst = std::max(worst, std::abs(row.verdict.limit - row.verdict.reference_limit) /
                                            row.verdict.reference_limit);
    }
    const std::string k = d.is_ball() ? "ball" : "flat";
    o.check(matched == int(rows.size()), k + " verdicts " + std::to_string(matched) + "/" + std::to_string(rows.size()));
    o.check(worst <= 0.02, k + " limit vs closed form rel err=" + fmt(worst) + " <= 0.02");
    o.check(worst_eps <= 0.02, k + " truncated values vs closed form rel err=" + fmt(worst_eps) + " <= 0.02");
  }
}

void criterion4(Outcome& o) {
  const auto m = KernelModel::hard_sphere();
  for (const auto& d : {flat(), ball(0.5)}) {
    CounterexampleSpec s;
    s.p_values = kPValues;
    s.w1p.workers = kWorkers;
    const BoundaryData g = d.is_ball() ? BoundaryData(CapCutoff{}) : BoundaryData(FlatCutoff{0.5});
    const auto r = counterexample(d, m, g, s);
    int matched = 0;
    for (const auto& row : r.rows) matched += row.verdict.status == row.expected;
    const std::string k = d.is_ball() ? "ball" : "flat";
    o.check(matched == int(r.rows.size()), k + " W1p verdicts " + std::to_string(matched) + "/" +
                                               std::to_string(r.rows.size()));
  }
  std::vector<double> eps;
  for (int k = 4; k <= 14; ++k) eps.push_back(std::ldexp(1.0, -k));
  double worst = 0;
  for (const auto& row : log_divergence_check(0.5, 0.5, eps)) {
    const double closed = kPi * std::pow(std::log(0.5 / (2 * 0.5 * row.eps)), 2);
    worst = std::max(worst, std::abs(row.numeric - closed) / closed);
  }
  o.check(worst <= 1e-3, "log^2 divergence rel err=" + fmt(worst) + " <= 1e-3");
}

void criterion5(Outcome& o) {
  const auto m = KernelModel::hard_sphere();
  for (const auto& d : {ball(0.5), flat()}) {
    OperatorNormSpec s;
    s.functions = 20;
    s.norms = {{1, 0}, {1, 0.1}, {2, 0}, {2, 0.1}, {3, 0}, {3, 0.1}};
    s.mc.workers = kWorkers;
    const auto r = operator_norm_bounds(d, m, s);
    int vj = 0, vs = 0;
    for (const auto& x : r.j_rows) vj += x.ratio - 3 * x.error > std::pow(x.norm.p * m.nu0, -1 / x.norm.p);
    for (const auto& x : r.s_rows) vs += x.ratio - 3 * x.error > 1 / m.nu0;
    const std::string k = d.is_ball() ? "ball" : "flat";
    o.check(vj == 0, k + " J violations=" + std::to_string(vj) + "/120, worst ratio/bound=" + fmt(r.worst_j));
    o.check(vs == 0, k + " S violations=" + std::to_string(vs) + "/120, worst ratio/bound=" + fmt(r.worst_s));
  }
}

void criterion6(Outcome& o) {
  ContractionSpec s;
  s.radii = {0.4, 0.2, 0.1, 0.05};
  s.workers = kWorkers;
  const auto r = contraction_scaling(KernelModel::hard_sphere(), s);
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < r.rows.size(); ++i) decreasing = decreasing && r.rows[i + 1].ratio < r.rows[i].ratio;
  std::vector<double> lx, ly;
  for (const auto& row : r.rows) {
    lx.push_back(std::log(row.diam));
    ly.push_back(std::log(row.ratio));
  }
  const double n = lx.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double C = r.rows.front().second / r.rows.front().diam;
  const auto& last = r.rows.back();
  std::string ratios;
  for (const auto& row : r.rows) ratios += (ratios.empty() ? "" : ",") + fmt(row.second / row.diam);
  o.check(decreasing, "L1 ratio decreasing");
  o.check(slope >= 0.9, "log-log slope=" + fmt(slope) + " >= 0.9");
  o.check(last.second <= C * last.diam, "second iterate/diam=" + ratios + " vs C=" + fmt(C) + " fitted at r=0.4");
}

void criterion7(Outcome& o) {
  const auto m = KernelModel::hard_sphere();
  const auto d = ball(0.1);
  SolveExperimentSpec s;
  s.probes = 20;
  s.neumann.workers = kWorkers;
  s.mc.workers = kWorkers;
  const auto r = solve_experiment(d, m, BoundaryData(CapCutoff{}), s);
  o.check(r.report.residual_relative <= 1e-6, "residual=" + fmt(r.report.residual_relative) + " <= 1e-6");
  int outside = 0;
  for (const auto& p : r.probes) outside += std::abs(p.mc - p.deterministic) > 3 * p.std_error;
  o.check(outside == 0, "MC outside 3 sigma at " + std::to_string(outside) + "/20 probes, max sigma=" + fmt(r.max_z));
  o.check(r.zero_kernel_grid_diff == 0 && r.zero_kernel_point_diff == 0,
          "K=0 reproduces Jg: deviation " + fmt(std::max(r.zero_kernel_grid_diff, r.zero_kernel_point_diff)));
}

void criterion8(Outcome& o) {
  const double idw = identity_sweep(10000, 3);
  o.check(idw <= 1e-12, "identity rel err=" + fmt(idw) + " <= 1e-12");
  for (const auto& d : {ball(0.5), flat()}) {
    ChangeOfVariablesSpec s;
    s.mc.workers = kWorkers;
    const auto r = change_of_variables(d, s);
    const std::string k = d.is_ball() ? "ball" : "flat";
    o.check(r.ray_z <= 3, k + " ray change of variables " + fmt(r.ray_z) + " sigma");
    o.check(r.boundary_z <= 3, k + " volume-to-boundary " + fmt(r.boundary_z) + " sigma");
  }
}

void criterion9(Outcome& o) {
  for (const auto& d : {ball(0.5), ball(2.0), flat()}) {
    const auto r = geometry_check(d, 10000, 9);
    const std::string k = d.is_ball() ? "ball r=" + fmt(d.ball().r) : "flat";
    o.check(r.tau_worst <= 1e-9, k + " tau vs bisection " + fmt(r.tau_worst) + " diam");
    if (d.is_ball()) o.check(r.circle_worst <= 1e-10, k + " |z-q|-2rN=" + fmt(r.circle_worst));
  }
}

struct Criterion {
  int id;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {{1, 10, criterion1},  {2, 60, criterion2},  {3, 120, criterion3},
                                      {4, 300, criterion4}, {5, 120, criterion5}, {6, 180, criterion6},
                                      {7, 300, criterion7}, {8, 60, criterion8},  {9, 30, criterion9}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  bool ok = true;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(t <= c.budget_s, "time " + fmt(t) + " s <= " + fmt(c.budget_s) + " s");
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail.str() << std::endl;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
