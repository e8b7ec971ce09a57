#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "config.hpp"
#include "report.hpp"

using namespace gkin;
using namespace gkin::cli;

namespace {

struct Options {
  std::string subcommand;
  std::string kind;  // counterexample / eta-gap positional
  std::string config;
  int workers = default_workers();
  std::string out = ".";
};

std::string p_label(double p) {
  std::ostringstream s;
  s << "p" << p;
  return s.str();
}

json verdict_json(const DivergenceVerdict& v) {
  json eps = json::array(), vals = json::array(), ref = json::array();
  for (double e : v.eps) eps.push_back(num(e));
  for (double x : v.values) vals.push_back(num(x));
  for (double x : v.reference) ref.push_back(num(x));
  return {{"status", to_string(v.status)},
          {"model", v.model},
          {"rate", num(v.rate)},
          {"limit", num(v.limit)},
          {"reference_limit", num(v.reference_limit)},
          {"fit_deviation", num(v.fit_deviation)},
          {"increment_ratio_min", num(v.increment_ratio_min)},
          {"diagnostics", v.diagnostics},
          {"epsilon", eps},
          {"values", vals},
          {"reference", ref}};
}

json estimate_json(const Estimate& e) { return {{"value", num(e.value)}, {"std_error", num(e.error)}}; }

// All sections are parsed for every subcommand so typos anywhere are caught.
struct Config {
  std::string name;
  DomainConfig dom;
  KernelModel model;
  VelocityQuadratureSpec quad;
  BoundaryData data;
  KernelCheckSpec kernel_check;
  int geometry_samples = 10000;
  std::uint64_t geometry_seed = 1;
  OperatorNormSpec norms;
  ContractionSpec contraction;
  ChangeOfVariablesSpec cov;
  std::vector<double> grazing_p;
  double grazing_a = 1, grazing_b = 1;
  ScanSpec grazing_scan;
  CounterexampleSpec counter;
  EtaGapSpec eta;
  double eta_margin = 0.2;
  SolveExperimentSpec solve;
};

Config read_config(const json& j, json& resolved, const Options& o) {
  Config c;
  Section root(j, "", resolved);
  const std::string stem = o.subcommand + (o.kind.empty() ? "" : "-" + o.kind);
  c.name = root.text("name", stem);

  DomainKind def_kind = o.kind == "flat" ? DomainKind::flat : DomainKind::ball;
  c.dom = read_domain(root.sub("domain"), def_kind, o.subcommand == "solve" ? 0.1 : 0.5);
  if (!o.kind.empty() && c.dom.domain.is_ball() != (o.kind == "ball"))
    throw ConfigError("domain.kind does not match '" + o.kind + "'");
  c.model = read_kernel(root.sub("kernel"));
  c.quad = read_quad(root.sub("quad"), {});
  c.data = read_boundary_data(root.sub("boundary_data"), c.dom);

  {
    Section s = root.sub("verify_kernel");
    auto& k = c.kernel_check;
    k.identity_samples = s.integer("identity_samples", k.identity_samples);
    k.invariant_samples = s.integer("invariant_samples", k.invariant_samples);
    k.envelope_pairs = s.integer("envelope_pairs", k.envelope_pairs);
    k.rho = s.positive("rho", k.rho);
    if (!(k.rho < 1)) s.fail("rho", "must be below 1");
    k.seed = s.seed("seed", k.seed);
    k.quad = c.quad;
    s.finish();
  }
  {
    Section s = root.sub("geometry");
    c.geometry_samples = s.integer("samples", c.geometry_samples);
    c.geometry_seed = s.seed("seed", c.geometry_seed);
    s.finish();
  }
  {
    Section s = root.sub("operator_norms");
    auto& n = c.norms;
    n.functions = s.integer("functions", n.functions);
    n.mc.samples = s.integer("samples", n.mc.samples);
    n.mc.seed = s.seed("seed", n.mc.seed);
    n.mc.workers = o.workers;
    std::vector<double> ps, as;
    for (const auto& ns : n.norms) {
      if (std::find(ps.begin(), ps.end(), ns.p) == ps.end()) ps.push_back(ns.p);
      if (std::find(as.begin(), as.end(), ns.alpha) == as.end()) as.push_back(ns.alpha);
    }
    ps = s.numbers("p_values", ps);
    as = s.numbers("alpha_values", as);
    n.norms.clear();
    for (double p : ps)
      for (double a : as) {
        if (!(p >= 1) || !(a >= 0) || !(a < 0.3)) s.fail("p_values", "need p >= 1 and 0 <= alpha < 0.3");
        n.norms.push_back({p, a});
      }
    auto& ct = c.contraction;
    ct.radii = s.numbers("radii", ct.radii);
    for (double r : ct.radii)
      if (!(r > 0)) s.fail("radii", "entries must be positive");
    if (ct.radii.size() < 2) s.fail("radii", "needs at least two radii");
    ct.spline_nodes = s.integer("spline_nodes", ct.spline_nodes, 8);
    ct.quad = c.quad;
    ct.workers = o.workers;
    s.finish();
  }
  {
    Section s = root.sub("change_of_variables");
    auto& v = c.cov;
    v.identity_samples = s.integer("identity_samples", v.identity_samples);
    v.mc.samples = s.integer("samples", v.mc.samples);
    v.mc.seed = s.seed("seed", v.mc.seed);
    v.chord_order = s.integer("chord_order", v.chord_order);
    v.mc.workers = o.workers;
    s.finish();
  }
  {
    Section s = root.sub("grazing");
    c.grazing_p = s.numbers("p_values", {1.0, 1.5, 1.9, 2.0, 2.5, 2.9, 3.0});
    check_p_values(s, c.grazing_p, "p_values");
    c.grazing_a = s.positive("a", 1.0);
    c.grazing_b = s.number("b", 1.0);
    c.grazing_scan = read_scan(s);
    s.finish();
  }
  {
    Section s = root.sub("counterexample");
    auto& ce = c.counter;
    ce.p_values = s.numbers("p_values", ce.p_values);
    check_p_values(s, ce.p_values, "p_values");
    ce.alpha = s.number("alpha", ce.alpha);
    if (!(ce.alpha >= 0 && ce.alpha < 0.5)) s.fail("alpha", "must lie in [0, 1/2)");
    ce.w1p.scan = read_scan(s);
    ce.log_r0 = s.positive("log_r0", ce.log_r0);
    ce.w1p.workers = o.workers;
    s.finish();
  }
  {
    Section s = root.sub("eta_gap");
    auto& e = c.eta;
    e.r0 = s.positive("r0", e.r0);
    e.n_speed = s.integer("n_speed", e.n_speed, 2);
    e.n_angle = s.integer("n_angle", e.n_angle, 2);
    c.eta_margin = s.number("required_margin", c.eta_margin);
    e.quad = c.quad;
    e.workers = o.workers;
    s.finish();
  }
  {
    Section s = root.sub("solver");
    auto& sv = c.solve;
    auto& ns = sv.neumann;
    {
      Section g = s.sub("grid");
      ns.grid.n_x = g.integer("n_x", ns.grid.n_x, 2);
      ns.grid.n_v_r = g.integer("n_v_r", ns.grid.n_v_r, 2);
      ns.grid.n_v_ang = g.integer("n_v_ang", ns.grid.n_v_ang, 2);
      ns.grid.v_max = g.positive("v_max", ns.grid.v_max);
      g.finish();
    }
    ns.tol = s.positive("tol", ns.tol);
    ns.max_iter = s.integer("max_iter", ns.max_iter);
    ns.interp_tol = s.positive("interp_tol", ns.interp_tol);
    ns.norm.p = s.number("p", ns.norm.p);
    ns.norm.alpha = s.number("alpha", ns.norm.alpha);
    try {
      ns.norm.validate();
    } catch (const std::invalid_argument& e) {
      s.fail("p", e.what());
    }
    ns.kernel_quad = read_quad(s.sub("quad"), ns.kernel_quad);
    sv.probe_quad = read_quad(s.sub("probe_quad"), sv.probe_quad);
    sv.mc.paths = s.integer("mc_paths", sv.mc.paths);
    sv.seed = s.seed("seed", sv.seed);
    sv.mc.seed = sv.seed;
    sv.probes = s.integer("probes", sv.probes);
    ns.workers = o.workers;
    sv.mc.workers = o.workers;
    s.finish();
  }
  root.finish();
  return c;
}

void run_verify_kernel(const Config& c, Report& r) {
  const auto k = kernel_check(c.model, c.kernel_check);
  r.results() = {{"nu_at_zero", num(k.nu_zero)},
                 {"half_space_gain_at_rest", num(k.half_gain)},
                 {"half_space_gain_at_rest_grid", num(k.half_gain_grid)},
                 {"gap_at_rest", num(k.gap_at_rest)},
                 {"identity_worst_relative", num(k.identity_worst)},
                 {"invariant_worst", num(k.invariant_worst)},
                 {"envelope_pointwise_max_ratio", num(k.envelope_pointwise)},
                 {"envelope_integrated_fit_max", num(k.envelope_fit)},
                 {"envelope_integrated_far_max", num(k.envelope_far)},
                 {"rate_floor", num(c.model.nu0)}};
  r.add(kernel_claims(k));
}

void run_verify_geometry(const Config& c, Report& r) {
  const auto g = geometry_check(c.dom.domain, c.geometry_samples, c.geometry_seed);
  r.results() = {{"exit_time_worst", num(g.tau_worst)}, {"samples", g.samples}};
  if (c.dom.domain.is_ball())
    r.results()["chord_identity_worst"] = num(g.circle_worst);
  else
    r.results()["flat_chord_ratio"] = {{"N_1e-3", num(g.chord_ratio_small)}, {"N_1e-6", num(g.chord_ratio_tiny)}};
  r.add(geometry_claims(c.dom.domain, g));
}

void run_operator_norms(const Config& c, Report& r) {
  const auto n = operator_norm_bounds(c.dom.domain, c.model, c.norms);
  auto rows = [](const std::vector<NormRatioRow>& rs) {
    json a = json::array();
    for (const auto& x : rs)
      a.push_back({{"function", x.function}, {"p", num(x.norm.p)}, {"alpha", num(x.norm.alpha)},
                   {"ratio", num(x.ratio)}, {"std_error", num(x.error)}, {"bound", num(x.bound)}});
    return a;
  };
  const auto ct = contraction_scaling(c.model, c.contraction);
  json crow = json::array();
  for (const auto& x : ct.rows)
    crow.push_back({{"r", num(x.r)}, {"diam", num(x.diam)}, {"ratio", num(x.ratio)},
                    {"std_error", num(x.ratio_error)}, {"second_iterate", num(x.second)},
                    {"second_over_diam", num(x.second / x.diam)}});
  r.results() = {{"rate_floor", num(n.nu0)},
                 {"transport_rows", rows(n.j_rows)},
                 {"solution_rows", rows(n.s_rows)},
                 {"worst_transport_margin", num(n.worst_j)},
                 {"worst_solution_margin", num(n.worst_s)},
                 {"contraction", {{"rows", crow},
                                  {"slope", num(ct.slope)},
                                  {"second_constant", num(ct.second_constant)},
                                  {"second_check", num(ct.second_check)}}}};
  int vj = 0, vs = 0;
  for (const auto& x : n.j_rows) vj += x.ratio - 3 * x.error > x.bound;
  for (const auto& x : n.s_rows) vs += x.ratio - 3 * x.error > x.bound;
  r.add(claim_le("boundary-transport-norm-bound-violations", vj, 0));
  r.add(claim_le("line-solution-norm-bound-violations", vs, 0));
  r.add(contraction_claims(ct));
}

void run_change_of_variables(const Config& c, Report& r) {
  const auto v = change_of_variables(c.dom.domain, c.cov);
  r.results() = {{"identity_worst_relative", num(v.identity_worst)},
                 {"ray_forward", estimate_json(v.ray_forward)},
                 {"ray_backward", estimate_json(v.ray_backward)},
                 {"ray_sigma", num(v.ray_z)},
                 {"volume", estimate_json(v.volume)},
                 {"boundary", estimate_json(v.boundary)},
                 {"boundary_sigma", num(v.boundary_z)}};
  r.add(change_of_variables_claims(v));
}

void run_grazing(const Config& c, Report& r, int workers) {
  const auto& d = c.dom.domain;
  const auto rows = grazing_thresholds(d, c.grazing_p, c.grazing_a, c.grazing_b, c.dom.r1, c.grazing_scan, workers);
  json a = json::array();
  const std::string kind = d.is_ball() ? "ball" : "flat";
  for (const auto& row : rows) {
    json v = verdict_json(row.verdict);
    v["p"] = num(row.p);
    v["expected"] = to_string(row.expected);
    v["closed_form_relative_error"] = num(row.closed_form_error);
    a.push_back(v);
    r.add_scan(scan_csv(kind + "-" + p_label(row.p), row.verdict));
  }
  r.results() = {{"scans", a}, {"threshold", d.is_ball() ? 3 : 2}};
  r.add(grazing_claims(d, rows));
}

void run_counterexample(const Config& c, Report& r) {
  const auto& d = c.dom.domain;
  const auto res = counterexample(d, c.model, c.data, c.counter);
  json a = json::array();
  const std::string kind = d.is_ball() ? "ball" : "flat";
  for (const auto& row : res.rows) {
    json v = verdict_json(row.verdict);
    v["p"] = num(row.p);
    v["expected"] = to_string(row.expected);
    a.push_back(v);
    r.add_scan(scan_csv(kind + "-" + p_label(row.p), row.verdict));
  }
  r.results() = {{"scans", a}};
  if (d.is_ball()) {
    json l = json::array();
    for (const auto& row : res.log_rows)
      l.push_back({{"epsilon", num(row.eps)}, {"numeric", num(row.numeric)}, {"closed_form", num(row.closed)}});
    r.results()["log_divergence"] = {{"rows", l}, {"worst_relative", num(res.log_worst)}};
  }
  r.add(counterexample_claims(d, res));
}

void run_eta_gap(const Config& c, Report& r) {
  EtaGapSpec s = c.eta;
  // the face normal; for the ball, the outward normal at the footpoint closest to the data cap
  s.normal = Vec3(1, 0, 0);
  const auto e = eta_gap_scan(c.model, s);
  json rows = json::array();
  for (const auto& x : e.rows)
    rows.push_back({{"speed", num(x.speed)}, {"cos_angle", num(x.cos_angle)}, {"gap", num(x.gap)},
                    {"error", num(x.error)}});
  r.results() = {{"limit", num(e.limit)},
                 {"limit_error", num(e.limit_error)},
                 {"min_gap", num(e.min_gap)},
                 {"argmin", vec(e.argmin)},
                 {"quadrature_error", num(e.quad_error)},
                 {"lipschitz", num(e.lipschitz)},
                 {"covering", num(e.covering)},
                 {"certified", num(e.certified)},
                 {"r0", num(s.r0)},
                 {"normal", vec(s.normal)},
                 {"rows", rows}};
  r.add(eta_gap_claims(e, c.eta_margin));
}

void run_solve(const Config& c, Report& r) {
  try {
    const auto s = solve_experiment(c.dom.domain, c.model, c.data, c.solve);
    json probes = json::array();
    for (const auto& p : s.probes)
      probes.push_back({{"x", vec(p.x)}, {"v", vec(p.v)}, {"deterministic", num(p.deterministic)},
                        {"mc", num(p.mc)}, {"std_error", num(p.std_error)}, {"sigma", num(p.z)}});
    const auto& rep = s.report;
    json inc = json::array(), ratios = json::array();
    for (double x : rep.increments) inc.push_back(num(x));
    for (double x : rep.ratios) ratios.push_back(num(x));
    r.results() = {{"iterations", rep.iterations},
                   {"converged", rep.converged},
                   {"increments", inc},
                   {"ratios", ratios},
                   {"ratio_max", num(rep.ratio_max)},
                   {"residual", num(rep.residual)},
                   {"residual_relative", num(rep.residual_relative)},
                   {"interpolation_error", num(rep.interp_error)},
                   {"probes", probes},
                   {"max_sigma", num(s.max_z)},
                   {"zero_kernel_grid_deviation", num(s.zero_kernel_grid_diff)},
                   {"zero_kernel_point_deviation", num(s.zero_kernel_point_diff)}};
    r.add(solve_claims(s));
  } catch (const SolverError& e) {
    r.add_error(e.kind() == SolverError::Kind::non_contractive ? "neumann-contraction" : "neumann-grid-resolution",
                e.what());
  }
}

int run(const Options& o) {
  json resolved;
  Config c;
  try {
    c = read_config(parse_config_file(o.config), resolved, o);
  } catch (const ConfigError& e) {
    std::cerr << "gkin: config error: " << e.what() << "\n";
    return 2;
  }
  Report r(o.subcommand, c.name);
  r.config() = resolved;
  const std::string& s = o.subcommand;
  if (s == "verify-kernel") run_verify_kernel(c, r);
  else if (s == "verify-geometry") run_verify_geometry(c, r);
  else if (s == "operator-norms") run_operator_norms(c, r);
  else if (s == "change-of-variables") run_change_of_variables(c, r);
  else if (s == "grazing") run_grazing(c, r, o.workers);
  else if (s == "eta-gap") run_eta_gap(c, r);
  else if (s == "counterexample") run_counterexample(c, r);
  else if (s == "solve") run_solve(c, r);
  for (const auto& f : r.write(o.out)) std::cout << f << "\n";
  const auto summary = r.summary();
  for (const auto& cl : summary["claims"])
    std::cout << (cl["pass"].get<bool>() ? "PASS " : "FAIL ") << cl["tag"].get<std::string>() << "\n";
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gkin: linear kinetic transport verification runner"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->required();
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
  };
  for (const char* name : {"verify-kernel", "verify-geometry", "operator-norms", "change-of-variables", "grazing",
                           "solve"})
    common(app.add_subcommand(name));
  auto* ce = app.add_subcommand("counterexample", "W^{1,p} scans of Jg for cutoff data");
  ce->add_option("kind", o.kind, "flat or ball")->required()->check(CLI::IsMember({"flat", "ball"}));
  common(ce);
  auto* eta = app.add_subcommand("eta-gap", "gap between collision rate and half-space gain");
  eta->add_option("kind", o.kind, "flat or ball")->check(CLI::IsMember({"flat", "ball"}));
  common(eta);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  o.subcommand = app.get_subcommands().front()->get_name();
  try {
    return run(o);
  } catch (const std::exception& e) {
    std::cerr << "gkin: " << e.what() << "\n";
    return 1;
  }
}
