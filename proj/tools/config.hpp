#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gkin/experiments.hpp"

namespace gkin::cli {

using json = nlohmann::json;

// Reads one JSON object: each accessor records the value used, finish() rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string path, json& resolved) : j_(j), path_(std::move(path)), out_(resolved) {
    if (!j_.is_object()) fail("", "must be an object");
    out_ = json::object();
  }

  double number(const std::string& key, double def) {
    const double v = has(key) ? checked(key, j_[key].is_number(), "a number").get<double>() : def;
    out_[key] = v;
    return v;
  }
  double positive(const std::string& key, double def) {
    const double v = number(key, def);
    if (!(v > 0)) fail(key, "must be positive");
    return v;
  }
  long integer(const std::string& key, long def, long min = 1) {
    long v = def;
    if (has(key)) v = checked(key, j_[key].is_number_integer(), "an integer").get<long>();
    if (v < min) fail(key, "must be at least " + std::to_string(min));
    out_[key] = v;
    return v;
  }
  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    std::uint64_t v = def;
    if (has(key)) {
      const json& e = j_[key];
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0))
        fail(key, "must be a non-negative integer");
      v = e.get<std::uint64_t>();
    }
    out_[key] = v;
    return v;
  }
  bool boolean(const std::string& key, bool def) {
    const bool v = has(key) ? checked(key, j_[key].is_boolean(), "a boolean").get<bool>() : def;
    out_[key] = v;
    return v;
  }
  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    const std::string v = has(key) ? checked(key, j_[key].is_string(), "a string").get<std::string>() : def;
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) fail(key, "unsupported value '" + v + "'");
    out_[key] = v;
    return v;
  }
  std::string text(const std::string& key, const std::string& def) {
    const std::string v = has(key) ? checked(key, j_[key].is_string(), "a string").get<std::string>() : def;
    if (v.empty() || v.find_first_of("/\\") != std::string::npos) fail(key, "must be a non-empty file stem");
    out_[key] = v;
    return v;
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    std::vector<double> v = def;
    if (has(key)) {
      const json& e = checked(key, j_[key].is_array() && !j_[key].empty(), "a non-empty array");
      v.clear();
      for (const auto& x : e) {
        if (!x.is_number()) fail(key, "must contain numbers");
        v.push_back(x.get<double>());
      }
    }
    out_[key] = v;
    return v;
  }

  bool present(const std::string& key) const { return j_.contains(key); }

  // Nested section; missing means all defaults.
  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_[key] : empty, join(key), out_[key]);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + join(k) + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("'" + (key.empty() ? path_ : join(key)) + "' " + what);
  }

 private:
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& checked(const std::string& key, bool ok, const char* what) const {
    if (!ok) fail(key, std::string("must be ") + what);
    return j_[key];
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  json& out_;
  std::set<std::string> seen_;
};

inline json parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

enum class DomainKind { ball, flat };

struct DomainConfig {
  ConvexDomain domain;
  double r1 = 0.5;
};

inline DomainConfig read_domain(Section s, DomainKind def_kind, double def_r) {
  const std::string kind = s.choice("kind", def_kind == DomainKind::ball ? "ball" : "flat_cap", {"ball", "flat_cap"});
  DomainConfig out;
  try {
    if (kind == "ball") {
      out.domain = ConvexDomain(Ball{s.positive("r", def_r)});
    } else {
      const double R = s.positive("R", 1.0), a = s.positive("a", 0.25);
      out.r1 = s.positive("r1", 0.5);
      out.domain = ConvexDomain::flat_cap(R, a, out.r1);
    }
  } catch (const GeometryError& e) {
    s.fail("", e.what());
  }
  s.finish();
  return out;
}

inline VelocityQuadratureSpec read_quad(Section s, const VelocityQuadratureSpec& def) {
  VelocityQuadratureSpec q = def;
  q.v_max = s.positive("v_max", def.v_max);
  q.n_r = s.integer("n_r", def.n_r);
  q.n_theta = s.integer("n_theta", def.n_theta);
  q.n_phi = s.integer("n_phi", def.n_phi);
  q.singular_shift = s.boolean("singular_shift", def.singular_shift);
  s.finish();
  return q;
}

inline KernelModel read_kernel(Section s) {
  s.choice("model", "hard_sphere", {"hard_sphere"});
  s.finish();
  return KernelModel::hard_sphere();
}

inline BoundaryData read_boundary_data(Section s, const DomainConfig& dc) {
  const std::string def = dc.domain.is_ball() ? "cap_cutoff" : "flat_cutoff";
  const std::string kind = s.choice("kind", def, {"cap_cutoff", "flat_cutoff"});
  BoundaryData g;
  try {
    if (kind == "flat_cutoff") {
      if (!dc.domain.is_flat_cap()) s.fail("kind", "flat_cutoff requires a flat_cap domain");
      g = BoundaryData(FlatCutoff{s.positive("r1", dc.r1)});
    } else {
      CapCutoff c;
      c.theta1 = s.positive("theta1", c.theta1);
      c.theta2 = s.positive("theta2", c.theta2);
      g = BoundaryData(c);
    }
  } catch (const std::invalid_argument& e) {
    s.fail("", e.what());
  }
  s.finish();
  return g;
}

inline ScanSpec read_scan(Section& s) {
  ScanSpec sc;
  sc.k_min = s.integer("k_min", sc.k_min);
  sc.k_max = s.integer("k_max", sc.k_max);
  if (sc.k_max < sc.k_min + sc.rules.min_refinements)
    s.fail("k_max", "must exceed k_min by at least " + std::to_string(sc.rules.min_refinements));
  return sc;
}

inline void check_p_values(Section& s, const std::vector<double>& ps, const char* key) {
  for (double p : ps)
    if (!(p >= 1)) s.fail(key, "entries must be >= 1");
}

}  // namespace gkin::cli
