#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gkin/experiments.hpp"

namespace gkin::cli {

using json = nlohmann::json;

// NaN and infinities become strings so the summary stays valid JSON.
inline json num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline json vec(const Vec3& v) { return json::array({num(v.x()), num(v.y()), num(v.z())}); }

inline json to_json(const Claim& c) {
  return {{"tag", c.tag},
          {"relation", c.relation},
          {"measured", num(c.measured)},
          {"target", num(c.target)},
          {"tolerance", num(c.tolerance)},
          {"pass", c.pass}};
}

inline std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct ScanCsv {
  std::string name;
  std::vector<double> eps, values;
  std::string model;
  std::string verdict;
};

inline ScanCsv scan_csv(std::string name, const DivergenceVerdict& v) {
  std::string verdict = to_string(v.status);
  for (auto& ch : verdict) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return {std::move(name), v.eps, v.values, v.model, verdict};
}

class Report {
 public:
  Report(std::string subcommand, std::string name) : subcommand_(std::move(subcommand)), name_(std::move(name)) {}

  json& results() { return results_; }
  json& config() { return config_; }

  void add(const Claim& c) { claims_.push_back(c); }
  void add(const std::vector<Claim>& cs) { claims_.insert(claims_.end(), cs.begin(), cs.end()); }
  void add_error(const std::string& tag, const std::string& what) {
    claims_.push_back({tag, "error", NAN, NAN, NAN, false});
    errors_[tag] = what;
  }
  void add_scan(ScanCsv s) { scans_.push_back(std::move(s)); }

  bool passed() const { return all_pass(claims_); }

  json summary() const {
    json claims = json::array(), failures = json::array(), scans = json::array();
    for (const auto& c : claims_) {
      claims.push_back(to_json(c));
      if (!c.pass) failures.push_back(c.tag);
    }
    for (const auto& s : scans_) scans.push_back(csv_name(s));
    json out = {{"subcommand", subcommand_}, {"name", name_},     {"config", config_},
                {"claims", claims},          {"failures", failures}, {"pass", passed()},
                {"results", results_},       {"scans", scans}};
    if (!errors_.empty()) out["errors"] = errors_;
    return out;
  }

  std::vector<std::string> write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    const auto sp = dir / (name_ + ".summary.json");
    write_text(sp, summary().dump(2) + "\n");
    files.push_back(sp.string());
    for (const auto& s : scans_) {
      std::string text = "epsilon,value,fitted_model,verdict\n";
      for (std::size_t i = 0; i < s.eps.size(); ++i)
        text += format17(s.eps[i]) + "," + format17(s.values[i]) + "," + s.model + "," + s.verdict + "\n";
      const auto p = dir / csv_name(s);
      write_text(p, text);
      files.push_back(p.string());
    }
    return files;
  }

 private:
  std::string csv_name(const ScanCsv& s) const { return name_ + "." + s.name + ".csv"; }

  static void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
  }

  std::string subcommand_, name_;
  json config_ = json::object();
  json results_ = json::object();
  std::vector<Claim> claims_;
  std::vector<ScanCsv> scans_;
  json errors_ = json::object();
};

}  // namespace gkin::cli
