#pragma once

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idapbc/errors.hpp"
#include "idapbc/estimator.hpp"
#include "idapbc/lyapunov.hpp"
#include "idapbc/sim.hpp"
#include "idapbc/verifier.hpp"

namespace idapbc {

using json = nlohmann::json;

struct VerifySettings {
  std::optional<VerificationRegion> region;  ///< default: a box around x*
  VerifyOptions options;
};

struct RoaSettings {
  std::vector<double> levels;
  std::optional<VerificationRegion> region;
  RoaOptions options;
};

/// One configuration document: a scenario plus optional verification/ROA settings.
struct Config {
  Scenario scenario;
  std::optional<VerifySettings> verify;
  std::optional<RoaSettings> roa;
};

/// Box [x1*/2, 2 x1*] x [x2*/2, 3 x2*/2] used when a document gives no region.
inline VerificationRegion default_region(const EquilibriumPoint& eq) {
  return {{0.5 * eq.x1_star, 2.0 * eq.x1_star}, {0.5 * eq.x2_star, 1.5 * eq.x2_star}, 25};
}

namespace config_detail {

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw config_error("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error("bad value for " + where + "." + key + ": " + e.what());
  }
}

inline double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw config_error("missing " + where + "." + key);
  double v = 0.0;
  read(j, key, v, where);
  return v;
}

inline Interval interval(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw config_error(where + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline VerificationRegion region(const json& j, const std::string& where) {
  only_keys(j, where, {"x1", "x2", "grid_n"});
  if (!j.contains("x1") || !j.contains("x2")) throw config_error(where + " needs x1 and x2 intervals");
  VerificationRegion r{interval(j["x1"], where + ".x1"), interval(j["x2"], where + ".x2")};
  read(j, "grid_n", r.grid_n, where);
  r.validate();
  return r;
}

inline json region_json(const VerificationRegion& r) {
  return {{"x1", {r.x1.lo, r.x1.hi}}, {"x2", {r.x2.lo, r.x2.hi}}, {"grid_n", r.grid_n}};
}

/// Reference value from {"x2_star": ..} or {"v_star": .. volts}.
inline double reference(const json& j, double E, const std::string& where) {
  const bool has_x = j.contains("x2_star");
  const bool has_v = j.contains("v_star");
  if (has_x == has_v) throw config_error(where + " needs exactly one of x2_star or v_star");
  return has_x ? number(j, "x2_star", where) : number(j, "v_star", where) / E;
}

}  // namespace config_detail

/// Parses a configuration document. `id` names the scenario (the file stem
/// when read from disk). Unknown keys are rejected at every level.
inline Config parse_config(const json& doc, const std::string& id) {
  using namespace config_detail;
  only_keys(doc, "config", {"converter", "physical", "controller", "schedule", "estimator", "sim", "verify", "roa"});
  Config cfg;
  Scenario& sc = cfg.scenario;
  sc.id = id;

  if (!doc.contains("converter") || !doc["converter"].is_string()) throw config_error("missing converter name");
  sc.kind = parse_converter_kind(doc["converter"].get<std::string>());

  if (doc.contains("physical")) {
    const auto& p = doc["physical"];
    only_keys(p, "physical", {"E", "L", "C", "G", "P_cpl"});
    read(p, "E", sc.physical.E, "physical");
    read(p, "L", sc.physical.L, "physical");
    read(p, "C", sc.physical.C, "physical");
    read(p, "G", sc.physical.G, "physical");
    read(p, "P_cpl", sc.physical.P_cpl, "physical");
  }
  sc.physical.validate();
  const double E = sc.physical.E;

  if (!doc.contains("controller")) throw config_error("missing controller section");
  const auto& ctl = doc["controller"];
  only_keys(ctl, "controller", {"k", "x2_star", "v_star"});
  sc.k = number(ctl, "k", "controller");
  const bool ctl_ref = ctl.contains("x2_star") || ctl.contains("v_star");
  if (ctl_ref) sc.references = {{0.0, reference(ctl, E, "controller")}};

  if (doc.contains("schedule")) {
    const auto& s = doc["schedule"];
    only_keys(s, "schedule", {"x0", "x0_physical", "references", "loads"});
    if (s.contains("x0") && s.contains("x0_physical")) throw config_error("schedule: give x0 or x0_physical, not both");
    if (s.contains("x0")) {
      const auto& x = s["x0"];
      if (!x.is_array() || x.size() != 2) throw config_error("schedule.x0 must be [x1, x2]");
      sc.x0 = {x[0].get<double>(), x[1].get<double>()};
    }
    if (s.contains("x0_physical")) {
      const auto& x = s["x0_physical"];
      only_keys(x, "schedule.x0_physical", {"i", "v"});
      sc.x0 = to_normalized_state(sc.physical, number(x, "i", "schedule.x0_physical"),
                                  number(x, "v", "schedule.x0_physical"));
    }
    if (s.contains("references")) {
      if (ctl_ref) throw config_error("reference given both in controller and schedule.references");
      sc.references.clear();
      for (const auto& e : s["references"]) {
        only_keys(e, "schedule.references[]", {"t", "x2_star", "v_star"});
        sc.references.push_back({number(e, "t", "schedule.references[]"), reference(e, E, "schedule.references[]")});
      }
    }
    if (s.contains("loads")) {
      for (const auto& e : s["loads"]) {
        only_keys(e, "schedule.loads[]", {"t", "G", "P_cpl"});
        sc.loads.push_back({number(e, "t", "schedule.loads[]"), number(e, "G", "schedule.loads[]"),
                            number(e, "P_cpl", "schedule.loads[]")});
      }
    }
  }
  if (!ctl_ref && !(doc.contains("schedule") && doc["schedule"].contains("references")))
    throw config_error("no reference: set controller.x2_star/v_star or schedule.references");

  if (doc.contains("estimator")) {
    const auto& e = doc["estimator"];
    only_keys(e, "estimator", {"enabled", "gamma", "chi0", "sigma", "f0", "theta0", "kappa"});
    bool enabled = true;
    read(e, "enabled", enabled, "estimator");
    AdaptiveSettings a;
    read(e, "gamma", a.hyper.gamma, "estimator");
    read(e, "chi0", a.hyper.chi0, "estimator");
    read(e, "sigma", a.hyper.sigma, "estimator");
    read(e, "f0", a.hyper.f0, "estimator");
    read(e, "kappa", a.kappa, "estimator");
    if (e.contains("theta0")) {
      const auto& t = e["theta0"];
      if (!t.is_array() || t.size() != 2) throw config_error("estimator.theta0 must be [theta1, theta2]");
      a.hyper.theta0 = {t[0].get<double>(), t[1].get<double>()};
    }
    a.hyper.validate();
    if (enabled) sc.adaptive = a;
  }

  if (doc.contains("sim")) {
    const auto& s = doc["sim"];
    only_keys(s, "sim", {"dt", "T", "saturate", "control_update", "record_stride", "noise_sigma", "seed"});
    read(s, "dt", sc.dt, "sim");
    read(s, "T", sc.T, "sim");
    read(s, "saturate", sc.saturate, "sim");
    read(s, "record_stride", sc.record_stride, "sim");
    read(s, "noise_sigma", sc.noise_sigma, "sim");
    read(s, "seed", sc.seed, "sim");
    if (s.contains("control_update")) sc.control_update = parse_control_update(s["control_update"].get<std::string>());
  }

  if (doc.contains("verify")) {
    const auto& v = doc["verify"];
    only_keys(v, "verify", {"region", "fd_step", "tol_c1", "tol_c3", "tol_c4", "tol_pd", "c6"});
    VerifySettings vs;
    if (v.contains("region")) vs.region = region(v["region"], "verify.region");
    read(v, "fd_step", vs.options.fd_step, "verify");
    read(v, "tol_c1", vs.options.tol_c1, "verify");
    read(v, "tol_c3", vs.options.tol_c3, "verify");
    read(v, "tol_c4", vs.options.tol_c4, "verify");
    read(v, "tol_pd", vs.options.tol_pd, "verify");
    if (v.contains("c6")) {
      const auto& c = v["c6"];
      only_keys(c, "verify.c6", {"n_samples", "tol_set", "dt", "horizon", "equilibrium_radius"});
      read(c, "n_samples", vs.options.c6.n_samples, "verify.c6");
      read(c, "tol_set", vs.options.c6.tol_set, "verify.c6");
      read(c, "dt", vs.options.c6.dt, "verify.c6");
      read(c, "horizon", vs.options.c6.horizon, "verify.c6");
      read(c, "equilibrium_radius", vs.options.c6.equilibrium_radius, "verify.c6");
    }
    cfg.verify = vs;
  }

  if (doc.contains("roa")) {
    const auto& r = doc["roa"];
    only_keys(r, "roa", {"levels", "region", "grid_n", "boundary_samples", "dt", "horizon", "convergence_tol",
                         "monotone_tol", "keep_every", "probe_all_levels"});
    RoaSettings rs;
    read(r, "levels", rs.levels, "roa");
    if (rs.levels.empty()) throw config_error("roa.levels must list at least one level");
    if (r.contains("region")) rs.region = region(r["region"], "roa.region");
    read(r, "grid_n", rs.options.grid_n, "roa");
    read(r, "boundary_samples", rs.options.boundary_samples, "roa");
    read(r, "dt", rs.options.dt, "roa");
    read(r, "horizon", rs.options.horizon, "roa");
    read(r, "convergence_tol", rs.options.convergence_tol, "roa");
    read(r, "monotone_tol", rs.options.monotone_tol, "roa");
    read(r, "keep_every", rs.options.keep_every, "roa");
    read(r, "probe_all_levels", rs.options.probe_all_levels, "roa");
    if (rs.options.grid_n < 2 || rs.options.keep_every == 0 || !(rs.options.dt > 0.0))
      throw config_error("roa: grid_n >= 2, keep_every >= 1 and dt > 0 required");
    cfg.roa = rs;
  }
  return cfg;
}

inline Config parse_config_text(const std::string& text, const std::string& id) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("invalid JSON: ") + e.what());
  }
  try {
    return parse_config(doc, id);
  } catch (const json::exception& e) {
    throw config_error(std::string("malformed configuration: ") + e.what());
  }
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.stem().string());
}

/// Canonical document for a configuration (every field explicit, references as x2_star).
inline json to_json(const Config& cfg) {
  using namespace config_detail;
  const Scenario& sc = cfg.scenario;
  json doc;
  doc["converter"] = std::string(to_string(sc.kind));
  doc["physical"] = {{"E", sc.physical.E}, {"L", sc.physical.L}, {"C", sc.physical.C}, {"G", sc.physical.G},
                     {"P_cpl", sc.physical.P_cpl}};
  doc["controller"] = {{"k", sc.k}};
  json refs = json::array();
  for (const auto& e : sc.references) refs.push_back({{"t", e.t}, {"x2_star", e.x2_star}});
  json loads = json::array();
  for (const auto& e : sc.loads) loads.push_back({{"t", e.t}, {"G", e.G}, {"P_cpl", e.P_cpl}});
  doc["schedule"] = {{"x0", {sc.x0(0), sc.x0(1)}}, {"references", refs}, {"loads", loads}};
  if (sc.adaptive) {
    const auto& h = sc.adaptive->hyper;
    doc["estimator"] = {{"enabled", true},      {"gamma", h.gamma}, {"chi0", h.chi0},
                        {"sigma", h.sigma},     {"f0", h.f0},       {"theta0", {h.theta0(0), h.theta0(1)}},
                        {"kappa", sc.adaptive->kappa}};
  }
  doc["sim"] = {{"dt", sc.dt},
                {"T", sc.T},
                {"saturate", sc.saturate},
                {"control_update", std::string(to_string(sc.control_update))},
                {"record_stride", sc.record_stride},
                {"noise_sigma", sc.noise_sigma},
                {"seed", sc.seed}};
  if (cfg.verify) {
    const auto& o = cfg.verify->options;
    json v = {{"fd_step", o.fd_step},
              {"tol_c1", o.tol_c1},
              {"tol_c3", o.tol_c3},
              {"tol_c4", o.tol_c4},
              {"tol_pd", o.tol_pd},
              {"c6",
               {{"n_samples", o.c6.n_samples},
                {"tol_set", o.c6.tol_set},
                {"dt", o.c6.dt},
                {"horizon", o.c6.horizon},
                {"equilibrium_radius", o.c6.equilibrium_radius}}}};
    if (cfg.verify->region) v["region"] = region_json(*cfg.verify->region);
    doc["verify"] = v;
  }
  if (cfg.roa) {
    const auto& o = cfg.roa->options;
    json r = {{"levels", cfg.roa->levels},         {"grid_n", o.grid_n},
              {"boundary_samples", o.boundary_samples}, {"dt", o.dt},
              {"horizon", o.horizon},              {"convergence_tol", o.convergence_tol},
              {"monotone_tol", o.monotone_tol},    {"keep_every", o.keep_every},
              {"probe_all_levels", o.probe_all_levels}};
    if (cfg.roa->region) r["region"] = region_json(*cfg.roa->region);
    doc["roa"] = r;
  }
  return doc;
}

namespace config_detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json verdict(const std::optional<bool>& b) { return b ? json(*b) : json(nullptr); }

}  // namespace config_detail

inline json to_json(const VerificationReport& rep) {
  using config_detail::number_or_null;
  using config_detail::verdict;
  json j;
  j["converter"] = rep.converter;
  j["gain"] = rep.gain;
  j["x_star"] = {rep.x_star(0), rep.x_star(1)};
  j["u_star"] = rep.u_star;
  j["all_pass"] = rep.all_pass();
  json conds = json::object();
  for (std::size_t i = 0; i < condition_count; ++i) {
    json c = {{"pass", verdict(rep.pass[i])}};
    if (!rep.errors[i].empty()) c["error"] = rep.errors[i];
    conds[condition_name(i)] = c;
  }
  conds["C1"]["min_abs"] = number_or_null(rep.c1_min_abs);
  conds["C2"]["max_alpha"] = number_or_null(rep.c2_max);
  conds["C3"]["max_asymmetry"] = number_or_null(rep.c3_max_asym);
  conds["C4"]["residual"] = number_or_null(rep.c4_residual);
  if (rep.c5) {
    const auto& m = rep.c5->jacobian;
    const auto& a = rep.c5->analytic;
    conds["C5"]["jacobian"] = {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
    conds["C5"]["analytic"] = {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}};
    conds["C5"]["max_analytic_deviation"] = number_or_null(rep.c5->max_analytic_deviation);
    conds["C5"]["eigenvalues"] = {rep.c5->symmetric_eigenvalues(0), rep.c5->symmetric_eigenvalues(1)};
    conds["C5"]["leading_minors_positive"] = rep.c5->leading_minors_positive;
  }
  if (rep.c6) {
    json ce = json::array();
    for (const auto& x : rep.c6->counterexamples) ce.push_back({x(0), x(1)});
    conds["C6"]["samples"] = rep.c6->samples;
    conds["C6"]["locus_points"] = rep.c6->locus_points;
    conds["C6"]["at_equilibrium"] = rep.c6->at_equilibrium;
    conds["C6"]["exited"] = rep.c6->exited;
    conds["C6"]["counterexamples"] = ce;
    if (!rep.c6->note.empty()) conds["C6"]["note"] = rep.c6->note;
  }
  j["conditions"] = conds;
  return j;
}

}  // namespace idapbc
