#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "idapbc/errors.hpp"
#include "idapbc/sim.hpp"

namespace idapbc {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"buck_refsteps",  "buck_loadsteps", "boost_refsteps",
                                              "boost_loadsteps", "bb_refsteps",    "bb_loadsteps"};
  return kinds;
}

namespace detail {

struct SuiteProfile {
  ConverterKind kind;
  double k;
  State x0;
  double segment;  ///< normalized time between events
};

inline SuiteProfile suite_profile(std::string_view converter) {
  if (converter == "buck") return {ConverterKind::buck, 0.01, {0.02, 0.8}, 3000.0};
  if (converter == "boost") return {ConverterKind::boost, 3.0, {0.0, 1.0}, 1500.0};
  if (converter == "bb") return {ConverterKind::buck_boost, 2.0, {0.0, 0.6}, 1500.0};
  throw config_error("unknown experiment converter '" + std::string(converter) + "'");
}

}  // namespace detail

/// Normalized re-creations of the reference-step and load-step experiments:
/// 60 ohm resistor plus 1.2 W CPL on a 24 V supply, duty ratio saturated,
/// three equal segments separated by the events.
///   buck:  20 -> 15 -> 10 V (k = 0.01); load steps at 15 V
///   boost: 26 -> 30 -> 40 V (k = 3);    load steps at 30 V
///   bb:    20 -> 24 -> 30 V (k = 2);    load steps at 30 V
/// Load steps: R 60 -> 30 ohm, then P_cpl 1.2 -> 1.8 W.
inline Scenario experiment_scenario(std::string_view name) {
  const auto sep = name.find('_');
  if (sep == std::string_view::npos) throw config_error("unknown experiment '" + std::string(name) + "'");
  const auto converter = name.substr(0, sep);
  const auto variant = name.substr(sep + 1);
  const auto prof = detail::suite_profile(converter);

  Scenario sc;
  sc.id = std::string(name);
  sc.kind = prof.kind;
  sc.physical = PhysicalParams::nominal();
  sc.physical.G = 1.0 / 60.0;
  sc.physical.P_cpl = 1.2;
  sc.x0 = prof.x0;
  sc.k = prof.k;
  sc.saturate = true;
  sc.dt = 1e-2;
  sc.T = 3.0 * prof.segment;
  sc.record_stride = 100;

  const double E = sc.physical.E;
  const double S = prof.segment;
  if (variant == "refsteps") {
    std::vector<double> volts;
    if (prof.kind == ConverterKind::buck) volts = {20.0, 15.0, 10.0};
    if (prof.kind == ConverterKind::boost) volts = {26.0, 30.0, 40.0};
    if (prof.kind == ConverterKind::buck_boost) volts = {20.0, 24.0, 30.0};
    sc.references = {{0.0, volts[0] / E}, {S, volts[1] / E}, {2.0 * S, volts[2] / E}};
  } else if (variant == "loadsteps") {
    const double v = prof.kind == ConverterKind::buck ? 15.0 : 30.0;
    sc.references = {{0.0, v / E}};
    sc.loads = {{S, 1.0 / 30.0, 1.2}, {2.0 * S, 1.0 / 30.0, 1.8}};
  } else {
    throw config_error("unknown experiment '" + std::string(name) + "'");
  }
  return sc;
}

/// Scenario list for a suite name, or every suite for "all".
inline std::vector<Scenario> experiment_scenarios(std::string_view kind) {
  std::vector<Scenario> out;
  if (kind == "all") {
    for (const auto& k : experiment_kinds()) out.push_back(experiment_scenario(k));
  } else {
    out.push_back(experiment_scenario(kind));
  }
  return out;
}

inline std::vector<Trajectory> run_experiment_suite(std::string_view kind) {
  std::vector<Trajectory> out;
  for (const auto& sc : experiment_scenarios(kind)) out.push_back(run(sc));
  return out;
}

/// |x2 - x2_ref| at the end of every segment (just before each event and at
/// the horizon), measured against the reference active in that segment.
inline std::vector<double> segment_end_errors(const Trajectory& tr) {
  std::vector<double> errs;
  auto err_at = [&](double t) {
    const auto& r = row_at_or_before(tr, t);
    return std::abs(r.x2 - r.x2_ref);
  };
  for (double te : tr.event_times) errs.push_back(err_at(te));
  errs.push_back(std::abs(tr.rows.back().x2 - tr.rows.back().x2_ref));
  return errs;
}

}  // namespace idapbc
