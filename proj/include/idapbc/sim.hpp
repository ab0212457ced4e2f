#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "idapbc/control.hpp"
#include "idapbc/errors.hpp"
#include "idapbc/estimator.hpp"
#include "idapbc/integrator.hpp"
#include "idapbc/lyapunov.hpp"
#include "idapbc/models.hpp"

namespace idapbc {

/// How the duty ratio is applied over an integration step.
enum class ControlUpdate {
  zoh,         ///< computed from x2 at the step start and held
  continuous,  ///< re-evaluated at every Runge-Kutta stage
};

inline std::string_view to_string(ControlUpdate m) { return m == ControlUpdate::zoh ? "zoh" : "continuous"; }

inline ControlUpdate parse_control_update(std::string_view s) {
  if (s == "zoh") return ControlUpdate::zoh;
  if (s == "continuous") return ControlUpdate::continuous;
  throw config_error("unknown control_update '" + std::string(s) + "' (expected zoh or continuous)");
}

/// Reference change at normalized time t.
struct ReferenceEvent {
  double t = 0.0;
  double x2_star = 1.0;
};

/// Load change at normalized time t (physical conductance and CPL power).
struct LoadEvent {
  double t = 0.0;
  double G = 0.0;
  double P_cpl = 0.0;
};

struct AdaptiveSettings {
  EstimatorHyper hyper;
  double kappa = ExcitationMonitor::default_kappa;
};

struct Scenario {
  std::string id = "scenario";
  ConverterKind kind = ConverterKind::buck;
  PhysicalParams physical;             ///< load at t = 0
  State x0{0.0, 1.0};                  ///< normalized initial state
  double k = 1.0;
  std::vector<ReferenceEvent> references{{0.0, 1.0}};
  std::vector<LoadEvent> loads;        ///< later load changes
  std::optional<AdaptiveSettings> adaptive;
  double dt = 1e-3;
  double T = 10.0;
  bool saturate = false;
  ControlUpdate control_update = ControlUpdate::zoh;
  std::size_t record_stride = 1;
  double noise_sigma = 0.0;            ///< std-dev of additive noise on the measured load current [A]
  std::uint64_t seed = 0;

  /// Physical parameters with the load active at time t.
  PhysicalParams physical_at(double t) const {
    PhysicalParams p = physical;
    for (const auto& e : loads) {
      if (e.t > t) break;
      p.G = e.G;
      p.P_cpl = e.P_cpl;
    }
    return p;
  }

  double reference_at(double t) const {
    double r = references.front().x2_star;
    for (const auto& e : references) {
      if (e.t > t) break;
      r = e.x2_star;
    }
    return r;
  }

  ConverterModel plant_at(double t) const {
    return {kind, LoadRelation::parametric(normalize(physical_at(t)))};
  }

  /// Checks structure and, eagerly, every (reference, load) pair that is
  /// active at some time against the equilibrium assumptions and the gain bound.
  void validate() const {
    physical.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw config_error("dt must be positive");
    if (!(T >= 0.0) || !std::isfinite(T)) throw config_error("horizon T must be non-negative");
    if (record_stride == 0) throw config_error("record_stride must be at least 1");
    if (!(noise_sigma >= 0.0)) throw config_error("noise_sigma must be non-negative");
    if (!x0.allFinite()) throw config_error("initial state must be finite");
    if (!(x0(1) >= voltage_floor)) throw voltage_floor_violation(x0(1), 0.0);
    if (!std::isfinite(k)) throw config_error("gain must be finite");
    if (references.empty()) throw config_error("reference schedule is empty");
    if (references.front().t != 0.0) throw config_error("reference schedule must start at t = 0");
    auto sorted = [](const auto& v) {
      return std::is_sorted(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    };
    if (!sorted(references) || !sorted(loads)) throw config_error("schedules must be time-sorted");
    for (const auto& e : loads) {
      if (!(e.t >= 0.0)) throw config_error("load events must have t >= 0");
      PhysicalParams p = physical;
      p.G = e.G;
      p.P_cpl = e.P_cpl;
      p.validate();
    }
    if (adaptive) adaptive->hyper.validate();

    std::set<double> times;
    for (const auto& e : references) times.insert(e.t);
    for (const auto& e : loads) times.insert(e.t);
    for (double t : times) {
      if (t > T) continue;
      const auto plant = plant_at(t);
      if (adaptive) {
        equilibrium_for(plant, reference_at(t));
      } else {
        ControllerSpec::make(plant, k, reference_at(t));
      }
    }
  }
};

struct TrajectoryRow {
  double t = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double u_raw = 0.0;
  double u_applied = 0.0;
  double P = std::numeric_limits<double>::quiet_NaN();
  Vector2 theta_hat = Vector2::Constant(std::numeric_limits<double>::quiet_NaN());
  double z = std::numeric_limits<double>::quiet_NaN();
  Matrix2 F = Matrix2::Constant(std::numeric_limits<double>::quiet_NaN());
  std::optional<Vector2> theta_fct;
  bool ie_fired = false;
  double x2_ref = 0.0;
  double G = 0.0;
  double P_cpl = 0.0;

  State x() const { return {x1, x2}; }
};

struct Trajectory {
  std::string id;
  ConverterKind kind = ConverterKind::buck;
  bool adaptive = false;
  double dt = 0.0;
  std::vector<TrajectoryRow> rows;
  std::vector<double> event_times;  ///< grid-snapped times of reference/load changes after t = 0
  std::optional<double> tc;         ///< first time the excitation monitor fired

  std::vector<std::string> columns() const {
    std::vector<std::string> c{"t", "x1", "x2", "u_raw", "u_applied", "P"};
    if (adaptive) {
      for (const char* s : {"theta_hat_1", "theta_hat_2", "z", "F11", "F12", "F22", "theta_fct_1", "theta_fct_2",
                            "ie_fired"})
        c.emplace_back(s);
    }
    for (const char* s : {"x2_ref", "G", "P_cpl"}) c.emplace_back(s);
    return c;
  }

  std::vector<double> values(const TrajectoryRow& r) const {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> v{r.t, r.x1, r.x2, r.u_raw, r.u_applied, r.P};
    if (adaptive) {
      v.insert(v.end(), {r.theta_hat(0), r.theta_hat(1), r.z, r.F(0, 0), r.F(0, 1), r.F(1, 1),
                         r.theta_fct ? (*r.theta_fct)(0) : nan, r.theta_fct ? (*r.theta_fct)(1) : nan,
                         r.ie_fired ? 1.0 : 0.0});
    }
    v.insert(v.end(), {r.x2_ref, r.G, r.P_cpl});
    return v;
  }

  State final_state() const { return rows.back().x(); }
};

namespace detail {

/// Plant state followed by the packed estimator variables.
using JointVector = Eigen::Matrix<double, 9, 1>;

inline std::size_t grid_index(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

}  // namespace detail

/// Fixed-step RK4 closed-loop simulation. Reference and load events are
/// snapped to the step grid; at an event the state is continuous and only the
/// controller and load change. Adaptive runs integrate the plant and the
/// estimator as one system, and the controller uses the certainty-equivalent
/// load (theta_fct once the excitation monitor has fired and it is available,
/// theta_hat before).
inline Trajectory run(const Scenario& sc) {
  sc.validate();
  const double dt = sc.dt;
  const std::size_t n_steps = detail::grid_index(sc.T, dt);

  std::set<std::size_t> event_steps;
  for (const auto& e : sc.references)
    if (e.t > 0.0) event_steps.insert(detail::grid_index(e.t, dt));
  for (const auto& e : sc.loads)
    if (e.t > 0.0) event_steps.insert(detail::grid_index(e.t, dt));

  Trajectory traj;
  traj.id = sc.id;
  traj.kind = sc.kind;
  traj.adaptive = sc.adaptive.has_value();
  traj.dt = dt;
  for (auto n : event_steps)
    if (n <= n_steps) traj.event_times.push_back(static_cast<double>(n) * dt);

  // Active configuration, refreshed at events.
  double t_now = 0.0;
  PhysicalParams phys = sc.physical_at(0.0);
  ConverterModel plant = sc.plant_at(0.0);
  double x2_ref = 0.0;
  std::optional<ControllerSpec> true_spec;  ///< law built from the true load
  std::optional<LyapunovFn> energy_fn;
  std::optional<LyapunovFn::Tracker> energy;

  auto apply_config = [&](double t_grid) {
    const double t = t_grid + 0.5 * dt;
    phys = sc.physical_at(t);
    plant = sc.plant_at(t);
    x2_ref = sc.reference_at(t);
    true_spec = sc.adaptive ? ControllerSpec::unchecked(plant, sc.k, x2_ref) : ControllerSpec::make(plant, sc.k, x2_ref);
    energy.reset();
    energy_fn.reset();
    try {
      energy_fn.emplace(*true_spec);
      energy.emplace(*energy_fn);
    } catch (const std::invalid_argument&) {
    }
  };

  // Estimator side.
  EstimatorState est;
  std::optional<ExcitationMonitor> monitor;
  std::optional<ControllerSpec> adaptive_spec;
  std::optional<Vector2> theta_fct;
  if (sc.adaptive) {
    est = EstimatorState::initial(sc.adaptive->hyper);
    monitor.emplace(sc.adaptive->kappa);
  }

  auto refresh_adaptive_spec = [&] {
    const Vector2 theta = (monitor->satisfied() && theta_fct) ? *theta_fct : est.theta_hat;
    const auto load = normalized_from_theta(theta, phys);
    if (!(load.R >= 0.0) || !(load.P >= 0.0) || !std::isfinite(load.R) || !std::isfinite(load.P)) return;
    try {
      adaptive_spec = ControllerSpec::unchecked({sc.kind, LoadRelation::parametric(load)}, sc.k, x2_ref);
    } catch (const error&) {
      // Estimated load admits no equilibrium at this reference: keep the previous law.
    }
  };

  const ControllerSpec* active = nullptr;
  auto select_spec = [&] {
    if (sc.adaptive) {
      refresh_adaptive_spec();
      if (!adaptive_spec) throw assumption_violated("initial load estimate admits no equilibrium at the reference");
      active = &*adaptive_spec;
    } else {
      active = &*true_spec;
    }
  };

  auto control = [&](double x2) {
    const double raw = active->law(x2);
    return ControlValue{raw, sc.saturate ? std::clamp(raw, duty_min, 1.0) : raw};
  };

  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  State x = sc.x0;
  auto record = [&](double t) {
    TrajectoryRow r;
    r.t = t;
    r.x1 = x(0);
    r.x2 = x(1);
    const auto u = control(x(1));
    r.u_raw = u.raw;
    r.u_applied = u.saturated;
    if (energy) r.P = (*energy)(x);
    if (sc.adaptive) {
      r.theta_hat = est.theta_hat;
      r.z = est.z;
      r.F = est.F;
      r.theta_fct = theta_fct;
      r.ie_fired = monitor->satisfied();
    }
    r.x2_ref = x2_ref;
    r.G = phys.G;
    r.P_cpl = phys.P_cpl;
    traj.rows.push_back(std::move(r));
  };

  apply_config(0.0);
  if (sc.adaptive) monitor->seed(regressor(x(1)));
  select_spec();
  record(0.0);

  for (std::size_t n = 0; n < n_steps; ++n) {
    t_now = static_cast<double>(n) * dt;
    if (n > 0 && event_steps.count(n)) {
      apply_config(t_now);
      select_spec();
    }
    try {
      const double u_hold = control(x(1)).saturated;
      const bool zoh = sc.control_update == ControlUpdate::zoh;
      if (!sc.adaptive) {
        const auto rhs = [&](double, const State& s) { return plant.dynamics(s, zoh ? u_hold : control(s(1)).saturated); };
        x = rk4_step(rhs, t_now, x, dt);
      } else {
        const double i_noise = sc.noise_sigma > 0.0 ? sc.noise_sigma * noise(rng) : 0.0;
        const auto& hyper = sc.adaptive->hyper;
        const auto rhs = [&](double, const detail::JointVector& v) {
          const State s = v.head<2>();
          detail::JointVector out;
          out.head<2>() = plant.dynamics(s, zoh ? u_hold : control(s(1)).saturated);
          const double i_load = load_current(phys, plant.load, s(1)) + i_noise;
          out.tail<7>() = estimator_rates(v.tail<7>(), hyper, regressor(s(1)), i_load);
          return out;
        };
        detail::JointVector v;
        v << x, pack(est);
        v = rk4_step(rhs, t_now, v, dt);
        x = v.head<2>();
        unpack(v.tail<7>(), est);
        est.t = t_now + dt;
        settle(est);
      }
      if (!x.allFinite()) throw numerical_blowup("plant state diverged");
      if (!(x(1) >= voltage_floor)) throw voltage_floor_violation(x(1), t_now + dt);
      if (sc.adaptive) {
        monitor->update(regressor(x(1)), dt);
        theta_fct = fct_reconstruct(est, sc.adaptive->hyper);
        if (monitor->satisfied() && !traj.tc) traj.tc = static_cast<double>(n + 1) * dt;
        select_spec();
      }
    } catch (const voltage_floor_violation& e) {
      throw voltage_floor_violation(e.x2(), e.time().value_or(t_now));
    }
    const std::size_t m = n + 1;
    if (m % sc.record_stride == 0 || m == n_steps || event_steps.count(m)) record(static_cast<double>(m) * dt);
  }
  return traj;
}

/// Rows whose time lies in [t0, t1).
inline std::vector<const TrajectoryRow*> rows_between(const Trajectory& tr, double t0, double t1) {
  std::vector<const TrajectoryRow*> out;
  for (const auto& r : tr.rows)
    if (r.t >= t0 && r.t < t1) out.push_back(&r);
  return out;
}

/// Last recorded row at or before time t. At an event time this is the
/// state reached under the outgoing configuration.
inline const TrajectoryRow& row_at_or_before(const Trajectory& tr, double t) {
  const TrajectoryRow* best = &tr.rows.front();
  for (const auto& r : tr.rows) {
    if (r.t > t + 0.5 * tr.dt) break;
    best = &r;
  }
  return *best;
}

}  // namespace idapbc
