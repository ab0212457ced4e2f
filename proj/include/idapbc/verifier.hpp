#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "idapbc/control.hpp"
#include "idapbc/errors.hpp"
#include "idapbc/integrator.hpp"
#include "idapbc/models.hpp"
#include "idapbc/quadrature.hpp"

namespace idapbc {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  double at(std::size_t i, std::size_t n) const {
    return n < 2 ? 0.5 * (lo + hi) : lo + length() * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  bool operator==(const Interval&) const = default;
};

/// Rectangular grid of states on which the conditions are checked.
struct VerificationRegion {
  Interval x1;
  Interval x2;
  std::size_t grid_n = 25;

  void validate() const {
    if (!(x1.length() > 0.0) || !(x2.length() > 0.0)) throw config_error("region ranges need positive length");
    if (x2.lo < voltage_floor) throw config_error("region x2 lower bound is below the voltage floor");
    if (grid_n < 2) throw config_error("region grid needs at least 2 points per axis");
  }

  bool contains(const State& x) const { return x1.contains(x(0)) && x2.contains(x(1)); }

  template <class Fn>
  void for_each_point(Fn&& fn) const {
    for (std::size_t i = 0; i < grid_n; ++i)
      for (std::size_t j = 0; j < grid_n; ++j) fn(State{x1.at(i, grid_n), x2.at(j, grid_n)});
  }

  bool operator==(const VerificationRegion&) const = default;
};

namespace verify_defaults {
inline constexpr double fd_step = 1e-5;    ///< relative central-difference step
inline constexpr double tol_c1 = 1e-12;
inline constexpr double tol_c3 = 1e-6;
inline constexpr double tol_c4 = 1e-12;
inline constexpr double tol_pd = 1e-10;
inline constexpr double tol_set = 1e-12;   ///< |dissipation| below which a state is on the residual set
inline constexpr double probe_dt = 1e-2;
inline constexpr double probe_horizon = 50.0;
}  // namespace verify_defaults

/// Central-difference step for coordinate value `xi`.
inline double fd_step_for(double xi, double rel_step) { return rel_step * std::max(std::abs(xi), 1e-2); }

/// Jacobian of the closed-loop field D(x) by central differences;
/// entry (i, j) = dD_i / dx_j.
inline Eigen::Matrix2d jacobian_fd(const ClosedLoopField& field, const State& x,
                                   double rel_step = verify_defaults::fd_step) {
  Eigen::Matrix2d jac;
  for (int j = 0; j < 2; ++j) {
    const double step = fd_step_for(x(j), rel_step);
    State xp = x;
    State xm = x;
    xp(j) += step;
    xm(j) -= step;
    jac.col(j) = (field.d(xp) - field.d(xm)) / (2.0 * step);
  }
  return jac;
}

// ---------------------------------------------------------------------------
// C1, C2, C4

inline double check_c1_min_abs(const ClosedLoopField& field, const VerificationRegion& region) {
  region.validate();
  double worst = std::numeric_limits<double>::infinity();
  region.for_each_point([&](const State& x) {
    const double b = field.beta(x);
    worst = std::min(worst, std::abs(field.alpha1(x) * field.alpha2(x) + b * b));
  });
  return worst;
}

inline double check_c2_max(const ClosedLoopField& field, const VerificationRegion& region) {
  region.validate();
  double worst = -std::numeric_limits<double>::infinity();
  region.for_each_point([&](const State& x) { worst = std::max({worst, field.alpha1(x), field.alpha2(x)}); });
  return worst;
}

/// Sup-norm of the closed-loop vector field at the equilibrium.
inline double check_c4_residual(const ClosedLoopField& field) {
  return field.f(field.equilibrium().state()).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// C3: Jacobian symmetry of D(x)

inline double check_c3_symmetry(const ClosedLoopField& field, const VerificationRegion& region,
                                double rel_step = verify_defaults::fd_step) {
  region.validate();
  double worst = 0.0;
  region.for_each_point([&](const State& x) {
    const Eigen::Matrix2d jac = jacobian_fd(field, x, rel_step);
    worst = std::max(worst, std::abs(jac(0, 1) - jac(1, 0)));
  });
  return worst;
}

inline double check_c3_symmetry(const ControllerSpec& spec, const VerificationRegion& region) {
  return check_c3_symmetry(ClosedLoopField(spec), region);
}

// ---------------------------------------------------------------------------
// C5: positivity of the Jacobian of D at x*

struct C5Result {
  Eigen::Matrix2d jacobian = Eigen::Matrix2d::Zero();  ///< finite differences
  Eigen::Matrix2d analytic = Eigen::Matrix2d::Zero();  ///< closed form for the design law
  double max_analytic_deviation = 0.0;
  Eigen::Vector2d symmetric_eigenvalues = Eigen::Vector2d::Zero();  ///< ascending
  bool leading_minors_positive = false;
  bool pass = false;
};

/// Closed-form Jacobian of D at x* for the design laws:
///   Buck:             diag(1, k h'*)
///   Boost/Buck-Boost: diag(k - 1, (k - 1) (u'* / u*^2 + 1))
inline Eigen::Matrix2d analytic_c5_matrix(const ControllerSpec& spec) {
  const auto& eq = spec.equilibrium();
  const double k = spec.gain();
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  if (spec.kind() == ConverterKind::buck) {
    m(0, 0) = 1.0;
    m(1, 1) = k * eq.h_prime_star;
  } else {
    const double du = spec.law_derivative(eq.x2_star);
    m(0, 0) = k - 1.0;
    m(1, 1) = (k - 1.0) * (du / (eq.u_star * eq.u_star) + 1.0);
  }
  return m;
}

inline C5Result check_c5_hessian(const ClosedLoopField& field, const ControllerSpec& spec,
                                 double rel_step = verify_defaults::fd_step,
                                 double tol_pd = verify_defaults::tol_pd) {
  C5Result r;
  r.jacobian = jacobian_fd(field, field.equilibrium().state(), rel_step);
  r.analytic = analytic_c5_matrix(spec);
  r.max_analytic_deviation = (r.jacobian - r.analytic).cwiseAbs().maxCoeff();
  const Eigen::Matrix2d sym = 0.5 * (r.jacobian + r.jacobian.transpose());
  r.symmetric_eigenvalues = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sym, Eigen::EigenvaluesOnly).eigenvalues();
  r.leading_minors_positive = r.jacobian(0, 0) > tol_pd && r.jacobian.determinant() > tol_pd;
  r.pass = r.symmetric_eigenvalues(0) > tol_pd && r.leading_minors_positive;
  return r;
}

inline C5Result check_c5_hessian(const ControllerSpec& spec) { return check_c5_hessian(ClosedLoopField(spec), spec); }

// ---------------------------------------------------------------------------
// C6: falsification probe of the LaSalle condition

struct C6Options {
  std::size_t n_samples = 625;
  double tol_set = verify_defaults::tol_set;
  double dt = verify_defaults::probe_dt;
  double horizon = verify_defaults::probe_horizon;
  /// Locus points closer than this (sup-norm, relative to max(1, |x*|)) count as x*.
  double equilibrium_radius = 1e-3;
};

struct C6Result {
  std::size_t samples = 0;
  std::size_t locus_points = 0;   ///< samples polished onto the zero-dissipation set
  std::size_t at_equilibrium = 0;
  std::size_t exited = 0;
  std::vector<State> counterexamples;
  std::optional<bool> pass;       ///< nullopt when nothing was sampled
  std::string note;
};

namespace detail {

/// Golden-section maximization of `fn` on [lo, hi].
template <class Fn>
double golden_argmax(const Fn& fn, double lo, double hi, int iterations = 80) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c);
  double fd = fn(d);
  for (int it = 0; it < iterations && (b - a) > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Samples the region, polishes each sample onto the set where the dissipation
/// alpha1 f1^2 + alpha2 f2^2 vanishes (a coordinate-wise local maximization, since
/// the dissipation is non-positive under C2), then flows each locus point for a
/// short horizon and records whether it leaves the set. A locus point away from
/// x* that never leaves is a counterexample. Finding none is evidence, not proof.
inline C6Result check_c6_residual_set(const ClosedLoopField& field, const VerificationRegion& region,
                                      const C6Options& opt = {}) {
  region.validate();
  C6Result r;
  r.samples = opt.n_samples;
  if (opt.n_samples == 0) {
    r.note = "no samples requested; residual-set probe undetermined";
    return r;
  }

  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(opt.n_samples))));
  const double cell1 = side > 1 ? region.x1.length() / static_cast<double>(side - 1) : region.x1.length();
  const double cell2 = side > 1 ? region.x2.length() / static_cast<double>(side - 1) : region.x2.length();
  const State x_star = field.equilibrium().state();
  const double eq_radius = opt.equilibrium_radius * std::max(1.0, x_star.cwiseAbs().maxCoeff());

  auto dissipation = [&](const State& x) {
    try {
      return field.dissipation(x);
    } catch (const voltage_floor_violation&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  std::size_t visited = 0;
  for (std::size_t i = 0; i < side && visited < opt.n_samples; ++i) {
    for (std::size_t j = 0; j < side && visited < opt.n_samples; ++j, ++visited) {
      const State p{region.x1.at(i, side), region.x2.at(j, side)};

      // Polish along x2, then along x1, within one cell of the sample.
      State best = p;
      const double lo2 = std::max(region.x2.lo, p(1) - cell2);
      const double hi2 = std::min(region.x2.hi, p(1) + cell2);
      best(1) = detail::golden_argmax([&](double v) { return dissipation(State{p(0), v}); }, lo2, hi2);
      State alt = p;
      const double lo1 = std::max(region.x1.lo, p(0) - cell1);
      const double hi1 = std::min(region.x1.hi, p(0) + cell1);
      alt(0) = detail::golden_argmax([&](double v) { return dissipation(State{v, p(1)}); }, lo1, hi1);
      if (dissipation(alt) > dissipation(best)) best = alt;
      if (!(std::abs(dissipation(best)) <= opt.tol_set)) continue;

      ++r.locus_points;
      if ((best - x_star).cwiseAbs().maxCoeff() <= eq_radius) {
        ++r.at_equilibrium;
        continue;
      }

      bool left = false;
      State x = best;
      const auto steps = static_cast<std::size_t>(std::ceil(opt.horizon / opt.dt));
      const auto rhs = [&](double, const State& s) { return field.f(s); };
      try {
        for (std::size_t n = 0; n < steps && !left; ++n) {
          x = rk4_step(rhs, 0.0, x, opt.dt);
          left = !(std::abs(dissipation(x)) <= opt.tol_set);
        }
      } catch (const error&) {
        left = true;
      }
      if (left)
        ++r.exited;
      else
        r.counterexamples.push_back(best);
    }
  }

  r.pass = r.counterexamples.empty();
  r.note = (r.counterexamples.empty() ? std::string("no counterexample found") : std::string("counterexample found")) +
           ": " + std::to_string(r.locus_points) + " zero-dissipation points among " + std::to_string(r.samples) +
           " samples, " + std::to_string(r.at_equilibrium) + " at x*, " + std::to_string(r.exited) +
           " left the set within t = " + std::to_string(opt.horizon) + " (sampling probe, not a proof)";
  return r;
}

// ---------------------------------------------------------------------------
// Path-independent reconstruction of P from D

using Polyline = std::vector<State>;

/// Integral of D(x) . dx along a polyline; each segment is split into `pieces`
/// sub-segments integrated with a 16-point Gauss-Legendre rule.
inline double line_integral(const ClosedLoopField& field, const Polyline& path, std::size_t pieces = 8) {
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < path.size(); ++s) {
    const State a = path[s];
    const State delta = path[s + 1] - a;
    if (delta.isZero(0.0)) continue;
    for (std::size_t p = 0; p < pieces; ++p) {
      const double t0 = static_cast<double>(p) / static_cast<double>(pieces);
      const double t1 = static_cast<double>(p + 1) / static_cast<double>(pieces);
      total += gauss_legendre_16([&](double t) { return field.d(State(a + t * delta)).dot(delta); }, t0, t1);
    }
  }
  return total;
}

/// Distinct piecewise-linear paths from `from` to `to`: the two L-shaped
/// paths, the straight segment, then detours through off-diagonal waypoints.
/// When the endpoints coincide the paths are closed loops around `from`.
inline std::vector<Polyline> candidate_paths(const State& from, const State& to, std::size_t n_paths) {
  std::vector<Polyline> paths;
  const State delta = to - from;
  const bool closed = delta.cwiseAbs().maxCoeff() == 0.0;
  const State scale = closed ? State(0.25 * std::abs(from(0)) + 1e-3, 0.1 * std::abs(from(1)) + 1e-3)
                             : State(delta.cwiseAbs());
  for (std::size_t n = 0; n < n_paths; ++n) {
    if (closed) {
      const double s = 1.0 / static_cast<double>(n + 1);
      const State a = from + State(s * scale(0), 0.0);
      const State b = from + State(s * scale(0), s * scale(1));
      const State c = from + State(0.0, s * scale(1));
      paths.push_back(n % 2 == 0 ? Polyline{from, a, b, c, from} : Polyline{from, c, b, a, from});
      continue;
    }
    switch (n) {
      case 0: paths.push_back({from, State(to(0), from(1)), to}); break;
      case 1: paths.push_back({from, State(from(0), to(1)), to}); break;
      case 2: paths.push_back({from, to}); break;
      default: {
        // Waypoint pushed off the diagonal, alternating sides.
        const double side = (n % 2 == 0) ? 1.0 : -1.0;
        const double amp = 0.3 / static_cast<double>(n - 2);
        const State mid = 0.5 * (from + to);
        const State off(side * amp * scale(0), -side * amp * scale(1));
        paths.push_back({from, State(mid + off), to});
      }
    }
  }
  return paths;
}

struct PathIntegralResult {
  std::vector<double> values;
  double max_spread = 0.0;
};

inline PathIntegralResult reconstruct_p_line_integral(const ClosedLoopField& field, const State& from,
                                                      const State& to, std::size_t n_paths,
                                                      std::size_t pieces = 8) {
  PathIntegralResult r;
  for (const auto& path : candidate_paths(from, to, n_paths)) r.values.push_back(line_integral(field, path, pieces));
  if (!r.values.empty()) {
    const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
    r.max_spread = *hi - *lo;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Aggregate report

enum class Condition : std::size_t { c1 = 0, c2, c3, c4, c5, c6 };
inline constexpr std::size_t condition_count = 6;

inline const char* condition_name(std::size_t i) {
  static constexpr std::array<const char*, condition_count> names{"C1", "C2", "C3", "C4", "C5", "C6"};
  return names.at(i);
}

struct VerifyOptions {
  double fd_step = verify_defaults::fd_step;
  double tol_c1 = verify_defaults::tol_c1;
  double tol_c3 = verify_defaults::tol_c3;
  double tol_c4 = verify_defaults::tol_c4;
  double tol_pd = verify_defaults::tol_pd;
  C6Options c6;
};

struct VerificationReport {
  std::string converter;
  double gain = 0.0;
  State x_star = State::Zero();
  double u_star = 0.0;

  double c1_min_abs = std::numeric_limits<double>::quiet_NaN();
  double c2_max = std::numeric_limits<double>::quiet_NaN();
  double c3_max_asym = std::numeric_limits<double>::quiet_NaN();
  double c4_residual = std::numeric_limits<double>::quiet_NaN();
  std::optional<C5Result> c5;
  std::optional<C6Result> c6;

  std::array<std::optional<bool>, condition_count> pass{};
  std::array<std::string, condition_count> errors{};

  std::optional<bool> passed(Condition c) const { return pass[static_cast<std::size_t>(c)]; }

  /// True when every condition that produced a verdict passed, and C1-C5 all produced one.
  bool all_pass() const {
    for (std::size_t i = 0; i < condition_count; ++i) {
      if (pass[i].has_value() && !*pass[i]) return false;
      if (!pass[i].has_value() && i != static_cast<std::size_t>(Condition::c6)) return false;
    }
    return true;
  }
};

/// Runs C1-C6 on the region. Failures of individual checks are recorded per
/// condition rather than propagated.
inline VerificationReport verify_all(const ClosedLoopField& field, const ControllerSpec& spec,
                                     const VerificationRegion& region, const VerifyOptions& opt = {}) {
  region.validate();
  VerificationReport rep;
  rep.converter = std::string(to_string(spec.kind()));
  rep.gain = spec.gain();
  rep.x_star = spec.equilibrium().state();
  rep.u_star = spec.equilibrium().u_star;

  auto guarded = [&](Condition c, auto&& body) {
    const auto i = static_cast<std::size_t>(c);
    try {
      rep.pass[i] = body();
    } catch (const std::exception& e) {
      rep.pass[i] = false;
      rep.errors[i] = e.what();
    }
  };

  guarded(Condition::c1, [&] {
    rep.c1_min_abs = check_c1_min_abs(field, region);
    return rep.c1_min_abs > opt.tol_c1;
  });
  guarded(Condition::c2, [&] {
    rep.c2_max = check_c2_max(field, region);
    return rep.c2_max <= 0.0;
  });
  guarded(Condition::c3, [&] {
    rep.c3_max_asym = check_c3_symmetry(field, region, opt.fd_step);
    return rep.c3_max_asym < opt.tol_c3;
  });
  guarded(Condition::c4, [&] {
    rep.c4_residual = check_c4_residual(field);
    return rep.c4_residual < opt.tol_c4;
  });
  guarded(Condition::c5, [&] {
    rep.c5 = check_c5_hessian(field, spec, opt.fd_step, opt.tol_pd);
    return rep.c5->pass;
  });
  const auto c6_index = static_cast<std::size_t>(Condition::c6);
  try {
    rep.c6 = check_c6_residual_set(field, region, opt.c6);
    rep.pass[c6_index] = rep.c6->pass;
  } catch (const std::exception& e) {
    rep.pass[c6_index] = false;
    rep.errors[c6_index] = e.what();
  }
  return rep;
}

inline VerificationReport verify_all(const ControllerSpec& spec, const VerificationRegion& region,
                                     const VerifyOptions& opt = {}) {
  return verify_all(ClosedLoopField(spec), spec, region, opt);
}

}  // namespace idapbc
