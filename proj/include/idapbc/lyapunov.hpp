#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "idapbc/contour.hpp"
#include "idapbc/control.hpp"
#include "idapbc/errors.hpp"
#include "idapbc/integrator.hpp"
#include "idapbc/models.hpp"
#include "idapbc/quadrature.hpp"
#include "idapbc/verifier.hpp"

namespace idapbc {

/// Closed-form shaped energy P(x) of the closed loop for the resistive + CPL
/// load, normalized so that P(x*) = 0. P is separable,
///   P(x) = (a/2) (x1 - x1*)^2 + mu(x2),    a = 1 (Buck) or k - 1,
/// with
///   Buck:       mu = (k/2)(x2 - x2*)[R(x2 + x2*) - 2 x1*] + k P ln(x2/x2*)
///   Boost:      mu = (c/2R) [k ln((w + c)/(w* + c)) - ln(w/w*)],  w = x2 h(x2)
///   Buck-Boost: mu = k(x2^2/2 + x2) - k(x2*^2/2 + x2*) - (c/2R) ln(w/w*)
///                    - k * integral_{x2*}^{x2} g^2 h / (g h + c) ds
class LyapunovFn {
 public:
  static constexpr double quadrature_tol = 1e-10;

  explicit LyapunovFn(const ControllerSpec& spec) : spec_(spec) {
    const auto& p = spec.model().load.parametric_params();
    if (!p) throw std::invalid_argument("closed-form Lyapunov functions need the parametric R + CPL load");
    load_ = *p;
    if (spec.kind() != ConverterKind::buck && !(load_.R > 0.0))
      throw std::invalid_argument("Boost/Buck-Boost Lyapunov functions need R > 0");
  }

  ConverterKind kind() const { return spec_.kind(); }
  const ControllerSpec& spec() const { return spec_; }
  const NormalizedLoadParams& load() const { return load_; }

  double x1_term(double x1) const {
    const double a = kind() == ConverterKind::buck ? 1.0 : spec_.gain() - 1.0;
    const double d = x1 - spec_.equilibrium().x1_star;
    return 0.5 * a * d * d;
  }

  /// mu(x2), with mu(x2*) = 0.
  double x2_term(double x2) const {
    const bool bb = kind() == ConverterKind::buck_boost;
    return x2_term_with_integral(x2, bb ? integral(eq().x2_star, x2) : 0.0);
  }

  double value(const State& x) const { return x1_term(x(0)) + x2_term(x(1)); }
  double operator()(const State& x) const { return value(x); }

  /// Buck-Boost integral of g^2 h / (g h + c) over [from, to] (adaptive Simpson).
  double integral(double from, double to, double tol = quadrature_tol) const {
    check(from);
    check(to);
    const double c = spec_.c();
    return adaptive_simpson(
        [&](double s) {
          const double g = s + 1.0;
          const double h = load_.R * s + load_.P / s;
          return g * g * h / (g * h + c);
        },
        from, to, tol);
  }

  /// mu(x2) given the already computed Buck-Boost integral from x2* to x2.
  double x2_term_with_integral(double x2, double integral_from_star) const {
    check(x2);
    const double k = spec_.gain();
    const double c = spec_.c();
    const double x2s = eq().x2_star;
    const double R = load_.R;
    const double P = load_.P;
    switch (kind()) {
      case ConverterKind::buck:
        return 0.5 * k * (x2 - x2s) * (R * (x2 + x2s) - 2.0 * eq().x1_star) + k * P * std::log(x2 / x2s);
      case ConverterKind::boost: {
        const double w = R * x2 * x2 + P;
        const double ws = R * x2s * x2s + P;
        return c / (2.0 * R) * (k * std::log((w + c) / (ws + c)) - std::log(w / ws));
      }
      case ConverterKind::buck_boost: {
        const double w = R * x2 * x2 + P;
        const double ws = R * x2s * x2s + P;
        return k * (0.5 * x2 * x2 + x2) - k * (0.5 * x2s * x2s + x2s) - c / (2.0 * R) * std::log(w / ws) -
               k * integral_from_star;
      }
    }
    return 0.0;
  }

  /// Boost only: the textbook additive constant of the Boost energy,
  /// (c/2R) ln((k x1*)^k / x1*), against the constant that actually makes
  /// P(x*) = 0 (which is its negative).
  struct ConstantCheck {
    double textbook = 0.0;
    double required = 0.0;
    bool matches = false;
  };

  std::optional<ConstantCheck> boost_constant_check() const {
    if (kind() != ConverterKind::boost) return std::nullopt;
    const double k = spec_.gain();
    const double c = spec_.c();
    const double x1s = eq().x1_star;
    const double x2s = eq().x2_star;
    const double w = x2s * spec_.model().load.current(x2s);
    ConstantCheck chk;
    chk.textbook = c / (2.0 * load_.R) * (k * std::log(k * x1s) - std::log(x1s));
    chk.required = -c / (2.0 * load_.R) * (k * std::log(w + c) - std::log(w));
    chk.matches = std::abs(chk.textbook - chk.required) <= 1e-9 * std::max(1.0, std::abs(chk.required));
    return chk;
  }

  /// Incremental evaluator along a trajectory: the Buck-Boost integral is
  /// advanced from the previous x2 instead of recomputed from x2*.
  class Tracker {
   public:
    explicit Tracker(const LyapunovFn& fn) : fn_(&fn) {}

    double operator()(const State& x) {
      if (fn_->kind() != ConverterKind::buck_boost) return fn_->value(x);
      const double from = started_ ? last_x2_ : fn_->eq().x2_star;
      if (!started_) acc_ = 0.0;
      if (x(1) != from) acc_ += fn_->integral(from, x(1), 1e-14);
      started_ = true;
      last_x2_ = x(1);
      return fn_->x1_term(x(0)) + fn_->x2_term_with_integral(x(1), acc_);
    }

   private:
    const LyapunovFn* fn_;
    bool started_ = false;
    double last_x2_ = 0.0;
    double acc_ = 0.0;
  };

 private:
  const EquilibriumPoint& eq() const { return spec_.equilibrium(); }

  static void check(double x2) {
    if (!(x2 >= voltage_floor)) throw voltage_floor_violation(x2);
  }

  ControllerSpec spec_;
  NormalizedLoadParams load_;
};

inline double eval_p(const LyapunovFn& fn, const State& x) { return fn.value(x); }

/// dP/dt along the closed loop, alpha1 f1^2 + alpha2 f2^2.
inline double eval_p_dot(const ClosedLoopField& field, const State& x) { return field.dissipation(x); }

inline double eval_p_dot(const LyapunovFn& fn, const State& x) { return ClosedLoopField(fn.spec()).dissipation(x); }

// ---------------------------------------------------------------------------
// Region-of-attraction estimation from sublevel sets

struct RoaOptions {
  std::size_t grid_n = 400;
  std::size_t boundary_samples = 64;
  double dt = 1e-2;
  double horizon = 4000.0;
  double convergence_tol = 1e-4;  ///< sup-norm distance to x* at the horizon
  double monotone_tol = 1e-9;     ///< allowed per-step increase of P
  std::size_t keep_every = 50;    ///< decimation of stored probe paths
  bool probe_all_levels = false;  ///< keep probing levels below the first passing one
};

struct ProbeRun {
  State start = State::Zero();
  State end = State::Zero();
  bool converged = false;
  bool monotone = true;
  double max_increase = 0.0;  ///< largest per-step increase of P observed
  double final_time = 0.0;
  std::vector<State> path;    ///< decimated trajectory
  std::vector<double> energy; ///< P along the decimated trajectory
  std::string failure;
};

struct RoaCandidate {
  double level = 0.0;
  std::vector<Contour> curves;  ///< every iso-line of P at this level inside the region
  bool contained = false;       ///< component of {P <= level} around x* lies inside the region
  bool probed = false;
  std::size_t invariance_samples = 0;
  bool all_converged = false;
  std::vector<ProbeRun> probes;
  std::string reason;

  bool passed() const { return contained && probed && all_converged; }
};

/// Accepted estimate: the largest passing level.
struct RoaEstimate {
  double P_bar = 0.0;
  bool contained_in_orthant = false;
  std::size_t invariance_samples = 0;
  bool all_converged = false;
};

struct RoaResult {
  std::vector<RoaCandidate> candidates;  ///< in descending level order
  std::optional<RoaEstimate> best;
};

/// P sampled on a grid_n x grid_n grid over the region (separable evaluation).
inline GridField sample_energy(const LyapunovFn& fn, const VerificationRegion& region, std::size_t n) {
  GridField grid;
  grid.xs.resize(n);
  grid.ys.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid.xs[i] = region.x1.at(i, n);
  for (std::size_t j = 0; j < n; ++j) grid.ys[j] = region.x2.at(j, n);

  std::vector<double> row(n);
  if (fn.kind() == ConverterKind::buck_boost) {
    // Chain the integral along the sorted ys: one short quadrature per row.
    const double x2s = fn.spec().equilibrium().x2_star;
    std::size_t pivot = static_cast<std::size_t>(std::lower_bound(grid.ys.begin(), grid.ys.end(), x2s) - grid.ys.begin());
    double acc = 0.0;
    double prev = x2s;
    for (std::size_t j = pivot; j < n; ++j) {
      acc += fn.integral(prev, grid.ys[j], 1e-13);
      prev = grid.ys[j];
      row[j] = fn.x2_term_with_integral(grid.ys[j], acc);
    }
    acc = 0.0;
    prev = x2s;
    for (std::size_t j = pivot; j-- > 0;) {
      acc += fn.integral(prev, grid.ys[j], 1e-13);
      prev = grid.ys[j];
      row[j] = fn.x2_term_with_integral(grid.ys[j], acc);
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) row[j] = fn.x2_term(grid.ys[j]);
  }

  grid.values.resize(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) grid.values[j * n + i] = fn.x1_term(grid.xs[i]) + row[j];
  return grid;
}

/// Forward closed-loop run from `start` with the unsaturated law, tracking P.
/// Stops early once P drops below `stop_level`, a sublevel set that the
/// quadratic model of P at x* places inside the convergence box.
inline ProbeRun run_probe(const LyapunovFn& fn, const ClosedLoopField& field, const State& start,
                          const RoaOptions& opt, double stop_level) {
  ProbeRun run;
  run.start = start;
  LyapunovFn::Tracker energy(fn);
  const State x_star = field.equilibrium().state();
  const auto rhs = [&](double, const State& s) { return field.f(s); };
  const auto steps = static_cast<std::size_t>(std::ceil(opt.horizon / opt.dt));
  State x = start;
  try {
    double p_prev = energy(x);
    run.path.push_back(x);
    run.energy.push_back(p_prev);
    std::size_t n = 0;
    for (; n < steps; ++n) {
      x = rk4_step(rhs, 0.0, x, opt.dt);
      if (!x.allFinite()) throw numerical_blowup("probe trajectory diverged");
      const double p = energy(x);
      run.max_increase = std::max(run.max_increase, p - p_prev);
      if (p > p_prev + opt.monotone_tol) run.monotone = false;
      p_prev = p;
      if ((n + 1) % opt.keep_every == 0) {
        run.path.push_back(x);
        run.energy.push_back(p);
      }
      if (p < stop_level && (x - x_star).cwiseAbs().maxCoeff() < opt.convergence_tol) {
        ++n;
        break;
      }
    }
    run.final_time = static_cast<double>(n) * opt.dt;
    run.path.push_back(x);
    run.energy.push_back(p_prev);
    run.end = x;
    run.converged = (x - x_star).cwiseAbs().maxCoeff() < opt.convergence_tol;
    if (!run.converged) run.failure = "did not reach the convergence box within the horizon";
    if (!run.monotone) run.failure = "P increased beyond tolerance";
  } catch (const std::exception& e) {
    run.end = x;
    run.converged = false;
    run.failure = e.what();
  }
  return run;
}

/// For each level (descending), extracts the iso-lines of P on the region,
/// checks that the sublevel component around x* stays inside the region, and
/// probes `boundary_samples` starts on its boundary curve. The largest level
/// whose probes all converge with non-increasing P is reported as `best`.
inline RoaResult evaluate_roa(const LyapunovFn& fn, const ClosedLoopField& field, const VerificationRegion& region,
                              std::vector<double> levels, const RoaOptions& opt = {}) {
  region.validate();
  std::sort(levels.begin(), levels.end(), std::greater<>());
  RoaResult result;

  const State x_star = field.equilibrium().state();
  const bool star_inside = region.contains(x_star);
  const GridField grid = sample_energy(fn, region, opt.grid_n);

  // Minimum of P over the region boundary: the x* component of {P <= level}
  // cannot cross the boundary when the level is below it.
  double boundary_min = std::numeric_limits<double>::infinity();
  const std::size_t n = opt.grid_n;
  for (std::size_t k = 0; k < n; ++k) {
    boundary_min = std::min({boundary_min, grid.value(k, 0), grid.value(k, n - 1), grid.value(0, k), grid.value(n - 1, k)});
  }

  // Quadratic model of P at x*: {P <= stop} lies in the half-size convergence box.
  const Eigen::Matrix2d hess = analytic_c5_matrix(fn.spec());
  const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(0.5 * (hess + hess.transpose())).eigenvalues()(0);
  const double half_box = 0.5 * opt.convergence_tol;
  const double stop_level = lambda_min > 0.0 ? 0.25 * lambda_min * half_box * half_box : 0.0;

  bool found = false;
  for (double level : levels) {
    RoaCandidate cand;
    cand.level = level;
    cand.curves = marching_squares(grid, level);
    if (!star_inside) {
      cand.reason = "x* is outside the constraint region";
      result.candidates.push_back(std::move(cand));
      continue;
    }
    cand.contained = level < boundary_min;
    if (!cand.contained) {
      cand.reason = "sublevel set reaches the constraint-region boundary";
      result.candidates.push_back(std::move(cand));
      continue;
    }

    const Contour* ring = nullptr;
    for (const auto& c : cand.curves) {
      if (is_closed(c) && encloses(c, x_star) && (!ring || arc_length(c) > arc_length(*ring))) ring = &c;
    }
    if (!ring) {
      cand.reason = "no closed level curve around x*";
      result.candidates.push_back(std::move(cand));
      continue;
    }

    if (found && !opt.probe_all_levels) {
      cand.reason = "not probed (a larger level already passed)";
      result.candidates.push_back(std::move(cand));
      continue;
    }

    cand.probed = true;
    cand.all_converged = true;
    for (const Point2& p : resample(*ring, opt.boundary_samples)) {
      ProbeRun run = run_probe(fn, field, State(p), opt, stop_level);
      cand.all_converged = cand.all_converged && run.converged && run.monotone;
      cand.probes.push_back(std::move(run));
    }
    cand.invariance_samples = cand.probes.size();
    if (!cand.all_converged) cand.reason = "a boundary probe failed to converge monotonically";
    if (cand.passed() && !found) {
      found = true;
      result.best = RoaEstimate{level, true, cand.invariance_samples, true};
    }
    result.candidates.push_back(std::move(cand));
  }
  return result;
}

/// Largest passing level; throws no_passing_level when none passes.
inline RoaEstimate estimate_roa(const LyapunovFn& fn, const ClosedLoopField& field, const VerificationRegion& region,
                                std::vector<double> levels, const RoaOptions& opt = {}) {
  auto result = evaluate_roa(fn, field, region, std::move(levels), opt);
  if (!result.best) throw no_passing_level("no candidate level passed containment and probing");
  return *result.best;
}

}  // namespace idapbc
