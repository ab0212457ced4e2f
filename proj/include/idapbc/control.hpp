#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "idapbc/errors.hpp"
#include "idapbc/models.hpp"

namespace idapbc {

/// Lower duty-ratio clamp used when a simulation saturates the input.
inline constexpr double duty_min = 1e-3;

/// Smallest admissible Boost/Buck-Boost gain, k_min = 1 + h* / (h'* g*).
inline double min_gain(const EquilibriumPoint& eq) {
  if (eq.g_star <= 0.0) throw std::invalid_argument("min_gain applies to Boost/Buck-Boost equilibria");
  if (!(eq.h_prime_star > 0.0)) throw assumption_violated("min_gain needs h'(x2*) > 0");
  return 1.0 + eq.h_star / (eq.h_prime_star * eq.g_star);
}

struct ControlValue {
  double raw = 0.0;        ///< law value before clamping
  double saturated = 0.0;  ///< clamped to [duty_min, 1]
};

/// Voltage-feedback law of one converter regulated to one equilibrium.
///
///   Buck:             u(x2) = -k [h(x2) - x1*] + x2,             k > 0
///   Boost/Buck-Boost: u(x2) = k h(x2) / (h(x2) g(x2) + c),       c = (k - 1) h* g*,
///                                                                k >= k_min
///
/// The model held here is the controller's view of the plant (its load may be
/// an estimate); it need not coincide with the simulated plant.
class ControllerSpec {
 public:
  /// Validated construction: rejects gains outside the admissible set.
  static ControllerSpec make(ConverterModel model, double k, double x2_star) {
    auto eq = equilibrium_for(model, x2_star);
    check_gain(model.kind, k, eq);
    return ControllerSpec(std::move(model), k, eq);
  }

  /// Builds the law for any finite gain (the equilibrium is still validated).
  /// Used to study inadmissible gains and by certainty-equivalence adaptation.
  static ControllerSpec unchecked(ConverterModel model, double k, double x2_star) {
    if (!std::isfinite(k)) throw invalid_gain("gain must be finite");
    auto eq = equilibrium_for(model, x2_star);
    return ControllerSpec(std::move(model), k, eq);
  }

  static void check_gain(ConverterKind kind, double k, const EquilibriumPoint& eq) {
    if (kind == ConverterKind::buck) {
      if (!(k > 0.0)) throw invalid_gain("Buck gain must be positive, got " + std::to_string(k));
      return;
    }
    const double k_min = min_gain(eq);
    if (!(k >= k_min))
      throw invalid_gain("gain " + std::to_string(k) + " is below k_min = " + std::to_string(k_min));
  }

  ConverterKind kind() const { return model_.kind; }
  const ConverterModel& model() const { return model_; }
  double gain() const { return k_; }
  const EquilibriumPoint& equilibrium() const { return eq_; }
  /// (k - 1) h* g*; zero for the Buck.
  double c() const { return c_; }

  /// Unsaturated law u(x2).
  double law(double x2) const {
    const double h = model_.load.current(x2);
    if (kind() == ConverterKind::buck) return -k_ * (h - eq_.x1_star) + x2;
    return k_ * h / (h * model_.g(x2) + c_);
  }

  /// du/dx2 in closed form (g' = 1 for Boost and Buck-Boost).
  double law_derivative(double x2) const {
    const double hp = model_.load.slope(x2);
    if (kind() == ConverterKind::buck) return 1.0 - k_ * hp;
    const double h = model_.load.current(x2);
    const double den = h * model_.g(x2) + c_;
    return k_ * (c_ * hp - h * h) / (den * den);
  }

 private:
  ControllerSpec(ConverterModel model, double k, const EquilibriumPoint& eq)
      : model_(std::move(model)), k_(k), eq_(eq) {
    if (model_.kind != ConverterKind::buck) c_ = (k_ - 1.0) * eq_.h_star * eq_.g_star;
  }

  ConverterModel model_;
  double k_;
  EquilibriumPoint eq_;
  double c_ = 0.0;
};

inline ControlValue control_law(const ControllerSpec& spec, double x2) {
  const double raw = spec.law(x2);
  return {raw, std::clamp(raw, duty_min, 1.0)};
}

// ---------------------------------------------------------------------------
// Interconnection/damping structure

/// The maps alpha1, alpha2, beta of Q(x, u) = [[alpha1, beta], [-beta, alpha2]]
/// and the components of D(x, u) = Q(x, u) f(x, u), with f the plant model.
///   Buck:             alpha1 = -1/k, alpha2 = 0, beta = 1
///   Boost/Buck-Boost: alpha1 = -x1,  alpha2 = 0, beta = -g(x2) + k/u
class StructureFunctions {
 public:
  StructureFunctions(ConverterModel plant, double k) : plant_(std::move(plant)), k_(k) {}

  explicit StructureFunctions(const ControllerSpec& spec) : StructureFunctions(spec.model(), spec.gain()) {}

  const ConverterModel& plant() const { return plant_; }
  double gain() const { return k_; }

  double alpha1(const State& x, double /*u*/) const {
    return plant_.kind == ConverterKind::buck ? -1.0 / k_ : -x(0);
  }
  double alpha2(const State& /*x*/, double /*u*/) const { return 0.0; }
  double beta(const State& x, double u) const {
    return plant_.kind == ConverterKind::buck ? 1.0 : -plant_.g(x(1)) + k_ / u;
  }

  State d(const State& x, double u) const {
    const State f = plant_.dynamics(x, u);
    const double b = beta(x, u);
    return {alpha1(x, u) * f(0) + b * f(1), -b * f(0) + alpha2(x, u) * f(1)};
  }
  double d1(const State& x, double u) const { return d(x, u)(0); }
  double d2(const State& x, double u) const { return d(x, u)(1); }

 private:
  ConverterModel plant_;
  double k_;
};

inline StructureFunctions structure_functions(const ControllerSpec& spec) { return StructureFunctions(spec); }

/// Structure functions composed with a feedback law u = law(x2) ("hatted" maps).
/// By default the law is the spec's unsaturated law; another law can be
/// substituted to study designs that violate the matching condition.
class ClosedLoopField {
 public:
  using Law = std::function<double(double)>;

  explicit ClosedLoopField(const ControllerSpec& spec)
      : ClosedLoopField(spec.model(), spec, [spec](double x2) { return spec.law(x2); }) {}

  ClosedLoopField(ConverterModel plant, const ControllerSpec& spec, Law law)
      : structure_(std::move(plant), spec.gain()), eq_(spec.equilibrium()), law_(std::move(law)) {}

  const ConverterModel& plant() const { return structure_.plant(); }
  const StructureFunctions& structure() const { return structure_; }
  const EquilibriumPoint& equilibrium() const { return eq_; }

  double u(const State& x) const { return law_(x(1)); }
  double alpha1(const State& x) const { return structure_.alpha1(x, u(x)); }
  double alpha2(const State& x) const { return structure_.alpha2(x, u(x)); }
  double beta(const State& x) const { return structure_.beta(x, u(x)); }
  State f(const State& x) const { return structure_.plant().dynamics(x, u(x)); }
  State d(const State& x) const { return structure_.d(x, u(x)); }

  /// alpha1 f1^2 + alpha2 f2^2, the time derivative of P along the closed loop.
  double dissipation(const State& x) const {
    const double v = u(x);
    const State fx = structure_.plant().dynamics(x, v);
    return structure_.alpha1(x, v) * fx(0) * fx(0) + structure_.alpha2(x, v) * fx(1) * fx(1);
  }

 private:
  StructureFunctions structure_;
  EquilibriumPoint eq_;
  Law law_;
};

// ---------------------------------------------------------------------------
// Matching ODE

/// Residual of the matching ODE for an arbitrary law value `u` and slope `du`
/// at x2:
///   Buck:             du - 1 + k h'(x2)
///   Boost/Buck-Boost: (1/k) [g h' + h] u^2 - h' u + h du
inline double matching_ode_residual(ConverterKind kind, double k, const ConverterModel& model, double x2,
                                    double u, double du) {
  const double hp = model.load.slope(x2);
  if (kind == ConverterKind::buck) return du - 1.0 + k * hp;
  const double h = model.load.current(x2);
  return (model.g(x2) * hp + h) * u * u / k - hp * u + h * du;
}

inline double matching_ode_residual(const ControllerSpec& spec, double x2) {
  return matching_ode_residual(spec.kind(), spec.gain(), spec.model(), x2, spec.law(x2),
                               spec.law_derivative(x2));
}

}  // namespace idapbc
