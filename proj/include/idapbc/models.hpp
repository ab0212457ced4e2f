#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "idapbc/errors.hpp"

namespace idapbc {

/// Lowest admissible normalized voltage; h(x2) = R x2 + P/x2 is singular at 0.
inline constexpr double voltage_floor = 1e-6;

/// Normalized state: x(0) = x1 (scaled inductor current), x(1) = x2 (scaled output voltage).
using State = Eigen::Vector2d;

enum class ConverterKind { buck, boost, buck_boost };

inline std::string_view to_string(ConverterKind kind) {
  switch (kind) {
    case ConverterKind::buck: return "buck";
    case ConverterKind::boost: return "boost";
    case ConverterKind::buck_boost: return "buck_boost";
  }
  return "?";
}

inline ConverterKind parse_converter_kind(std::string_view name) {
  if (name == "buck") return ConverterKind::buck;
  if (name == "boost") return ConverterKind::boost;
  if (name == "buck_boost" || name == "buckboost" || name == "bb") return ConverterKind::buck_boost;
  throw config_error("unknown converter kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Physical parameters and scaling

/// Circuit values in SI units: source voltage E, inductance L, capacitance C,
/// load conductance G and constant-power-load power P_cpl.
struct PhysicalParams {
  double E = 24.0;
  double L = 1e-3;
  double C = 330e-6;
  double G = 0.0167;
  double P_cpl = 1.2;

  void validate() const {
    if (!(E > 0.0) || !(L > 0.0) || !(C > 0.0))
      throw config_error("physical parameters require E, L, C > 0");
    if (!(G >= 0.0) || !(P_cpl >= 0.0))
      throw config_error("physical parameters require G >= 0 and P_cpl >= 0");
  }

  /// Characteristic impedance sqrt(L/C).
  double impedance() const { return std::sqrt(L / C); }

  /// Bench values of the reference setup: 24 V, 1 mH, 330 uF, 0.0167 S, 1.2 W.
  static PhysicalParams nominal() { return {}; }

  bool operator==(const PhysicalParams&) const = default;
};

/// Dimensionless load parameters of h(x2) = R x2 + P / x2.
struct NormalizedLoadParams {
  double R = 0.0;
  double P = 0.0;

  bool operator==(const NormalizedLoadParams&) const = default;
};

inline NormalizedLoadParams normalize(const PhysicalParams& p) {
  const double z = p.impedance();
  return {p.G * z, p.P_cpl / (p.E * p.E) * z};
}

struct PhysicalState {
  double i = 0.0;  ///< inductor current [A]
  double v = 0.0;  ///< capacitor voltage [V]
};

inline State to_normalized_state(const PhysicalParams& p, double i, double v) {
  return {p.impedance() * i / p.E, v / p.E};
}

inline PhysicalState to_physical_state(const PhysicalParams& p, const State& x) {
  return {x(0) * p.E / p.impedance(), x(1) * p.E};
}

/// t = tau / sqrt(LC).
inline double to_normalized_time(const PhysicalParams& p, double tau) {
  return tau / std::sqrt(p.L * p.C);
}

inline double to_physical_time(const PhysicalParams& p, double t) {
  return t * std::sqrt(p.L * p.C);
}

// ---------------------------------------------------------------------------
// Load relation i_L = h(x2)

/// Static voltage-to-current map of the load, in normalized units.
///
/// The parametric form (resistor in parallel with a constant power load) is
/// evaluated in closed form; custom loads provide h and optionally h', with h'
/// falling back to a central difference.
class LoadRelation {
 public:
  using Map = std::function<double(double)>;

  static constexpr double custom_fd_step = 1e-6;

  static LoadRelation parametric(NormalizedLoadParams params) {
    if (!(params.R >= 0.0) || !(params.P >= 0.0))
      throw config_error("parametric load requires R >= 0 and P >= 0");
    LoadRelation load;
    load.params_ = params;
    return load;
  }

  static LoadRelation parametric(double R, double P) { return parametric({R, P}); }

  static LoadRelation custom(Map h, Map h_prime = nullptr) {
    if (!h) throw config_error("custom load needs a current map");
    LoadRelation load;
    load.h_ = std::move(h);
    load.h_prime_ = std::move(h_prime);
    return load;
  }

  bool is_parametric() const { return params_.has_value(); }
  const std::optional<NormalizedLoadParams>& parametric_params() const { return params_; }

  /// h(x2).
  double current(double x2) const {
    if (params_) {
      check_floor(x2);
      return params_->R * x2 + params_->P / x2;
    }
    return h_(x2);
  }

  double operator()(double x2) const { return current(x2); }

  /// h'(x2).
  double slope(double x2) const {
    if (params_) {
      check_floor(x2);
      return params_->R - params_->P / (x2 * x2);
    }
    if (h_prime_) return h_prime_(x2);
    return (h_(x2 + custom_fd_step) - h_(x2 - custom_fd_step)) / (2.0 * custom_fd_step);
  }

  /// Throws voltage_floor_violation where the parametric map is singular.
  void check_floor(double x2) const {
    if (params_ && params_->P > 0.0 && !(x2 >= voltage_floor)) throw voltage_floor_violation(x2);
  }

 private:
  LoadRelation() = default;

  std::optional<NormalizedLoadParams> params_;
  Map h_;
  Map h_prime_;
};

// ---------------------------------------------------------------------------
// Converter average models

/// Normalized averaged converter:
///   Buck:             x1' = -x2 + u,        x2' = x1 - h(x2)
///   Boost/Buck-Boost: x1' = -g(x2) u + 1,   x2' = x1 u - h(x2)
/// with g(x2) = x2 (Boost) or x2 + 1 (Buck-Boost).
struct ConverterModel {
  ConverterKind kind;
  LoadRelation load;

  double g(double x2) const {
    switch (kind) {
      case ConverterKind::boost: return x2;
      case ConverterKind::buck_boost: return x2 + 1.0;
      case ConverterKind::buck: break;
    }
    throw std::logic_error("g(x2) is not defined for the Buck converter");
  }

  State dynamics(const State& x, double u) const {
    const double h = load.current(x(1));
    if (kind == ConverterKind::buck) return {-x(1) + u, x(0) - h};
    return {-g(x(1)) * u + 1.0, x(0) * u - h};
  }

  /// Partial derivative of the dynamics with respect to u.
  State input_gain(const State& x) const {
    if (kind == ConverterKind::buck) return {1.0, 0.0};
    return {-g(x(1)), x(0)};
  }
};

// ---------------------------------------------------------------------------
// Assignable equilibria

/// A point of the assignable equilibrium set together with the load and
/// converter values at x2* that every downstream computation needs.
struct EquilibriumPoint {
  double x1_star = 0.0;
  double x2_star = 0.0;
  double u_star = 0.0;
  double h_star = 0.0;
  double g_star = 0.0;  ///< 0 for the Buck (g unused)
  double h_prime_star = 0.0;

  State state() const { return {x1_star, x2_star}; }
};

/// Equilibrium regulating x2 to `x2_star`:
///   Buck:             x1* = h*,      u* = x2*
///   Boost/Buck-Boost: x1* = g* h*,   u* = 1 / g*
/// Rejects references violating h'(x2*) > 0 (and, for parametric loads, the
/// equivalent bound x2* > sqrt(P/R)) or whose duty ratio leaves (0, 1].
inline EquilibriumPoint equilibrium_for(const ConverterModel& model, double x2_star) {
  if (!(x2_star > 0.0)) throw assumption_violated("reference x2* must be positive");
  if (const auto& p = model.load.parametric_params(); p && p->P > 0.0) {
    if (p->R <= 0.0 || x2_star <= std::sqrt(p->P / p->R))
      throw reference_below_cpl_floor("x2* = " + std::to_string(x2_star) +
                                      " does not exceed sqrt(P/R) of the constant power load");
  }

  EquilibriumPoint eq;
  eq.x2_star = x2_star;
  eq.h_star = model.load.current(x2_star);
  eq.h_prime_star = model.load.slope(x2_star);
  if (!(eq.h_prime_star > 0.0))
    throw assumption_violated("h'(x2*) = " + std::to_string(eq.h_prime_star) + " is not positive");

  if (model.kind == ConverterKind::buck) {
    eq.x1_star = eq.h_star;
    eq.u_star = x2_star;
  } else {
    eq.g_star = model.g(x2_star);
    eq.x1_star = eq.g_star * eq.h_star;
    eq.u_star = 1.0 / eq.g_star;
  }
  if (!(eq.u_star > 0.0 && eq.u_star <= 1.0))
    throw assumption_violated("reference x2* = " + std::to_string(x2_star) +
                              " needs a duty ratio outside (0, 1]");
  return eq;
}

}  // namespace idapbc
