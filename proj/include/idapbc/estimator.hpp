#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>

#include "idapbc/errors.hpp"
#include "idapbc/integrator.hpp"
#include "idapbc/models.hpp"

namespace idapbc {

using Vector2 = Eigen::Vector2d;
using Matrix2 = Eigen::Matrix2d;

/// phi(x2) = (x2, 1/x2), so that i_L = phi^T theta with theta = (G E, P_cpl / E).
inline Vector2 regressor(double x2) {
  if (!(x2 >= voltage_floor)) throw voltage_floor_violation(x2);
  return {x2, 1.0 / x2};
}

/// theta = (G E, P_cpl / E).
inline Vector2 theta_from_physical(double G, double P_cpl, double E) { return {G * E, P_cpl / E}; }

struct LoadEstimate {
  double G = 0.0;
  double P_cpl = 0.0;
};

/// G = theta1 / E, P_cpl = E theta2.
inline LoadEstimate recover_physical(const Vector2& theta, double E) { return {theta(0) / E, E * theta(1)}; }

/// (R, P) of h(x2) = R x2 + P / x2 corresponding to theta: theta = E sqrt(C/L) (R, P).
inline NormalizedLoadParams normalized_from_theta(const Vector2& theta, const PhysicalParams& p) {
  const double scale = p.impedance() / p.E;
  return {theta(0) * scale, theta(1) * scale};
}

/// Measured load current i_L = E sqrt(C/L) h(x2) in amperes.
inline double load_current(const PhysicalParams& p, const LoadRelation& load, double x2) {
  return p.E / p.impedance() * load.current(x2);
}

struct EstimatorHyper {
  double gamma = 10.0;
  double chi0 = 1.0;
  double sigma = 10.0;
  double f0 = 4.0;
  Vector2 theta0{0.01, 0.002};

  void validate() const {
    if (!(gamma > 0.0)) throw config_error("estimator gamma must be positive");
    if (!(chi0 > 0.0)) throw config_error("estimator chi0 must be positive");
    if (!(f0 > 0.0)) throw config_error("estimator f0 must be positive");
    if (!(sigma >= 1.0 / f0)) throw config_error("estimator sigma must be at least 1/f0");
    if (!theta0.allFinite()) throw config_error("estimator theta0 must be finite");
  }
};

/// Least-squares estimator with forgetting and its finite-convergence-time companion z.
struct EstimatorState {
  Vector2 theta_hat = Vector2::Zero();
  Matrix2 F = Matrix2::Identity();
  double z = 1.0;
  double t = 0.0;

  static EstimatorState initial(const EstimatorHyper& hyper) {
    hyper.validate();
    return {hyper.theta0, Matrix2::Identity() / hyper.f0, 1.0, 0.0};
  }
};

/// chi = chi0 (1 - |F| / sigma), |F| the Frobenius norm.
inline double forgetting_rate(const Matrix2& F, const EstimatorHyper& hyper) {
  return hyper.chi0 * (1.0 - F.norm() / hyper.sigma);
}

/// Estimator variables packed as one vector: theta (2), F column-major (4), z.
using EstimatorVector = Eigen::Matrix<double, 7, 1>;

inline EstimatorVector pack(const EstimatorState& s) {
  EstimatorVector v;
  v << s.theta_hat, s.F(0, 0), s.F(1, 0), s.F(0, 1), s.F(1, 1), s.z;
  return v;
}

inline void unpack(const EstimatorVector& v, EstimatorState& s) {
  s.theta_hat = v.head<2>();
  s.F << v(2), v(4), v(3), v(5);
  s.z = v(6);
}

///   theta' = gamma F phi (i_L - phi^T theta)
///   F'     = -gamma F phi phi^T F + chi F
///   z'     = -chi z
inline EstimatorVector estimator_rates(const EstimatorVector& v, const EstimatorHyper& hyper, const Vector2& phi,
                                       double i_load) {
  EstimatorState s;
  unpack(v, s);
  const double chi = forgetting_rate(s.F, hyper);
  const Vector2 f_phi = s.F * phi;
  const Vector2 theta_dot = hyper.gamma * f_phi * (i_load - phi.dot(s.theta_hat));
  const Matrix2 f_dot = -hyper.gamma * f_phi * f_phi.transpose() + chi * s.F;
  EstimatorVector out;
  out << theta_dot, f_dot(0, 0), f_dot(1, 0), f_dot(0, 1), f_dot(1, 1), -chi * s.z;
  return out;
}

inline constexpr double estimator_blowup_norm = 1e12;

/// Symmetrizes F and enforces the state invariants after an integration step.
inline void settle(EstimatorState& s) {
  s.F = 0.5 * (s.F + s.F.transpose());
  if (!s.F.allFinite() || s.F.norm() > estimator_blowup_norm || !s.theta_hat.allFinite())
    throw numerical_blowup("estimator gain matrix diverged");
  if (Eigen::LLT<Matrix2>(s.F).info() != Eigen::Success)
    throw numerical_blowup("estimator gain matrix lost positive definiteness");
}

/// One RK4 step with phi and i_L held over the step.
inline EstimatorState step(const EstimatorState& state, const EstimatorHyper& hyper, const Vector2& phi, double i_load,
                           double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("estimator step needs dt > 0");
  const auto rhs = [&](double, const EstimatorVector& v) { return estimator_rates(v, hyper, phi, i_load); };
  EstimatorState next;
  unpack(rk4_step(rhs, state.t, pack(state), dt), next);
  next.t = state.t + dt;
  settle(next);
  return next;
}

inline constexpr double fct_condition_limit = 1e10;

/// theta_fct = (I - z f0 F)^-1 (theta_hat - z f0 F theta0), or nullopt while the
/// matrix is singular or worse conditioned than fct_condition_limit.
inline std::optional<Vector2> fct_reconstruct(const EstimatorState& s, const EstimatorHyper& hyper) {
  const Matrix2 zf = s.z * hyper.f0 * s.F;
  const Matrix2 m = Matrix2::Identity() - zf;
  const Eigen::JacobiSVD<Matrix2> svd(m);
  const auto sv = svd.singularValues();
  if (!(sv(1) > 0.0) || sv(0) / sv(1) >= fct_condition_limit) return std::nullopt;
  return Vector2(m.partialPivLu().solve(s.theta_hat - zf * hyper.theta0));
}

/// Running Gram matrix of the regressor (trapezoidal rule) and the first time
/// its smallest eigenvalue reaches kappa.
class ExcitationMonitor {
 public:
  static constexpr double default_kappa = 1e-4;

  explicit ExcitationMonitor(double kappa = default_kappa) : kappa_(kappa) {}

  /// Accumulates the interval ending at the sample `phi`, `dt` after the previous one.
  void update(const Vector2& phi, double dt) {
    const Vector2 prev = prev_phi_.value_or(phi);
    gram_ += 0.5 * dt * (prev * prev.transpose() + phi * phi.transpose());
    gram_ = 0.5 * (gram_ + gram_.transpose());
    prev_phi_ = phi;
    t_ += dt;
    if (!fired_at_ && min_eigenvalue() >= kappa_ - 1e-14 * gram_.trace()) fired_at_ = t_;
  }

  /// Seeds the regressor at the start of the window without accumulating.
  void seed(const Vector2& phi) { prev_phi_ = phi; }

  bool satisfied() const { return fired_at_.has_value(); }
  std::optional<double> tc() const { return fired_at_; }
  const Matrix2& gram() const { return gram_; }
  double kappa() const { return kappa_; }
  double time() const { return t_; }

  double min_eigenvalue() const {
    return Eigen::SelfAdjointEigenSolver<Matrix2>(gram_, Eigen::EigenvaluesOnly).eigenvalues()(0);
  }

 private:
  double kappa_;
  Matrix2 gram_ = Matrix2::Zero();
  std::optional<Vector2> prev_phi_;
  double t_ = 0.0;
  std::optional<double> fired_at_;
};

inline void monitor_update(ExcitationMonitor& mon, const Vector2& phi, double dt) { mon.update(phi, dt); }

inline bool ie_satisfied(const ExcitationMonitor& mon) { return mon.satisfied(); }

}  // namespace idapbc
