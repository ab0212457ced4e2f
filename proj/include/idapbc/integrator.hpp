#pragma once

namespace idapbc {

/// One classical fourth-order Runge-Kutta step for an autonomous-in-form system
/// `dx/dt = rhs(t, x)`. `State` needs `+`, `-` and scalar `*` (Eigen vectors qualify).
template <class State, class Rhs>
State rk4_step(const Rhs& rhs, double t, const State& x, double dt) {
  const State k1 = rhs(t, x);
  const State k2 = rhs(t + 0.5 * dt, State(x + (0.5 * dt) * k1));
  const State k3 = rhs(t + 0.5 * dt, State(x + (0.5 * dt) * k2));
  const State k4 = rhs(t + dt, State(x + dt * k3));
  return State(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace idapbc
