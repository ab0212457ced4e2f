#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace idapbc {

/// Base class for every model/controller/numerics failure raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A normalized voltage fell below the floor where h(x2) = R x2 + P/x2 is singular.
class voltage_floor_violation : public error {
 public:
  explicit voltage_floor_violation(double x2, std::optional<double> time = std::nullopt)
      : error(describe(x2, time)), x2_(x2), time_(time) {}

  double x2() const noexcept { return x2_; }
  std::optional<double> time() const noexcept { return time_; }

 private:
  static std::string describe(double x2, std::optional<double> time) {
    std::string msg = "voltage floor violated: x2 = " + std::to_string(x2);
    if (time) msg += " at t = " + std::to_string(*time);
    return msg;
  }

  double x2_;
  std::optional<double> time_;
};

/// h'(x2*) <= 0, or another standing hypothesis of the design does not hold.
class assumption_violated : public error {
 public:
  using error::error;
};

/// Parametric load with x2* <= sqrt(P/R): the CPL makes h' negative at the reference.
class reference_below_cpl_floor : public assumption_violated {
 public:
  using assumption_violated::assumption_violated;
};

/// Gain outside the admissible set (k <= 0 for the Buck, k < k_min for Boost/Buck-Boost).
class invalid_gain : public error {
 public:
  using error::error;
};

class numerical_blowup : public error {
 public:
  using error::error;
};

class quadrature_failure : public error {
 public:
  using error::error;
};

class no_passing_level : public error {
 public:
  using error::error;
};

/// Malformed configuration or invalid user input (maps to the CLI usage exit code).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace idapbc
