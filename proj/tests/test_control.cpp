#include <catch_amalgamated.hpp>

#include <random>

#include "idapbc/control.hpp"

using namespace idapbc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ConverterModel bench(ConverterKind kind) {
  return {kind, LoadRelation::parametric(normalize(PhysicalParams::nominal()))};
}

}  // namespace

TEST_CASE("minimum gains", "[control]") {
  CHECK_THAT(min_gain(equilibrium_for(bench(ConverterKind::buck_boost), 1.25)), WithinRel(1.65196432875392, 1e-12));
  CHECK_THAT(min_gain(equilibrium_for(bench(ConverterKind::boost), 1.25)), WithinRel(2.17353579175705, 1e-12));
  CHECK_THROWS_AS(min_gain(equilibrium_for(bench(ConverterKind::buck), 0.8)), std::invalid_argument);

  // The chosen Buck-Boost gain sits just above the bound.
  const double kmin = min_gain(equilibrium_for(bench(ConverterKind::buck_boost), 1.25));
  CHECK(std::abs(kmin - 1.6523) < 5e-4);
  CHECK(1.6523 >= kmin);
}

TEST_CASE("Buck-Boost law at k = 1.6523", "[control]") {
  const auto spec = ControllerSpec::make(bench(ConverterKind::buck_boost), 1.6523, 1.25);
  CHECK_THAT(spec.c(), WithinRel(0.0575915742601189, 1e-12));
  CHECK_THAT(spec.law(1.3), WithinRel(0.444269126075486, 1e-12));
  CHECK_THAT(spec.law(1.25), WithinRel(spec.equilibrium().u_star, 1e-14));
}

TEST_CASE("Boost law at k = 3", "[control]") {
  const auto spec = ControllerSpec::make(bench(ConverterKind::boost), 3.0, 1.25);
  CHECK_THAT(spec.c(), WithinRel(0.0981000123667, 1e-11));
  CHECK_THAT(spec.law(1.25), WithinRel(0.8, 1e-14));
}

TEST_CASE("Buck law reaches u* = x2* at the reference", "[control]") {
  const auto spec = ControllerSpec::make(bench(ConverterKind::buck), 0.1, 20.0 / 24.0);
  CHECK_THAT(spec.law(20.0 / 24.0), WithinAbs(20.0 / 24.0, 1e-15));
  CHECK_THAT(spec.law_derivative(0.9), WithinAbs(1.0 - 0.1 * spec.model().load.slope(0.9), 1e-15));
}

TEST_CASE("gain admissibility", "[control]") {
  CHECK_THROWS_AS(ControllerSpec::make(bench(ConverterKind::buck), 0.0, 0.8), invalid_gain);
  CHECK_THROWS_AS(ControllerSpec::make(bench(ConverterKind::buck), -0.1, 0.8), invalid_gain);
  CHECK_THROWS_AS(ControllerSpec::make(bench(ConverterKind::buck_boost), 1.0, 1.25), invalid_gain);
  CHECK_THROWS_AS(ControllerSpec::make(bench(ConverterKind::boost), 2.0, 1.25), invalid_gain);
  CHECK_NOTHROW(ControllerSpec::unchecked(bench(ConverterKind::buck_boost), 0.5, 1.25));
  CHECK_THROWS_AS(ControllerSpec::unchecked(bench(ConverterKind::buck_boost), 0.5, 0.1), reference_below_cpl_floor);
}

TEST_CASE("saturated control stays in [duty_min, 1]", "[control]") {
  const auto spec = ControllerSpec::make(bench(ConverterKind::buck), 0.1, 20.0 / 24.0);
  const auto hi = control_law(spec, 1.3);
  CHECK(hi.raw > 1.0);
  CHECK(hi.saturated == 1.0);
  const auto mid = control_law(spec, 0.8);
  CHECK(mid.raw == mid.saturated);
}

TEST_CASE("closed-form law derivative matches finite differences", "[control][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x2(0.5, 2.0);
  const ControllerSpec specs[] = {ControllerSpec::make(bench(ConverterKind::buck), 0.1, 0.8),
                                  ControllerSpec::make(bench(ConverterKind::boost), 3.0, 1.25),
                                  ControllerSpec::make(bench(ConverterKind::buck_boost), 1.6523, 1.25)};
  for (const auto& spec : specs) {
    for (int i = 0; i < 200; ++i) {
      const double v = x2(rng);
      const double h = 1e-6;
      const double fd = (spec.law(v + h) - spec.law(v - h)) / (2 * h);
      CHECK_THAT(spec.law_derivative(v), WithinAbs(fd, 1e-7));
    }
  }
}

TEST_CASE("design laws solve the matching ODE", "[control][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x2(0.4, 2.5);
  for (auto kind : {ConverterKind::buck, ConverterKind::boost, ConverterKind::buck_boost}) {
    const double ref = kind == ConverterKind::buck ? 0.8 : 1.25;
    for (double k : {0.1, 2.2, 3.0, 7.5}) {
      if (kind != ConverterKind::buck && k < min_gain(equilibrium_for(bench(kind), ref))) continue;
      const auto spec = ControllerSpec::make(bench(kind), k, ref);
      for (int i = 0; i < 100; ++i) CHECK(std::abs(matching_ode_residual(spec, x2(rng))) < 1e-13);
    }
  }
}

TEST_CASE("perturbed laws violate the matching ODE", "[control]") {
  SECTION("Buck slope perturbation") {
    const auto spec = ControllerSpec::make(bench(ConverterKind::buck), 0.1, 0.8);
    const double v = 1.0;
    const double r = matching_ode_residual(ConverterKind::buck, 0.1, spec.model(), v, spec.law(v) + 0.05 * (v - 0.8),
                                           spec.law_derivative(v) + 0.05);
    CHECK_THAT(r, WithinAbs(0.05, 1e-14));
  }
  SECTION("Buck-Boost constant offset") {
    const auto spec = ControllerSpec::make(bench(ConverterKind::buck_boost), 1.6523, 1.25);
    const double r = matching_ode_residual(ConverterKind::buck_boost, 1.6523, spec.model(), 1.3, spec.law(1.3) + 0.01,
                                           spec.law_derivative(1.3));
    CHECK(std::abs(r) > 1e-5);
  }
}

TEST_CASE("structure functions and D = Q f", "[control]") {
  SECTION("Buck") {
    const auto spec = ControllerSpec::make(bench(ConverterKind::buck), 0.1, 0.8);
    const StructureFunctions s(spec);
    const State x{0.02, 0.9};
    CHECK(s.alpha1(x, 0.5) == -10.0);
    CHECK(s.alpha2(x, 0.5) == 0.0);
    CHECK(s.beta(x, 0.5) == 1.0);
    const State f = spec.model().dynamics(x, 0.5);
    CHECK_THAT(s.d1(x, 0.5), WithinAbs(-10.0 * f(0) + f(1), 1e-15));
    CHECK_THAT(s.d2(x, 0.5), WithinAbs(-f(0), 1e-15));
  }
  SECTION("Buck-Boost") {
    const auto spec = ControllerSpec::make(bench(ConverterKind::buck_boost), 1.6523, 1.25);
    const StructureFunctions s(spec);
    const State x{0.1, 1.3};
    CHECK(s.alpha1(x, 0.5) == -0.1);
    CHECK_THAT(s.beta(x, 0.5), WithinAbs(-2.3 + 1.6523 / 0.5, 1e-14));
  }
  SECTION("D vanishes at x* and dissipation is non-positive") {
    for (auto kind : {ConverterKind::buck, ConverterKind::boost, ConverterKind::buck_boost}) {
      const auto spec = ControllerSpec::make(bench(kind), kind == ConverterKind::buck ? 0.1 : 3.0,
                                             kind == ConverterKind::buck ? 0.8 : 1.25);
      const ClosedLoopField field(spec);
      CHECK(field.d(spec.equilibrium().state()).cwiseAbs().maxCoeff() < 1e-15);
      for (double a : {0.01, 0.05, 0.1})
        for (double b : {0.6, 1.0, 1.4}) CHECK(field.dissipation({a, b}) <= 0.0);
    }
  }
}
