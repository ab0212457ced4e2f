#include <catch_amalgamated.hpp>

#include "idapbc/experiments.hpp"
#include "idapbc/io.hpp"
#include "idapbc/sim.hpp"

using namespace idapbc;
using Catch::Matchers::WithinAbs;

namespace {

Scenario boost_run(double dt, ControlUpdate mode) {
  Scenario sc;
  sc.id = "boost_halving";
  sc.kind = ConverterKind::boost;
  sc.x0 = {0.0, 1.0};
  sc.k = 3.0;
  sc.references = {{0.0, 1.25}};
  sc.dt = dt;
  sc.T = 20.0;
  sc.control_update = mode;
  return sc;
}

Scenario buck_adaptive() {
  Scenario sc;
  sc.id = "buck_adaptive";
  sc.kind = ConverterKind::buck;
  sc.physical.G = 1.0 / 60.0;
  sc.x0 = {0.015, 1.15};
  sc.k = 0.1;
  sc.references = {{0.0, 20.0 / 24.0}};
  sc.adaptive = AdaptiveSettings{};
  sc.T = 40.0;
  return sc;
}

double halving_ratio(ControlUpdate mode) {
  const State a = run(boost_run(0.02, mode)).final_state();
  const State b = run(boost_run(0.01, mode)).final_state();
  const State c = run(boost_run(0.005, mode)).final_state();
  return (a - b).norm() / (b - c).norm();
}

}  // namespace

TEST_CASE("zero horizon yields the initial state only", "[sim]") {
  auto sc = boost_run(1e-3, ControlUpdate::zoh);
  sc.T = 0.0;
  const auto tr = run(sc);
  REQUIRE(tr.rows.size() == 1);
  CHECK(tr.rows[0].t == 0.0);
  CHECK(tr.rows[0].x() == sc.x0);
}

TEST_CASE("RK4 order under step halving", "[sim]") {
  const double continuous = halving_ratio(ControlUpdate::continuous);
  CHECK(continuous >= 12.0);
  CHECK(continuous <= 20.0);
  // A held input is a first-order approximation of the continuous law.
  const double held = halving_ratio(ControlUpdate::zoh);
  CHECK(held > 1.5);
  CHECK(held < 2.5);
}

TEST_CASE("runs are deterministic", "[sim]") {
  auto sc = buck_adaptive();
  sc.T = 5.0;
  sc.noise_sigma = 1e-3;
  sc.seed = 42;
  const auto a = io::trajectory_csv(run(sc));
  CHECK(a == io::trajectory_csv(run(sc)));
  sc.seed = 43;
  CHECK(a != io::trajectory_csv(run(sc)));
}

TEST_CASE("P is non-increasing along a continuous-control run", "[sim]") {
  Scenario sc;
  sc.kind = ConverterKind::buck;
  sc.x0 = {0.02, 1.1};
  sc.k = 0.1;
  sc.references = {{0.0, 20.0 / 24.0}};
  sc.control_update = ControlUpdate::continuous;
  sc.T = 200.0;
  const auto tr = run(sc);
  double worst = -1.0;
  for (std::size_t i = 1; i < tr.rows.size(); ++i) worst = std::max(worst, tr.rows[i].P - tr.rows[i - 1].P);
  CHECK(worst <= 1e-9);
  CHECK(tr.rows.back().P < tr.rows.front().P);
}

TEST_CASE("saturated input stays in range", "[sim]") {
  Scenario sc;
  sc.kind = ConverterKind::buck;
  sc.x0 = {0.02, 1.15};
  sc.k = 0.1;
  sc.references = {{0.0, 20.0 / 24.0}};
  sc.saturate = true;
  sc.T = 2.0;
  const auto tr = run(sc);
  bool clipped = false;
  for (const auto& r : tr.rows) {
    CHECK(r.u_applied >= duty_min);
    CHECK(r.u_applied <= 1.0);
    clipped = clipped || r.u_raw != r.u_applied;
  }
  CHECK(clipped);
}

TEST_CASE("scenario validation", "[sim]") {
  auto sc = boost_run(1e-3, ControlUpdate::zoh);
  SECTION("unsorted schedule") {
    sc.references = {{0.0, 1.25}, {5.0, 1.3}, {2.0, 1.2}};
    CHECK_THROWS_AS(sc.validate(), config_error);
  }
  SECTION("schedule must start at zero") {
    sc.references = {{1.0, 1.25}};
    CHECK_THROWS_AS(sc.validate(), config_error);
  }
  SECTION("reference below the CPL floor at a later event") {
    sc.kind = ConverterKind::buck;
    sc.k = 0.1;
    sc.references = {{0.0, 0.8}, {5.0, 0.2}};
    CHECK_THROWS_AS(sc.validate(), reference_below_cpl_floor);
  }
  SECTION("gain below the bound") {
    sc.k = 1.5;
    CHECK_THROWS_AS(sc.validate(), invalid_gain);
  }
  SECTION("adaptive runs defer the gain check to the estimate") {
    sc.k = 1.5;
    sc.adaptive = AdaptiveSettings{};
    CHECK_NOTHROW(sc.validate());
  }
}

TEST_CASE("voltage floor violations carry the failure time", "[sim]") {
  auto sc = experiment_scenario("buck_refsteps");
  sc.x0 = {0.0, 0.5};
  try {
    run(sc);
    FAIL("expected a floor violation");
  } catch (const voltage_floor_violation& e) {
    REQUIRE(e.time());
    CHECK(*e.time() > 0.0);
    CHECK(*e.time() < sc.T);
  }
}

TEST_CASE("events switch the reference on the grid", "[sim]") {
  auto sc = boost_run(1e-2, ControlUpdate::zoh);
  sc.references = {{0.0, 1.25}, {10.004, 1.3}};
  sc.record_stride = 7;
  const auto tr = run(sc);
  REQUIRE(tr.event_times.size() == 1);
  CHECK_THAT(tr.event_times[0], WithinAbs(10.0, 1e-12));
  const auto& before = row_at_or_before(tr, 10.0);
  CHECK_THAT(before.t, WithinAbs(10.0, 1e-12));
  CHECK(before.x2_ref == 1.25);
  CHECK(tr.rows.back().x2_ref == 1.3);
}

TEST_CASE("load steps re-converge to the reference", "[sim]") {
  const auto tr = run(experiment_scenario("boost_loadsteps"));
  REQUIRE(tr.event_times.size() == 2);
  for (double e : segment_end_errors(tr)) CHECK(e < 1e-3);
  CHECK(tr.rows.back().G == 1.0 / 30.0);
  CHECK(tr.rows.back().P_cpl == 1.8);
}

TEST_CASE("adaptive run reconstructs the load after excitation", "[sim]") {
  const auto tr = run(buck_adaptive());
  REQUIRE(tr.tc);
  const Vector2 theta{0.4, 0.05};
  std::size_t checked = 0;
  for (const auto& r : tr.rows) {
    CHECK((r.F - r.F.transpose()).norm() < 1e-12);
    if (r.t < *tr.tc + 2 * tr.dt) {
      continue;
    }
    REQUIRE(r.theta_fct);
    CHECK((*r.theta_fct - theta).norm() < 1e-6);
    CHECK(r.ie_fired);
    ++checked;
  }
  CHECK(checked > 1000);

  const auto cols = tr.columns();
  CHECK(std::find(cols.begin(), cols.end(), "theta_fct_1") != cols.end());
  CHECK(cols.size() == tr.values(tr.rows.front()).size());
}
