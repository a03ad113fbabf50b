#include "doctest.h"

#include <cmath>

#include "loadshare/plant.hpp"
#include "test_helpers.hpp"

using namespace loadshare;
using namespace loadshare::plant;
using testutil::rel_err;

namespace {

PlantConfig default_plant() { return testutil::default_station().plant; }

}  // namespace

TEST_CASE("step: setpoint equal to flow is a fixed point") {
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 14.0, 15.0, 16.0;
  const PlantState s0 = make_state(cfg, flows, 0.0);
  const PlantState s1 = step(cfg, s0, flows, 60.0);
  CHECK(s1.flows == flows);
  CHECK(s1.pr == s0.pr);
  CHECK(s1.time == 60.0);
}

TEST_CASE("step: first-order relaxation constants") {
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 10.0, 10.0, 10.0;
  Eigen::VectorXd sp(3);
  sp << 11.0, 11.0, 11.0;

  // One step of exactly tau moves 1 - e^-1 of the gap (oracle value).
  const PlantState s1 = step(cfg, make_state(cfg, flows, 0.0), sp, cfg.tau_loop);
  CHECK(rel_err(s1.flows[0] - 10.0, 0.6321205588285577) < 1e-12);

  // After 5 tau the remaining error is under 1% of the initial error.
  PlantState s = make_state(cfg, flows, 0.0);
  for (int i = 0; i < 5; ++i) s = step(cfg, s, sp, cfg.tau_loop);
  CHECK(std::abs(s.flows[0] - sp[0]) < 0.01 * 1.0);

  // Contraction factor per step is exp(-dt/tau).
  const PlantState a = step(cfg, make_state(cfg, flows, 0.0), sp, 45.0);
  const double expected = 1.0 - std::exp(-45.0 / cfg.tau_loop);
  CHECK(rel_err(a.flows[0] - 10.0, expected) < 1e-12);

  CHECK_THROWS_AS(step(cfg, s, sp, 0.0), DomainError);
}

TEST_CASE("settle: fixed point of step, pressure from the curve") {
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 9.0, 14.0, 19.0;
  Eigen::VectorXd sp(3);
  sp << 15.0, 16.0, 17.0;
  const PlantState settled = settle(cfg, make_state(cfg, flows, 0.0), sp);
  CHECK(settled.flows == sp);
  CHECK(settled.pr == thermo::system_pressure_ratio(cfg.curve, sp.sum()));

  const PlantState again = step(cfg, settled, sp, 60.0);
  CHECK(again.flows == settled.flows);
  CHECK(again.pr == settled.pr);

  // Settle equals step iterated out to 100 tau.
  PlantState iterated = make_state(cfg, flows, 0.0);
  for (int i = 0; i < 100; ++i) iterated = step(cfg, iterated, sp, cfg.tau_loop);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(iterated.flows[i] - settled.flows[i]) < 1e-9);
}

TEST_CASE("measure: zero noise recovers the true efficiency") {
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 13.0, 15.0, 17.0;
  const PlantState s = make_state(cfg, flows, 3600.0);
  NoiseModel noise;
  noise.rel_flow = noise.rel_pr = noise.rel_power = noise.abs_t = 0.0;
  const auto ms = measure(cfg, s, noise);
  REQUIRE(ms.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const double eta = thermo::back_calculate_efficiency(
        ms[i].mdot, ms[i].pr, ms[i].power, ms[i].t_in, cfg.gas);
    const double truth = thermo::true_efficiency(cfg.maps[i], flows[i], s.pr);
    CHECK(rel_err(eta, truth) < 1e-9);
  }
}

TEST_CASE("measure: fixed seed reproduces the stream bit-exactly") {
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 13.0, 15.0, 17.0;
  const PlantState s = make_state(cfg, flows, 7200.0);
  NoiseModel noise;
  noise.seed = 42;
  const auto a = measure(cfg, s, noise);
  const auto b = measure(cfg, s, noise);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].mdot == b[i].mdot);
    CHECK(a[i].pr == b[i].pr);
    CHECK(a[i].power == b[i].power);
    CHECK(a[i].t_in == b[i].t_in);
  }
  // Different time index, different draws.
  PlantState s2 = s;
  s2.time = 7260.0;
  const auto c = measure(cfg, s2, noise);
  CHECK(c[0].mdot != a[0].mdot);
}

TEST_CASE("measure: noise propagates into the efficiency estimate as expected") {
  // Monte-Carlo oracle: with 1% relative power noise only, the
  // back-calculated efficiency has spread eta * 0.01 to first order.
  const PlantConfig cfg = default_plant();
  Eigen::VectorXd flows(3);
  flows << 15.0, 15.0, 15.0;
  PlantState s = make_state(cfg, flows, 0.0);
  NoiseModel noise;
  noise.rel_flow = noise.rel_pr = 0.0;
  noise.abs_t = 0.0;
  noise.rel_power = 0.01;
  noise.seed = 9;

  const double truth = thermo::true_efficiency(cfg.maps[0], 15.0, s.pr);
  double sum = 0.0, sum2 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    s.time = 60.0 * i;
    const auto ms = measure(cfg, s, noise);
    const double eta = thermo::back_calculate_efficiency(
        ms[0].mdot, ms[0].pr, ms[0].power, ms[0].t_in, cfg.gas);
    sum += eta;
    sum2 += eta * eta;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  const double predicted = truth * noise.rel_power;
  CHECK(std::abs(sd - predicted) < 0.15 * predicted);
}
