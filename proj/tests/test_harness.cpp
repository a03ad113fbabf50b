#include "doctest.h"

#include <cmath>
#include <set>

#include "loadshare/harness.hpp"
#include "test_helpers.hpp"

using namespace loadshare;
using namespace loadshare::harness;
using testutil::rel_err;

namespace {

// A shortened batch keeps the loop structure intact while staying fast:
// one day, six target changes, coarser sampling.
BatchOptions short_batch() {
  BatchOptions opts = testutil::default_batch();
  opts.profile.days = 1;
  opts.profile.changes_per_day = 6;
  opts.gp_fit.restarts = 2;
  opts.gp_fit.max_iter = 60;
  opts.solver.lhs_starts = 6;
  opts.snapshot_every_changes = 3;
  return opts;
}

}  // namespace

TEST_CASE("case specs: adaptation wiring per case") {
  const CaseSpec c1 = CaseSpec::for_id(CaseId::C1, 1);
  CHECK_FALSE(c1.uses_gp);
  CHECK(c1.prior_points == 0);
  const CaseSpec c22 = CaseSpec::for_id(CaseId::C2_2, 1);
  CHECK(c22.prior_points == 5);
  CHECK_FALSE(c22.uses_gp);
  const CaseSpec c33 = CaseSpec::for_id(CaseId::C3_3, 1);
  CHECK(c33.prior_points == 20);
  CHECK(c33.uses_gp);
  CHECK(c33.gp_is_residual);
  const CaseSpec c4 = CaseSpec::for_id(CaseId::C4, 1);
  CHECK(c4.prior_points == 0);
  CHECK(c4.uses_gp);
  CHECK_FALSE(c4.gp_is_residual);

  CHECK(case_from_name("C3_2") == CaseId::C3_2);
  CHECK_FALSE(case_from_name("C9").has_value());
}

TEST_CASE("build_profile: shape, bounds, feasibility sweep") {
  const BatchOptions opts = testutil::default_batch();
  const TargetProfile profile = build_profile(opts.profile, opts.station);
  REQUIRE(profile.schedule.size() == 72);
  CHECK(profile.horizon == 259200.0);

  double lo = 1e300, hi = -1e300;
  for (const auto& [t, target] : profile.schedule) {
    lo = std::min(lo, target);
    hi = std::max(hi, target);
  }
  CHECK(lo == doctest::Approx(0.6 * opts.station.capacity).epsilon(1e-12));
  CHECK(hi == doctest::Approx(opts.station.capacity).epsilon(1e-12));

  // Every scheduled target is inside the station's feasible band.
  for (const auto& [t, target] : profile.schedule) {
    const double pr =
        thermo::system_pressure_ratio(opts.station.plant.curve, target);
    double surge_sum = 0.0, choke_sum = 0.0;
    for (const auto& env : opts.station.envelopes) {
      CHECK(pr >= env.pr_min);
      CHECK(pr <= env.pr_max);
      surge_sum += env.surge_flow(pr);
      choke_sum += env.choke_flow(pr);
    }
    CHECK(target >= surge_sum);
    CHECK(target <= choke_sum);
  }

  // Constant profile when base equals peak.
  BatchOptions flat = opts;
  flat.profile.base_frac = flat.profile.peak_frac = 0.8;
  const TargetProfile fp = build_profile(flat.profile, flat.station);
  std::set<double> distinct;
  for (const auto& [t, target] : fp.schedule) distinct.insert(target);
  CHECK(distinct.size() == 1);

  // An infeasible profile names its offenders.
  BatchOptions bad = opts;
  bad.profile.peak_frac = 3.0;
  CHECK_THROWS_AS(build_profile(bad.profile, bad.station), ConfigError);
}

TEST_CASE("priors: shared polynomials across the case families") {
  const BatchOptions opts = testutil::default_batch();
  const auto a = build_priors(opts, 5);
  const auto b = build_priors(opts, 5);
  REQUIRE(a.size() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(a[c].shift == b[c].shift);
    for (int i = 0; i < 6; ++i) CHECK(a[c].alpha[i] == b[c].alpha[i]);
  }
  // Different compressors draw different shifts.
  CHECK(a[0].shift != a[1].shift);
  // Shift honors the configured magnitude.
  for (int c = 0; c < 3; ++c) CHECK(std::abs(a[c].shift) <= opts.shift_magnitude);
}

TEST_CASE("run_case: C1 bookkeeping invariants on a short day") {
  const BatchOptions opts = short_batch();
  const TargetProfile profile = build_profile(opts.profile, opts.station);
  const CaseRun run =
      run_case(CaseSpec::for_id(CaseId::C1, 3), profile, opts, nullptr);

  REQUIRE(!run.steps.empty());
  // One solve per actual target movement, none for repeated values.
  size_t value_changes = 1;
  for (size_t i = 1; i < profile.schedule.size(); ++i)
    if (profile.schedule[i].second != profile.schedule[i - 1].second)
      ++value_changes;
  CHECK(run.solves.size() == value_changes);
  CHECK(run.samples.empty());
  CHECK(run.cumulative_energy > 0.0);

  for (const auto& step : run.steps) {
    // Quasi-static pressure stays tied to the total flow.
    double total = 0.0;
    for (double f : step.flows) total += f;
    CHECK(step.pr == doctest::Approx(thermo::system_pressure_ratio(
                             opts.station.plant.curve, total))
                          .epsilon(1e-12));
    if (step.settled) {
      // Balance at settled steps.
      CHECK(std::abs(total - step.target) <= 1e-6 * step.target);
      // Exact model: prediction equals the plant at settled states.
      CHECK(rel_err(step.predicted_power, step.plant_power) < 1e-9);
      // No envelope violation anywhere.
      for (size_t c = 0; c < opts.station.envelopes.size(); ++c) {
        const auto& env = opts.station.envelopes[c];
        CHECK(step.flows[c] >= env.surge_flow(step.pr) - 1e-9);
        CHECK(step.flows[c] <= env.choke_flow(step.pr) + 1e-9);
      }
    }
  }

  // Energy accumulates over a positive-power staircase.
  double energy = 0.0;
  for (size_t i = 0; i + 1 < run.steps.size(); ++i) {
    energy += 0.5 * (run.steps[i].plant_power + run.steps[i + 1].plant_power) *
              opts.sim.dt;
    CHECK(run.steps[i].plant_power > 0.0);
  }
  CHECK(rel_err(energy, run.cumulative_energy) < 1e-12);
}

TEST_CASE("run_case: GP cases adapt and improve over their prior") {
  BatchOptions opts = short_batch();
  const TargetProfile profile = build_profile(opts.profile, opts.station);
  const auto priors = build_priors(opts, 2);
  const CaseRun run =
      run_case(CaseSpec::for_id(CaseId::C3_1, 3), profile, opts, &priors);

  CHECK(!run.samples.empty());
  int admitted = 0;
  for (const auto& s : run.samples) admitted += s.admitted ? 1 : 0;
  CHECK(admitted > 0);
  for (const auto& ds : run.datasets) {
    CHECK(ds.size() >= 1);
    CHECK(ds.size() <= opts.admission.max_points);
  }

  // The adapted model fits the visited operating points better than the
  // prior alone.
  std::vector<surrogate::MapModel> prior_only;
  for (int c = 0; c < 3; ++c)
    prior_only.emplace_back(surrogate::PolyOnlyModel{priors[c]});
  const double rmse_final = visited_rmse(run, opts.station, run.final_models);
  const double rmse_prior = visited_rmse(run, opts.station, prior_only);
  CHECK(rmse_final < rmse_prior);

  // Snapshots were taken at the configured cadence.
  CHECK(!run.model_snapshots.empty());
  CHECK(run.model_snapshots.front().first == 0);
}

TEST_CASE("run_case: reruns are bit-identical") {
  BatchOptions opts = short_batch();
  const TargetProfile profile = build_profile(opts.profile, opts.station);
  const auto priors = build_priors(opts, 2);
  const CaseSpec spec = CaseSpec::for_id(CaseId::C3_1, 3);
  const CaseRun a = run_case(spec, profile, opts, &priors);
  const CaseRun b = run_case(spec, profile, opts, &priors);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].plant_power == b.steps[i].plant_power);
    for (size_t c = 0; c < a.steps[i].flows.size(); ++c)
      CHECK(a.steps[i].flows[c] == b.steps[i].flows[c]);
  }
  CHECK(a.cumulative_energy == b.cumulative_energy);
}

TEST_CASE("run_all: C1 undercuts the mismatch cases on a short horizon") {
  BatchOptions opts = short_batch();
  opts.cases = {CaseId::C1, CaseId::C2_1, CaseId::C3_1};
  const auto runs = run_all(opts);
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].id == CaseId::C1);

  // Energy ordering: the exact model is the cheapest.
  CHECK(runs[0].cumulative_energy <= runs[1].cumulative_energy);
  CHECK(runs[0].cumulative_energy <= runs[2].cumulative_energy);
  // The residual GP does not lose to its own prior-only twin.
  CHECK(runs[2].cumulative_energy <= runs[1].cumulative_energy * (1 + 1e-9));

  // Parallel execution returns the same runs in the same order.
  const auto par = run_all(opts, 3);
  REQUIRE(par.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(par[i].cumulative_energy == runs[i].cumulative_energy);
    CHECK(par[i].id == runs[i].id);
  }
}
