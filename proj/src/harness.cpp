#include "loadshare/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "loadshare/io.hpp"

namespace loadshare::harness {

namespace {

constexpr double kSecondsPerDay = 86400.0;
constexpr double kEventTol = 1e-6;  // s, event-to-step alignment slack

// Daily demand shape on the base-to-peak band: overnight low, morning ramp,
// daytime high, evening ramp down. Knots are all distinct from their
// neighbours, as hourly dispatch targets are in practice, so consecutive
// setpoints never repeat exactly and the optimizer re-runs each hour.
constexpr double kDailyShape[24] = {
    0.000, 0.010, 0.005, 0.015, 0.020, 0.030, 0.060, 0.200,
    0.400, 0.600, 0.800, 1.000, 0.970, 0.990, 1.000, 0.985,
    0.995, 0.960, 0.750, 0.500, 0.300, 0.150, 0.050, 0.020};

double shape_fraction(double hour) {
  const double h = hour - 24.0 * std::floor(hour / 24.0);
  const int i = static_cast<int>(h);
  const double frac = h - i;
  const double a = kDailyShape[i % 24];
  const double b = kDailyShape[(i + 1) % 24];
  return a + (b - a) * frac;
}

bool step_settled(const Eigen::VectorXd& flows, const Eigen::VectorXd& setpoints) {
  for (Eigen::Index i = 0; i < flows.size(); ++i) {
    const double tol = 1e-10 * std::max(1.0, std::abs(setpoints[i]));
    if (std::abs(flows[i] - setpoints[i]) > tol) return false;
  }
  return true;
}

}  // namespace

std::string case_name(CaseId id) {
  switch (id) {
    case CaseId::C1: return "C1";
    case CaseId::C2_1: return "C2_1";
    case CaseId::C2_2: return "C2_2";
    case CaseId::C2_3: return "C2_3";
    case CaseId::C3_1: return "C3_1";
    case CaseId::C3_2: return "C3_2";
    case CaseId::C3_3: return "C3_3";
    case CaseId::C4: return "C4";
  }
  return "?";
}

std::optional<CaseId> case_from_name(const std::string& name) {
  for (CaseId id : all_cases())
    if (case_name(id) == name) return id;
  return std::nullopt;
}

std::vector<CaseId> all_cases() {
  return {CaseId::C1, CaseId::C2_1, CaseId::C2_2, CaseId::C2_3,
          CaseId::C3_1, CaseId::C3_2, CaseId::C3_3, CaseId::C4};
}

CaseSpec CaseSpec::for_id(CaseId id, std::uint64_t seed) {
  CaseSpec s;
  s.id = id;
  s.seed = seed;
  switch (id) {
    case CaseId::C1:
      break;  // exact model, no adaptation
    case CaseId::C2_1: s.prior_points = 2; break;
    case CaseId::C2_2: s.prior_points = 5; break;
    case CaseId::C2_3: s.prior_points = 20; break;
    case CaseId::C3_1: s.prior_points = 2; s.uses_gp = true; s.gp_is_residual = true; break;
    case CaseId::C3_2: s.prior_points = 5; s.uses_gp = true; s.gp_is_residual = true; break;
    case CaseId::C3_3: s.prior_points = 20; s.uses_gp = true; s.gp_is_residual = true; break;
    case CaseId::C4: s.uses_gp = true; break;
  }
  return s;
}

TargetProfile build_profile(const ProfileSpec& spec, const StationSetup& station) {
  if (spec.changes_per_day < 1)
    throw ConfigError("profile.changes_per_day", "must be >= 1");
  if (spec.days < 1) throw ConfigError("profile.days", "must be >= 1");
  if (!(spec.base_frac > 0.0 && spec.base_frac <= spec.peak_frac))
    throw ConfigError("profile.base_frac", "need 0 < base_frac <= peak_frac");

  TargetProfile profile;
  profile.horizon = spec.days * kSecondsPerDay;
  const double interval = kSecondsPerDay / spec.changes_per_day;
  for (int d = 0; d < spec.days; ++d) {
    for (int j = 0; j < spec.changes_per_day; ++j) {
      const double t = d * kSecondsPerDay + j * interval;
      const double hour = (j * interval) / 3600.0;
      const double frac =
          spec.base_frac + (spec.peak_frac - spec.base_frac) * shape_fraction(hour);
      profile.schedule.emplace_back(t, station.capacity * frac);
    }
  }

  std::string offending;
  for (const auto& [t, target] : profile.schedule) {
    const double pr = thermo::system_pressure_ratio(station.plant.curve, target);
    double surge_sum = 0.0, choke_sum = 0.0;
    bool pr_ok = true;
    for (const auto& env : station.envelopes) {
      if (pr < env.pr_min || pr > env.pr_max) pr_ok = false;
      surge_sum += env.surge_flow(pr);
      choke_sum += env.choke_flow(pr);
    }
    if (!pr_ok || target < surge_sum || target > choke_sum) {
      offending += (offending.empty() ? "" : ", ") + std::string("t=") +
                   io::format_double(t) + " target=" + io::format_double(target);
    }
  }
  if (!offending.empty())
    throw ConfigError("profile", "infeasible targets: " + offending);
  return profile;
}

adaptation::AdmissionPolicy derive_admission(const adaptation::AdmissionPolicy& base,
                                             const StationSetup& station) {
  adaptation::AdmissionPolicy policy = base;
  if (policy.scale_floor_mdot > 0.0 && policy.scale_floor_pr > 0.0) return policy;
  double flow_lo = std::numeric_limits<double>::infinity();
  double flow_hi = -flow_lo;
  double pr_lo = flow_lo, pr_hi = -flow_lo;
  for (const auto& env : station.envelopes) {
    flow_lo = std::min(flow_lo, env.surge_flow(env.pr_min));
    flow_hi = std::max(flow_hi, env.choke_flow(env.pr_max));
    pr_lo = std::min(pr_lo, env.pr_min);
    pr_hi = std::max(pr_hi, env.pr_max);
  }
  if (policy.scale_floor_mdot <= 0.0)
    policy.scale_floor_mdot = 0.25 * (flow_hi - flow_lo);
  if (policy.scale_floor_pr <= 0.0)
    policy.scale_floor_pr = 0.25 * (pr_hi - pr_lo);
  return policy;
}

std::vector<surrogate::MapSample> prior_samples(const StationSetup& station,
                                                int compressor, int count,
                                                const ProfileSpec& profile) {
  const int n_c = static_cast<int>(station.plant.maps.size());
  const double lo = station.capacity * profile.base_frac;
  const double hi = station.capacity * profile.peak_frac;
  // Station flows sweep the profile range low to high; the pressure ratio
  // follows the resistance curve. The first two samples sit at off-equal
  // splits spanning the lower half of the range, the next few on the equal
  // split, and the rest cycle through moderate splits: two-point fits tilt
  // the way sparse plant records do, while twenty-point fits see both
  // coordinates well.
  constexpr double kSplits[3] = {0.85, 1.15, 1.0};
  auto flow_at = [&](int i) {
    return count > 1 ? lo + (hi - lo) * i / (count - 1) : lo;
  };
  std::vector<surrogate::MapSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    double station_flow = flow_at(i);
    double split = i < 6 ? 1.0 : kSplits[i % 3];
    if (i == 0) split = 0.8;
    if (i == 1) {
      split = 1.2;
      station_flow = flow_at(std::min(count - 1, 9));
    }
    surrogate::MapSample s;
    s.mdot = split * station_flow / n_c;
    s.pr = thermo::system_pressure_ratio(station.plant.curve, station_flow);
    s.eta = thermo::true_efficiency(station.plant.maps[compressor], s.mdot, s.pr);
    out.push_back(s);
  }
  return out;
}

std::vector<surrogate::PolyPrior> build_priors(const BatchOptions& opts,
                                               int n_points) {
  const std::uint64_t prior_seed =
      opts.prior_seed ? opts.prior_seed : rng::mix({opts.master_seed, 0x7072696full});
  std::vector<surrogate::PolyPrior> priors;
  const int n_c = static_cast<int>(opts.station.plant.maps.size());
  for (int c = 0; c < n_c; ++c) {
    const auto samples =
        prior_samples(opts.station, c, opts.prior_sample_count, opts.profile);
    priors.push_back(surrogate::fit_poly_prior(
        samples, n_points, opts.shift_magnitude,
        rng::mix({prior_seed, static_cast<std::uint64_t>(n_points),
                  static_cast<std::uint64_t>(c)})));
  }
  return priors;
}

namespace {

std::vector<surrogate::MapModel> current_models(
    const CaseSpec& spec, const BatchOptions& opts,
    const std::vector<surrogate::PolyPrior>* priors,
    const std::vector<adaptation::AdaptState>& adapt) {
  const int n_c = static_cast<int>(opts.station.plant.maps.size());
  std::vector<surrogate::MapModel> models;
  models.reserve(n_c);
  for (int i = 0; i < n_c; ++i) {
    if (spec.id == CaseId::C1) {
      models.emplace_back(surrogate::ExactModel{opts.station.plant.maps[i]});
    } else if (!spec.uses_gp) {
      models.emplace_back(surrogate::PolyOnlyModel{(*priors)[i]});
    } else if (spec.gp_is_residual) {
      models.emplace_back(surrogate::ResidualModel{(*priors)[i], adapt[i].model});
    } else {
      models.emplace_back(
          surrogate::DirectGpModel{adapt[i].model, opts.direct_gp_fallback});
    }
  }
  return models;
}

}  // namespace

CaseRun run_case(const CaseSpec& spec, const TargetProfile& profile,
                 const BatchOptions& opts,
                 const std::vector<surrogate::PolyPrior>* priors) {
  const int n_c = static_cast<int>(opts.station.plant.maps.size());
  if (spec.prior_points > 0 && priors == nullptr)
    throw ConfigError("case", "case requires priors but none were supplied");
  if (profile.schedule.empty() || profile.schedule.front().first > kEventTol)
    throw ConfigError("profile", "schedule must start at t = 0");

  const std::uint64_t opt_seed =
      opts.optimizer_seed ? opts.optimizer_seed
                          : rng::mix({opts.master_seed, 0x6f707469ull});

  CaseRun run;
  run.id = spec.id;
  run.gp_size_timeline.assign(n_c, {});
  const adaptation::AdmissionPolicy admission =
      derive_admission(opts.admission, opts.station);
  // A zero noise seed means "derive from the master seed". The stream stays
  // common to every case of the batch either way.
  plant::NoiseModel noise = opts.noise;
  if (noise.seed == 0)
    noise.seed = rng::mix({opts.master_seed, 0x6e6f697365ull});

  std::vector<adaptation::AdaptState> adapt(n_c);
  gp::FitOptions fit_opts = opts.gp_fit;
  if (spec.gp_is_residual && opts.residual_flow_lengthscale > 0.0)
    fit_opts.fixed_len_mdot = opts.residual_flow_lengthscale;

  // Sampling instants for the adaptation block: one shortly after each
  // setpoint change settles, then periodically during the hold.
  std::vector<double> sample_times;
  if (spec.uses_gp) {
    for (size_t c = 0; c < profile.schedule.size(); ++c) {
      const double t0 = profile.schedule[c].first;
      const double t1 = c + 1 < profile.schedule.size()
                            ? profile.schedule[c + 1].first
                            : profile.horizon;
      for (double ts = t0 + opts.sim.settle_delay; ts < t1 - kEventTol;
           ts += opts.sim.hold_sample_period)
        sample_times.push_back(ts);
    }
  }
  size_t next_sample = 0;
  size_t next_change = 0;

  plant::PlantState state;
  Eigen::VectorXd setpoints = Eigen::VectorXd::Zero(n_c);
  std::vector<surrogate::MapModel> solved_models;
  double predicted_power = 0.0;
  bool first_change = true;

  const long n_steps = std::lround(profile.horizon / opts.sim.dt);
  for (long s = 0; s <= n_steps; ++s) {
    const double time = s * opts.sim.dt;

    while (next_change < profile.schedule.size() &&
           profile.schedule[next_change].first <= time + kEventTol) {
      const double target = profile.schedule[next_change].second;
      // Optimization runs only when the station reference actually moves;
      // a repeated hourly value keeps the previous setpoints.
      if (!first_change && target == profile.schedule[next_change - 1].second) {
        ++next_change;
        continue;
      }
      auto models = current_models(spec, opts, priors, adapt);
      if (static_cast<int>(next_change) % std::max(1, opts.snapshot_every_changes) == 0)
        run.model_snapshots.emplace_back(static_cast<int>(next_change), models);

      optimizer::LsoProblem problem = optimizer::build_problem(
          target, opts.station.plant.curve, opts.station.plant.gas,
          opts.station.envelopes, models);
      const optimizer::LsoSolution sol = optimizer::solve(
          problem, rng::mix({opt_seed, static_cast<std::uint64_t>(next_change)}),
          opts.solver);
      if (sol.status == optimizer::SolveStatus::Infeasible)
        throw InfeasibleTarget("case " + case_name(spec.id) +
                               ": infeasible solve at t=" + io::format_double(time));

      SolveDiag diag;
      diag.time = time;
      diag.target = target;
      diag.starts_used = sol.starts_used;
      diag.iterations = sol.iterations;
      diag.kkt_residual = sol.kkt_residual;
      diag.status = static_cast<int>(sol.status);
      diag.clamped_model_seen = sol.clamped_model_seen;
      diag.predicted_power = sol.predicted_power;
      run.solves.push_back(diag);

      setpoints = sol.flows;
      predicted_power = sol.predicted_power;
      solved_models = std::move(models);
      if (first_change) {
        state = plant::settle(opts.station.plant,
                              plant::make_state(opts.station.plant, setpoints, 0.0),
                              setpoints);
        first_change = false;
      }
      ++next_change;
    }

    while (next_sample < sample_times.size() &&
           sample_times[next_sample] <= time + kEventTol) {
      plant::PlantState settled = plant::settle(opts.station.plant, state, setpoints);
      settled.time = sample_times[next_sample];
      const auto measurements =
          plant::measure(opts.station.plant, settled, noise);
      for (int c = 0; c < n_c; ++c) {
        const surrogate::PolyPrior* prior =
            spec.gp_is_residual ? &(*priors)[c] : nullptr;
        const adaptation::ProcessResult pr_res = adaptation::process_measurement(
            measurements[c], prior, adapt[c].dataset, admission,
            opts.station.plant.gas);
        SampleLog log;
        log.time = settled.time;
        log.compressor = c;
        log.mdot = measurements[c].mdot;
        log.pr = measurements[c].pr;
        log.eta_est = pr_res.eta_est;
        log.target = pr_res.target;
        log.admitted = pr_res.admitted;
        log.outcome = static_cast<int>(pr_res.outcome);
        run.samples.push_back(log);
        if (pr_res.admitted) {
          fit_opts.seed = rng::mix({opts.gp_fit.seed, opts.master_seed,
                                    static_cast<std::uint64_t>(c)});
          adaptation::maybe_refit(adapt[c], spec.gp_is_residual, fit_opts,
                                  opts.refit);
          run.gp_size_timeline[c].emplace_back(
              settled.time, static_cast<int>(adapt[c].dataset.size()));
        }
      }
      ++next_sample;
    }

    StepRecord rec;
    rec.time = time;
    rec.target = profile.schedule[next_change - 1].second;
    rec.pr = state.pr;
    rec.plant_power = plant::station_power(opts.station.plant, state);
    rec.predicted_power = predicted_power;
    rec.settled = step_settled(state.flows, setpoints);
    for (int c = 0; c < n_c; ++c) {
      const double m = state.flows[c];
      rec.flows.push_back(m);
      rec.eta_true.push_back(
          thermo::true_efficiency(opts.station.plant.maps[c], m, state.pr));
      rec.eta_model.push_back(
          surrogate::model_efficiency(solved_models[c], m, state.pr));
    }
    run.steps.push_back(std::move(rec));

    if (s < n_steps)
      state = plant::step(opts.station.plant, state, setpoints, opts.sim.dt);
  }

  double energy = 0.0;
  for (size_t i = 0; i + 1 < run.steps.size(); ++i)
    energy += 0.5 * (run.steps[i].plant_power + run.steps[i + 1].plant_power) *
              opts.sim.dt;
  run.cumulative_energy = energy;

  run.final_models = current_models(spec, opts, priors, adapt);
  for (int c = 0; c < n_c; ++c) {
    run.datasets.push_back(adapt[c].dataset);
    run.gp_fit_failures += adapt[c].fit_failures;
  }
  return run;
}

std::vector<CaseRun> run_all(const BatchOptions& opts, int n_threads) {
  const TargetProfile profile = build_profile(opts.profile, opts.station);

  std::vector<std::vector<surrogate::PolyPrior>> priors_by_points(21);
  std::vector<const std::vector<surrogate::PolyPrior>*> case_priors;
  std::vector<CaseSpec> specs;
  for (size_t i = 0; i < opts.cases.size(); ++i) {
    CaseSpec spec = CaseSpec::for_id(
        opts.cases[i], rng::mix({opts.master_seed, static_cast<std::uint64_t>(i)}));
    specs.push_back(spec);
  }
  case_priors.resize(specs.size(), nullptr);
  for (size_t i = 0; i < specs.size(); ++i) {
    const int np = specs[i].prior_points;
    if (np > 0) {
      if (priors_by_points[np].empty())
        priors_by_points[np] = build_priors(opts, np);
      case_priors[i] = &priors_by_points[np];
    }
  }

  std::vector<CaseRun> runs(specs.size());
  if (n_threads <= 1 || specs.size() <= 1) {
    for (size_t i = 0; i < specs.size(); ++i)
      runs[i] = run_case(specs[i], profile, opts, case_priors[i]);
    return runs;
  }

  std::vector<std::thread> pool;
  std::atomic<size_t> cursor{0};
  const int workers = std::min<int>(n_threads, static_cast<int>(specs.size()));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = cursor.fetch_add(1);
        if (i >= specs.size()) break;
        runs[i] = run_case(specs[i], profile, opts, case_priors[i]);
      }
    });
  }
  for (auto& t : pool) t.join();
  return runs;
}

double day_mean_excess(const CaseRun& run, const CaseRun& baseline, int day) {
  const double t0 = day * kSecondsPerDay;
  const double t1 = (day + 1) * kSecondsPerDay;
  double acc = 0.0;
  long count = 0;
  const size_t n = std::min(run.steps.size(), baseline.steps.size());
  for (size_t i = 0; i < n; ++i) {
    const StepRecord& a = run.steps[i];
    const StepRecord& b = baseline.steps[i];
    if (a.time < t0 || a.time >= t1) continue;
    if (!a.settled || !b.settled) continue;
    if (!(b.plant_power > 0.0)) continue;
    acc += (a.plant_power - b.plant_power) / b.plant_power;
    ++count;
  }
  return count ? acc / count : 0.0;
}

double visited_rmse(const CaseRun& run, const StationSetup& station,
                    const std::vector<surrogate::MapModel>& models) {
  double acc = 0.0;
  long count = 0;
  for (const auto& rec : run.steps) {
    if (!rec.settled) continue;
    for (size_t c = 0; c < models.size(); ++c) {
      const double m = rec.flows[c];
      const double truth =
          thermo::true_efficiency(station.plant.maps[c], m, rec.pr);
      const double model = surrogate::model_efficiency(models[c], m, rec.pr);
      acc += (model - truth) * (model - truth);
      ++count;
    }
  }
  return count ? std::sqrt(acc / count) : 0.0;
}

}  // namespace loadshare::harness
