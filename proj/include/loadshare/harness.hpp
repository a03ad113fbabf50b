#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loadshare/adaptation.hpp"
#include "loadshare/optimizer.hpp"
#include "loadshare/plant.hpp"
#include "loadshare/surrogate.hpp"

namespace loadshare::harness {

enum class CaseId { C1, C2_1, C2_2, C2_3, C3_1, C3_2, C3_3, C4 };

std::string case_name(CaseId id);
std::optional<CaseId> case_from_name(const std::string& name);
std::vector<CaseId> all_cases();

/// One scenario: which efficiency model the optimizer sees and whether a GP
/// adapts it online.
struct CaseSpec {
  CaseId id = CaseId::C1;
  int prior_points = 0;       // 0 = no polynomial prior
  bool uses_gp = false;
  bool gp_is_residual = false;
  std::uint64_t seed = 0;

  static CaseSpec for_id(CaseId id, std::uint64_t seed);
};

struct TargetProfile {
  std::vector<std::pair<double, double>> schedule;  // (start time s, target kg/s)
  double horizon = 259200.0;                        // 3 days
};

struct StationSetup {
  plant::PlantConfig plant;  // system curve, true maps, gas, loop lag
  std::vector<thermo::Envelope> envelopes;
  double capacity = 60.0;    // kg/s, peak station flow
};

struct ProfileSpec {
  double base_frac = 0.6;
  double peak_frac = 1.0;
  int changes_per_day = 24;
  int days = 3;
};

struct SimOptions {
  double dt = 60.0;                  // s, plant integration step
  double settle_delay = 300.0;       // s after a setpoint change until sampling
  double hold_sample_period = 1800.0;  // s between samples during a hold
};

/// Daily ramp-hold-ramp shape evaluated on an hourly grid, repeated over
/// the configured days. Every target is checked against the station
/// envelope at its system-curve pressure ratio.
TargetProfile build_profile(const ProfileSpec& spec, const StationSetup& station);

/// Fills unset admission scale floors with a quarter of the station's
/// envelope spread per axis. Keeps admitted points separated under any
/// standardization the datasets can reach.
adaptation::AdmissionPolicy derive_admission(const adaptation::AdmissionPolicy& base,
                                             const StationSetup& station);

struct StepRecord {
  double time = 0.0;
  double target = 0.0;
  std::vector<double> flows;
  double pr = 1.0;
  std::vector<double> eta_true;
  std::vector<double> eta_model;
  double plant_power = 0.0;
  double predicted_power = 0.0;
  bool settled = false;
};

struct SolveDiag {
  double time = 0.0;
  double target = 0.0;
  int starts_used = 0;
  long iterations = 0;
  double kkt_residual = 0.0;
  int status = 0;  // SolveStatus as int
  bool clamped_model_seen = false;
  double predicted_power = 0.0;
};

struct SampleLog {
  double time = 0.0;
  int compressor = 0;
  double mdot = 0.0;
  double pr = 1.0;
  double eta_est = 0.0;
  double target = 0.0;
  bool admitted = false;
  int outcome = 0;  // AdmitOutcome as int
};

struct CaseRun {
  CaseId id = CaseId::C1;
  std::vector<StepRecord> steps;
  double cumulative_energy = 0.0;  // J, trapezoidal over plant power
  std::vector<SolveDiag> solves;
  std::vector<SampleLog> samples;
  std::vector<adaptation::Dataset> datasets;            // final, per compressor
  std::vector<surrogate::MapModel> final_models;        // per compressor
  std::vector<std::pair<int, std::vector<surrogate::MapModel>>> model_snapshots;
  std::vector<std::vector<std::pair<double, int>>> gp_size_timeline;
  int gp_fit_failures = 0;
};

struct BatchOptions {
  StationSetup station;
  ProfileSpec profile;
  plant::NoiseModel noise;
  adaptation::AdmissionPolicy admission;
  adaptation::RefitSchedule refit;
  gp::FitOptions gp_fit;
  optimizer::SolveOptions solver;
  SimOptions sim;
  std::vector<CaseId> cases = all_cases();
  std::uint64_t master_seed = 2024;
  std::uint64_t prior_seed = 0;      // 0 = derive from master
  std::uint64_t optimizer_seed = 0;  // 0 = derive from master
  double shift_magnitude = 0.05;
  int prior_sample_count = 20;
  double direct_gp_fallback = 0.7;
  int snapshot_every_changes = 24;
  // Residual GPs correct the prior's profile along the resistance curve;
  // their flow lengthscale is pinned long so the collinear operating data
  // cannot fabricate flow slopes the prior already carries.
  double residual_flow_lengthscale = 1000.0;  // standardized units
};

/// Noise-free samples of a compressor's true map taken at equal-split flows
/// along the system resistance curve, low load to high. Polynomial priors
/// are fitted on the first n of these.
std::vector<surrogate::MapSample> prior_samples(const StationSetup& station,
                                                int compressor, int count,
                                                const ProfileSpec& profile);

/// Priors for a given point count, one per compressor. Cases sharing a
/// point count share these exact polynomials (including the random shift).
std::vector<surrogate::PolyPrior> build_priors(const BatchOptions& opts,
                                               int n_points);

CaseRun run_case(const CaseSpec& spec, const TargetProfile& profile,
                 const BatchOptions& opts,
                 const std::vector<surrogate::PolyPrior>* priors);

/// Runs every enabled case against the shared profile, true maps and noise
/// streams. n_threads > 1 runs cases concurrently; results are returned in
/// the configured case order either way.
std::vector<CaseRun> run_all(const BatchOptions& opts, int n_threads = 1);

// Analysis helpers used by the verification suites and the summary writer.

/// Mean relative plant-power excess of `run` over `baseline` across the
/// settled steps of one simulated day (0-based).
double day_mean_excess(const CaseRun& run, const CaseRun& baseline, int day);

/// RMSE of a model set against the true maps over a run's settled
/// operating points.
double visited_rmse(const CaseRun& run, const StationSetup& station,
                    const std::vector<surrogate::MapModel>& models);

}  // namespace loadshare::harness
