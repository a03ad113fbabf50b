#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "loadshare/gp.hpp"
#include "loadshare/plant.hpp"
#include "loadshare/surrogate.hpp"

namespace loadshare::adaptation {

/// New data enters the GP dataset only if it clears this Euclidean distance
/// from every admitted point, measured in standardized input space. The
/// standardization is the running per-axis std of the dataset, floored by
/// station-scale spreads: without the floor, the unit-std cold start admits
/// clusters that fall below the threshold once the visited range widens.
struct AdmissionPolicy {
  double delta_admit = 0.05;
  std::size_t max_points = 150;
  double scale_floor_mdot = 0.0;  // kg/s; 0 = no floor
  double scale_floor_pr = 0.0;
};

/// Per-compressor training set. Targets are residuals against the prior
/// when one exists, raw efficiency estimates otherwise. Append-only.
struct Dataset {
  std::vector<Eigen::Vector2d> points;  // raw (mdot, pr)
  std::vector<double> targets;
  std::vector<double> eta_estimates;    // back-calculated efficiencies
  std::vector<double> admit_times;

  std::size_t size() const { return points.size(); }
  Eigen::Matrix<double, Eigen::Dynamic, 2> input_matrix() const;
  Eigen::VectorXd target_vector() const;
};

enum class AdmitOutcome {
  Admitted,
  TooClose,          // within delta_admit of an existing point
  DatasetFull,
  InvalidMeasurement // non-positive power/flow or pr <= 1
};

struct ProcessResult {
  bool admitted = false;
  AdmitOutcome outcome = AdmitOutcome::InvalidMeasurement;
  double eta_est = 0.0;
  double target = 0.0;
};

/// Per-axis scales used for the admission distance under the given policy.
Eigen::Vector2d admission_scales(const Dataset& dataset,
                                 const AdmissionPolicy& policy);

/// Minimum standardized distance from candidate to the dataset under the
/// policy's scales.
double min_standardized_distance(const Dataset& dataset,
                                 const Eigen::Vector2d& candidate,
                                 const AdmissionPolicy& policy);

/// Back-calculates the plant efficiency from a measurement, subtracts the
/// prior when present, and applies the distance-based admission rule.
/// Invalid measurements are rejected with a reason, not an exception.
ProcessResult process_measurement(const plant::Measurement& meas,
                                  const surrogate::PolyPrior* prior,
                                  Dataset& dataset, const AdmissionPolicy& policy,
                                  const thermo::GasConditions& gas);

/// Hyperparameters are re-optimized on every admission while the dataset is
/// small, then every few admissions; the factorization is refreshed every
/// time.
struct RefitSchedule {
  int opt_every_up_to = 30;
  int opt_interval_after = 5;
};

using Fitter = std::function<gp::GpModel(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>&, const Eigen::VectorXd&,
    double, const gp::FitOptions&)>;

struct AdaptState {
  Dataset dataset;
  std::shared_ptr<const gp::GpModel> model;
  int last_opt_size = 0;
  int fit_failures = 0;
};

/// Refits the GP after an admission per the schedule. A fit failure keeps
/// the previous model and counts the failure; the run continues.
/// zero_prior_mean selects the residual convention (prior mean 0) versus
/// the direct convention (prior mean = sample mean of the targets).
void maybe_refit(AdaptState& state, bool zero_prior_mean,
                 const gp::FitOptions& fit_opts, const RefitSchedule& schedule,
                 const Fitter& fitter = {});

}  // namespace loadshare::adaptation
