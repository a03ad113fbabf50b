#include "loadshare/adaptation.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace loadshare::adaptation {

Eigen::Matrix<double, Eigen::Dynamic, 2> Dataset::input_matrix() const {
  Eigen::Matrix<double, Eigen::Dynamic, 2> m(points.size(), 2);
  for (size_t i = 0; i < points.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return m;
}

Eigen::VectorXd Dataset::target_vector() const {
  Eigen::VectorXd v(targets.size());
  for (size_t i = 0; i < targets.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = targets[i];
  return v;
}

Eigen::Vector2d admission_scales(const Dataset& dataset,
                                 const AdmissionPolicy& policy) {
  const gp::InputStats stats = gp::InputStats::compute(dataset.input_matrix());
  return {std::max(stats.std[0], policy.scale_floor_mdot),
          std::max(stats.std[1], policy.scale_floor_pr)};
}

double min_standardized_distance(const Dataset& dataset,
                                 const Eigen::Vector2d& candidate,
                                 const AdmissionPolicy& policy) {
  if (dataset.points.empty()) return std::numeric_limits<double>::infinity();
  const Eigen::Vector2d scale = admission_scales(dataset, policy);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : dataset.points)
    best = std::min(best, ((p - candidate).cwiseQuotient(scale)).norm());
  return best;
}

ProcessResult process_measurement(const plant::Measurement& meas,
                                  const surrogate::PolyPrior* prior,
                                  Dataset& dataset, const AdmissionPolicy& policy,
                                  const thermo::GasConditions& gas) {
  ProcessResult res;
  if (!(meas.power > 0.0) || !(meas.mdot > 0.0) || !(meas.pr > 1.0)) {
    res.outcome = AdmitOutcome::InvalidMeasurement;
    return res;
  }
  res.eta_est = thermo::back_calculate_efficiency(meas.mdot, meas.pr, meas.power,
                                                  meas.t_in, gas);
  res.target =
      prior ? res.eta_est - prior->eval(meas.mdot, meas.pr) : res.eta_est;

  if (dataset.size() >= policy.max_points) {
    res.outcome = AdmitOutcome::DatasetFull;
    return res;
  }
  const Eigen::Vector2d candidate(meas.mdot, meas.pr);
  // The distance rule is inclusive: exactly delta_admit away still enters.
  if (min_standardized_distance(dataset, candidate, policy) < policy.delta_admit) {
    res.outcome = AdmitOutcome::TooClose;
    return res;
  }
  dataset.points.push_back(candidate);
  dataset.targets.push_back(res.target);
  dataset.eta_estimates.push_back(res.eta_est);
  dataset.admit_times.push_back(meas.time);
  res.admitted = true;
  res.outcome = AdmitOutcome::Admitted;
  return res;
}

void maybe_refit(AdaptState& state, bool zero_prior_mean,
                 const gp::FitOptions& fit_opts, const RefitSchedule& schedule,
                 const Fitter& fitter) {
  const int k = static_cast<int>(state.dataset.size());
  if (k == 0) return;

  const auto inputs = state.dataset.input_matrix();
  const auto targets = state.dataset.target_vector();
  const double prior_mean = zero_prior_mean ? 0.0 : targets.mean();

  const bool reopt = k <= schedule.opt_every_up_to ||
                     (k - state.last_opt_size) >= schedule.opt_interval_after ||
                     !state.model;
  try {
    gp::GpModel next;
    if (reopt) {
      next = fitter ? fitter(inputs, targets, prior_mean, fit_opts)
                    : gp::fit(inputs, targets, prior_mean, fit_opts);
      state.last_opt_size = k;
    } else {
      next = gp::refit_fixed_kernel(state.model->kernel, inputs, targets,
                                    prior_mean);
    }
    state.model = std::make_shared<const gp::GpModel>(std::move(next));
  } catch (const NumericalError& e) {
    ++state.fit_failures;
    std::cerr << "warning: GP refit failed at k=" << k << " (" << e.what()
              << "); keeping previous model\n";
  }
}

}  // namespace loadshare::adaptation
