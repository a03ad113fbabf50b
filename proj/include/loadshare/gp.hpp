#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>

#include "loadshare/common.hpp"

#include "json.hpp"

namespace loadshare::gp {

/// Squared-exponential kernel with one lengthscale per input dimension.
/// Hyperparameters live in log-space during optimization so positivity is
/// structural.
struct Kernel {
  double signal_var = 1.0;   // sigma_f^2
  double len_mdot = 1.0;     // lengthscale, standardized flow axis
  double len_pr = 1.0;       // lengthscale, standardized pressure-ratio axis
  double noise_var = 1e-4;   // sigma_n^2

  void validate() const;
};

double kernel_eval(const Kernel& k, const Eigen::Vector2d& x,
                   const Eigen::Vector2d& y);

/// Per-dimension mean/std of a point set; k = 1 (or a degenerate column)
/// falls back to unit std so standardization stays defined.
struct InputStats {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d std = Eigen::Vector2d::Ones();

  static InputStats compute(const Eigen::Matrix<double, Eigen::Dynamic, 2>& pts);
  Eigen::Vector2d standardize(const Eigen::Vector2d& raw) const {
    return (raw - mean).cwiseQuotient(std);
  }
};

struct FitOptions {
  int restarts = 5;        // multi-start count for the likelihood ascent
  int max_iter = 200;
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
  std::optional<double> fixed_noise_var;  // pin sigma_n^2 instead of fitting it
  // Pin the flow-axis lengthscale instead of fitting it. Operating data
  // lies near the system resistance curve, where flow and pressure ratio
  // are collinear; a free flow lengthscale lets the likelihood move the
  // pressure-ratio trend onto the flow axis and fabricate flow slopes.
  std::optional<double> fixed_len_mdot;
  // box bounds in log-space (standardized units)
  double log_len_lo = -3.0, log_len_hi = 3.0;
  double log_sf2_lo = -6.0, log_sf2_hi = 4.0;
  double log_sn2_lo = -10.0, log_sn2_hi = 0.0;
};

/// Fitted GP. Immutable after construction; predictions are pure.
struct GpModel {
  Eigen::Matrix<double, Eigen::Dynamic, 2> inputs_raw;  // k x 2, raw units
  Eigen::Matrix<double, Eigen::Dynamic, 2> inputs;      // k x 2, standardized
  Eigen::VectorXd targets;                              // raw targets
  double prior_mean = 0.0;
  Kernel kernel;
  InputStats stats;
  Eigen::MatrixXd chol;    // lower-triangular factor of K + (sn^2 + jitter) I
  Eigen::VectorXd alpha;   // (K + (sn^2 + jitter) I)^-1 (targets - prior_mean)
  double jitter = 0.0;     // absolute jitter actually applied

  int size() const { return static_cast<int>(targets.size()); }

  double predict_mean(const Eigen::Vector2d& query_raw) const;
  double predict_var(const Eigen::Vector2d& query_raw) const;
  Eigen::Vector2d predict_mean_grad(const Eigen::Vector2d& query_raw) const;
};

/// Log marginal likelihood and its gradient with respect to the log
/// hyperparameters [log sf2, log l_mdot, log l_pr, log sn2], evaluated on
/// already-standardized inputs and mean-centered targets.
struct LmlResult {
  double value = 0.0;
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
};
LmlResult log_marginal_likelihood(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& inputs_std,
    const Eigen::VectorXd& targets_centered, const Kernel& kernel);

/// Standardizes inputs, centers targets on prior_mean, maximizes the log
/// marginal likelihood from multiple seeded starts, and caches the Cholesky
/// factor and weight vector. Deterministic for a fixed (dataset, options).
GpModel fit(const Eigen::Matrix<double, Eigen::Dynamic, 2>& inputs_raw,
            const Eigen::VectorXd& targets, double prior_mean,
            const FitOptions& opts = {});

/// Rebuilds standardization, factorization and weights for a grown dataset
/// while keeping the kernel hyperparameters fixed.
GpModel refit_fixed_kernel(
    const Kernel& kernel,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& inputs_raw,
    const Eigen::VectorXd& targets, double prior_mean);

nlohmann::json to_json(const GpModel& model);
GpModel model_from_json(const nlohmann::json& j);

}  // namespace loadshare::gp
