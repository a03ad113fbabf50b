#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "loadshare/surrogate.hpp"
#include "loadshare/thermo.hpp"

namespace loadshare::optimizer {

/// One load-sharing instance: the common pressure ratio and head are fixed
/// by the system curve at the station target, so only the flow split
/// remains free.
struct LsoProblem {
  double target = 0.0;  // station mass flow, kg/s
  double pr = 1.0;      // common pressure ratio (shared headers)
  double head = 0.0;    // J/kg at pr
  std::vector<double> lower;  // surge flow per compressor at pr
  std::vector<double> upper;  // choke flow per compressor at pr
  std::vector<surrogate::MapModel> models;

  int n() const { return static_cast<int>(models.size()); }
};

enum class SolveStatus { Converged, MaxIter, Infeasible };

struct LsoSolution {
  Eigen::VectorXd flows;
  double predicted_power = 0.0;  // model-based station power at the solution
  double kkt_residual = 0.0;     // stationarity violation, W
  SolveStatus status = SolveStatus::Infeasible;
  int starts_used = 0;
  long iterations = 0;       // summed over starts
  bool clamped_model_seen = false;
};

struct SolveOptions {
  int lhs_starts = 10;
  int max_iter = 1000;       // per start
  double kkt_tol_rel = 1e-6; // of max(1, |station power|)
};

struct PowerEval {
  double power = 0.0;
  Eigen::VectorXd grad;
  bool clamped = false;  // some model efficiency hit its safety clamp
};

/// Station power (sum of head*m/eta over compressors) and its flow gradient.
PowerEval station_power(const LsoProblem& problem, const Eigen::VectorXd& flows);

/// Euclidean projection onto {l <= x <= u, sum(x) = target}: clip(y - lambda)
/// with lambda found by bisection. Requires sum(l) <= target <= sum(u).
Eigen::VectorXd project_onto_balance_box(const Eigen::VectorXd& y,
                                         const std::vector<double>& lower,
                                         const std::vector<double>& upper,
                                         double target);

/// Multi-start projected gradient descent on the balance polytope. Starts
/// are Latin-hypercube samples plus the projected equal split; coordinate
/// streams are derived from the problem content so reordering compressors
/// permutes the result.
LsoSolution solve(const LsoProblem& problem, std::uint64_t seed,
                  const SolveOptions& opts = {});

/// Fixes pr and head from the system curve at the target and reads the
/// flow bounds off each compressor's envelope. Throws InfeasibleTarget when
/// the resulting pressure ratio leaves any envelope.
LsoProblem build_problem(double target, const thermo::SystemCurve& curve,
                         const thermo::GasConditions& gas,
                         const std::vector<thermo::Envelope>& envelopes,
                         std::vector<surrogate::MapModel> models);

}  // namespace loadshare::optimizer
