#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "loadshare/thermo.hpp"

namespace loadshare::plant {

/// Actual compressor flows plus the quasi-static pressure ratio the system
/// curve imposes on the current total flow.
struct PlantState {
  Eigen::VectorXd flows;
  double pr = 1.0;
  double time = 0.0;  // s
};

struct Measurement {
  double mdot = 0.0;
  double pr = 1.0;
  double power = 0.0;
  double t_in = 0.0;
  int compressor_id = 0;
  double time = 0.0;
};

/// Multiplicative noise on flow/pr/power, additive on temperature. Draws
/// are keyed on (seed, compressor, time, channel) so every case of a batch
/// sees the same disturbance stream.
struct NoiseModel {
  double rel_flow = 0.005;
  double rel_pr = 0.003;
  double rel_power = 0.01;
  double abs_t = 0.5;  // K
  std::uint64_t seed = 0;
};

struct PlantConfig {
  thermo::SystemCurve curve;
  std::vector<thermo::TrueMap> maps;
  thermo::GasConditions gas;
  double tau_loop = 30.0;  // closed-loop flow tracking time constant, s
};

PlantState make_state(const PlantConfig& cfg, const Eigen::VectorXd& flows,
                      double time);

/// First-order relaxation of each flow toward its setpoint over dt, with pr
/// re-read from the system curve at the new total flow.
PlantState step(const PlantConfig& cfg, const PlantState& state,
                const Eigen::VectorXd& setpoints, double dt);

/// Fixed point of step: flows equal setpoints. Used when sampling once
/// steady state is reached.
PlantState settle(const PlantConfig& cfg, const PlantState& state,
                  const Eigen::VectorXd& setpoints);

/// True station power draw at the current state.
double station_power(const PlantConfig& cfg, const PlantState& state);

/// Per-compressor true power at the current state.
std::vector<double> compressor_powers(const PlantConfig& cfg,
                                      const PlantState& state);

/// Noisy sensor readings of flow, pressure ratio, power and inlet
/// temperature for each compressor.
std::vector<Measurement> measure(const PlantConfig& cfg, const PlantState& state,
                                 const NoiseModel& noise);

}  // namespace loadshare::plant
