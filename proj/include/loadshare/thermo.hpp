#pragma once

#include <Eigen/Core>
#include <utility>

#include "loadshare/common.hpp"

namespace loadshare::thermo {

inline constexpr double kUniversalGasConstant = 8.314;  // J/(mol K)

/// Inlet gas state and polytropic exponent used by the head equation.
struct GasConditions {
  double z_in = 0.95;   // inlet compressibility factor
  double t_in = 293.15; // inlet temperature, K
  double mw = 0.0185;   // molecular weight, kg/mol
  double n_v = 1.27;    // polytropic exponent
  double r = kUniversalGasConstant;

  void validate() const;
};

/// Ground-truth efficiency surface: a tilted elliptical paraboloid whose
/// peak-efficiency flow rises linearly with pressure ratio, clamped below
/// at eta_floor. Hidden from the optimizer; only the plant sees it.
struct TrueMap {
  double peak_eff = 0.87;
  double scale = 1.0;          // per-compressor multiplier
  double ridge_r0 = 8.0;       // kg/s, peak-efficiency flow at pr = 1
  double ridge_r1 = 14.0;      // kg/s per unit of (pr - 1)
  double curvature_flow = 0.0025;  // (kg/s)^-2
  double curvature_pr = 0.4;
  double pr_center = 1.5;
  double eta_floor = 0.35;

  double ridge_flow(double pr) const { return ridge_r0 + ridge_r1 * (pr - 1.0); }
  void validate() const;
};

/// Surge and choke lines, affine in pressure ratio.
struct Envelope {
  double surge_c0 = 4.0;
  double surge_c1 = 8.0;
  double choke_d0 = 24.0;
  double choke_d1 = 10.0;
  double pr_min = 1.1;
  double pr_max = 2.2;

  double surge_flow(double pr) const { return surge_c0 + surge_c1 * (pr - 1.0); }
  double choke_flow(double pr) const { return choke_d0 + choke_d1 * (pr - 1.0); }
  void validate() const;
};

/// Downstream network resistance: pr = pr_base + k_sys * flow^2. Every
/// operating point of the station lies on this curve.
struct SystemCurve {
  double k_sys = 1.8e-4;  // (kg/s)^-2
  double pr_base = 1.05;

  void validate() const;
};

/// Specific polytropic compression work, J/kg. Strictly increasing in pr,
/// zero exactly at pr = 1.
double polytropic_head(double pr, const GasConditions& gas);

/// Shaft power, W: head * mdot / eff.
double power(double mdot, double eff, double head);

/// Evaluates the ground-truth map, clamped to [eta_floor, 1).
double true_efficiency(const TrueMap& map, double mdot, double pr);

/// Gradient (d/dmdot, d/dpr) of true_efficiency; zero where the clamp is
/// active.
Eigen::Vector2d true_efficiency_grad(const TrueMap& map, double mdot, double pr);

/// (surge flow, choke flow) at the given pressure ratio; pr must lie inside
/// the envelope's pr range.
std::pair<double, double> envelope_bounds(const Envelope& env, double pr);

double system_pressure_ratio(const SystemCurve& curve, double station_flow);

/// Efficiency inferred from measured flow, pressure ratio, power and inlet
/// temperature. Inverts the power equation; round-trips exactly on
/// noise-free data.
double back_calculate_efficiency(double meas_mdot, double meas_pr,
                                 double meas_power, double meas_t_in,
                                 const GasConditions& gas);

}  // namespace loadshare::thermo
