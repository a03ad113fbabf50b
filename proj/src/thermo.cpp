#include "loadshare/thermo.hpp"

#include <cmath>

namespace loadshare::thermo {

void GasConditions::validate() const {
  if (!(z_in > 0.0)) throw ConfigError("gas.z_in", "must be > 0");
  if (!(t_in > 0.0)) throw ConfigError("gas.t_in_k", "must be > 0");
  if (!(mw > 0.0)) throw ConfigError("gas.mw_kg_per_mol", "must be > 0");
  if (!(n_v > 1.0)) throw ConfigError("gas.n_v", "must be > 1");
  if (std::abs(r - kUniversalGasConstant) > 1e-3)
    throw ConfigError("gas.r", "universal gas constant is 8.314, not configurable");
}

void TrueMap::validate() const {
  if (!(peak_eff > 0.0 && peak_eff <= 1.0))
    throw ConfigError("true_map.peak_eff", "must be in (0, 1]");
  if (!(scale > 0.0)) throw ConfigError("true_map.scale", "must be > 0");
  if (!(curvature_flow > 0.0))
    throw ConfigError("true_map.curvature_flow", "must be > 0");
  if (!(curvature_pr > 0.0))
    throw ConfigError("true_map.curvature_pr", "must be > 0");
  if (!(eta_floor >= 0.0 && eta_floor < scale * peak_eff))
    throw ConfigError("true_map.eta_floor", "must be in [0, scale*peak_eff)");
}

void Envelope::validate() const {
  if (!(pr_min >= 1.0)) throw ConfigError("envelope.pr_range", "pr_min must be >= 1");
  if (!(pr_max > pr_min))
    throw ConfigError("envelope.pr_range", "pr_max must exceed pr_min");
  // Affine lines: checking the gap at both ends covers the whole range.
  for (double pr : {pr_min, pr_max}) {
    if (!(surge_flow(pr) < choke_flow(pr)))
      throw ConfigError("envelope", "surge line must stay below choke line");
  }
}

void SystemCurve::validate() const {
  if (!(pr_base >= 1.0)) throw ConfigError("system_curve.pr_base", "must be >= 1");
  if (!(k_sys > 0.0)) throw ConfigError("system_curve.k_sys", "must be > 0");
}

double polytropic_head(double pr, const GasConditions& gas) {
  if (!(gas.n_v > 1.0))
    throw ConfigError("gas.n_v", "polytropic exponent must exceed 1");
  if (!(pr >= 1.0)) throw DomainError("polytropic_head: pressure ratio below 1");
  const double e = (gas.n_v - 1.0) / gas.n_v;
  return (gas.z_in * gas.r * gas.t_in / gas.mw) * (gas.n_v / (gas.n_v - 1.0)) *
         (std::pow(pr, e) - 1.0);
}

double power(double mdot, double eff, double head) {
  if (!(eff > 0.0)) throw DomainError("power: efficiency must be positive");
  if (!(mdot >= 0.0)) throw DomainError("power: negative mass flow");
  if (!(head >= 0.0)) throw DomainError("power: negative head");
  return head * mdot / eff;
}

double true_efficiency(const TrueMap& map, double mdot, double pr) {
  const double dm = mdot - map.ridge_flow(pr);
  const double dp = pr - map.pr_center;
  const double raw = map.scale * (map.peak_eff - map.curvature_flow * dm * dm -
                                  map.curvature_pr * dp * dp);
  const double hi = std::nextafter(1.0, 0.0);
  return std::min(hi, std::max(map.eta_floor, raw));
}

Eigen::Vector2d true_efficiency_grad(const TrueMap& map, double mdot, double pr) {
  const double dm = mdot - map.ridge_flow(pr);
  const double dp = pr - map.pr_center;
  const double raw = map.scale * (map.peak_eff - map.curvature_flow * dm * dm -
                                  map.curvature_pr * dp * dp);
  if (raw <= map.eta_floor || raw >= 1.0) return Eigen::Vector2d::Zero();
  Eigen::Vector2d g;
  g[0] = map.scale * (-2.0 * map.curvature_flow * dm);
  g[1] = map.scale * (2.0 * map.curvature_flow * dm * map.ridge_r1 -
                      2.0 * map.curvature_pr * dp);
  return g;
}

std::pair<double, double> envelope_bounds(const Envelope& env, double pr) {
  if (!(pr >= env.pr_min && pr <= env.pr_max))
    throw DomainError("envelope_bounds: pressure ratio outside envelope range");
  return {env.surge_flow(pr), env.choke_flow(pr)};
}

double system_pressure_ratio(const SystemCurve& curve, double station_flow) {
  if (!(station_flow >= 0.0))
    throw DomainError("system_pressure_ratio: negative station flow");
  return curve.pr_base + curve.k_sys * station_flow * station_flow;
}

double back_calculate_efficiency(double meas_mdot, double meas_pr,
                                 double meas_power, double meas_t_in,
                                 const GasConditions& gas) {
  if (!(meas_power > 0.0))
    throw InvalidMeasurement("back_calculate_efficiency: non-positive power");
  if (!(meas_mdot > 0.0))
    throw InvalidMeasurement("back_calculate_efficiency: non-positive flow");
  if (!(meas_pr > 1.0))
    throw InvalidMeasurement("back_calculate_efficiency: pressure ratio <= 1");
  GasConditions g = gas;
  g.t_in = meas_t_in;
  return polytropic_head(meas_pr, g) * meas_mdot / meas_power;
}

}  // namespace loadshare::thermo
