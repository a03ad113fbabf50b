#include "loadshare/plant.hpp"

#include <bit>
#include <cmath>

namespace loadshare::plant {

PlantState make_state(const PlantConfig& cfg, const Eigen::VectorXd& flows,
                      double time) {
  PlantState s;
  s.flows = flows;
  s.pr = thermo::system_pressure_ratio(cfg.curve, flows.sum());
  s.time = time;
  return s;
}

PlantState step(const PlantConfig& cfg, const PlantState& state,
                const Eigen::VectorXd& setpoints, double dt) {
  if (!(dt > 0.0)) throw DomainError("plant.step: dt must be positive");
  PlantState next;
  const double a = 1.0 - std::exp(-dt / cfg.tau_loop);
  next.flows = state.flows + a * (setpoints - state.flows);
  next.pr = thermo::system_pressure_ratio(cfg.curve, next.flows.sum());
  next.time = state.time + dt;
  return next;
}

PlantState settle(const PlantConfig& cfg, const PlantState& state,
                  const Eigen::VectorXd& setpoints) {
  PlantState next;
  next.flows = setpoints;
  next.pr = thermo::system_pressure_ratio(cfg.curve, setpoints.sum());
  next.time = state.time;
  return next;
}

std::vector<double> compressor_powers(const PlantConfig& cfg,
                                      const PlantState& state) {
  const double head = thermo::polytropic_head(state.pr, cfg.gas);
  std::vector<double> out;
  out.reserve(cfg.maps.size());
  for (size_t i = 0; i < cfg.maps.size(); ++i) {
    const double m = state.flows[static_cast<Eigen::Index>(i)];
    const double eta = thermo::true_efficiency(cfg.maps[i], m, state.pr);
    out.push_back(thermo::power(std::max(0.0, m), eta, head));
  }
  return out;
}

double station_power(const PlantConfig& cfg, const PlantState& state) {
  double total = 0.0;
  for (double p : compressor_powers(cfg, state)) total += p;
  return total;
}

std::vector<Measurement> measure(const PlantConfig& cfg, const PlantState& state,
                                 const NoiseModel& noise) {
  const std::vector<double> powers = compressor_powers(cfg, state);
  std::vector<Measurement> out;
  out.reserve(cfg.maps.size());
  const std::uint64_t time_bits = std::bit_cast<std::uint64_t>(state.time);
  for (size_t i = 0; i < cfg.maps.size(); ++i) {
    rng::Stream stream(rng::mix(
        {noise.seed, static_cast<std::uint64_t>(i), time_bits, 0x6d656173ull}));
    Measurement m;
    m.compressor_id = static_cast<int>(i);
    m.time = state.time;
    const double flow = state.flows[static_cast<Eigen::Index>(i)];
    m.mdot = flow * (1.0 + noise.rel_flow * stream.gaussian());
    m.pr = state.pr * (1.0 + noise.rel_pr * stream.gaussian());
    m.power = powers[i] * (1.0 + noise.rel_power * stream.gaussian());
    m.t_in = cfg.gas.t_in + noise.abs_t * stream.gaussian();
    out.push_back(m);
  }
  return out;
}

}  // namespace loadshare::plant
