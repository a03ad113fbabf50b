#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "loadshare/gp.hpp"
#include "loadshare/thermo.hpp"

#include "json.hpp"

namespace loadshare::surrogate {

/// Efficiency values leaving any surrogate are clamped to this band so a
/// badly extrapolating model cannot blow up the power quotient.
inline constexpr double kEffClampLo = 0.01;
inline constexpr double kEffClampHi = 1.2;

/// Six-coefficient quadratic efficiency model plus an additive offset:
/// a1 + a2*m + a3*pr + a4*m*pr + a5*m^2 + a6*pr^2 + shift.
struct PolyPrior {
  std::array<double, 6> alpha{};
  double shift = 0.0;

  double eval(double mdot, double pr) const {
    return alpha[0] + alpha[1] * mdot + alpha[2] * pr + alpha[3] * mdot * pr +
           alpha[4] * mdot * mdot + alpha[5] * pr * pr + shift;
  }
  Eigen::Vector2d grad(double mdot, double pr) const {
    return {alpha[1] + alpha[3] * pr + 2.0 * alpha[4] * mdot,
            alpha[2] + alpha[3] * mdot + 2.0 * alpha[5] * pr};
  }
};

struct MapSample {
  double mdot = 0.0;
  double pr = 1.0;
  double eta = 0.0;
};

/// Least-squares fit of the quadratic on the first n_points samples
/// (minimum-norm solution when underdetermined), then a seeded uniform
/// shift in [-shift_magnitude, +shift_magnitude].
PolyPrior fit_poly_prior(const std::vector<MapSample>& samples, int n_points,
                         double shift_magnitude, std::uint64_t seed);

struct ExactModel {
  thermo::TrueMap map;
};
struct PolyOnlyModel {
  PolyPrior prior;
};
struct ResidualModel {
  PolyPrior prior;
  std::shared_ptr<const gp::GpModel> gp;  // null until first admission
};
struct DirectGpModel {
  std::shared_ptr<const gp::GpModel> gp;  // null until first admission
  double fallback_eff = 0.7;
};

using MapModel = std::variant<ExactModel, PolyOnlyModel, ResidualModel, DirectGpModel>;

struct EffValue {
  double eta = 0.0;
  bool clamped = false;
};

EffValue model_efficiency_ex(const MapModel& model, double mdot, double pr);
double model_efficiency(const MapModel& model, double mdot, double pr);

/// Analytic gradient (d/dmdot, d/dpr) of the clamped efficiency; zero where
/// the clamp is active.
Eigen::Vector2d model_efficiency_grad(const MapModel& model, double mdot,
                                      double pr);

/// Stable content hash of a model's parameters. Used to derive solver
/// streams that are invariant under compressor reordering.
std::uint64_t fingerprint(const MapModel& model);

nlohmann::json model_to_json(const MapModel& model);
MapModel model_from_json(const nlohmann::json& j);

struct GridSpec {
  double mdot_lo = 6.0, mdot_hi = 31.0;
  double pr_lo = 1.2, pr_hi = 1.8;
  int n_mdot = 30, n_pr = 30;
};

/// Evaluates model, true map and prior on a grid; rows are
/// (mdot, pr, eta_true, eta_model, eta_prior). Feeds surface plots of the
/// learned map against the plant map.
std::string map_grid_csv(const MapModel& model, const thermo::TrueMap& truth,
                         const PolyPrior* prior, const GridSpec& grid);

}  // namespace loadshare::surrogate
