#include "loadshare/surrogate.hpp"

#include <Eigen/QR>
#include <bit>
#include <cmath>

#include "loadshare/io.hpp"

namespace loadshare::surrogate {

namespace {

EffValue clamp_eff(double raw) {
  if (raw < kEffClampLo) return {kEffClampLo, true};
  if (raw > kEffClampHi) return {kEffClampHi, true};
  return {raw, false};
}

std::uint64_t hash_doubles(std::uint64_t seed, std::initializer_list<double> vals) {
  std::uint64_t s = seed;
  for (double v : vals) {
    s = rng::mix({s, std::bit_cast<std::uint64_t>(v)});
  }
  return s;
}

}  // namespace

PolyPrior fit_poly_prior(const std::vector<MapSample>& samples, int n_points,
                         double shift_magnitude, std::uint64_t seed) {
  if (n_points < 1)
    throw ConfigError("prior.n_points", "need at least one sample");
  if (n_points > static_cast<int>(samples.size()))
    throw ConfigError("prior.n_points", "more points requested than samples given");

  Eigen::MatrixXd a(n_points, 6);
  Eigen::VectorXd b(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double m = samples[i].mdot;
    const double p = samples[i].pr;
    a.row(i) << 1.0, m, p, m * p, m * m, p * p;
    b[i] = samples[i].eta;
  }
  // Complete orthogonal decomposition gives the minimum-norm least-squares
  // solution in the underdetermined case (2 or 5 points vs 6 coefficients).
  const Eigen::VectorXd coef = a.completeOrthogonalDecomposition().solve(b);

  PolyPrior prior;
  for (int i = 0; i < 6; ++i) prior.alpha[i] = coef[i];
  if (shift_magnitude > 0.0) {
    rng::Stream stream(rng::mix({seed, 0x7368696674ull}));
    prior.shift = stream.uniform(-shift_magnitude, shift_magnitude);
  }
  return prior;
}

EffValue model_efficiency_ex(const MapModel& model, double mdot, double pr) {
  if (!std::isfinite(mdot) || !std::isfinite(pr))
    throw DomainError("model_efficiency: non-finite inputs");
  return std::visit(
      [&](const auto& m) -> EffValue {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExactModel>) {
          // True map already lands in [eta_floor, 1); clamp never bites, so
          // the pass-through stays bit-exact.
          return clamp_eff(thermo::true_efficiency(m.map, mdot, pr));
        } else if constexpr (std::is_same_v<T, PolyOnlyModel>) {
          return clamp_eff(m.prior.eval(mdot, pr));
        } else if constexpr (std::is_same_v<T, ResidualModel>) {
          double v = m.prior.eval(mdot, pr);
          if (m.gp) v += m.gp->predict_mean({mdot, pr});
          return clamp_eff(v);
        } else {
          if (!m.gp) return clamp_eff(m.fallback_eff);
          return clamp_eff(m.gp->predict_mean({mdot, pr}));
        }
      },
      model);
}

double model_efficiency(const MapModel& model, double mdot, double pr) {
  return model_efficiency_ex(model, mdot, pr).eta;
}

Eigen::Vector2d model_efficiency_grad(const MapModel& model, double mdot,
                                      double pr) {
  const EffValue v = model_efficiency_ex(model, mdot, pr);
  if (v.clamped) return Eigen::Vector2d::Zero();
  return std::visit(
      [&](const auto& m) -> Eigen::Vector2d {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExactModel>) {
          return thermo::true_efficiency_grad(m.map, mdot, pr);
        } else if constexpr (std::is_same_v<T, PolyOnlyModel>) {
          return m.prior.grad(mdot, pr);
        } else if constexpr (std::is_same_v<T, ResidualModel>) {
          Eigen::Vector2d g = m.prior.grad(mdot, pr);
          if (m.gp) g += m.gp->predict_mean_grad({mdot, pr});
          return g;
        } else {
          if (!m.gp) return Eigen::Vector2d::Zero();
          return m.gp->predict_mean_grad({mdot, pr});
        }
      },
      model);
}

std::uint64_t fingerprint(const MapModel& model) {
  return std::visit(
      [](const auto& m) -> std::uint64_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExactModel>) {
          return hash_doubles(1, {m.map.peak_eff, m.map.scale, m.map.ridge_r0,
                                  m.map.ridge_r1, m.map.curvature_flow,
                                  m.map.curvature_pr, m.map.pr_center,
                                  m.map.eta_floor});
        } else if constexpr (std::is_same_v<T, PolyOnlyModel>) {
          return hash_doubles(2, {m.prior.alpha[0], m.prior.alpha[1],
                                  m.prior.alpha[2], m.prior.alpha[3],
                                  m.prior.alpha[4], m.prior.alpha[5],
                                  m.prior.shift});
        } else if constexpr (std::is_same_v<T, ResidualModel>) {
          std::uint64_t s =
              hash_doubles(3, {m.prior.alpha[0], m.prior.alpha[1],
                               m.prior.alpha[2], m.prior.alpha[3],
                               m.prior.alpha[4], m.prior.alpha[5],
                               m.prior.shift});
          if (m.gp) {
            s = rng::mix({s, static_cast<std::uint64_t>(m.gp->size())});
            for (Eigen::Index i = 0; i < m.gp->targets.size(); ++i)
              s = hash_doubles(s, {m.gp->inputs_raw(i, 0), m.gp->inputs_raw(i, 1),
                                   m.gp->targets[i]});
            s = hash_doubles(s, {m.gp->kernel.signal_var, m.gp->kernel.len_mdot,
                                 m.gp->kernel.len_pr, m.gp->kernel.noise_var});
          }
          return s;
        } else {
          std::uint64_t s = hash_doubles(4, {m.fallback_eff});
          if (m.gp) {
            s = rng::mix({s, static_cast<std::uint64_t>(m.gp->size())});
            for (Eigen::Index i = 0; i < m.gp->targets.size(); ++i)
              s = hash_doubles(s, {m.gp->inputs_raw(i, 0), m.gp->inputs_raw(i, 1),
                                   m.gp->targets[i]});
            s = hash_doubles(s, {m.gp->kernel.signal_var, m.gp->kernel.len_mdot,
                                 m.gp->kernel.len_pr, m.gp->kernel.noise_var});
          }
          return s;
        }
      },
      model);
}

nlohmann::json model_to_json(const MapModel& model) {
  nlohmann::json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExactModel>) {
          j["variant"] = "exact";
          j["true_map"] = {{"peak_eff", m.map.peak_eff},
                           {"scale", m.map.scale},
                           {"ridge_flow", {m.map.ridge_r0, m.map.ridge_r1}},
                           {"curvature_flow", m.map.curvature_flow},
                           {"curvature_pr", m.map.curvature_pr},
                           {"pr_center", m.map.pr_center},
                           {"eta_floor", m.map.eta_floor}};
        } else if constexpr (std::is_same_v<T, PolyOnlyModel>) {
          j["variant"] = "poly";
          j["prior"] = {{"alpha", m.prior.alpha}, {"shift", m.prior.shift}};
        } else if constexpr (std::is_same_v<T, ResidualModel>) {
          j["variant"] = "residual";
          j["prior"] = {{"alpha", m.prior.alpha}, {"shift", m.prior.shift}};
          if (m.gp) j["gp"] = gp::to_json(*m.gp);
        } else {
          j["variant"] = "direct_gp";
          j["fallback_eff"] = m.fallback_eff;
          if (m.gp) j["gp"] = gp::to_json(*m.gp);
        }
      },
      model);
  return j;
}

MapModel model_from_json(const nlohmann::json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  auto read_prior = [&]() {
    PolyPrior p;
    const auto& a = j.at("prior").at("alpha");
    for (int i = 0; i < 6; ++i) p.alpha[i] = a[i].get<double>();
    p.shift = j.at("prior").at("shift").get<double>();
    return p;
  };
  if (variant == "exact") {
    ExactModel m;
    const auto& t = j.at("true_map");
    m.map.peak_eff = t.at("peak_eff").get<double>();
    m.map.scale = t.at("scale").get<double>();
    m.map.ridge_r0 = t.at("ridge_flow")[0].get<double>();
    m.map.ridge_r1 = t.at("ridge_flow")[1].get<double>();
    m.map.curvature_flow = t.at("curvature_flow").get<double>();
    m.map.curvature_pr = t.at("curvature_pr").get<double>();
    m.map.pr_center = t.at("pr_center").get<double>();
    m.map.eta_floor = t.at("eta_floor").get<double>();
    return m;
  }
  if (variant == "poly") return PolyOnlyModel{read_prior()};
  if (variant == "residual") {
    ResidualModel m;
    m.prior = read_prior();
    if (j.contains("gp"))
      m.gp = std::make_shared<gp::GpModel>(gp::model_from_json(j.at("gp")));
    return m;
  }
  if (variant == "direct_gp") {
    DirectGpModel m;
    m.fallback_eff = j.at("fallback_eff").get<double>();
    if (j.contains("gp"))
      m.gp = std::make_shared<gp::GpModel>(gp::model_from_json(j.at("gp")));
    return m;
  }
  throw ConfigError("model.variant", "unknown variant '" + variant + "'");
}

std::string map_grid_csv(const MapModel& model, const thermo::TrueMap& truth,
                         const PolyPrior* prior, const GridSpec& grid) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<size_t>(grid.n_mdot) * grid.n_pr);
  for (int i = 0; i < grid.n_mdot; ++i) {
    const double m =
        grid.mdot_lo + (grid.mdot_hi - grid.mdot_lo) * i /
                           std::max(1, grid.n_mdot - 1);
    for (int k = 0; k < grid.n_pr; ++k) {
      const double p =
          grid.pr_lo + (grid.pr_hi - grid.pr_lo) * k / std::max(1, grid.n_pr - 1);
      const double eta_true = thermo::true_efficiency(truth, m, p);
      const double eta_model = model_efficiency(model, m, p);
      const double eta_prior = prior ? prior->eval(m, p) : eta_model;
      rows.push_back({io::format_double(m), io::format_double(p),
                      io::format_double(eta_true), io::format_double(eta_model),
                      io::format_double(eta_prior)});
    }
  }
  return io::build_csv({"mdot", "pr", "eta_true", "eta_model", "eta_prior"}, rows);
}

}  // namespace loadshare::surrogate
