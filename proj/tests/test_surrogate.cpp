#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "loadshare/surrogate.hpp"
#include "test_helpers.hpp"

using namespace loadshare;
using namespace loadshare::surrogate;
using testutil::rel_err;

namespace {

std::vector<MapSample> quadratic_samples(int count) {
  // Known quadratic surface: inside the model class, so a 20-point fit must
  // recover it exactly. Samples spread in both coordinates; collinear
  // samples would leave the six coefficients unidentifiable.
  const std::array<double, 6> truth = {0.6, 0.02, -0.15, 0.003, -0.0008, 0.05};
  std::vector<MapSample> out;
  for (int i = 0; i < count; ++i) {
    MapSample s;
    s.mdot = 8.0 + 0.9 * i;
    s.pr = 1.2 + 0.025 * (i % 7) + 0.11 * (i % 3);
    s.eta = truth[0] + truth[1] * s.mdot + truth[2] * s.pr +
            truth[3] * s.mdot * s.pr + truth[4] * s.mdot * s.mdot +
            truth[5] * s.pr * s.pr;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("poly prior: constant, linear + shift, fixed-point oracle") {
  PolyPrior constant;
  constant.alpha = {0.8, 0, 0, 0, 0, 0};
  CHECK(constant.eval(3.7, 1.9) == 0.8);

  PolyPrior linear;
  linear.alpha = {0, 1, 0, 0, 0, 0};
  linear.shift = 0.1;
  CHECK(linear.eval(2.0, 1.4) == doctest::Approx(2.1).epsilon(1e-15));

  // Oracle: exact decimal evaluation of the quadratic at (3, 1.4).
  PolyPrior p;
  p.alpha = {0.1, 0.02, 0.3, -0.01, 0.005, -0.04};
  p.shift = 0.02;
  CHECK(rel_err(p.eval(3.0, 1.4), 0.5246) < 1e-14);
}

TEST_CASE("fit_poly_prior: exact recovery from 20 in-class samples") {
  const auto samples = quadratic_samples(20);
  const PolyPrior fit = fit_poly_prior(samples, 20, 0.0, 123);
  const std::array<double, 6> truth = {0.6, 0.02, -0.15, 0.003, -0.0008, 0.05};
  for (int i = 0; i < 6; ++i)
    CHECK(std::abs(fit.alpha[i] - truth[i]) <
          1e-8 * std::max(1.0, std::abs(truth[i])));
  CHECK(fit.shift == 0.0);
}

TEST_CASE("fit_poly_prior: 2-point fit interpolates, minimum norm") {
  const auto samples = quadratic_samples(20);
  const PolyPrior fit = fit_poly_prior(samples, 2, 0.0, 7);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(fit.eval(samples[i].mdot, samples[i].pr) - samples[i].eta) <
          1e-9);
  }
  // Any interpolating coefficient vector is at least as long as the
  // minimum-norm one; compare against a hand-built interpolant through the
  // same two points.
  const double slope = (samples[1].eta - samples[0].eta) /
                       (samples[1].mdot - samples[0].mdot);
  Eigen::VectorXd other(6);
  other << samples[0].eta - slope * samples[0].mdot, slope, 0, 0, 0, 0;
  Eigen::VectorXd ours(6);
  for (int i = 0; i < 6; ++i) ours[i] = fit.alpha[i];
  CHECK(ours.norm() <= other.norm() + 1e-12);
}

TEST_CASE("fit_poly_prior: seeded shift is reproducible and bounded") {
  const auto samples = quadratic_samples(20);
  const PolyPrior a = fit_poly_prior(samples, 5, 0.05, 99);
  const PolyPrior b = fit_poly_prior(samples, 5, 0.05, 99);
  CHECK(a.shift == b.shift);
  CHECK(std::abs(a.shift) <= 0.05);
  const PolyPrior c = fit_poly_prior(samples, 5, 0.05, 100);
  CHECK(a.shift != c.shift);

  CHECK_THROWS_AS(fit_poly_prior(samples, 0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(fit_poly_prior(samples, 21, 0.0, 1), ConfigError);
}

TEST_CASE("model_efficiency: exact variant is a bit-exact pass-through") {
  thermo::TrueMap map;
  map.scale = 0.96;
  const MapModel model = ExactModel{map};
  rng::Stream stream(3);
  for (int i = 0; i < 50; ++i) {
    const double m = stream.uniform(5.0, 30.0);
    const double pr = stream.uniform(1.15, 2.0);
    CHECK(model_efficiency(model, m, pr) == thermo::true_efficiency(map, m, pr));
  }
  CHECK_THROWS_AS(model_efficiency(model, std::nan(""), 1.5), DomainError);
}

TEST_CASE("model_efficiency: residual with empty GP equals poly-only") {
  PolyPrior prior;
  prior.alpha = {0.5, 0.01, 0.1, -0.002, -0.0005, -0.02};
  prior.shift = 0.03;
  const MapModel residual = ResidualModel{prior, nullptr};
  const MapModel poly = PolyOnlyModel{prior};
  rng::Stream stream(9);
  for (int i = 0; i < 50; ++i) {
    const double m = stream.uniform(5.0, 30.0);
    const double pr = stream.uniform(1.1, 2.2);
    CHECK(model_efficiency(residual, m, pr) == model_efficiency(poly, m, pr));
  }
}

TEST_CASE("model_efficiency: residual GP interpolates back to the plant value") {
  // Residual targets constructed per the error-function definition; with
  // near-zero noise the combined model must reproduce the plant efficiency
  // at the training points.
  thermo::TrueMap map;
  PolyPrior prior;
  prior.alpha = {0.68, 0.002, 0.01, 0.0, -0.0004, -0.01};
  prior.shift = 0.04;

  Eigen::Matrix<double, Eigen::Dynamic, 2> x(6, 2);
  Eigen::VectorXd delta(6);
  for (int i = 0; i < 6; ++i) {
    const double m = 9.0 + 2.5 * i;
    // Zigzag off the diagonal so both kernel axes stay identified.
    const double pr = 1.25 + 0.08 * i + (i % 2 ? 0.06 : -0.06);
    x(i, 0) = m;
    x(i, 1) = pr;
    delta[i] = thermo::true_efficiency(map, m, pr) - prior.eval(m, pr);
  }
  gp::FitOptions opts;
  opts.fixed_noise_var = 1e-10;
  opts.seed = 8;
  const auto model = std::make_shared<gp::GpModel>(gp::fit(x, delta, 0.0, opts));
  const MapModel residual = ResidualModel{prior, model};
  for (int i = 0; i < 6; ++i) {
    const double eta = model_efficiency(residual, x(i, 0), x(i, 1));
    CHECK(std::abs(eta - thermo::true_efficiency(map, x(i, 0), x(i, 1))) < 1e-5);
  }
}

TEST_CASE("model_efficiency: direct GP cold start and clamping") {
  const MapModel cold = DirectGpModel{nullptr, 0.7};
  CHECK(model_efficiency(cold, 15.0, 1.5) == 0.7);
  CHECK(model_efficiency_grad(cold, 15.0, 1.5).norm() == 0.0);

  // A polynomial that dives below zero is clamped to the safety floor.
  PolyPrior bad;
  bad.alpha = {-5.0, 0, 0, 0, 0, 0};
  const MapModel clamped = PolyOnlyModel{bad};
  const EffValue v = model_efficiency_ex(clamped, 10.0, 1.5);
  CHECK(v.eta == kEffClampLo);
  CHECK(v.clamped);
  CHECK(model_efficiency_grad(clamped, 10.0, 1.5).norm() == 0.0);

  PolyPrior high;
  high.alpha = {7.0, 0, 0, 0, 0, 0};
  CHECK(model_efficiency(PolyOnlyModel{high}, 10.0, 1.5) == kEffClampHi);
}

TEST_CASE("model_efficiency_grad: analytic forms against finite differences") {
  // Polynomial derivative identity at spot-check points.
  PolyPrior prior;
  prior.alpha = {0.4, 0.03, -0.1, 0.004, -0.001, 0.02};
  const MapModel poly = PolyOnlyModel{prior};
  rng::Stream stream(17);
  for (int i = 0; i < 10; ++i) {
    const double m = stream.uniform(6.0, 28.0);
    const double pr = stream.uniform(1.1, 2.1);
    const Eigen::Vector2d g = model_efficiency_grad(poly, m, pr);
    CHECK(rel_err(g[0], prior.alpha[1] + prior.alpha[3] * pr +
                            2 * prior.alpha[4] * m) < 1e-12);
    CHECK(rel_err(g[1], prior.alpha[2] + prior.alpha[3] * m +
                            2 * prior.alpha[5] * pr) < 1e-12);
  }

  // Exact model: stationary at the ridge apex.
  thermo::TrueMap map;
  const MapModel exact = ExactModel{map};
  const Eigen::Vector2d apex =
      model_efficiency_grad(exact, map.ridge_flow(map.pr_center), map.pr_center);
  CHECK(apex.norm() < 1e-8);

  // Residual with a fitted GP: central differences.
  Eigen::Matrix<double, Eigen::Dynamic, 2> x(8, 2);
  Eigen::VectorXd delta(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = 8.0 + 2.0 * i;
    x(i, 1) = 1.2 + 0.07 * i;
    delta[i] = 0.05 * std::sin(0.4 * x(i, 0)) - 0.02 * x(i, 1);
  }
  gp::FitOptions opts;
  opts.seed = 4;
  const auto gpm = std::make_shared<gp::GpModel>(gp::fit(x, delta, 0.0, opts));
  const MapModel residual = ResidualModel{prior, gpm};
  for (int i = 0; i < 20; ++i) {
    const double m = stream.uniform(9.0, 21.0);
    const double pr = stream.uniform(1.25, 1.65);
    const Eigen::Vector2d g = model_efficiency_grad(residual, m, pr);
    const double h = 1e-5;
    const double fdm = (model_efficiency(residual, m + h, pr) -
                        model_efficiency(residual, m - h, pr)) /
                       (2 * h);
    const double fdp = (model_efficiency(residual, m, pr + h) -
                        model_efficiency(residual, m, pr - h)) /
                       (2 * h);
    CHECK(std::abs(g[0] - fdm) <= 1e-5 * std::max(1e-3, std::abs(fdm)));
    CHECK(std::abs(g[1] - fdp) <= 1e-5 * std::max(1e-3, std::abs(fdp)));
  }
}

TEST_CASE("map model serialization round-trips") {
  PolyPrior prior;
  prior.alpha = {0.5, 0.01, 0.1, -0.002, -0.0005, -0.02};
  prior.shift = -0.01;
  Eigen::Matrix<double, Eigen::Dynamic, 2> x(4, 2);
  x << 10, 1.3, 13, 1.4, 16, 1.5, 19, 1.6;
  Eigen::VectorXd t(4);
  t << 0.01, -0.02, 0.005, 0.03;
  gp::FitOptions opts;
  opts.seed = 12;
  const auto gpm = std::make_shared<gp::GpModel>(gp::fit(x, t, 0.0, opts));

  for (const MapModel& model :
       {MapModel{ExactModel{thermo::TrueMap{}}}, MapModel{PolyOnlyModel{prior}},
        MapModel{ResidualModel{prior, gpm}}, MapModel{DirectGpModel{gpm, 0.7}}}) {
    const MapModel back = model_from_json(model_to_json(model));
    rng::Stream stream(1);
    for (int i = 0; i < 20; ++i) {
      const double m = stream.uniform(8.0, 24.0);
      const double pr = stream.uniform(1.2, 1.8);
      CHECK(model_efficiency(back, m, pr) ==
            doctest::Approx(model_efficiency(model, m, pr)).epsilon(1e-12));
    }
  }
}

TEST_CASE("map grid export carries the expected columns") {
  thermo::TrueMap map;
  PolyPrior prior;
  prior.alpha = {0.7, 0, 0, 0, 0, 0};
  GridSpec grid;
  grid.n_mdot = 4;
  grid.n_pr = 3;
  const std::string csv = map_grid_csv(PolyOnlyModel{prior}, map, &prior, grid);
  CHECK(csv.rfind("mdot,pr,eta_true,eta_model,eta_prior\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 3);
}
