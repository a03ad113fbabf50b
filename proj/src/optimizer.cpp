#include "loadshare/optimizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "loadshare/io.hpp"

namespace loadshare::optimizer {

namespace {

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

// Stationarity violation of the sum-constrained box KKT system, scaled to
// power units by the per-compressor flow span.
double kkt_violation(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                     const std::vector<double>& lo,
                     const std::vector<double>& hi) {
  const int n = static_cast<int>(x.size());
  constexpr double kActiveTol = 1e-9;
  double free_sum = 0.0;
  int free_count = 0;
  double lam_lo = -std::numeric_limits<double>::infinity();
  double lam_hi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const bool at_lo = x[i] <= lo[i] + kActiveTol;
    const bool at_hi = x[i] >= hi[i] - kActiveTol;
    if (!at_lo && !at_hi) {
      free_sum += g[i];
      ++free_count;
    } else if (at_lo) {
      lam_hi = std::min(lam_hi, g[i]);  // need g_i - lambda >= 0
    } else {
      lam_lo = std::max(lam_lo, g[i]);  // need g_i - lambda <= 0
    }
  }
  double lambda;
  if (free_count > 0) {
    lambda = free_sum / free_count;
  } else if (std::isfinite(lam_lo) && std::isfinite(lam_hi)) {
    lambda = 0.5 * (std::min(lam_lo, lam_hi) + std::max(lam_lo, lam_hi));
    if (lam_lo <= lam_hi) lambda = 0.5 * (lam_lo + lam_hi);
  } else if (std::isfinite(lam_lo)) {
    lambda = lam_lo;
  } else {
    lambda = std::isfinite(lam_hi) ? lam_hi : 0.0;
  }
  double viol = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool at_lo = x[i] <= lo[i] + kActiveTol;
    const bool at_hi = x[i] >= hi[i] - kActiveTol;
    double v = 0.0;
    if (!at_lo && !at_hi) {
      v = std::abs(g[i] - lambda);
    } else if (at_lo) {
      v = std::max(0.0, lambda - g[i]);
    } else {
      v = std::max(0.0, g[i] - lambda);
    }
    viol = std::max(viol, v * (hi[i] - lo[i]));
  }
  return viol;
}

struct StartResult {
  Eigen::VectorXd x;
  double power = 0.0;
  double kkt = 0.0;
  long iterations = 0;
  bool converged = false;
  bool clamped = false;
};

}  // namespace

PowerEval station_power(const LsoProblem& problem, const Eigen::VectorXd& flows) {
  const int n = problem.n();
  PowerEval out;
  out.grad = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double m = flows[i];
    const surrogate::EffValue ev =
        surrogate::model_efficiency_ex(problem.models[i], m, problem.pr);
    out.clamped = out.clamped || ev.clamped;
    out.power += problem.head * m / ev.eta;
    const Eigen::Vector2d eg =
        surrogate::model_efficiency_grad(problem.models[i], m, problem.pr);
    out.grad[i] = problem.head * (ev.eta - m * eg[0]) / (ev.eta * ev.eta);
  }
  return out;
}

Eigen::VectorXd project_onto_balance_box(const Eigen::VectorXd& y,
                                         const std::vector<double>& lower,
                                         const std::vector<double>& upper,
                                         double target) {
  const int n = static_cast<int>(y.size());
  auto clipped_sum = [&](double lambda) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += std::min(upper[i], std::max(lower[i], y[i] - lambda));
    return s;
  };
  // sum(clip(y - lambda)) is nonincreasing in lambda; bracket then bisect
  // until the interval collapses to adjacent doubles.
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < n; ++i) {
    lo = std::min(lo, y[i] - upper[i]);
    hi = std::max(hi, y[i] - lower[i]);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (clipped_sum(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i)
    x[i] = std::min(upper[i], std::max(lower[i], y[i] - lambda));
  // Spread any residual rounding over coordinates with slack so the balance
  // holds to machine precision.
  double resid = target - x.sum();
  for (int i = 0; i < n && resid != 0.0; ++i) {
    const double room = resid > 0.0 ? upper[i] - x[i] : lower[i] - x[i];
    const double take =
        resid > 0.0 ? std::min(resid, room) : std::max(resid, room);
    x[i] += take;
    resid -= take;
  }
  return x;
}

namespace {

LsoSolution solve_ordered(const LsoProblem& problem, std::uint64_t seed,
                          const SolveOptions& opts);

}  // namespace

LsoSolution solve(const LsoProblem& problem, std::uint64_t seed,
                  const SolveOptions& opts) {
  // Reductions over compressors are not bit-associative, so the problem is
  // brought into a canonical content order first and the flows scattered
  // back afterwards. Reordering the compressors then permutes the solution
  // exactly.
  const int n = problem.n();
  std::vector<std::uint64_t> keys(n);
  for (int i = 0; i < n; ++i) {
    keys[i] = rng::mix({surrogate::fingerprint(problem.models[i]),
                        std::bit_cast<std::uint64_t>(problem.lower[i]),
                        std::bit_cast<std::uint64_t>(problem.upper[i])});
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    if (problem.lower[a] != problem.lower[b])
      return problem.lower[a] < problem.lower[b];
    return problem.upper[a] < problem.upper[b];
  });

  LsoProblem canonical = problem;
  for (int i = 0; i < n; ++i) {
    canonical.lower[i] = problem.lower[order[i]];
    canonical.upper[i] = problem.upper[order[i]];
    canonical.models[i] = problem.models[order[i]];
  }
  LsoSolution sol = solve_ordered(canonical, seed, opts);
  Eigen::VectorXd flows(n);
  for (int i = 0; i < n; ++i) flows[order[i]] = sol.flows[i];
  sol.flows = flows;
  return sol;
}

namespace {

LsoSolution solve_ordered(const LsoProblem& problem, std::uint64_t seed,
                          const SolveOptions& opts) {
  const int n = problem.n();
  LsoSolution sol;
  sol.flows = Eigen::VectorXd::Zero(n);

  const double sum_lo = std::accumulate(problem.lower.begin(), problem.lower.end(), 0.0);
  const double sum_hi = std::accumulate(problem.upper.begin(), problem.upper.end(), 0.0);
  if (sum_lo > problem.target || sum_hi < problem.target) {
    sol.status = SolveStatus::Infeasible;
    return sol;
  }

  // Per-coordinate streams keyed on content, not position: permuting the
  // compressors permutes the starts and therefore the solution.
  std::vector<rng::Stream> streams;
  streams.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t key =
        rng::mix({seed, surrogate::fingerprint(problem.models[i]),
                  std::bit_cast<std::uint64_t>(problem.lower[i]),
                  std::bit_cast<std::uint64_t>(problem.upper[i])});
    streams.emplace_back(key);
  }

  const int n_lhs = std::max(0, opts.lhs_starts);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(n_lhs + 1);
  {
    Eigen::VectorXd eq(n);
    eq.setConstant(problem.target / n);
    starts.push_back(project_onto_balance_box(eq, problem.lower, problem.upper,
                                              problem.target));
  }
  if (n_lhs > 0) {
    // Latin hypercube: stratified fractions with a per-coordinate shuffle.
    std::vector<std::vector<int>> perm(n, std::vector<int>(n_lhs));
    for (int i = 0; i < n; ++i) {
      std::iota(perm[i].begin(), perm[i].end(), 0);
      for (int j = n_lhs - 1; j > 0; --j) {
        const int k = static_cast<int>(streams[i].next_below(j + 1));
        std::swap(perm[i][j], perm[i][k]);
      }
    }
    for (int j = 0; j < n_lhs; ++j) {
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        const double f = (perm[i][j] + streams[i].uniform01()) / n_lhs;
        y[i] = problem.lower[i] + f * (problem.upper[i] - problem.lower[i]);
      }
      starts.push_back(project_onto_balance_box(y, problem.lower, problem.upper,
                                                problem.target));
    }
  }

  std::vector<StartResult> results;
  results.reserve(starts.size());
  for (const auto& x0 : starts) {
    StartResult res;
    res.x = x0;
    PowerEval cur = station_power(problem, res.x);
    res.clamped = cur.clamped;
    double step = 1e-3;
    const double tol = opts.kkt_tol_rel * std::max(1.0, std::abs(cur.power));
    for (int iter = 0; iter < opts.max_iter; ++iter) {
      ++res.iterations;
      res.kkt = kkt_violation(res.x, cur.grad, problem.lower, problem.upper);
      if (res.kkt <= tol) {
        res.converged = true;
        break;
      }
      bool accepted = false;
      double t = std::min(step * 2.0, 1e6);
      while (t > 1e-16) {
        const Eigen::VectorXd trial = project_onto_balance_box(
            res.x - t * cur.grad, problem.lower, problem.upper, problem.target);
        const Eigen::VectorXd dx = trial - res.x;
        const double move = dx.lpNorm<Eigen::Infinity>();
        if (move > 0.0) {
          const PowerEval pe = station_power(problem, trial);
          if (pe.power <= cur.power + 1e-4 * cur.grad.dot(dx)) {
            res.x = trial;
            cur = pe;
            res.clamped = res.clamped || pe.clamped;
            step = t;
            accepted = true;
            break;
          }
        }
        t *= 0.5;
      }
      if (!accepted) {
        // No descent step left; report the stationarity we are at.
        res.kkt = kkt_violation(res.x, cur.grad, problem.lower, problem.upper);
        res.converged = res.kkt <= tol;
        break;
      }
    }
    if (!res.converged)
      res.kkt = kkt_violation(res.x, station_power(problem, res.x).grad,
                              problem.lower, problem.upper);
    res.power = station_power(problem, res.x).power;
    results.push_back(std::move(res));
  }

  // Best power wins; near-ties resolve to the lexicographically smallest
  // flow vector for reproducibility.
  int best = 0;
  for (int j = 1; j < static_cast<int>(results.size()); ++j) {
    const double pb = results[best].power;
    const double pj = results[j].power;
    const double tie = 1e-9 * std::max({1.0, std::abs(pb), std::abs(pj)});
    if (pj < pb - tie) {
      best = j;
    } else if (std::abs(pj - pb) <= tie && lex_less(results[j].x, results[best].x)) {
      best = j;
    }
  }

  sol.flows = results[best].x;
  sol.predicted_power = results[best].power;
  sol.kkt_residual = results[best].kkt;
  sol.status = results[best].converged ? SolveStatus::Converged : SolveStatus::MaxIter;
  sol.starts_used = static_cast<int>(results.size());
  for (const auto& r : results) {
    sol.iterations += r.iterations;
    sol.clamped_model_seen = sol.clamped_model_seen || r.clamped;
  }
  return sol;
}

}  // namespace

LsoProblem build_problem(double target, const thermo::SystemCurve& curve,
                         const thermo::GasConditions& gas,
                         const std::vector<thermo::Envelope>& envelopes,
                         std::vector<surrogate::MapModel> models) {
  if (!(target >= 0.0)) throw DomainError("build_problem: negative target");
  if (envelopes.size() != models.size())
    throw ConfigError("station", "envelope/model count mismatch");
  LsoProblem p;
  p.target = target;
  p.pr = thermo::system_pressure_ratio(curve, target);
  p.head = thermo::polytropic_head(p.pr, gas);
  p.models = std::move(models);
  for (const auto& env : envelopes) {
    if (p.pr < env.pr_min || p.pr > env.pr_max)
      throw InfeasibleTarget(
          "build_problem: system pressure ratio " + io::format_double(p.pr) +
          " falls outside a compressor envelope");
    const auto [lo, hi] = thermo::envelope_bounds(env, p.pr);
    p.lower.push_back(lo);
    p.upper.push_back(hi);
  }
  return p;
}

}  // namespace loadshare::optimizer
