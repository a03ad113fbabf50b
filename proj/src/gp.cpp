#include "loadshare/gp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace loadshare::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kJitterFactorBase = 1e-10;   // of mean regularized diagonal
constexpr double kJitterFactorMax = 1e-4;

using Mat = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Vec = Eigen::VectorXd;

// Gram matrix of the noiseless SE kernel.
Mat gram(const MatX2& x, const Kernel& k) {
  const Eigen::Index n = x.rows();
  Mat out(n, n);
  const double il1 = 1.0 / (k.len_mdot * k.len_mdot);
  const double il2 = 1.0 / (k.len_pr * k.len_pr);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = k.signal_var;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d1 = x(i, 0) - x(j, 0);
      const double d2 = x(i, 1) - x(j, 1);
      const double v = k.signal_var * std::exp(-0.5 * (d1 * d1 * il1 + d2 * d2 * il2));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

struct Factorization {
  Eigen::LLT<Mat> llt;
  double jitter_factor = kJitterFactorBase;
  double jitter_abs = 0.0;
};

// Cholesky of K + (sn^2 + jitter) I with jitter escalation. The base jitter
// scales with the mean regularized diagonal so it tracks the signal level.
Factorization factorize(const Mat& k_se, const Kernel& kern) {
  const double trace_mean = kern.signal_var + kern.noise_var;
  Factorization f;
  for (double jf = kJitterFactorBase; jf <= kJitterFactorMax * 1.0001; jf *= 10.0) {
    const double reg = kern.noise_var + jf * trace_mean;
    Mat k_reg = k_se;
    k_reg.diagonal().array() += reg;
    f.llt.compute(k_reg);
    if (f.llt.info() == Eigen::Success) {
      f.jitter_factor = jf;
      f.jitter_abs = jf * trace_mean;
      return f;
    }
  }
  throw NumericalError("gp: Cholesky failed after jitter escalation");
}

struct LogParams {
  Eigen::Vector4d p;  // [log sf2, log l1, log l2, log sn2]
  Kernel kernel() const {
    Kernel k;
    k.signal_var = std::exp(p[0]);
    k.len_mdot = std::exp(p[1]);
    k.len_pr = std::exp(p[2]);
    k.noise_var = std::exp(p[3]);
    return k;
  }
};

double lml_value_only(const MatX2& x, const Vec& y, const Kernel& kern) {
  const Mat k_se = gram(x, kern);
  const Factorization f = factorize(k_se, kern);
  const Vec alpha = f.llt.solve(y);
  const Eigen::Index n = x.rows();
  return -0.5 * y.dot(alpha) -
         f.llt.matrixLLT().diagonal().array().log().sum() -
         0.5 * static_cast<double>(n) * kLog2Pi;
}

}  // namespace

void Kernel::validate() const {
  if (!(signal_var > 0.0 && len_mdot > 0.0 && len_pr > 0.0 && noise_var > 0.0))
    throw ConfigError("gp.kernel", "hyperparameters must be strictly positive");
}

double kernel_eval(const Kernel& k, const Eigen::Vector2d& x,
                   const Eigen::Vector2d& y) {
  const double d1 = (x[0] - y[0]) / k.len_mdot;
  const double d2 = (x[1] - y[1]) / k.len_pr;
  return k.signal_var * std::exp(-0.5 * (d1 * d1 + d2 * d2));
}

InputStats InputStats::compute(const MatX2& pts) {
  InputStats s;
  const Eigen::Index n = pts.rows();
  if (n == 0) return s;
  s.mean = pts.colwise().mean().transpose();
  if (n < 2) return s;  // unit std for a single point
  for (int d = 0; d < 2; ++d) {
    const double ss = (pts.col(d).array() - s.mean[d]).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    s.std[d] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

LmlResult log_marginal_likelihood(const MatX2& inputs_std,
                                  const Vec& targets_centered,
                                  const Kernel& kernel) {
  const Eigen::Index n = inputs_std.rows();
  const Mat k_se = gram(inputs_std, kernel);
  const Factorization f = factorize(k_se, kernel);
  const Vec alpha = f.llt.solve(targets_centered);

  LmlResult r;
  r.value = -0.5 * targets_centered.dot(alpha) -
            f.llt.matrixLLT().diagonal().array().log().sum() -
            0.5 * static_cast<double>(n) * kLog2Pi;

  // d LML / d theta_j = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_j).
  Mat w = f.llt.solve(Mat::Identity(n, n));
  Mat a = alpha * alpha.transpose() - w;

  // The applied regularization is sn2 + jf*(sf2 + sn2); its derivative with
  // respect to the log-hyperparameters is folded in so the gradient matches
  // the evaluated function exactly.
  const double jf = f.jitter_factor;

  // log sf2: dK = K_se + jf*sf2*I
  r.grad[0] = 0.5 * ((a.array() * k_se.array()).sum() +
                     jf * kernel.signal_var * a.trace());
  // log lengthscales: dK = K_se .* D_d
  for (int d = 0; d < 2; ++d) {
    const double il2 = d == 0 ? 1.0 / (kernel.len_mdot * kernel.len_mdot)
                              : 1.0 / (kernel.len_pr * kernel.len_pr);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        const double diff = inputs_std(i, d) - inputs_std(j, d);
        acc += 2.0 * a(i, j) * k_se(i, j) * diff * diff * il2;
      }
    }
    r.grad[1 + d] = 0.5 * acc;
  }
  // log sn2: dK = (1 + jf) * sn2 * I
  r.grad[3] = 0.5 * (1.0 + jf) * kernel.noise_var * a.trace();
  return r;
}

namespace {

// Projected gradient ascent on the LML in log-space with backtracking.
// opt_noise == false keeps p[3] pinned.
struct AscentResult {
  Eigen::Vector4d p;
  double value;
};

AscentResult ascend(const MatX2& x, const Vec& y, Eigen::Vector4d p,
                    const Eigen::Vector4d& lo, const Eigen::Vector4d& hi,
                    const Eigen::Vector4d& opt_mask, const FitOptions& opts) {
  auto clip = [&](Eigen::Vector4d q) {
    for (int i = 0; i < 4; ++i) q[i] = std::min(hi[i], std::max(lo[i], q[i]));
    return q;
  };
  p = clip(p);
  LogParams lp{p};
  LmlResult cur = log_marginal_likelihood(x, y, lp.kernel());
  double step = 1.0;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Eigen::Vector4d g = cur.grad.cwiseProduct(opt_mask);
    // Projected-gradient stationarity measure.
    const Eigen::Vector4d moved = clip(p + g);
    if ((moved - p).lpNorm<Eigen::Infinity>() < opts.grad_tol) break;

    bool accepted = false;
    double t = std::min(step * 2.0, 1e3);
    while (t > 1e-14) {
      const Eigen::Vector4d trial = clip(p + t * g);
      const Eigen::Vector4d dp = trial - p;
      if (dp.lpNorm<Eigen::Infinity>() > 0.0) {
        const double want = cur.value + 1e-4 * g.dot(dp);
        double v;
        try {
          v = lml_value_only(x, y, LogParams{trial}.kernel());
        } catch (const NumericalError&) {
          v = -std::numeric_limits<double>::infinity();
        }
        if (v >= want && std::isfinite(v)) {
          p = trial;
          cur = log_marginal_likelihood(x, y, LogParams{p}.kernel());
          step = t;
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return {p, cur.value};
}

}  // namespace

GpModel fit(const MatX2& inputs_raw, const Vec& targets, double prior_mean,
            const FitOptions& opts) {
  const Eigen::Index n = inputs_raw.rows();
  if (n == 0) throw ConfigError("gp.fit", "empty dataset");
  if (targets.size() != n)
    throw ConfigError("gp.fit", "inputs/targets size mismatch");

  GpModel m;
  m.inputs_raw = inputs_raw;
  m.stats = InputStats::compute(inputs_raw);
  m.inputs.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    m.inputs.row(i) = m.stats.standardize(inputs_raw.row(i).transpose()).transpose();
  m.targets = targets;
  m.prior_mean = prior_mean;

  const Vec y = targets.array() - prior_mean;
  const double y_var =
      n > 1 ? (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1)
            : 0.0;

  const bool opt_noise = !opts.fixed_noise_var.has_value();
  const bool opt_len_m = !opts.fixed_len_mdot.has_value();
  const Eigen::Vector4d lo(opts.log_sf2_lo, opts.log_len_lo, opts.log_len_lo,
                           opts.log_sn2_lo);
  const Eigen::Vector4d hi(opts.log_sf2_hi, opts.log_len_hi, opts.log_len_hi,
                           opts.log_sn2_hi);
  auto clamp_to = [](double v, double a, double b) {
    return std::min(b, std::max(a, v));
  };
  const double log_sn2_pinned =
      opts.fixed_noise_var ? std::log(*opts.fixed_noise_var) : 0.0;
  const double log_lenm_pinned =
      opts.fixed_len_mdot ? std::log(*opts.fixed_len_mdot) : 0.0;

  // Start 0 is a moment-based guess; the rest are seeded random points.
  std::vector<Eigen::Vector4d> starts;
  {
    Eigen::Vector4d p0;
    p0[0] = clamp_to(std::log(std::max(y_var, 1e-2)), lo[0], hi[0]);
    p0[1] = opt_len_m ? 0.0 : log_lenm_pinned;
    p0[2] = 0.0;
    p0[3] = opt_noise
                ? clamp_to(std::log(std::max(1e-6, 1e-2 * std::max(y_var, 1e-4))),
                           lo[3], hi[3])
                : log_sn2_pinned;
    starts.push_back(p0);
  }
  rng::Stream stream(rng::mix({opts.seed, 0x6770666974ull}));
  for (int r = 1; r < std::max(1, opts.restarts); ++r) {
    Eigen::Vector4d p;
    p[0] = stream.uniform(std::max(lo[0], -4.0), std::min(hi[0], 2.0));
    p[1] = opt_len_m ? stream.uniform(-1.5, 1.5) : log_lenm_pinned;
    p[2] = stream.uniform(-1.5, 1.5);
    p[3] = opt_noise ? stream.uniform(std::max(lo[3], -8.0), std::min(hi[3], -2.0))
                     : log_sn2_pinned;
    starts.push_back(p);
  }

  double best_val = -std::numeric_limits<double>::infinity();
  Eigen::Vector4d best_p = starts[0];
  for (const auto& s : starts) {
    Eigen::Vector4d s2 = s;
    if (!opt_noise) s2[3] = log_sn2_pinned;
    if (!opt_len_m) s2[1] = log_lenm_pinned;
    Eigen::Vector4d lo2 = lo, hi2 = hi;
    if (!opt_noise) {
      lo2[3] = log_sn2_pinned;
      hi2[3] = log_sn2_pinned;
    }
    if (!opt_len_m) {
      lo2[1] = log_lenm_pinned;
      hi2[1] = log_lenm_pinned;
    }
    Eigen::Vector4d mask = Eigen::Vector4d::Ones();
    if (!opt_noise) mask[3] = 0.0;
    if (!opt_len_m) mask[1] = 0.0;
    try {
      const AscentResult res = ascend(m.inputs, y, s2, lo2, hi2, mask, opts);
      if (res.value > best_val) {
        best_val = res.value;
        best_p = res.p;
      }
    } catch (const NumericalError&) {
      // A start that cannot even factorize is skipped.
    }
  }
  if (!std::isfinite(best_val))
    throw NumericalError("gp.fit: no hyperparameter start factorized");

  m.kernel = LogParams{best_p}.kernel();
  if (opts.fixed_noise_var) m.kernel.noise_var = *opts.fixed_noise_var;
  if (opts.fixed_len_mdot) m.kernel.len_mdot = *opts.fixed_len_mdot;

  const Mat k_se = gram(m.inputs, m.kernel);
  const Factorization f = factorize(k_se, m.kernel);
  m.chol = f.llt.matrixL();
  m.alpha = f.llt.solve(y);
  m.jitter = f.jitter_abs;
  return m;
}

GpModel refit_fixed_kernel(const Kernel& kernel, const MatX2& inputs_raw,
                           const Vec& targets, double prior_mean) {
  const Eigen::Index n = inputs_raw.rows();
  if (n == 0) throw ConfigError("gp.refit", "empty dataset");
  GpModel m;
  m.inputs_raw = inputs_raw;
  m.stats = InputStats::compute(inputs_raw);
  m.inputs.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    m.inputs.row(i) = m.stats.standardize(inputs_raw.row(i).transpose()).transpose();
  m.targets = targets;
  m.prior_mean = prior_mean;
  m.kernel = kernel;

  const Vec y = targets.array() - prior_mean;
  const Mat k_se = gram(m.inputs, m.kernel);
  const Factorization f = factorize(k_se, m.kernel);
  m.chol = f.llt.matrixL();
  m.alpha = f.llt.solve(y);
  m.jitter = f.jitter_abs;
  return m;
}

double GpModel::predict_mean(const Eigen::Vector2d& query_raw) const {
  if (!query_raw.allFinite()) throw DomainError("gp.predict_mean: non-finite query");
  const Eigen::Vector2d q = stats.standardize(query_raw);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i)
    acc += alpha[i] * kernel_eval(kernel, q, inputs.row(i).transpose());
  return prior_mean + acc;
}

double GpModel::predict_var(const Eigen::Vector2d& query_raw) const {
  if (!query_raw.allFinite()) throw DomainError("gp.predict_var: non-finite query");
  const Eigen::Vector2d q = stats.standardize(query_raw);
  const Eigen::Index n = inputs.rows();
  Vec kstar(n);
  for (Eigen::Index i = 0; i < n; ++i)
    kstar[i] = kernel_eval(kernel, q, inputs.row(i).transpose());
  const Vec v = chol.triangularView<Eigen::Lower>().solve(kstar);
  const double var = kernel.signal_var - v.squaredNorm();
  return std::max(0.0, std::min(var, kernel.signal_var));
}

Eigen::Vector2d GpModel::predict_mean_grad(const Eigen::Vector2d& query_raw) const {
  if (!query_raw.allFinite())
    throw DomainError("gp.predict_mean_grad: non-finite query");
  const Eigen::Vector2d q = stats.standardize(query_raw);
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  const double il1 = 1.0 / (kernel.len_mdot * kernel.len_mdot);
  const double il2 = 1.0 / (kernel.len_pr * kernel.len_pr);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double kv = kernel_eval(kernel, q, inputs.row(i).transpose());
    g[0] += alpha[i] * kv * (-(q[0] - inputs(i, 0)) * il1);
    g[1] += alpha[i] * kv * (-(q[1] - inputs(i, 1)) * il2);
  }
  // Chain rule through the input standardization.
  g[0] /= stats.std[0];
  g[1] /= stats.std[1];
  return g;
}

nlohmann::json to_json(const GpModel& m) {
  nlohmann::json j;
  auto vec2 = [](const Eigen::Vector2d& v) {
    return nlohmann::json::array({v[0], v[1]});
  };
  j["prior_mean"] = m.prior_mean;
  j["kernel"] = {{"signal_var", m.kernel.signal_var},
                 {"len_mdot", m.kernel.len_mdot},
                 {"len_pr", m.kernel.len_pr},
                 {"noise_var", m.kernel.noise_var}};
  j["input_stats"] = {{"mean", vec2(m.stats.mean)}, {"std", vec2(m.stats.std)}};
  nlohmann::json pts = nlohmann::json::array();
  nlohmann::json tg = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.inputs_raw.rows(); ++i) {
    pts.push_back({m.inputs_raw(i, 0), m.inputs_raw(i, 1)});
    tg.push_back(m.targets[i]);
  }
  j["inputs"] = pts;
  j["targets"] = tg;
  return j;
}

GpModel model_from_json(const nlohmann::json& j) {
  const auto& pts = j.at("inputs");
  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  MatX2 inputs(n, 2);
  Vec targets(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs(i, 0) = pts[i][0].get<double>();
    inputs(i, 1) = pts[i][1].get<double>();
    targets[i] = j.at("targets")[i].get<double>();
  }
  Kernel k;
  k.signal_var = j.at("kernel").at("signal_var").get<double>();
  k.len_mdot = j.at("kernel").at("len_mdot").get<double>();
  k.len_pr = j.at("kernel").at("len_pr").get<double>();
  k.noise_var = j.at("kernel").at("noise_var").get<double>();
  k.validate();
  return refit_fixed_kernel(k, inputs, targets, j.at("prior_mean").get<double>());
}

}  // namespace loadshare::gp
