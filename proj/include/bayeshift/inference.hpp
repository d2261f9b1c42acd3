// Copyright 2026 The bayeshift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Posterior computation: block Newton-CG MAP, Hamiltonian Monte Carlo,
// posterior summaries and the posterior predictive of target counts.

#ifndef BAYESHIFT_INFERENCE_HPP_
#define BAYESHIFT_INFERENCE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bayeshift/baselines.hpp"
#include "bayeshift/common.hpp"
#include "bayeshift/diagnostics.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/model.hpp"
#include "bayeshift/parallel.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

/// Optional fixed values for the precision scales; unset means inferred.
struct FixedTau {
  std::optional<double> tau_q;
  std::optional<double> tau_C;

  static FixedTau both(double t) { return FixedTau{t, t}; }
  void validate() const {
    if (tau_q && !(*tau_q > 0.0)) throw ParameterError("fixed tau_q must be > 0");
    if (tau_C && !(*tau_C > 0.0)) throw ParameterError("fixed tau_C must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Initialisation
// ---------------------------------------------------------------------------

namespace detail {

inline double tau_point(const GammaParams& g) {
  const double m = g.mode();
  return m > 0.0 ? m : g.mean();
}

}  // namespace detail

/// Warm start: theta from the BBSE estimate (floored at 1e-3 and
/// renormalised), phi from add-one smoothed empirical confusion columns,
/// tau at its conditional mode unless fixed.
inline ModelState initial_state(const CountData& data, const LaplacianMatrix& lap,
                                const HyperParams& hyper, const FixedTau& fixed = {}) {
  data.validate();
  hyper.validate();
  fixed.validate();
  const int K = data.K();
  require_shape(lap.K() == K, "initial_state: Laplacian shape mismatch");

  const Matrix C_emp = data.empirical_confusion(0.0);
  Vector q0;
  if (data.target_total > 0.0) {
    q0 = bbse(C_emp, SimplexVector(data.target_histogram())).q_hat.values();
  } else {
    q0 = Vector::Constant(K, 1.0 / K);
  }
  q0 = q0.cwiseMax(1e-3);
  q0 /= q0.sum();

  ModelState s = ModelState::from_simplex(q0, data.empirical_confusion(1.0), 1.0, 1.0);
  s.tau_q = fixed.tau_q ? *fixed.tau_q
                        : detail::tau_point(gamma_update(
                              std::span<const Vector>(&s.theta, 1), lap, hyper.a_q, hyper.b_q));
  s.tau_C = fixed.tau_C ? *fixed.tau_C
                        : detail::tau_point(gamma_update(s.phi, lap, hyper.a_C, hyper.b_C));
  return s;
}

// ---------------------------------------------------------------------------
// Block Newton-CG
// ---------------------------------------------------------------------------

struct NewtonConfig {
  double cg_tolerance = 1e-4;  // relative residual of the inner CG solve
  int max_cg_iters = 8;
  double outer_rel_tol = 1e-3;  // relative change of the log-joint
  int max_outer_iters = 100;
  double gradient_tol = 0.0;  // when > 0, convergence also needs this gradient norm
  FixedTau fixed;

  void validate() const {
    if (!(gradient_tol >= 0.0)) throw ParameterError("NewtonConfig: gradient_tol must be >= 0");
    if (!(cg_tolerance > 0.0) || !(outer_rel_tol > 0.0))
      throw ParameterError("NewtonConfig: tolerances must be > 0");
    if (max_cg_iters < 1 || max_outer_iters < 1)
      throw ParameterError("NewtonConfig: iteration limits must be >= 1");
    fixed.validate();
  }

  /// Tight settings for oracle use and tests.
  static NewtonConfig precise() {
    NewtonConfig c;
    c.cg_tolerance = 1e-12;
    c.max_cg_iters = 400;
    c.outer_rel_tol = 1e-14;
    c.max_outer_iters = 5000;
    c.gradient_tol = 1e-8;
    return c;
  }
};

struct NewtonResult {
  ModelState state;
  bool converged = false;
  int iterations = 0;
  std::vector<double> log_joint_trace;  // after each outer iteration
  double gradient_norm = 0.0;           // over the free coordinates
};

namespace detail {

/// Conjugate gradients for an SPD operator; x0 = 0.
template <class Apply>
Vector conjugate_gradient(const Apply& apply, const Vector& b, double rel_tol,
                          int max_iters) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double stop = rel_tol * rel_tol * rr;
  for (int it = 0; it < max_iters && rr > stop && rr > 0.0; ++it) {
    const Vector Ap = apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return x;
}

/// Halves the step until the log-joint does not decrease. Returns the new
/// log-joint (unchanged when no step is accepted). When the predicted gain
/// `slope` (gradient . direction) is below the rounding level of the
/// log-joint, values cannot be compared reliably; the full step is then
/// accepted if it lowers `block_grad_norm` and stays within rounding.
template <class Setter, class GradNorm>
double backtrack(ModelState& s, double lp_current, double slope, const Setter& set_step,
                 const GradNorm& block_grad_norm, const CountData& data,
                 const LaplacianMatrix& lap, const HyperParams& hyper) {
  const double slack = 64.0 * std::numeric_limits<double>::epsilon() *
                       (1.0 + std::abs(lp_current));
  double t = 1.0;
  for (int k = 0; k < 50; ++k, t *= 0.5) {
    ModelState trial = s;
    set_step(trial, t);
    trial.project();
    const double lp = log_joint(trial, data, lap, hyper);
    if (!std::isfinite(lp)) continue;
    if (lp >= lp_current) {
      s = std::move(trial);
      return lp;
    }
    if (k == 0 && slope <= slack && lp >= lp_current - slack &&
        block_grad_norm(trial) < block_grad_norm(s)) {
      s = std::move(trial);
      return lp;
    }
  }
  return lp_current;
}

inline double theta_newton_step(ModelState& s, double lp, const CountData& data,
                                const LaplacianMatrix& lap, const HyperParams& hyper,
                                const NewtonConfig& cfg) {
  const ModelGradient g = grad_log_joint(s, data, lap, hyper);
  if (g.theta.squaredNorm() == 0.0) return lp;
  const ModelState frozen = s;
  const Vector dir = conjugate_gradient(
      [&](const Vector& v) { return theta_block_fisher_apply(frozen, data, lap, v); },
      g.theta, cfg.cg_tolerance, cfg.max_cg_iters);
  return backtrack(
      s, lp, g.theta.dot(dir), [&](ModelState& t, double step) { t.theta += step * dir; },
      [&](const ModelState& t) { return grad_log_joint(t, data, lap, hyper).theta.norm(); },
      data, lap, hyper);
}

inline double phi_newton_step(ModelState& s, double lp, const CountData& data,
                              const LaplacianMatrix& lap, const HyperParams& hyper,
                              const NewtonConfig& cfg) {
  const int K = data.K();
  const ModelGradient g = grad_log_joint(s, data, lap, hyper);
  if (g.phi.squaredNorm() == 0.0) return lp;
  const ModelState frozen = s;
  const Vector b = Eigen::Map<const Vector>(g.phi.data(), K * K);
  const Vector dir = conjugate_gradient(
      [&](const Vector& v) {
        const Matrix V = Eigen::Map<const Matrix>(v.data(), K, K);
        const Matrix HV = phi_block_fisher_apply(frozen, data, lap, V);
        return Vector(Eigen::Map<const Vector>(HV.data(), K * K));
      },
      b, cfg.cg_tolerance, cfg.max_cg_iters);
  const Matrix D = Eigen::Map<const Matrix>(dir.data(), K, K);
  return backtrack(
      s, lp, b.dot(dir), [&](ModelState& t, double step) { t.phi += step * D; },
      [&](const ModelState& t) { return grad_log_joint(t, data, lap, hyper).phi.norm(); },
      data, lap, hyper);
}

inline double free_gradient_norm(const ModelState& s, const CountData& data,
                                 const LaplacianMatrix& lap, const HyperParams& hyper,
                                 const FixedTau& fixed, bool theta_only = false) {
  const ModelGradient g = grad_log_joint(s, data, lap, hyper);
  double sq = g.theta.squaredNorm();
  if (!theta_only) {
    sq += g.phi.squaredNorm();
    if (!fixed.tau_q) sq += g.log_tau_q * g.log_tau_q;
    if (!fixed.tau_C) sq += g.log_tau_C * g.log_tau_C;
  }
  return std::sqrt(sq);
}

inline bool relative_change_below(double prev, double cur, double tol) {
  return std::abs(cur - prev) <= tol * std::max(1.0, std::abs(prev));
}

}  // namespace detail

/// Block coordinate ascent on the log-joint: one Newton-CG step on all phi
/// columns, one on theta, then the conditional modes of tau_C and tau_q.
/// Each accepted step is non-decreasing in the log-joint.
inline NewtonResult block_newton_cg(const CountData& data, const LaplacianMatrix& lap,
                                    const HyperParams& hyper, const NewtonConfig& cfg,
                                    const ModelState* init = nullptr) {
  cfg.validate();
  require_prior_precision(lap);
  NewtonResult res;
  res.state = init ? *init : initial_state(data, lap, hyper, cfg.fixed);
  if (cfg.fixed.tau_q) res.state.tau_q = *cfg.fixed.tau_q;
  if (cfg.fixed.tau_C) res.state.tau_C = *cfg.fixed.tau_C;
  res.state.project();
  ModelState& s = res.state;
  double lp = log_joint(s, data, lap, hyper);
  if (!std::isfinite(lp)) throw Error("block_newton_cg: non-finite initial log-joint");

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    const double lp_prev = lp;
    lp = detail::phi_newton_step(s, lp, data, lap, hyper, cfg);
    lp = detail::theta_newton_step(s, lp, data, lap, hyper, cfg);
    if (!cfg.fixed.tau_C) {
      ModelState t = s;
      t.tau_C = detail::tau_point(gamma_update(s.phi, lap, hyper.a_C, hyper.b_C));
      const double lpt = log_joint(t, data, lap, hyper);
      if (lpt >= lp) {
        s = std::move(t);
        lp = lpt;
      }
    }
    if (!cfg.fixed.tau_q) {
      ModelState t = s;
      t.tau_q = detail::tau_point(
          gamma_update(std::span<const Vector>(&s.theta, 1), lap, hyper.a_q, hyper.b_q));
      const double lpt = log_joint(t, data, lap, hyper);
      if (lpt >= lp) {
        s = std::move(t);
        lp = lpt;
      }
    }
    res.log_joint_trace.push_back(lp);
    res.iterations = it;
    if (detail::relative_change_below(lp_prev, lp, cfg.outer_rel_tol) &&
        (cfg.gradient_tol == 0.0 ||
         detail::free_gradient_norm(s, data, lap, hyper, cfg.fixed) <= cfg.gradient_tol)) {
      res.converged = true;
      break;
    }
  }
  res.gradient_norm = detail::free_gradient_norm(s, data, lap, hyper, cfg.fixed);
  return res;
}

/// Maximises the log-joint over theta alone with phi and tau_q held fixed.
inline NewtonResult theta_block_map(const CountData& data, const LaplacianMatrix& lap,
                                    const HyperParams& hyper, const ModelState& start,
                                    const NewtonConfig& cfg = NewtonConfig::precise()) {
  cfg.validate();
  NewtonResult res;
  res.state = start;
  res.state.project();
  double lp = log_joint(res.state, data, lap, hyper);
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    const double prev = lp;
    lp = detail::theta_newton_step(res.state, lp, data, lap, hyper, cfg);
    res.log_joint_trace.push_back(lp);
    res.iterations = it;
    if (detail::relative_change_below(prev, lp, cfg.outer_rel_tol) &&
        (cfg.gradient_tol == 0.0 ||
         detail::free_gradient_norm(res.state, data, lap, hyper, cfg.fixed, true) <=
             cfg.gradient_tol)) {
      res.converged = true;
      break;
    }
  }
  res.gradient_norm =
      detail::free_gradient_norm(res.state, data, lap, hyper, cfg.fixed, true);
  return res;
}

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo
// ---------------------------------------------------------------------------

struct HmcConfig {
  int chains = 4;
  int warmup_iters = 500;
  int sampling_iters = 1000;
  int leapfrog_steps = 16;  // jittered by +-20% per iteration
  double target_accept = 0.8;
  std::uint64_t seed = 1;
  FixedTau fixed;
  bool adapt_metric = true;  // windowed mass-matrix adaptation during warmup
  double init_jitter = 0.1;  // sd of per-chain perturbation of the warm start
  int max_threads = 0;       // 0 = hardware concurrency

  void validate() const {
    if (chains < 1 || warmup_iters < 1 || sampling_iters < 1 || leapfrog_steps < 1)
      throw ParameterError("HmcConfig: counts must be positive");
    if (!(target_accept > 0.5 && target_accept < 0.99))
      throw ParameterError("HmcConfig: target_accept must lie in (0.5, 0.99)");
    if (!(init_jitter >= 0.0)) throw ParameterError("HmcConfig: init_jitter must be >= 0");
    fixed.validate();
  }
};

struct PosteriorDraws {
  int K = 0;
  std::vector<std::vector<ModelState>> draws;  // [chain][iteration]
  std::vector<double> accept_rates;            // mean post-warmup acceptance
  std::vector<double> step_sizes;
  int divergence_count = 0;
  FixedTau fixed;

  int chains() const { return static_cast<int>(draws.size()); }
  size_t draws_per_chain() const { return draws.empty() ? 0 : draws.front().size(); }
};

namespace detail {

/// Unconstrained coordinates x = [B^T theta, B^T phi_1, ..., B^T phi_K,
/// log tau_q?, log tau_C?], B an orthonormal sum-zero basis.
class HmcTarget {
 public:
  HmcTarget(const CountData& data, const LaplacianMatrix& lap, const HyperParams& hyper,
            const FixedTau& fixed)
      : data_(data), lap_(lap), hyper_(hyper), fixed_(fixed), K_(data.K()),
        B_(sum_zero_basis(data.K())) {
    dim_ = (K_ - 1) * (K_ + 1) + (fixed_.tau_q ? 0 : 1) + (fixed_.tau_C ? 0 : 1);
  }

  int dim() const { return dim_; }

  Vector pack(const ModelState& s) const {
    Vector x(dim_);
    const int m = K_ - 1;
    x.segment(0, m) = B_.transpose() * s.theta;
    for (int i = 0; i < K_; ++i) x.segment(m * (i + 1), m) = B_.transpose() * s.phi.col(i);
    int o = m * (K_ + 1);
    if (!fixed_.tau_q) x[o++] = std::log(s.tau_q);
    if (!fixed_.tau_C) x[o++] = std::log(s.tau_C);
    return x;
  }

  ModelState unpack(const Vector& x) const {
    ModelState s;
    const int m = K_ - 1;
    s.theta = B_ * x.segment(0, m);
    s.phi.resize(K_, K_);
    for (int i = 0; i < K_; ++i) s.phi.col(i) = B_ * x.segment(m * (i + 1), m);
    int o = m * (K_ + 1);
    s.tau_q = fixed_.tau_q ? *fixed_.tau_q : std::exp(x[o++]);
    s.tau_C = fixed_.tau_C ? *fixed_.tau_C : std::exp(x[o++]);
    return s;
  }

  /// Potential energy -log p(x) (log-tau Jacobian included) and its gradient.
  double potential(const Vector& x, Vector* grad) const {
    const ModelState s = unpack(x);
    for (double t : {s.tau_q, s.tau_C})
      if (!(t > 0.0) || !std::isfinite(t)) return kPosInf;
    ModelGradient g;
    const double lp = log_joint_impl(s, data_, lap_, hyper_, grad ? &g : nullptr);
    if (!std::isfinite(lp)) return kPosInf;
    const int m = K_ - 1;
    int o = m * (K_ + 1);
    double U = -lp;
    if (!fixed_.tau_q) U -= x[o];
    if (!fixed_.tau_C) U -= x[o + (fixed_.tau_q ? 0 : 1)];
    if (grad) {
      grad->resize(dim_);
      grad->segment(0, m) = -(B_.transpose() * g.theta);
      for (int i = 0; i < K_; ++i)
        grad->segment(m * (i + 1), m) = -(B_.transpose() * g.phi.col(i));
      if (!fixed_.tau_q) (*grad)[o++] = -(g.log_tau_q + 1.0);
      if (!fixed_.tau_C) (*grad)[o++] = -(g.log_tau_C + 1.0);
    }
    return U;
  }

 private:
  const CountData& data_;
  const LaplacianMatrix& lap_;
  const HyperParams& hyper_;
  FixedTau fixed_;
  int K_;
  Matrix B_;
  int dim_ = 0;
};

struct Metric {
  Matrix inv_mass;  // M^{-1}
  Matrix chol;      // lower factor of M^{-1}

  static Metric identity(int d) {
    return Metric{Matrix::Identity(d, d), Matrix::Identity(d, d)};
  }
  void set(Matrix inv) {
    inv_mass = std::move(inv);
    Eigen::LLT<Matrix> llt(inv_mass);
    if (llt.info() != Eigen::Success) {
      inv_mass = Matrix(inv_mass.diagonal().cwiseMax(1e-8).asDiagonal());
      llt.compute(inv_mass);
    }
    chol = llt.matrixL();
  }
  double kinetic(const Vector& p) const { return 0.5 * p.dot(inv_mass * p); }
  template <class Rng>
  Vector sample_momentum(Rng& rng) const {
    std::normal_distribution<double> normal;
    Vector xi(chol.rows());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
    return chol.transpose().triangularView<Eigen::Upper>().solve(xi);
  }
};

struct Welford {
  int n = 0;
  Vector mean;
  Matrix m2;
  void reset(int d) {
    n = 0;
    mean = Vector::Zero(d);
    m2 = Matrix::Zero(d, d);
  }
  void add(const Vector& x) {
    ++n;
    const Vector delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean).transpose();
  }
  /// Sample covariance shrunk toward its diagonal (weight n / (n + d)) and
  /// regularised as (n/(n+5)) S + 1e-3 (5/(n+5)) I.
  Matrix regularized() const {
    const int d = static_cast<int>(mean.size());
    Matrix S = m2 / std::max(1, n - 1);
    const double w = static_cast<double>(n) / (n + d);
    Matrix blend = w * S;
    blend.diagonal() += (1.0 - w) * S.diagonal();
    const double nn = n;
    Matrix out = (nn / (nn + 5.0)) * blend;
    out.diagonal().array() += 1e-3 * (5.0 / (nn + 5.0));
    return out;
  }
};

struct DualAveraging {
  double mu = 0.0, h_bar = 0.0, log_eps_bar = 0.0;
  int t = 0;
  double target = 0.8;
  static constexpr double gamma = 0.2, t0 = 10.0, kappa = 0.75;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    h_bar = 0.0;
    log_eps_bar = 0.0;
    t = 0;
  }
  double update(double accept_prob) {
    ++t;
    const double tt = t;
    h_bar = (1.0 - 1.0 / (tt + t0)) * h_bar + (target - accept_prob) / (tt + t0);
    const double log_eps = mu - std::sqrt(tt) / gamma * h_bar;
    const double eta = std::pow(tt, -kappa);
    log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    return std::exp(log_eps);
  }
  double final_eps() const { return std::exp(log_eps_bar); }
};

/// Warmup iterations (0-based, exclusive end) at which a metric window
/// closes, following the usual fast/slow/fast buffer layout.
inline std::vector<int> metric_window_ends(int warmup) {
  int init = 75, term = 50, base = 25;
  if (warmup < 20) return {};
  if (warmup < init + term + base) {
    init = static_cast<int>(0.15 * warmup);
    term = static_cast<int>(0.1 * warmup);
    base = warmup - init - term;
  }
  std::vector<int> ends;
  int start = init;
  int size = base;
  const int slow_end = warmup - term;
  while (start < slow_end) {
    int end = start + size;
    if (end + 2 * size > slow_end) end = slow_end;
    ends.push_back(end);
    start = end;
    size *= 2;
  }
  return ends;
}

struct LeapfrogResult {
  Vector x, p, grad;
  double U = kPosInf;
};

inline LeapfrogResult leapfrog(const HmcTarget& target, const Metric& metric,
                               const Vector& x0, const Vector& p0, const Vector& g0,
                               double eps, int steps) {
  LeapfrogResult r{x0, p0, g0, 0.0};
  for (int s = 0; s < steps; ++s) {
    r.p -= 0.5 * eps * r.grad;
    r.x += eps * (metric.inv_mass * r.p);
    r.U = target.potential(r.x, &r.grad);
    if (!std::isfinite(r.U)) return r;
    r.p -= 0.5 * eps * r.grad;
  }
  return r;
}

template <class Rng>
double find_reasonable_epsilon(const HmcTarget& target, const Metric& metric,
                               const Vector& x, double U, const Vector& g, double eps,
                               Rng& rng) {
  auto log_accept = [&](double e) {
    const Vector p = metric.sample_momentum(rng);
    const double H0 = U + metric.kinetic(p);
    const LeapfrogResult r = leapfrog(target, metric, x, p, g, e, 1);
    if (!std::isfinite(r.U)) return kNegInf;
    return H0 - (r.U + metric.kinetic(r.p));
  };
  double la = log_accept(eps);
  const double direction = la > std::log(0.5) ? 1.0 : -1.0;
  for (int k = 0; k < 100; ++k) {
    if (direction > 0 ? !(la > std::log(0.5)) : (la > std::log(0.5))) break;
    const double next = eps * std::pow(2.0, direction);
    if (next > 1e3 || next < 1e-12) break;
    eps = next;
    la = log_accept(eps);
  }
  return eps;
}

struct ChainOutput {
  std::vector<ModelState> draws;
  double accept_rate = 0.0;
  double step_size = 0.0;
  int divergences = 0;
};

inline ChainOutput run_chain(const HmcTarget& target, const ModelState& start,
                             const HmcConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = target.dim();

  Vector base = target.pack(start);
  Vector x;
  Vector g;
  double U = kPosInf;
  double jitter_scale = 1.0;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    x = base;
    for (int i = 0; i < d; ++i) x[i] += cfg.init_jitter * normal(rng);
    U = target.potential(x, &g);
    if (std::isfinite(U) && g.allFinite()) break;
    jitter_scale *= 0.5;
    base *= 0.5;  // shrink toward the prior centre
  }
  if (!std::isfinite(U) || !g.allFinite())
    throw Error("run_hmc: non-finite log-joint at initialisation after 10 retries");

  Metric metric = Metric::identity(d);
  double eps = find_reasonable_epsilon(target, metric, x, U, g, 0.1, rng);
  DualAveraging da;
  da.target = cfg.target_accept;
  da.restart(eps);

  const std::vector<int> window_ends =
      cfg.adapt_metric ? metric_window_ends(cfg.warmup_iters) : std::vector<int>{};
  const int slow_start = window_ends.empty() ? cfg.warmup_iters
                                             : (cfg.warmup_iters < 150
                                                    ? static_cast<int>(0.15 * cfg.warmup_iters)
                                                    : 75);
  size_t next_window = 0;
  Welford welford;
  welford.reset(d);

  ChainOutput out;
  out.draws.reserve(cfg.sampling_iters);
  double accept_sum = 0.0;
  const int total = cfg.warmup_iters + cfg.sampling_iters;
  for (int it = 0; it < total; ++it) {
    const bool warmup = it < cfg.warmup_iters;
    const double jitter = 0.8 + 0.4 * unif(rng);
    const int steps = std::max(1, static_cast<int>(std::lround(cfg.leapfrog_steps * jitter)));

    const Vector p = metric.sample_momentum(rng);
    const double H0 = U + metric.kinetic(p);
    const LeapfrogResult prop = leapfrog(target, metric, x, p, g, eps, steps);
    double accept_prob = 0.0;
    bool divergent = true;
    if (std::isfinite(prop.U) && prop.grad.allFinite()) {
      const double H1 = prop.U + metric.kinetic(prop.p);
      const double dH = H1 - H0;
      divergent = !std::isfinite(dH) || dH > 1000.0;
      if (!divergent) accept_prob = std::min(1.0, std::exp(-dH));
    }
    if (unif(rng) < accept_prob) {
      x = prop.x;
      g = prop.grad;
      U = prop.U;
    }

    if (warmup) {
      eps = da.update(accept_prob);
      if (next_window < window_ends.size() && it >= slow_start) {
        welford.add(x);
        if (it + 1 == window_ends[next_window]) {
          metric.set(welford.regularized());
          welford.reset(d);
          ++next_window;
          eps = find_reasonable_epsilon(target, metric, x, U, g, da.final_eps(), rng);
          da.restart(eps);
        }
      }
      if (it + 1 == cfg.warmup_iters) eps = da.final_eps();
    } else {
      accept_sum += accept_prob;
      if (divergent) ++out.divergences;
      ModelState s = target.unpack(x);
      s.project();
      out.draws.push_back(std::move(s));
    }
  }
  out.accept_rate = accept_sum / cfg.sampling_iters;
  out.step_size = eps;
  return out;
}

}  // namespace detail

/// Multi-chain HMC over (theta, phi, log tau). Chain c uses the RNG stream
/// seeded with cfg.seed + c; results are merged in chain order, so output is
/// reproducible for a given seed regardless of thread scheduling.
inline PosteriorDraws run_hmc(const CountData& data, const LaplacianMatrix& lap,
                              const HyperParams& hyper, const HmcConfig& cfg,
                              const ModelState* init = nullptr) {
  cfg.validate();
  data.validate();
  hyper.validate();
  require_prior_precision(lap);
  require_shape(lap.K() == data.K(), "run_hmc: Laplacian shape mismatch");

  ModelState start = init ? *init : initial_state(data, lap, hyper, cfg.fixed);
  if (cfg.fixed.tau_q) start.tau_q = *cfg.fixed.tau_q;
  if (cfg.fixed.tau_C) start.tau_C = *cfg.fixed.tau_C;
  start.project();
  const detail::HmcTarget target(data, lap, hyper, cfg.fixed);

  std::vector<detail::ChainOutput> outs(cfg.chains);
  parallel_for(
      cfg.chains,
      [&](int c) { outs[c] = detail::run_chain(target, start, cfg, cfg.seed + c); },
      cfg.max_threads);

  PosteriorDraws pd;
  pd.K = data.K();
  pd.fixed = cfg.fixed;
  for (auto& o : outs) {
    pd.draws.push_back(std::move(o.draws));
    pd.accept_rates.push_back(o.accept_rate);
    pd.step_sizes.push_back(o.step_size);
    pd.divergence_count += o.divergences;
  }
  return pd;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

inline constexpr double kCredibleLevel = 0.95;

struct NamedValue {
  std::string name;
  double value = 0.0;
};

struct PosteriorSummary {
  SimplexVector q_mean;
  Vector q_ci_low, q_ci_high;  // equal-tailed 95%
  Vector q_variance;
  Matrix C_mean;
  Vector theta_mean;
  double tau_q_mean = 0.0, tau_C_mean = 0.0;
  std::vector<NamedValue> rhat;  // NaN entries when unavailable
  std::vector<NamedValue> ess;
  bool rhat_available = false;
  int chains = 0;
  size_t draws_used = 0;
  std::vector<double> accept_rates;
  int divergence_count = 0;

  double max_rhat() const {
    double m = 0.0;
    for (const auto& r : rhat)
      if (std::isfinite(r.value)) m = std::max(m, r.value);
    return rhat_available ? m : std::nan("");
  }
  double min_ess() const {
    double m = kPosInf;
    for (const auto& e : ess) m = std::min(m, e.value);
    return m;
  }
};

/// Posterior summary after discarding `burn_discard` draws per chain.
inline PosteriorSummary summarize(const PosteriorDraws& pd, size_t burn_discard = 0) {
  require(pd.chains() >= 1, "summarize: no chains");
  const size_t n = pd.draws_per_chain();
  require(n > burn_discard, "summarize: no draws left after discard");
  const size_t kept = n - burn_discard;
  const int K = pd.K;
  const int M = pd.chains();

  std::vector<std::vector<Vector>> qs(M);
  std::vector<std::vector<Matrix>> Cs(M);
  for (int c = 0; c < M; ++c)
    for (size_t t = burn_discard; t < n; ++t) {
      qs[c].push_back(pd.draws[c][t].q());
      Cs[c].push_back(pd.draws[c][t].C());
    }

  PosteriorSummary s;
  s.chains = M;
  s.draws_used = kept * M;
  s.accept_rates = pd.accept_rates;
  s.divergence_count = pd.divergence_count;
  const double S = static_cast<double>(s.draws_used);

  Vector qm = Vector::Zero(K);
  Vector thm = Vector::Zero(K);
  s.C_mean = Matrix::Zero(K, K);
  for (int c = 0; c < M; ++c)
    for (size_t t = 0; t < kept; ++t) {
      qm += qs[c][t];
      s.C_mean += Cs[c][t];
      thm += pd.draws[c][t + burn_discard].theta;
      s.tau_q_mean += pd.draws[c][t + burn_discard].tau_q;
      s.tau_C_mean += pd.draws[c][t + burn_discard].tau_C;
    }
  qm /= S;
  qm /= qm.sum();
  s.q_mean = SimplexVector(qm);
  s.C_mean /= S;
  s.theta_mean = thm / S;
  s.tau_q_mean /= S;
  s.tau_C_mean /= S;

  s.q_ci_low.resize(K);
  s.q_ci_high.resize(K);
  s.q_variance.resize(K);
  const double lo_p = 0.5 * (1.0 - kCredibleLevel);
  s.rhat_available = M >= 2 && kept >= 4;

  auto add_diag = [&](const std::string& name, const ChainSeries& series) {
    if (kept < 4) return;
    s.rhat.push_back({name, s.rhat_available ? split_rhat(series) : std::nan("")});
    s.ess.push_back({name, bulk_ess(series)});
  };

  for (int i = 0; i < K; ++i) {
    ChainSeries series(M);
    std::vector<double> pooled;
    for (int c = 0; c < M; ++c)
      for (size_t t = 0; t < kept; ++t) {
        series[c].push_back(qs[c][t][i]);
        pooled.push_back(qs[c][t][i]);
      }
    s.q_ci_low[i] = quantile(pooled, lo_p);
    s.q_ci_high[i] = quantile(pooled, 1.0 - lo_p);
    double v = 0.0;
    for (double x : pooled) v += (x - qm[i]) * (x - qm[i]);
    s.q_variance[i] = pooled.size() > 1 ? v / (pooled.size() - 1) : 0.0;
    add_diag("q[" + std::to_string(i) + "]", series);
  }
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      ChainSeries series(M);
      for (int c = 0; c < M; ++c)
        for (size_t t = 0; t < kept; ++t) series[c].push_back(Cs[c][t](j, i));
      add_diag("C[" + std::to_string(j) + "," + std::to_string(i) + "]", series);
    }
  if (!pd.fixed.tau_q) {
    ChainSeries series(M);
    for (int c = 0; c < M; ++c)
      for (size_t t = 0; t < kept; ++t) series[c].push_back(pd.draws[c][t + burn_discard].tau_q);
    add_diag("tau_q", series);
  }
  if (!pd.fixed.tau_C) {
    ChainSeries series(M);
    for (int c = 0; c < M; ++c)
      for (size_t t = 0; t < kept; ++t) series[c].push_back(pd.draws[c][t + burn_discard].tau_C);
    add_diag("tau_C", series);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Posterior predictive
// ---------------------------------------------------------------------------

/// Multinomial(n, p) by sequential conditional binomials.
template <class Rng>
Eigen::VectorXi sample_multinomial(int n, const Vector& p, Rng& rng) {
  const auto K = p.size();
  Eigen::VectorXi out = Eigen::VectorXi::Zero(K);
  double remaining_mass = 1.0;
  int remaining = n;
  for (Eigen::Index j = 0; j + 1 < K && remaining > 0; ++j) {
    const double pj = remaining_mass > 0.0 ? std::clamp(p[j] / remaining_mass, 0.0, 1.0) : 0.0;
    std::binomial_distribution<int> bin(remaining, pj);
    out[j] = bin(rng);
    remaining -= out[j];
    remaining_mass -= p[j];
  }
  out[K - 1] += remaining;
  return out;
}

struct PredictiveSummary {
  Vector mean;              // average sampled count per class
  Vector expected;          // n_target * mean over draws of C q
  Vector ci_low, ci_high;   // equal-tailed 95% per class
  int n_target = 0;
  size_t draws = 0;
};

/// For every retained draw, samples n~* ~ Multi(n_target, C q).
template <class Rng>
PredictiveSummary posterior_predictive(const PosteriorDraws& pd, int n_target, Rng& rng,
                                       size_t burn_discard = 0) {
  require(n_target >= 0, "posterior_predictive: n_target must be >= 0");
  require(pd.chains() >= 1 && pd.draws_per_chain() > burn_discard,
          "posterior_predictive: no draws");
  const int K = pd.K;
  std::vector<std::vector<double>> samples(K);
  PredictiveSummary out;
  out.n_target = n_target;
  out.mean = Vector::Zero(K);
  out.expected = Vector::Zero(K);
  for (const auto& chain : pd.draws)
    for (size_t t = burn_discard; t < chain.size(); ++t) {
      Vector r = chain[t].C() * chain[t].q();
      r /= r.sum();
      const Eigen::VectorXi x = sample_multinomial(n_target, r, rng);
      for (int j = 0; j < K; ++j) samples[j].push_back(x[j]);
      out.mean += x.cast<double>();
      out.expected += n_target * r;
      ++out.draws;
    }
  out.mean /= static_cast<double>(out.draws);
  out.expected /= static_cast<double>(out.draws);
  out.ci_low.resize(K);
  out.ci_high.resize(K);
  for (int j = 0; j < K; ++j) {
    out.ci_low[j] = quantile(samples[j], 0.025);
    out.ci_high[j] = quantile(samples[j], 0.975);
  }
  return out;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_INFERENCE_HPP_
