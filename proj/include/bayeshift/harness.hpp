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

// Synthetic label-shift scenarios, method evaluation with bootstrap
// standard errors, and the experiments that check the asymptotic results.

#ifndef BAYESHIFT_HARNESS_HPP_
#define BAYESHIFT_HARNESS_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bayeshift/baselines.hpp"
#include "bayeshift/common.hpp"
#include "bayeshift/inference.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/model.hpp"
#include "bayeshift/parallel.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

enum class ShiftKind { dirichlet, powerlaw };

inline std::string to_string(ShiftKind k) {
  return k == ShiftKind::dirichlet ? "dirichlet" : "powerlaw";
}

inline ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "dirichlet") return ShiftKind::dirichlet;
  if (s == "powerlaw") return ShiftKind::powerlaw;
  throw ParameterError("unknown shift kind '" + s + "' (dirichlet|powerlaw)");
}

struct ScenarioConfig {
  int K = 10;
  ShiftKind shift_kind = ShiftKind::dirichlet;
  double alpha = 0.05;                 // Dirichlet scale
  bool uniform_concentration = false;  // alpha * 1 instead of alpha * (1..K)
  double b = 1.1;                      // power-law exponent
  int n_source_per_class = 0;          // 0: n_validation / K
  int n_validation = 5000;
  int n_target = 10000;
  double classifier_quality = 0.8;  // diagonal mass of the true confusion matrix
  double spill = 0.7;               // share of off-diagonal mass on graph neighbours
  int embedding_dim = 16;
  int knn_k = 0;                  // 0: 4 for K < 100 (capped at K-1), 8 otherwise
  bool expected_counts = false;   // noiseless counts n C and n' C q
  bool with_posteriors = true;    // synthesise per-instance classifier posteriors
  double posterior_concentration = 50.0;
  std::uint64_t seed = 0;

  int source_per_class() const {
    return n_source_per_class > 0 ? n_source_per_class : n_validation / K;
  }
  int default_knn_k() const {
    if (knn_k > 0) return knn_k;
    return K >= 100 ? 8 : std::min(4, K - 1);
  }
  /// Total sample size N = n' + sum of source counts.
  double total_N() const { return static_cast<double>(n_target) + K * source_per_class(); }

  /// Splits a total N into n' = N/2 and N/(2K) source examples per class.
  ScenarioConfig with_total_N(double N) const {
    ScenarioConfig c = *this;
    c.n_target = static_cast<int>(std::llround(N / 2.0));
    c.n_source_per_class = static_cast<int>(std::llround(N / (2.0 * K)));
    c.n_validation = c.n_source_per_class * K;
    return c;
  }

  void validate() const {
    if (K < 2) throw ParameterError("ScenarioConfig: K must be >= 2");
    if (!(alpha > 0.0)) throw ParameterError("ScenarioConfig: alpha must be > 0");
    if (!(b >= 0.0)) throw ParameterError("ScenarioConfig: b must be >= 0");
    if (source_per_class() < 1 || n_target < 1)
      throw ParameterError("ScenarioConfig: sample sizes must be positive");
    if (!(classifier_quality > 0.0 && classifier_quality <= 1.0))
      throw ParameterError("ScenarioConfig: classifier_quality must lie in (0, 1]");
    if (!(spill >= 0.0 && spill <= 1.0))
      throw ParameterError("ScenarioConfig: spill must lie in [0, 1]");
    if (embedding_dim < 1) throw ParameterError("ScenarioConfig: embedding_dim must be >= 1");
    if (knn_k < 0 || knn_k >= K) throw ParameterError("ScenarioConfig: knn_k out of range");
    if (!(posterior_concentration > 0.0))
      throw ParameterError("ScenarioConfig: posterior_concentration must be > 0");
  }
};

struct SyntheticDataset {
  ScenarioConfig config;
  SimplexVector true_q;
  Matrix true_C;
  SimplexVector p_source;
  CountData counts;
  std::vector<int> true_target_labels;  // empty in expected-count mode
  std::vector<int> target_predictions;
  Matrix posterior_matrix;  // n' x K, empty unless with_posteriors
  ClassEmbeddings embeddings;
  LabelGraph graph;
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

template <class Rng>
Vector sample_dirichlet(const Vector& conc, Rng& rng) {
  Vector x(conc.size());
  for (Eigen::Index i = 0; i < conc.size(); ++i) {
    std::gamma_distribution<double> g(conc[i], 1.0);
    x[i] = g(rng);
  }
  double s = x.sum();
  if (!(s > 0.0)) {  // every coordinate underflowed
    std::uniform_int_distribution<Eigen::Index> pick(0, conc.size() - 1);
    x.setZero();
    x[pick(rng)] = 1.0;
    s = 1.0;
  }
  return x / s;
}

/// Index drawn from a probability vector by inversion.
template <class Rng>
int sample_index(const Vector& cdf, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, cdf[cdf.size() - 1]);
  const double x = u(rng);
  const auto it = std::upper_bound(cdf.data(), cdf.data() + cdf.size(), x);
  return static_cast<int>(std::min<Eigen::Index>(it - cdf.data(), cdf.size() - 1));
}

inline Vector cumulative(const Vector& p) {
  Vector c(p.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) c[i] = (s += p[i]);
  return c;
}

}  // namespace detail

/// Target prior: Dirichlet(alpha (1, ..., K)) or the normalised power law
/// i^-b. The power law ignores rng.
template <class Rng>
SimplexVector sample_target_prior(const ScenarioConfig& cfg, Rng& rng) {
  cfg.validate();
  const int K = cfg.K;
  if (cfg.shift_kind == ShiftKind::powerlaw) {
    Vector q(K);
    for (int i = 0; i < K; ++i) q[i] = std::pow(static_cast<double>(i + 1), -cfg.b);
    return SimplexVector(q / q.sum());
  }
  Vector conc(K);
  for (int i = 0; i < K; ++i) conc[i] = cfg.alpha * (cfg.uniform_concentration ? 1.0 : i + 1.0);
  Vector q = detail::sample_dirichlet(conc, rng);
  q /= q.sum();
  return SimplexVector(q);
}

/// Confusion matrix with diagonal `quality`; each column spreads 1 - quality
/// as spill * (neighbour weight share) + (1 - spill) / (K - 1).
inline Matrix graph_confusion(const LabelGraph& g, double quality, double spill) {
  const int K = g.K;
  Matrix C = Matrix::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    const double wsum = g.W.col(i).sum() - g.W(i, i);
    for (int j = 0; j < K; ++j) {
      if (j == i) {
        C(j, i) = quality;
        continue;
      }
      const double share = wsum > 0.0 ? g.W(j, i) / wsum : 1.0 / (K - 1);
      C(j, i) = (1.0 - quality) * (spill * share + (1.0 - spill) / (K - 1));
    }
    C.col(i) /= C.col(i).sum();
  }
  return C;
}

template <class Rng>
ClassEmbeddings random_embeddings(int K, int dim, Rng& rng) {
  std::normal_distribution<double> normal;
  ClassEmbeddings e;
  e.vectors.resize(K, dim);
  for (int i = 0; i < K; ++i) {
    for (int d = 0; d < dim; ++d) e.vectors(i, d) = normal(rng);
    e.labels.push_back("class_" + std::to_string(i));
  }
  e.normalize_rows();
  return e;
}

/// Builds one synthetic scenario; all randomness comes from cfg.seed.
inline SyntheticDataset generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int K = cfg.K;
  SyntheticDataset ds;
  ds.config = cfg;
  ds.embeddings = random_embeddings(K, cfg.embedding_dim, rng);
  ds.graph = build_knn_graph(ds.embeddings, cfg.default_knn_k());
  ds.true_C = graph_confusion(ds.graph, cfg.classifier_quality, cfg.spill);
  ds.true_q = sample_target_prior(cfg, rng);
  ds.p_source = SimplexVector::uniform(K);

  const int ns = cfg.source_per_class();
  const int nt = cfg.n_target;
  Matrix source(K, K);
  Vector target = Vector::Zero(K);
  if (cfg.expected_counts) {
    source = ns * ds.true_C;
    target = nt * (ds.true_C * ds.true_q.values());
    target *= nt / target.sum();
    ds.counts = CountData::make(source, target);
    return ds;
  }
  for (int i = 0; i < K; ++i)
    source.col(i) = sample_multinomial(ns, ds.true_C.col(i), rng).cast<double>();

  const Vector q_cdf = detail::cumulative(ds.true_q.values());
  std::vector<Vector> col_cdf(K);
  for (int i = 0; i < K; ++i) col_cdf[i] = detail::cumulative(ds.true_C.col(i));
  ds.true_target_labels.resize(nt);
  ds.target_predictions.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const int y = detail::sample_index(q_cdf, rng);
    const int yhat = detail::sample_index(col_cdf[y], rng);
    ds.true_target_labels[t] = y;
    ds.target_predictions[t] = yhat;
    target[yhat] += 1.0;
  }
  ds.counts = CountData::make(source, target);

  if (cfg.with_posteriors) {
    // Row j: source posterior over true classes given prediction j.
    Matrix rows(K, K);
    for (int j = 0; j < K; ++j) {
      rows.row(j) = ds.true_C.row(j).cwiseProduct(ds.p_source.values().transpose());
      rows.row(j) /= rows.row(j).sum();
    }
    ds.posterior_matrix.resize(nt, K);
    for (int t = 0; t < nt; ++t) {
      const Vector conc = cfg.posterior_concentration *
                          rows.row(ds.target_predictions[t]).transpose();
      Vector p = detail::sample_dirichlet(conc.cwiseMax(1e-3), rng);
      p = p.cwiseMax(1e-300);
      ds.posterior_matrix.row(t) = (p / p.sum()).transpose();
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m = {"bbse", "em", "rlls", "mlls", "gsb3se-map",
                                             "gsb3se-hmc"};
  return m;
}

inline const std::vector<std::string>& default_benchmark_methods() {
  static const std::vector<std::string> m = {"bbse", "em", "rlls", "mlls", "gsb3se-hmc"};
  return m;
}

inline bool is_known_method(const std::string& m) {
  for (const auto& x : all_methods())
    if (x == m) return true;
  return false;
}

struct EvalConfig {
  HmcConfig hmc;
  NewtonConfig newton;
  HyperParams hyper;
  double rlls_lambda = -1.0;  // < 0: 1 / sqrt(n')
  int baseline_max_iters = 10000;
  double baseline_tol = 1e-10;
  int bootstrap = 1000;
  std::uint64_t bootstrap_seed = 0;

  EvalConfig() {
    newton.outer_rel_tol = 1e-10;
    newton.max_cg_iters = 50;
    newton.cg_tolerance = 1e-8;
    newton.max_outer_iters = 500;
  }
  void validate() const {
    hmc.validate();
    newton.validate();
    hyper.validate();
    if (bootstrap < 0) throw ParameterError("EvalConfig: bootstrap must be >= 0");
  }
};

/// Output of a single estimator run.
struct MethodOutput {
  SimplexVector q_hat;
  std::optional<PosteriorSummary> summary;
  std::optional<PosteriorDraws> draws;
  std::optional<ModelState> map_state;
};

/// Runs one method on the given counts.
inline MethodOutput run_method(const std::string& method, const CountData& counts,
                               const LaplacianMatrix& lap, const EvalConfig& cfg,
                               const ModelState* warm = nullptr) {
  MethodOutput out;
  const Matrix C_hat = counts.empirical_confusion(0.0);
  if (method == "bbse") {
    out.q_hat = bbse(C_hat, SimplexVector(counts.target_histogram())).q_hat;
  } else if (method == "em") {
    out.q_hat = saerens_em(C_hat, counts.target_counts, cfg.baseline_max_iters,
                           cfg.baseline_tol).q_hat;
  } else if (method == "rlls") {
    const double lambda =
        cfg.rlls_lambda >= 0.0 ? cfg.rlls_lambda : rlls_default_lambda(counts.target_total);
    const SimplexVector p(counts.source_totals / counts.source_totals.sum());
    out.q_hat = rlls(C_hat, SimplexVector(counts.target_histogram()), p, lambda).q_hat;
  } else if (method == "mlls") {
    out.q_hat = mlls(C_hat, counts.target_counts, cfg.baseline_max_iters,
                     cfg.baseline_tol).q_hat;
  } else if (method == "gsb3se-map") {
    const NewtonResult r = block_newton_cg(counts, lap, cfg.hyper, cfg.newton, warm);
    out.q_hat = SimplexVector(r.state.q());
    out.map_state = r.state;
  } else if (method == "gsb3se-hmc") {
    PosteriorDraws d = run_hmc(counts, lap, cfg.hyper, cfg.hmc);
    out.summary = summarize(d);
    out.q_hat = out.summary->q_mean;
    out.draws = std::move(d);
  } else {
    throw ParameterError("unknown method '" + method + "'");
  }
  return out;
}

struct MethodResult {
  std::string method;
  bool ok = false;
  std::string error;
  Vector q_hat;
  double l1_error = std::nan("");
  double downstream_accuracy = std::nan("");  // NaN without posteriors
  double runtime_ms = 0.0;
  double l1_se = std::nan("");
  double accuracy_se = std::nan("");
  int bootstrap_used = 0;
  // GS-B3SE posterior extras.
  std::vector<int> ci_covers;  // 1 when q_i lies in its 95% interval
  Vector ci_low, ci_high, ci_width;
  double max_rhat = std::nan("");
  double min_ess = std::nan("");
  std::vector<double> accept_rates;
  int divergences = 0;
};

struct EvalReport {
  Vector true_q;
  int K = 0;
  int bootstrap = 0;
  std::vector<MethodResult> methods;

  const MethodResult* find(const std::string& m) const {
    for (const auto& r : methods)
      if (r.method == m) return &r;
    return nullptr;
  }
};

inline double l1_distance(const Vector& a, const Vector& b) { return (a - b).lpNorm<1>(); }

inline double downstream_accuracy(const Matrix& posteriors, const SimplexVector& p_source,
                                  const SimplexVector& q_hat, const std::vector<int>& labels,
                                  const std::vector<int>* rows = nullptr) {
  if (posteriors.rows() == 0) return std::nan("");
  Vector q = q_hat.values().cwiseMax(1e-300);
  q /= q.sum();
  long hits = 0;
  long total = 0;
  const Eigen::RowVectorXd ratio =
      (q.array() / p_source.values().array()).matrix().transpose();
  auto score = [&](size_t t) {
    Eigen::Index arg = 0;
    (posteriors.row(t).array() * ratio.array()).maxCoeff(&arg);
    hits += (arg == labels[t]);
    ++total;
  };
  if (rows) {
    for (int t : *rows) score(static_cast<size_t>(t));
  } else {
    for (size_t t = 0; t < labels.size(); ++t) score(t);
  }
  return total ? static_cast<double>(hits) / total : std::nan("");
}

/// Standard deviation of `stat` over B index resamples of {0..n-1}.
template <class Rng>
double bootstrap_se(int n, int B, const std::function<double(const std::vector<int>&)>& stat,
                    Rng& rng) {
  if (B < 2 || n < 1) return std::nan("");
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<double> v;
  v.reserve(B);
  std::vector<int> idx(n);
  for (int b = 0; b < B; ++b) {
    for (int& i : idx) i = pick(rng);
    v.push_back(stat(idx));
  }
  double m = 0.0;
  for (double x : v) m += x;
  m /= B;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (B - 1));
}

/// Bootstrap SE of the mean of paired differences (resampling pairs).
template <class Rng>
double paired_bootstrap_se(const std::vector<double>& diffs, int B, Rng& rng) {
  const int n = static_cast<int>(diffs.size());
  return bootstrap_se(
      n, B,
      [&](const std::vector<int>& idx) {
        double s = 0.0;
        for (int i : idx) s += diffs[i];
        return s / idx.size();
      },
      rng);
}

/// Runs every method on the same CountData and, when target instances are
/// available, estimates standard errors from `cfg.bootstrap` resamples of
/// the target set. Point methods and GS-B3SE MAP are re-run per resample;
/// GS-B3SE HMC draws are re-summarised (reweighted) without re-sampling.
inline EvalReport evaluate_methods(const SyntheticDataset& ds,
                                   const std::vector<std::string>& methods,
                                   const LaplacianMatrix& lap, const EvalConfig& cfg) {
  cfg.validate();
  for (const auto& m : methods)
    if (!is_known_method(m)) throw ParameterError("unknown method '" + m + "'");
  EvalReport rep;
  rep.true_q = ds.true_q.values();
  rep.K = ds.counts.K();
  const bool can_bootstrap = cfg.bootstrap >= 2 && !ds.target_predictions.empty();
  rep.bootstrap = can_bootstrap ? cfg.bootstrap : 0;
  const bool has_post = ds.posterior_matrix.rows() > 0;
  const int nt = static_cast<int>(ds.target_predictions.size());

  for (size_t mi = 0; mi < methods.size(); ++mi) {
    const std::string& m = methods[mi];
    MethodResult res;
    res.method = m;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const MethodOutput out = run_method(m, ds.counts, lap, cfg);
      res.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0).count();
      res.q_hat = out.q_hat.values();
      res.l1_error = l1_distance(res.q_hat, rep.true_q);
      if (has_post)
        res.downstream_accuracy = downstream_accuracy(ds.posterior_matrix, ds.p_source,
                                                      out.q_hat, ds.true_target_labels);
      if (out.summary) {
        const PosteriorSummary& s = *out.summary;
        res.ci_low = s.q_ci_low;
        res.ci_high = s.q_ci_high;
        res.ci_width = s.q_ci_high - s.q_ci_low;
        for (int i = 0; i < rep.K; ++i)
          res.ci_covers.push_back(rep.true_q[i] >= s.q_ci_low[i] &&
                                  rep.true_q[i] <= s.q_ci_high[i]);
        res.max_rhat = s.max_rhat();
        res.min_ess = s.min_ess();
        res.accept_rates = s.accept_rates;
        res.divergences = s.divergence_count;
      }

      if (can_bootstrap) {
        std::mt19937_64 rng(cfg.bootstrap_seed * 1000003ULL + mi);
        std::uniform_int_distribution<int> pick(0, nt - 1);
        // Posterior draws are re-summarised under each resample by first-order
        // likelihood reweighting: E*[q] ~ E[q] + Cov(q, dn^T log(C q)).
        std::vector<Vector> pooled_q, pooled_logr;
        Vector q_bar = Vector::Zero(rep.K);
        Vector logr_bar = Vector::Zero(rep.K);
        if (out.draws) {
          for (const auto& chain : out.draws->draws)
            for (const auto& st : chain) {
              pooled_q.push_back(st.q());
              pooled_logr.push_back((st.C() * pooled_q.back()).array().log().matrix());
              q_bar += pooled_q.back();
              logr_bar += pooled_logr.back();
            }
          q_bar /= static_cast<double>(pooled_q.size());
          logr_bar /= static_cast<double>(pooled_q.size());
        }
        std::vector<double> l1s, accs;
        std::vector<int> idx(nt);
        for (int bi = 0; bi < cfg.bootstrap; ++bi) {
          for (int& i : idx) i = pick(rng);
          CountData cb = ds.counts;
          cb.target_counts.setZero();
          for (int i : idx) cb.target_counts[ds.target_predictions[i]] += 1.0;
          Vector q_b;
          if (out.draws) {
            const Vector dn = cb.target_counts - ds.counts.target_counts;
            Vector shift = Vector::Zero(rep.K);
            for (size_t k = 0; k < pooled_q.size(); ++k)
              shift += (pooled_q[k] - q_bar) * dn.dot(pooled_logr[k] - logr_bar);
            q_b = euclidean_simplex_projection(
                      q_bar + shift / static_cast<double>(pooled_q.size()))
                      .values();
          } else {
            const ModelState* warm = out.map_state ? &*out.map_state : nullptr;
            q_b = run_method(m, cb, lap, cfg, warm).q_hat.values();
          }
          q_b /= q_b.sum();
          l1s.push_back(l1_distance(q_b, rep.true_q));
          if (has_post)
            accs.push_back(downstream_accuracy(ds.posterior_matrix, ds.p_source,
                                               SimplexVector(q_b), ds.true_target_labels,
                                               &idx));
        }
        auto sd = [](const std::vector<double>& v) {
          if (v.size() < 2) return std::nan("");
          double mu = 0.0;
          for (double x : v) mu += x;
          mu /= v.size();
          double s = 0.0;
          for (double x : v) s += (x - mu) * (x - mu);
          return std::sqrt(s / (v.size() - 1));
        };
        res.l1_se = sd(l1s);
        res.accuracy_se = has_post ? sd(accs) : std::nan("");
        res.bootstrap_used = cfg.bootstrap;
      }
      res.ok = true;
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
    rep.methods.push_back(std::move(res));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Theory experiments
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  HmcConfig hmc;
  HyperParams hyper;
  int max_threads = 0;  // parallelism over seeds

  ExperimentConfig() {
    hmc.chains = 4;
    hmc.warmup_iters = 500;
    hmc.sampling_iters = 1000;
    hmc.max_threads = 1;
  }
};

/// Default base scenario for the asymptotic experiments: K = 5 with an
/// interior Dirichlet(1 (1..K)) target prior.
inline ScenarioConfig theory_base_scenario() {
  ScenarioConfig c;
  c.K = 5;
  c.shift_kind = ShiftKind::dirichlet;
  c.alpha = 1.0;
  c.classifier_quality = 0.8;
  c.with_posteriors = false;
  c.seed = 1;
  return c;
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// E_posterior ||q - q0||^2 estimated from the draws.
inline double posterior_expected_sq_error(const PosteriorDraws& pd, const Vector& q0) {
  double s = 0.0;
  size_t n = 0;
  for (const auto& chain : pd.draws)
    for (const auto& st : chain) {
      s += (st.q() - q0).squaredNorm();
      ++n;
    }
  return s / static_cast<double>(n);
}

struct ContractionResult {
  std::vector<double> N_grid;
  std::vector<std::vector<double>> errors;  // [grid][seed] ||q_postmean - q0||_2
  std::vector<double> mean_error;
  double slope = std::nan("");
};

inline ContractionResult contraction_experiment(const ScenarioConfig& base,
                                                const std::vector<double>& N_grid, int seeds,
                                                const ExperimentConfig& ex = {}) {
  require(N_grid.size() >= 3, "contraction_experiment: need >= 3 grid points");
  require(*std::max_element(N_grid.begin(), N_grid.end()) >=
              100.0 * *std::min_element(N_grid.begin(), N_grid.end()),
          "contraction_experiment: grid must span >= 2 decades");
  require(seeds >= 1, "contraction_experiment: seeds must be >= 1");
  ContractionResult res;
  res.N_grid = N_grid;
  res.errors.assign(N_grid.size(), std::vector<double>(seeds));
  const int jobs = static_cast<int>(N_grid.size()) * seeds;
  parallel_for(
      jobs,
      [&](int job) {
        const int gi = job / seeds;
        const int s = job % seeds;
        ScenarioConfig c = base.with_total_N(N_grid[gi]);
        c.with_posteriors = false;
        c.seed = base.seed + static_cast<std::uint64_t>(s);
        const SyntheticDataset ds = generate_scenario(c);
        const LaplacianMatrix lap = laplacian(ds.graph);
        HmcConfig h = ex.hmc;
        h.seed = ex.hmc.seed + 7919ULL * s + gi;
        const PosteriorSummary sum = summarize(run_hmc(ds.counts, lap, ex.hyper, h));
        res.errors[gi][s] = (sum.q_mean.values() - ds.true_q.values()).norm();
      },
      ex.max_threads);
  for (const auto& row : res.errors) {
    double m = 0.0;
    for (double e : row) m += e;
    res.mean_error.push_back(m / row.size());
  }
  res.slope = loglog_slope(res.N_grid, res.mean_error);
  return res;
}

struct VarianceResult {
  std::vector<std::string> graph_names;
  std::vector<double> lambda2;
  std::vector<std::vector<double>> variance;  // [graph][seed] mean_i Var(q_i)
  std::vector<double> mean_variance;
  double N = 0.0;
  int monotone_seeds = 0;  // seeds where variance is non-increasing along the family
  int comparisons = 0;
  int inversions = 0;
  double fitted_C = 0.0;  // max over seeds of Var * lambda2 * N on the densest graph
  bool bound_dominates = false;
  double monotone_fraction() const {
    return variance.empty() || variance[0].empty()
               ? 0.0
               : static_cast<double>(monotone_seeds) / variance[0].size();
  }
};

/// Posterior variance of q under each graph of a family ordered by
/// increasing lambda2; every graph sees the same data and HMC seed.
inline VarianceResult variance_connectivity_experiment(
    const ScenarioConfig& cfg, const std::vector<std::pair<std::string, LabelGraph>>& family,
    int seeds, const ExperimentConfig& ex = {}) {
  require(family.size() >= 2, "variance_connectivity_experiment: need >= 2 graphs");
  require(seeds >= 1, "variance_connectivity_experiment: seeds must be >= 1");
  VarianceResult res;
  std::vector<LaplacianMatrix> laps;
  for (const auto& [name, g] : family) {
    require_shape(g.K == cfg.K, "variance_connectivity_experiment: graph size mismatch");
    laps.push_back(laplacian(g));
    require_prior_precision(laps.back());
    if (!res.lambda2.empty() && !(laps.back().lambda2 > res.lambda2.back()))
      throw ParameterError("variance_connectivity_experiment: lambda2 must increase");
    res.graph_names.push_back(name);
    res.lambda2.push_back(laps.back().lambda2);
  }
  res.N = cfg.total_N();
  const int G = static_cast<int>(family.size());
  res.variance.assign(G, std::vector<double>(seeds));
  parallel_for(
      seeds,
      [&](int s) {
        ScenarioConfig c = cfg;
        c.with_posteriors = false;
        c.seed = cfg.seed + static_cast<std::uint64_t>(s);
        const SyntheticDataset ds = generate_scenario(c);
        for (int g = 0; g < G; ++g) {
          HmcConfig h = ex.hmc;
          h.seed = ex.hmc.seed + 104729ULL * s;
          const PosteriorSummary sum = summarize(run_hmc(ds.counts, laps[g], ex.hyper, h));
          res.variance[g][s] = sum.q_variance.mean();
        }
      },
      ex.max_threads);
  for (int g = 0; g < G; ++g) {
    double m = 0.0;
    for (double v : res.variance[g]) m += v;
    res.mean_variance.push_back(m / seeds);
  }
  for (int s = 0; s < seeds; ++s) {
    bool mono = true;
    for (int g = 1; g < G; ++g) {
      ++res.comparisons;
      if (res.variance[g][s] > res.variance[g - 1][s]) {
        ++res.inversions;
        mono = false;
      }
    }
    res.monotone_seeds += mono;
  }
  for (double v : res.variance[G - 1])
    res.fitted_C = std::max(res.fitted_C, v * res.lambda2[G - 1] * res.N);
  res.bound_dominates = true;
  for (int g = 0; g < G; ++g)
    for (double v : res.variance[g])
      if (v > (1.0 + 1e-12) * res.fitted_C / (res.lambda2[g] * res.N)) res.bound_dominates = false;
  return res;
}

/// tau_q / (N lambda_min(F0) + tau_q lambda2(L)) * ||(L - L0) theta0||_2,
/// with lambda_min taken on the sum-zero subspace.
inline double misspecification_bound(double tau_q, double N, const Matrix& F0,
                                     const LaplacianMatrix& L, const LaplacianMatrix& L0,
                                     const Vector& theta0) {
  const Matrix B = sum_zero_basis(static_cast<int>(F0.rows()));
  const Matrix R = B.transpose() * F0 * B;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + R.transpose()), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()[0];
  return tau_q / (N * lmin + tau_q * L.lambda2) * ((L.L - L0.L) * theta0).norm();
}

struct RobustnessResult {
  std::vector<double> N_grid;
  std::vector<std::vector<double>> seed_errors;  // [grid][seed] ||theta_bar_s - theta0||
  std::vector<double> bias;       // ||mean_s theta_bar_s - theta0||
  std::vector<double> bias_se;    // Monte Carlo SE of the seed mean
  std::vector<double> bound;
  bool zero_bias_path = false;  // L_wrong equals L_true: bound term is 0
  int decreasing_seeds = 0;
  int seeds = 0;
  bool below_bound = false;
  double decreasing_fraction() const {
    return seeds ? static_cast<double>(decreasing_seeds) / seeds : 0.0;
  }
};

/// Posterior-mean bias of theta when the prior uses L_wrong while the
/// data come from truth theta0, compared with the misspecification bound.
/// tau_q is held at ex.hmc.fixed.tau_q (1 when unset); tau_C is sampled.
inline RobustnessResult robustness_experiment(const ScenarioConfig& cfg,
                                              const LabelGraph& true_graph,
                                              const LabelGraph& wrong_graph,
                                              const std::vector<double>& N_grid, int seeds,
                                              const ExperimentConfig& ex_in = {},
                                              const std::optional<SimplexVector>& truth = {}) {
  require(N_grid.size() >= 2, "robustness_experiment: need >= 2 grid points");
  require(seeds >= 1, "robustness_experiment: seeds must be >= 1");
  ExperimentConfig ex = ex_in;
  if (!ex.hmc.fixed.tau_q) ex.hmc.fixed.tau_q = 1.0;
  const double tau_q = *ex.hmc.fixed.tau_q;
  const LaplacianMatrix L0 = laplacian(true_graph);
  const LaplacianMatrix Lw = laplacian(wrong_graph);
  require_prior_precision(L0);
  require_prior_precision(Lw);

  RobustnessResult res;
  res.N_grid = N_grid;
  res.seeds = seeds;
  res.zero_bias_path = (L0.L - Lw.L).cwiseAbs().maxCoeff() == 0.0;
  const int G = static_cast<int>(N_grid.size());
  const int K = cfg.K;
  std::vector<std::vector<Vector>> theta_bar(G, std::vector<Vector>(seeds));
  // Truth shared across seeds so that the seed average estimates the bias.
  std::mt19937_64 truth_rng(cfg.seed);
  const SimplexVector q0 = truth ? *truth : sample_target_prior(cfg, truth_rng);
  const Vector theta0 = centered_logodds(q0).values();

  parallel_for(
      G * seeds,
      [&](int job) {
        const int gi = job / seeds;
        const int s = job % seeds;
        ScenarioConfig c = cfg.with_total_N(N_grid[gi]);
        c.with_posteriors = false;
        c.seed = cfg.seed + 1 + static_cast<std::uint64_t>(s) * 31ULL + gi;
        std::mt19937_64 rng(c.seed);
        const Matrix C0 = graph_confusion(true_graph, c.classifier_quality, c.spill);
        Matrix source(K, K);
        for (int i = 0; i < K; ++i)
          source.col(i) = sample_multinomial(c.source_per_class(), C0.col(i), rng).cast<double>();
        const Vector target =
            sample_multinomial(c.n_target, C0 * q0.values(), rng).cast<double>();
        const CountData data = CountData::make(source, target);
        HmcConfig h = ex.hmc;
        h.seed = ex.hmc.seed + 15485863ULL * s + gi;
        const PosteriorSummary sum = summarize(run_hmc(data, Lw, ex.hyper, h));
        Vector tb = sum.theta_mean;
        tb.array() -= tb.mean();
        theta_bar[gi][s] = tb;
      },
      ex.max_threads);

  const Matrix C0 = graph_confusion(true_graph, cfg.classifier_quality, cfg.spill);
  const Matrix F0 = fisher_information(C0, q0.values()).F0;
  res.seed_errors.assign(G, std::vector<double>(seeds));
  res.below_bound = true;
  for (int gi = 0; gi < G; ++gi) {
    Vector mean = Vector::Zero(K);
    for (int s = 0; s < seeds; ++s) {
      mean += theta_bar[gi][s];
      res.seed_errors[gi][s] = (theta_bar[gi][s] - theta0).norm();
    }
    mean /= seeds;
    double var_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      double v = 0.0;
      for (int s = 0; s < seeds; ++s) v += std::pow(theta_bar[gi][s][k] - mean[k], 2);
      var_sum += seeds > 1 ? v / (seeds - 1) : 0.0;
    }
    res.bias.push_back((mean - theta0).norm());
    res.bias_se.push_back(std::sqrt(var_sum / seeds));
    const double N = cfg.with_total_N(N_grid[gi]).n_target;
    res.bound.push_back(misspecification_bound(tau_q, N, F0, Lw, L0, theta0));
    if (res.bias.back() > res.bound.back() + 3.0 * res.bias_se.back()) res.below_bound = false;
  }
  for (int s = 0; s < seeds; ++s) {
    bool dec = true;
    for (int gi = 1; gi < G; ++gi)
      if (!(res.seed_errors[gi][s] < res.seed_errors[gi - 1][s])) dec = false;
    res.decreasing_seeds += dec;
  }
  return res;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_HARNESS_HPP_
