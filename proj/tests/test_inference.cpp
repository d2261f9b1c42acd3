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

#include <random>

#include <gtest/gtest.h>

#include "bayeshift/harness.hpp"
#include "bayeshift/inference.hpp"
#include "support/oracles.hpp"

using namespace bayeshift;

namespace {

HmcConfig small_hmc(std::uint64_t seed = 1) {
  HmcConfig h;
  h.chains = 2;
  h.warmup_iters = 300;
  h.sampling_iters = 500;
  h.seed = seed;
  h.max_threads = 1;
  return h;
}

CountData k2_identity_like(double n0, double n1, double ns) {
  Matrix S(2, 2);
  S << ns, 0, 0, ns;
  Vector t(2);
  t << n0, n1;
  return CountData::make(S, t);
}

PosteriorDraws synthetic_draws(const std::vector<std::vector<double>>& d_values) {
  PosteriorDraws pd;
  pd.K = 2;
  for (const auto& chain : d_values) {
    std::vector<ModelState> c;
    for (double d : chain) {
      ModelState s;
      s.theta = Vector(2);
      s.theta << d, -d;
      s.phi = Matrix::Zero(2, 2);
      c.push_back(s);
    }
    pd.draws.push_back(std::move(c));
  }
  return pd;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Configs, Validation) {
  HmcConfig h;
  h.target_accept = 0.5;
  EXPECT_THROW(h.validate(), ParameterError);
  h.target_accept = 0.99;
  EXPECT_THROW(h.validate(), ParameterError);
  h = HmcConfig{};
  h.chains = 0;
  EXPECT_THROW(h.validate(), ParameterError);
  NewtonConfig n;
  n.cg_tolerance = 0;
  EXPECT_THROW(n.validate(), ParameterError);
  EXPECT_THROW(FixedTau::both(-1).validate(), ParameterError);
}

TEST(InitialState, WarmStartFromBbse) {
  const CountData d = k2_identity_like(7000, 3000, 1000);
  const ModelState s = initial_state(d, laplacian(path_graph(2)), HyperParams{});
  s.validate();
  EXPECT_NEAR(s.q()[0], 0.7, 1e-12);
  EXPECT_NEAR(s.C()(0, 0), 1001.0 / 1002.0, 1e-12);
}

TEST(BlockNewton, StartAtOptimumStopsImmediately) {
  std::mt19937_64 rng(4);
  ScenarioConfig sc;
  sc.K = 4;
  sc.alpha = 1.0;
  sc.with_posteriors = false;
  sc.seed = 3;
  const SyntheticDataset ds = generate_scenario(sc);
  const LaplacianMatrix lap = laplacian(ds.graph);
  const NewtonResult first = block_newton_cg(ds.counts, lap, HyperParams{}, NewtonConfig::precise());
  ASSERT_TRUE(first.converged);
  EXPECT_LT(first.gradient_norm, 1e-6);
  const NewtonResult again =
      block_newton_cg(ds.counts, lap, HyperParams{}, NewtonConfig::precise(), &first.state);
  EXPECT_EQ(again.iterations, 1);
  EXPECT_TRUE(again.converged);
  EXPECT_LT(again.gradient_norm, 1e-6);
  const auto g = grad_log_joint(again.state, ds.counts, lap, HyperParams{});
  EXPECT_LT(g.theta.norm(), 1e-6);
}

TEST(BlockNewton, LogJointTraceIsMonotone) {
  for (int t = 0; t < 20; ++t) {
    ScenarioConfig sc;
    sc.K = 3 + t % 5;
    sc.alpha = 0.5;
    sc.n_target = 2000;
    sc.n_validation = 600;
    sc.with_posteriors = false;
    sc.seed = 100 + t;
    const SyntheticDataset ds = generate_scenario(sc);
    const NewtonResult r =
        block_newton_cg(ds.counts, laplacian(ds.graph), HyperParams{}, NewtonConfig{});
    for (size_t i = 1; i < r.log_joint_trace.size(); ++i)
      EXPECT_GE(r.log_joint_trace[i], r.log_joint_trace[i - 1]) << "instance " << t;
  }
}

TEST(BlockNewton, NonConvergenceIsFlagged) {
  ScenarioConfig sc;
  sc.K = 5;
  sc.seed = 9;
  sc.with_posteriors = false;
  const SyntheticDataset ds = generate_scenario(sc);
  NewtonConfig c = NewtonConfig::precise();
  c.max_outer_iters = 1;
  const NewtonResult r = block_newton_cg(ds.counts, laplacian(ds.graph), HyperParams{}, c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(BlockNewton, ReducesToBbseWithVanishingPrior) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ScenarioConfig sc;
    sc.K = 4;
    sc.alpha = 2.0;
    sc.classifier_quality = 0.85;
    sc.n_validation = 40000;
    sc.n_target = 40000;
    sc.with_posteriors = false;
    sc.seed = seed;
    const SyntheticDataset ds = generate_scenario(sc);
    NewtonConfig c = NewtonConfig::precise();
    c.fixed = FixedTau::both(1e-8);
    const NewtonResult r =
        block_newton_cg(ds.counts, laplacian(identity_fallback_graph(4)), HyperParams{}, c);
    const PriorEstimate b =
        bbse(ds.counts.empirical_confusion(), SimplexVector(ds.counts.target_histogram()));
    EXPECT_LT((r.state.q() - b.q_hat.values()).lpNorm<1>(), 1e-2);
  }
}

TEST(BlockNewton, RejectsDisconnectedPrior) {
  Matrix W = Matrix::Zero(3, 3);
  W(0, 1) = W(1, 0) = 1;
  const CountData d = CountData::make(Matrix::Identity(3, 3) * 10, Vector::Constant(3, 5));
  EXPECT_THROW(block_newton_cg(d, laplacian(graph_from_weights(W)), HyperParams{}, NewtonConfig{}),
               ParameterError);
}

TEST(Hmc, PriorOnlyMomentsMatchPseudoinverse) {
  const int K = 4;
  const CountData d = CountData::make(Matrix::Zero(K, K), Vector::Zero(K));
  const LaplacianMatrix lap = laplacian(path_graph(K));
  HmcConfig h;
  h.chains = 4;
  h.warmup_iters = 500;
  h.sampling_iters = 1000;
  h.fixed = FixedTau::both(1.0);
  h.max_threads = 1;
  const PosteriorDraws pd = run_hmc(d, lap, HyperParams{}, h);
  const Matrix ref = precision_pseudoinverse(lap, 1.0);
  Vector var = Vector::Zero(K), mean = Vector::Zero(K);
  size_t n = 0;
  for (const auto& c : pd.draws)
    for (const auto& s : c) {
      mean += s.theta;
      var += s.theta.cwiseAbs2();
      ++n;
    }
  mean /= n;
  var = var / n - mean.cwiseAbs2();
  for (int i = 0; i < K; ++i) EXPECT_NEAR(var[i] / ref(i, i), 1.0, 0.10) << "i=" << i;
}

TEST(Hmc, TwoClassPosteriorMatchesGrid) {
  const CountData d = k2_identity_like(7000, 3000, 100000);
  const LaplacianMatrix lap = laplacian(path_graph(2));
  const PosteriorSummary s = summarize(run_hmc(d, lap, HyperParams{}, small_hmc()));
  const double grid = oracle::k2_grid_posterior_mean(7000, 3000, 1e-3, lap.L);
  EXPECT_LT(std::abs(s.q_mean[0] - grid) * 2, 0.02);
  EXPECT_LT((s.q_mean.values() - Vector(Eigen::Vector2d(0.7, 0.3))).lpNorm<1>(), 0.02);
}

TEST(Hmc, SameSeedIsBitIdentical) {
  ScenarioConfig sc;
  sc.K = 3;
  sc.with_posteriors = false;
  sc.seed = 5;
  const SyntheticDataset ds = generate_scenario(sc);
  const LaplacianMatrix lap = laplacian(ds.graph);
  HmcConfig h = small_hmc(11);
  h.warmup_iters = 100;
  h.sampling_iters = 100;
  const PosteriorDraws a = run_hmc(ds.counts, lap, HyperParams{}, h);
  h.max_threads = 2;
  const PosteriorDraws b = run_hmc(ds.counts, lap, HyperParams{}, h);
  ASSERT_EQ(a.chains(), b.chains());
  for (int c = 0; c < a.chains(); ++c)
    for (size_t t = 0; t < a.draws_per_chain(); ++t) {
      EXPECT_EQ(a.draws[c][t].theta, b.draws[c][t].theta);
      EXPECT_EQ(a.draws[c][t].phi, b.draws[c][t].phi);
      EXPECT_EQ(a.draws[c][t].tau_q, b.draws[c][t].tau_q);
    }
}

TEST(Hmc, DrawsSatisfyStateInvariantsAndAcceptanceBand) {
  ScenarioConfig sc;
  sc.K = 6;
  sc.with_posteriors = false;
  sc.seed = 2;
  const SyntheticDataset ds = generate_scenario(sc);
  const PosteriorDraws pd = run_hmc(ds.counts, laplacian(ds.graph), HyperParams{}, small_hmc());
  for (const auto& c : pd.draws)
    for (const auto& s : c) {
      EXPECT_LT(std::abs(s.theta.sum()), 1e-8);
      EXPECT_LT(s.phi.colwise().sum().cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_GT(s.tau_q, 0.0);
      EXPECT_GT(s.tau_C, 0.0);
    }
  for (double a : pd.accept_rates) {
    EXPECT_GE(a, 0.6);
    EXPECT_LE(a, 0.95);
  }
}

TEST(Hmc, AgreesWithNewtonAtLargeN) {
  for (std::uint64_t seed : {1, 2, 3}) {
    ScenarioConfig sc;
    sc.K = 3;
    sc.alpha = 1.0;
    sc.with_posteriors = false;
    sc.seed = seed;
    const SyntheticDataset ds = generate_scenario(sc);
    const LaplacianMatrix lap = laplacian(ds.graph);
    const NewtonResult map = block_newton_cg(ds.counts, lap, HyperParams{}, NewtonConfig::precise());
    const PosteriorSummary s = summarize(run_hmc(ds.counts, lap, HyperParams{}, small_hmc(seed)));
    EXPECT_LT((map.state.q() - s.q_mean.values()).lpNorm<1>(), 0.03);
  }
}

TEST(Summarize, ConstantDrawsGiveZeroWidth) {
  const PosteriorSummary s = summarize(synthetic_draws({std::vector<double>(50, 0.3),
                                                        std::vector<double>(50, 0.3)}));
  EXPECT_EQ(s.q_ci_low[0], s.q_ci_high[0]);
  EXPECT_NEAR(s.q_variance[0], 0.0, 1e-30);
  EXPECT_NEAR(s.q_mean[0], sigmoid(0.6), 1e-12);
  EXPECT_TRUE(s.rhat_available);
}

TEST(Summarize, GaussianQuantiles) {
  std::mt19937_64 rng(6);
  const double sd = 0.2;
  std::normal_distribution<double> z(0.0, sd);
  std::vector<std::vector<double>> chains(4);
  for (auto& c : chains)
    for (int t = 0; t < 5000; ++t) c.push_back(z(rng));
  const PosteriorSummary s = summarize(synthetic_draws(chains));
  // q_0 = sigmoid(2 d) is monotone in d, so its quantiles map through.
  EXPECT_NEAR(s.q_ci_low[0], sigmoid(2 * sd * -1.959963985), 0.005);
  EXPECT_NEAR(s.q_ci_high[0], sigmoid(2 * sd * 1.959963985), 0.005);
  EXPECT_LT(s.max_rhat(), 1.01);
  EXPECT_GT(s.min_ess(), 10000);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LE(s.q_ci_low[i], s.q_mean[i]);
    EXPECT_LE(s.q_mean[i], s.q_ci_high[i]);
  }
}

TEST(Summarize, SingleChainRhatUnavailable) {
  const PosteriorSummary s = summarize(synthetic_draws({{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}}));
  EXPECT_FALSE(s.rhat_available);
  EXPECT_TRUE(std::isnan(s.max_rhat()));
}

TEST(Summarize, BurnDiscard) {
  const PosteriorSummary s = summarize(synthetic_draws({{5.0, 5.0, 0.0, 0.0, 0.0, 0.0}}), 2);
  EXPECT_EQ(s.draws_used, 4u);
  EXPECT_NEAR(s.q_mean[0], 0.5, 1e-12);
  EXPECT_THROW(summarize(synthetic_draws({{0.0}}), 1), ParameterError);
}

TEST(PosteriorPredictive, PointMass) {
  PosteriorDraws pd;
  pd.K = 3;
  ModelState s;
  s.theta = Vector(3);
  s.theta << 200, -100, -100;  // q = e_1 to double precision
  s.phi = Matrix(3, 3);
  for (int i = 0; i < 3; ++i) {
    s.phi.col(i) = Vector::Constant(3, -100);
    s.phi(i, i) = 200;
  }
  pd.draws = {{s, s, s}};
  std::mt19937_64 rng(1);
  const PredictiveSummary p = posterior_predictive(pd, 500, rng);
  EXPECT_EQ(p.mean[0], 500.0);
  EXPECT_EQ(p.mean[1], 0.0);
}

TEST(PosteriorPredictive, TowerPropertyAndBinomialMoment) {
  ScenarioConfig sc;
  sc.K = 3;
  sc.with_posteriors = false;
  const SyntheticDataset ds = generate_scenario(sc);
  HmcConfig h = small_hmc();
  h.sampling_iters = 1000;
  const PosteriorDraws pd = run_hmc(ds.counts, laplacian(ds.graph), HyperParams{}, h);
  std::mt19937_64 rng(2);
  const PredictiveSummary p = posterior_predictive(pd, 1000, rng);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(p.mean[j], p.expected[j], 4.0 * std::sqrt(1000.0 / p.draws));
    EXPECT_LE(p.ci_low[j], p.mean[j]);
    EXPECT_GE(p.ci_high[j], p.mean[j]);
  }

  PosteriorDraws one = synthetic_draws({{0.0}});
  one.draws[0][0].phi << 100, -100, -100, 100;
  std::mt19937_64 r2(3);
  const PredictiveSummary b = posterior_predictive(one, 10000, r2);
  EXPECT_LT(std::abs(b.mean[0] - 5000.0), 4.0 * std::sqrt(2500.0));
}

TEST(SampleMultinomial, SumsAndMeans) {
  std::mt19937_64 rng(8);
  Vector p(3);
  p << 0.2, 0.5, 0.3;
  Vector acc = Vector::Zero(3);
  for (int t = 0; t < 2000; ++t) {
    const Eigen::VectorXi x = sample_multinomial(100, p, rng);
    EXPECT_EQ(x.sum(), 100);
    acc += x.cast<double>();
  }
  acc /= 2000.0;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(acc[j], 100 * p[j], 0.5);
}
