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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bayeshift/model.hpp"
#include "support/oracles.hpp"

using namespace bayeshift;

namespace {

ModelState zero_state(int K) {
  ModelState s;
  s.theta = Vector::Zero(K);
  s.phi = Matrix::Zero(K, K);
  return s;
}

}  // namespace

TEST(CountData, ValidatesInvariants) {
  Matrix S(2, 2);
  S << 9, 1, 1, 9;
  Vector t(2);
  t << 6, 4;
  const CountData d = CountData::make(S, t);
  EXPECT_EQ(d.target_total, 10.0);
  EXPECT_EQ(d.source_totals[0], 10.0);
  CountData bad = d;
  bad.target_counts[0] = -1;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = d;
  bad.source_totals[1] = 3;
  EXPECT_THROW(bad.validate(), DomainError);
  EXPECT_THROW(CountData::make(Matrix::Zero(2, 3), t), ShapeError);
}

TEST(LogJoint, EmptyDataLeavesHyperPriorsOnly) {
  const CountData d = CountData::make(Matrix::Zero(2, 2), Vector::Zero(2));
  const LaplacianMatrix lap = laplacian(path_graph(2));
  EXPECT_NEAR(log_joint(zero_state(2), d, lap, HyperParams{}), -2.0, 1e-14);
}

TEST(LogJoint, MatchesDirectSummation) {
  Matrix S = Matrix::Zero(2, 2);
  Vector t(2);
  t << 6, 4;
  const CountData d = CountData::make(S, t);
  const LaplacianMatrix lap = laplacian(path_graph(2));
  ModelState s = zero_state(2);
  s.phi << 5, -5, -5, 5;
  const double want = oracle::direct_log_joint(s, d, lap.L, 1, HyperParams{});
  EXPECT_NEAR(log_joint(s, d, lap, HyperParams{}), want, 1e-10);

  std::mt19937_64 rng(2);
  for (int K : {2, 3, 5}) {
    auto inst = oracle::random_grad_instance(K, rng);
    HyperParams h{2.0, 0.5, 1.5, 3.0};
    EXPECT_NEAR(log_joint(inst.state, inst.data, inst.lap, h),
                oracle::direct_log_joint(inst.state, inst.data, inst.lap.L, K - 1, h), 1e-8);
  }
}

TEST(LogJoint, IncreasingTauQDecreasesWhenThetaNonzero) {
  const CountData d = CountData::make(Matrix::Zero(3, 3), Vector::Zero(3));
  const LaplacianMatrix lap = laplacian(path_graph(3));
  ModelState s = zero_state(3);
  s.theta << 1.0, -0.5, -0.5;
  double prev = log_joint(s, d, lap, HyperParams{});
  for (double tau : {1.5, 2.0, 4.0, 10.0}) {
    s.tau_q = tau;
    const double cur = log_joint(s, d, lap, HyperParams{});
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(LogJoint, ZeroPredictedProbabilityIsMinusInfinity) {
  Matrix S = Matrix::Zero(2, 2);
  Vector t(2);
  t << 1, 1;
  const CountData d = CountData::make(S, t);
  ModelState s = zero_state(2);
  s.phi << 800, 800, -800, -800;  // C row 1 underflows to 0
  EXPECT_EQ(log_joint(s, d, laplacian(path_graph(2)), HyperParams{}), kNegInf);
}

TEST(GradLogJoint, MatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 50; ++t) {
    const int K = (t % 3 == 0) ? 2 : (t % 3 == 1 ? 3 : 5);
    const auto inst = oracle::random_grad_instance(K, rng);
    const auto r = oracle::finite_difference_check(inst.state, inst.data, inst.lap, HyperParams{});
    EXPECT_LT(r.worst_rel, 1e-5) << "instance " << t;
    EXPECT_GT(r.coordinates, 0);
  }
}

TEST(GradLogJoint, BlocksSumToZero) {
  std::mt19937_64 rng(1);
  const auto inst = oracle::random_grad_instance(5, rng);
  const auto g = grad_log_joint(inst.state, inst.data, inst.lap, HyperParams{});
  EXPECT_LT(std::abs(g.theta.sum()), 1e-10);
  for (int i = 0; i < 5; ++i) EXPECT_LT(std::abs(g.phi.col(i).sum()), 1e-10);
}

TEST(GradLogJoint, ThetaScoreWithoutPenalty) {
  // Likelihood-only theta score n~^T log(C softmax(theta)) by central differences.
  std::mt19937_64 rng(5);
  auto inst = oracle::random_grad_instance(3, rng);
  inst.state.tau_q = 1e-300;
  const auto g = grad_log_joint(inst.state, inst.data, inst.lap, HyperParams{});
  const Matrix C = inst.state.C();
  auto lik = [&](const Vector& th) {
    const Vector r = C * softmax(th);
    return inst.data.target_counts.dot(r.array().log().matrix());
  };
  for (int i = 0; i < 3; ++i) {
    Vector a = inst.state.theta, b = inst.state.theta;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    const double fd = (lik(a) - lik(b)) / 2e-6;
    EXPECT_NEAR(g.theta[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(FisherInformation, Examples) {
  Matrix C = Matrix::Identity(2, 2);
  Vector q(2);
  q << 0.5, 0.5;
  const Matrix F = fisher_information(C, q).F0;
  Matrix want(2, 2);
  want << 0.25, -0.25, -0.25, 0.25;
  EXPECT_LT((F - want).cwiseAbs().maxCoeff(), 1e-15);

  const Matrix F3 = fisher_information(Matrix::Identity(3, 3), Vector::Constant(3, 1.0 / 3)).F0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(F3);
  EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-12);
  EXPECT_NEAR(es.eigenvalues()[1], 1.0 / 3, 1e-12);
  EXPECT_NEAR(es.eigenvalues()[2], 1.0 / 3, 1e-12);
  EXPECT_THROW(fisher_information(2 * C, q), DomainError);
}

TEST(FisherInformation, PsdAndAnnihilatesOnes) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 1000; ++t) {
    const int K = 2 + static_cast<int>(rng() % 7);
    const Matrix C = oracle::random_confusion(K, rng);
    const Vector q = oracle::random_simplex(K, rng);
    const Matrix F = fisher_information(C, q).F0;
    EXPECT_LT((F * Vector::Ones(K)).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(F);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(SampleGmrf, MomentsMatchPseudoinverse) {
  const LaplacianMatrix lap = laplacian(path_graph(4));
  std::mt19937_64 rng(99);
  const int n = 100000;
  Vector mean = Vector::Zero(4);
  Matrix cov = Matrix::Zero(4, 4);
  for (int t = 0; t < n; ++t) {
    const Vector x = sample_gmrf(lap, 1.0, rng).values();
    EXPECT_LT(std::abs(x.sum()), 1e-12);
    mean += x;
    cov += x * x.transpose();
  }
  mean /= n;
  cov /= n;
  const Matrix ref = lap.L.completeOrthogonalDecomposition().pseudoInverse();
  for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(mean[i]), 4.0 * std::sqrt(ref(i, i) / n));
  EXPECT_LT((cov - ref).cwiseAbs().maxCoeff(), 0.05 * ref.cwiseAbs().maxCoeff());
}

TEST(SampleGmrf, PrecisionScalingHalvesStandardDeviation) {
  const LaplacianMatrix lap = laplacian(cycle_graph(5));
  std::mt19937_64 r1(3), r2(3);
  double s1 = 0, s4 = 0;
  for (int t = 0; t < 20000; ++t) {
    s1 += sample_gmrf(lap, 2.0, r1).values().squaredNorm();
    s4 += sample_gmrf(lap, 8.0, r2).values().squaredNorm();
  }
  EXPECT_NEAR(std::sqrt(s4 / s1), 0.5, 0.01);
}

TEST(SampleGmrf, IdentityFallbackCovarianceIsProjector) {
  const LaplacianMatrix lap = laplacian(identity_fallback_graph(3));
  std::mt19937_64 rng(7);
  const int n = 100000;
  Matrix cov = Matrix::Zero(3, 3);
  for (int t = 0; t < n; ++t) {
    const Vector x = sample_gmrf(lap, 1.0, rng).values();
    cov += x * x.transpose();
  }
  cov /= n;
  const Matrix P = Matrix::Identity(3, 3) - Matrix::Constant(3, 3, 1.0 / 3);
  EXPECT_LT((cov - P).cwiseAbs().maxCoeff(), 0.05 * P.cwiseAbs().maxCoeff());
}

TEST(SampleGmrf, RejectsDisconnected) {
  Matrix W = Matrix::Zero(3, 3);
  W(0, 1) = W(1, 0) = 1;
  const LaplacianMatrix lap = laplacian(graph_from_weights(W));
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_gmrf(lap, 1.0, rng), ParameterError);
}

TEST(GammaUpdate, Examples) {
  const LaplacianMatrix lap = laplacian(path_graph(3));
  const GammaParams one = gamma_update(Matrix(Matrix::Zero(3, 1)), lap, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(one.shape, 2.0);
  EXPECT_DOUBLE_EQ(one.rate, 1.0);
  const GammaParams three = gamma_update(Matrix(Matrix::Zero(3, 3)), lap, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(three.shape, 4.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  Matrix X(3, 2);
  for (int i = 0; i < 6; ++i) X.data()[i] = n(rng);
  const GammaParams g = gamma_update(X, lap, 2.0, 0.5);
  double quad = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) quad += X(a, c) * lap.L(a, b) * X(b, c);
  EXPECT_NEAR(g.rate, 0.5 + 0.5 * quad, 1e-12);
  EXPECT_DOUBLE_EQ(g.shape, 2.0 + 2.0);
}

TEST(ModelState, FromSimplexRoundTrip) {
  std::mt19937_64 rng(8);
  const Matrix C = oracle::random_confusion(4, rng);
  const Vector q = oracle::random_simplex(4, rng);
  const ModelState s = ModelState::from_simplex(q, C, 2.0, 3.0);
  s.validate();
  EXPECT_LT((s.q() - q).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.C() - C).cwiseAbs().maxCoeff(), 1e-12);
}
