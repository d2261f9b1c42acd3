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

#include "bayeshift/simplex.hpp"

using namespace bayeshift;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_interior(int K, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Vector v(K);
  for (int i = 0; i < K; ++i) v[i] = g(rng) + 1e-3;
  return v / v.sum();
}

}  // namespace

TEST(SoftmaxCentered, UniformAtZero) {
  const SimplexVector q = softmax_centered(CenteredLogOdds::zero(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxCentered, KnownThreeClassPoint) {
  const SimplexVector q = SimplexVector(softmax(vec({0.4621, -0.2310, -0.2310})));
  EXPECT_NEAR(q[0], 0.5, 1e-4);
  EXPECT_NEAR(q[1], 0.25, 1e-4);
  EXPECT_NEAR(q[2], 0.25, 1e-4);
}

TEST(SoftmaxCentered, ShiftInvariance) {
  const Vector x = vec({0.3, -1.2, 2.0, 0.1});
  const Vector a = softmax(x);
  const Vector b = softmax((x.array() + 7.3).matrix());
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SoftmaxCentered, LargeInputsStayFinite) {
  const Vector q = softmax(vec({800.0, 0.0, -800.0}));
  EXPECT_TRUE(q.allFinite());
  EXPECT_NEAR(q[0], 1.0, 1e-15);
}

TEST(CenteredLogOdds, Examples) {
  const CenteredLogOdds t0 = centered_logodds(SimplexVector::uniform(3));
  EXPECT_LT(t0.values().cwiseAbs().maxCoeff(), 1e-15);

  // log q_i minus the mean log, written out by hand.
  const double m = (std::log(0.5) + 2 * std::log(0.25)) / 3.0;
  const CenteredLogOdds t1 = centered_logodds(SimplexVector(vec({0.5, 0.25, 0.25})));
  EXPECT_NEAR(t1[0], std::log(0.5) - m, 1e-12);
  EXPECT_NEAR(t1[0], 0.4621, 1e-4);
  EXPECT_NEAR(t1[1], -0.2310, 1e-4);

  const CenteredLogOdds t2 = centered_logodds(SimplexVector(vec({0.9, 0.1})));
  EXPECT_NEAR(t2[0], 0.5 * std::log(9.0), 1e-12);
  EXPECT_NEAR(t2[1], -1.0986, 1e-4);
}

TEST(CenteredLogOdds, RejectsBoundary) {
  EXPECT_THROW(centered_logodds(SimplexVector(vec({1.0, 0.0}))), DomainError);
  EXPECT_THROW(centered_logodds(SimplexVector(vec({1.0 - 1e-13, 1e-13}))), DomainError);
}

TEST(SimplexVector, RejectsInvalid) {
  EXPECT_THROW(SimplexVector(vec({0.5, 0.6})), DomainError);
  EXPECT_THROW(SimplexVector(vec({1.5, -0.5})), DomainError);
  EXPECT_THROW(CenteredLogOdds(vec({1.0, 1.0})), DomainError);
}

TEST(CenteredLogOdds, RoundTripProperty) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 1000; ++t) {
    const int K = 2 + static_cast<int>(rng() % 9);
    const SimplexVector q(random_interior(K, rng));
    const CenteredLogOdds th = centered_logodds(q);
    EXPECT_LT(std::abs(th.values().sum()), 1e-10);
    const SimplexVector back = softmax_centered(th);
    EXPECT_LT((back.values() - q.values()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ProjectTangent, Examples) {
  EXPECT_LT(project_tangent(vec({1, 1, 1})).cwiseAbs().maxCoeff(), 1e-15);
  const Vector p = project_tangent(vec({1, 0, 0}));
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[2], -1.0 / 3.0, 1e-15);
}

TEST(ProjectTangent, Idempotent) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Vector v(6);
    for (int i = 0; i < 6; ++i) v[i] = n(rng);
    const Vector p = project_tangent(v);
    EXPECT_LT(std::abs(p.sum()), 1e-12);
    EXPECT_LT((project_tangent(p) - p).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(FisherRao, Examples) {
  const Vector a = fisher_rao_apply(SimplexVector::uniform(4), vec({1, -1, 0, 0}));
  EXPECT_NEAR(a[0], 4.0, 1e-14);
  EXPECT_NEAR(a[1], -4.0, 1e-14);
  const Vector b = fisher_rao_apply(SimplexVector(vec({0.5, 0.3, 0.2})), vec({0.1, -0.05, -0.05}));
  EXPECT_NEAR(b[0], 0.2, 1e-12);
  EXPECT_NEAR(b[1], -0.05 / 0.3, 1e-12);
  EXPECT_NEAR(b[2], -0.25, 1e-12);
}

TEST(FisherRao, DominatesEuclidean) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const SimplexVector q(random_interior(5, rng));
    Vector v(5);
    for (int i = 0; i < 5; ++i) v[i] = n(rng);
    v = project_tangent(v);
    EXPECT_GE(fisher_rao_inner(q, v, v), v.squaredNorm());
  }
}

TEST(FisherRao, Errors) {
  EXPECT_THROW(fisher_rao_apply(SimplexVector(vec({1.0, 0.0})), vec({1, -1})), DomainError);
  EXPECT_THROW(fisher_rao_apply(SimplexVector::uniform(2), vec({1, 1})), DomainError);
}

TEST(SoftmaxJacobian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Vector th(5);
    for (int i = 0; i < 5; ++i) th[i] = n(rng);
    const Matrix J = softmax_jacobian(softmax(th));
    const double h = 1e-6;
    for (int c = 0; c < 5; ++c) {
      Vector a = th, b = th;
      a[c] += h;
      b[c] -= h;
      const Vector fd = (softmax(a) - softmax(b)) / (2 * h);
      for (int r = 0; r < 5; ++r) {
        const double denom = std::max(std::abs(J(r, c)), 1e-3);
        EXPECT_LT(std::abs(fd[r] - J(r, c)) / denom, 1e-5);
      }
    }
  }
}

TEST(SimplexProjection, Examples) {
  const SimplexVector a = euclidean_simplex_projection(vec({0.2, 0.3, 0.5}));
  EXPECT_EQ(a.values(), vec({0.2, 0.3, 0.5}));
  const SimplexVector b = euclidean_simplex_projection(vec({0.6, 0.6}));
  EXPECT_NEAR(b[0], 0.5, 1e-15);
}

TEST(SimplexProjection, GridOracleTwoClasses) {
  const Vector x = vec({1.2, -0.2});
  double best = 1e300, best_p = -1;
  for (int i = 0; i <= 10000; ++i) {
    const double p = i * 1e-4;
    const double d = std::pow(p - x[0], 2) + std::pow(1 - p - x[1], 2);
    if (d < best) {
      best = d;
      best_p = p;
    }
  }
  const SimplexVector s = euclidean_simplex_projection(x);
  EXPECT_NEAR(s[0], best_p, 1e-4);
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_EQ(s[1], 0.0);
}

// Brute force: for K=3 the optimum lies in the relative interior of one face;
// enumerate faces, solve the equality-constrained problem, keep the feasible best.
TEST(SimplexProjection, FaceEnumerationOracle) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.3, 0.8);
  for (int t = 0; t < 300; ++t) {
    const Vector x = vec({n(rng), n(rng), n(rng)});
    double best = 1e300;
    Vector best_p;
    for (int mask = 1; mask < 8; ++mask) {
      int m = 0;
      double s = 0;
      for (int i = 0; i < 3; ++i)
        if (mask >> i & 1) {
          ++m;
          s += x[i];
        }
      const double shift = (s - 1.0) / m;
      Vector p = Vector::Zero(3);
      bool ok = true;
      for (int i = 0; i < 3; ++i)
        if (mask >> i & 1) {
          p[i] = x[i] - shift;
          if (p[i] < 0) ok = false;
        }
      if (!ok) continue;
      const double d = (p - x).squaredNorm();
      if (d < best) {
        best = d;
        best_p = p;
      }
    }
    const SimplexVector got = euclidean_simplex_projection(x);
    EXPECT_GE(got.values().minCoeff(), 0.0);
    EXPECT_NEAR(got.values().sum(), 1.0, 1e-12);
    EXPECT_LT((got.values() - best_p).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(SumZeroBasis, Orthonormal) {
  for (int K : {2, 3, 7}) {
    const Matrix B = sum_zero_basis(K);
    EXPECT_LT((B.transpose() * B - Matrix::Identity(K - 1, K - 1)).norm(), 1e-12);
    EXPECT_LT((Vector::Ones(K).transpose() * B).norm(), 1e-12);
  }
}

TEST(KlDivergence, Conventions) {
  EXPECT_EQ(kl_divergence(vec({1.0, 0.0}), vec({0.5, 0.5})), std::log(2.0));
  EXPECT_TRUE(std::isinf(kl_divergence(vec({0.5, 0.5}), vec({1.0, 0.0}))));
}
