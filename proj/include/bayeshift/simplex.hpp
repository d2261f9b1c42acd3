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

// Coordinates on the probability simplex: softmax / centered log-odds maps,
// tangent projection, the Fisher-Rao metric, and Euclidean projection.

#ifndef BAYESHIFT_SIMPLEX_HPP_
#define BAYESHIFT_SIMPLEX_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bayeshift/common.hpp"

namespace bayeshift {

/// Entries at or below this value are treated as lying on the boundary.
inline constexpr double kInteriorFloor = 1e-12;
inline constexpr double kSimplexSumTol = 1e-12;
inline constexpr double kCenteredSumTol = 1e-10;

/// A point of the (K-1)-simplex: nonnegative entries summing to one.
class SimplexVector {
 public:
  SimplexVector() = default;
  explicit SimplexVector(Vector values) : v_(std::move(values)) {
    if (v_.size() < 1) throw ShapeError("SimplexVector: empty");
    if (!v_.allFinite()) throw DomainError("SimplexVector: non-finite entry");
    if (v_.minCoeff() < 0.0)
      throw DomainError("SimplexVector: negative entry");
    const double s = v_.sum();
    if (std::abs(s - 1.0) > kSimplexSumTol * std::max<double>(1.0, v_.size()))
      throw DomainError("SimplexVector: entries sum to " + std::to_string(s));
  }

  static SimplexVector uniform(int K) {
    return SimplexVector(Vector::Constant(K, 1.0 / K));
  }

  const Vector& values() const { return v_; }
  int size() const { return static_cast<int>(v_.size()); }
  double operator[](int i) const { return v_[i]; }
  bool interior() const { return v_.minCoeff() > kInteriorFloor; }

 private:
  Vector v_;
};

/// A sum-zero vector of log-odds (the unconstrained simplex coordinate).
class CenteredLogOdds {
 public:
  CenteredLogOdds() = default;
  explicit CenteredLogOdds(Vector values) : v_(std::move(values)) {
    if (v_.size() < 1) throw ShapeError("CenteredLogOdds: empty");
    if (!v_.allFinite()) throw DomainError("CenteredLogOdds: non-finite entry");
    const double scale = std::max(1.0, v_.cwiseAbs().maxCoeff());
    if (std::abs(v_.sum()) > kCenteredSumTol * scale)
      throw DomainError("CenteredLogOdds: entries do not sum to zero");
  }

  static CenteredLogOdds zero(int K) { return CenteredLogOdds(Vector::Zero(K)); }

  const Vector& values() const { return v_; }
  int size() const { return static_cast<int>(v_.size()); }
  double operator[](int i) const { return v_[i]; }

 private:
  Vector v_;
};

/// Raw softmax with max-subtraction; accepts any finite vector.
inline Vector softmax(const Eigen::Ref<const Vector>& x) {
  const double m = x.maxCoeff();
  Vector e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

inline SimplexVector softmax_centered(const CenteredLogOdds& theta) {
  return SimplexVector(softmax(theta.values()));
}

inline CenteredLogOdds centered_logodds(const SimplexVector& q) {
  if (!q.interior())
    throw DomainError("centered_logodds: point is not in the simplex interior");
  Vector l = q.values().array().log().matrix();
  l.array() -= l.mean();
  return CenteredLogOdds(std::move(l));
}

/// P_H v = v - mean(v) 1.
inline Vector project_tangent(const Eigen::Ref<const Vector>& v) {
  Vector out = v;
  out.array() -= v.mean();
  return out;
}

/// diag(1/q) v, i.e. the metric tensor applied to a tangent vector.
inline Vector fisher_rao_apply(const SimplexVector& q,
                               const Eigen::Ref<const Vector>& v) {
  if (!q.interior()) throw DomainError("fisher_rao_apply: q not interior");
  require_shape(v.size() == q.size(), "fisher_rao_apply: size mismatch");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (std::abs(v.sum()) > 1e-8 * scale)
    throw DomainError("fisher_rao_apply: v is not a tangent vector");
  return (v.array() / q.values().array()).matrix();
}

/// g_q(v, w) = sum_i v_i w_i / q_i.
inline double fisher_rao_inner(const SimplexVector& q,
                               const Eigen::Ref<const Vector>& v,
                               const Eigen::Ref<const Vector>& w) {
  return fisher_rao_apply(q, v).dot(w);
}

/// diag(q) - q q^T, the Jacobian of softmax at the preimage of q.
inline Matrix softmax_jacobian(const Eigen::Ref<const Vector>& q) {
  Matrix J = -q * q.transpose();
  J.diagonal() += q;
  return J;
}

/// Nearest simplex point in the Euclidean norm (sort-and-threshold).
inline SimplexVector euclidean_simplex_projection(
    const Eigen::Ref<const Vector>& x) {
  const int K = static_cast<int>(x.size());
  require_shape(K >= 1, "euclidean_simplex_projection: empty input");
  if (!x.allFinite())
    throw DomainError("euclidean_simplex_projection: non-finite input");
  if (x.minCoeff() >= 0.0 && std::abs(x.sum() - 1.0) <= kSimplexSumTol)
    return SimplexVector(Vector(x));

  std::vector<double> u(x.data(), x.data() + K);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double threshold = 0.0;
  for (int j = 0; j < K; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / (j + 1);
    if (u[j] - t > 0.0) threshold = t;
  }
  Vector p = (x.array() - threshold).max(0.0).matrix();
  p /= p.sum();
  return SimplexVector(std::move(p));
}

/// Orthonormal K x (K-1) basis of {v : 1^T v = 0} (Helmert contrasts).
inline Matrix sum_zero_basis(int K) {
  require(K >= 2, "sum_zero_basis: K must be >= 2");
  Matrix B = Matrix::Zero(K, K - 1);
  for (int c = 0; c < K - 1; ++c) {
    const double m = c + 1;
    const double norm = std::sqrt(m * (m + 1));
    for (int r = 0; r <= c; ++r) B(r, c) = 1.0 / norm;
    B(c + 1, c) = -m / norm;
  }
  return B;
}

/// KL divergence sum p log(p/q) with 0 log 0 = 0; +inf when q_j = 0 < p_j.
inline double kl_divergence(const Eigen::Ref<const Vector>& p,
                            const Eigen::Ref<const Vector>& q) {
  require_shape(p.size() == q.size(), "kl_divergence: size mismatch");
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    if (q[j] <= 0.0) return kPosInf;
    s += p[j] * std::log(p[j] / q[j]);
  }
  return s;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_SIMPLEX_HPP_
