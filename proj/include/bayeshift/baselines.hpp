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

// Point estimators of the target class prior: BBSE, Saerens EM, RLLS, MLLS,
// and the Saerens posterior correction.

#ifndef BAYESHIFT_BASELINES_HPP_
#define BAYESHIFT_BASELINES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "bayeshift/common.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

struct PriorEstimate {
  SimplexVector q_hat;
  std::string method;
  double residual = 0.0;  // method-specific, see each estimator
  int iterations = 0;
  bool converged = true;
  bool singular = false;  // bbse: pseudo-inverse path was taken
};

namespace detail {

inline void check_confusion(const Matrix& C, const char* who) {
  require_shape(C.rows() == C.cols() && C.rows() >= 2,
                std::string(who) + ": confusion matrix must be K x K, K >= 2");
  if (!C.allFinite() || C.minCoeff() < 0.0)
    throw DomainError(std::string(who) + ": confusion entries must be >= 0");
  const Vector colsum = C.colwise().sum().transpose();
  if ((colsum.array() - 1.0).abs().maxCoeff() > 1e-8)
    throw DomainError(std::string(who) + ": confusion columns must sum to 1");
}

inline double multinomial_loglik(const Matrix& C, const Vector& counts,
                                 const Vector& q) {
  const Vector r = C * q;
  double s = 0.0;
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    if (counts[j] <= 0.0) continue;
    if (r[j] <= 0.0) return kNegInf;
    s += counts[j] * std::log(r[j]);
  }
  return s;
}

}  // namespace detail

inline constexpr double kSingularCondition = 1e12;

/// Least-squares solution of C q = q~ projected onto the simplex.
/// residual = ||C q_hat - q~||_2.
inline PriorEstimate bbse(const Matrix& C_hat, const SimplexVector& q_tilde) {
  detail::check_confusion(C_hat, "bbse");
  require_shape(q_tilde.size() == C_hat.rows(), "bbse: size mismatch");
  Eigen::JacobiSVD<Matrix> svd(C_hat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  PriorEstimate est;
  est.method = "bbse";
  est.singular = !(smin > 0.0) || smax / smin > kSingularCondition;
  Vector x;
  if (est.singular) {
    Vector inv = Vector::Zero(sv.size());
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv[k] > smax / kSingularCondition) inv[k] = 1.0 / sv[k];
    x = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() *
        q_tilde.values();
  } else {
    x = svd.solve(q_tilde.values());
  }
  est.q_hat = euclidean_simplex_projection(x);
  est.residual = (C_hat * est.q_hat.values() - q_tilde.values()).norm();
  return est;
}

/// Saerens EM on the prediction histogram, from the uniform prior.
/// residual = ||C^T (r_hat / r) - 1||_inf over the support of q_hat.
inline PriorEstimate saerens_em(const Matrix& C_hat, const Vector& target_counts,
                                int max_iters = 10000, double tol = 1e-10) {
  detail::check_confusion(C_hat, "saerens_em");
  const int K = static_cast<int>(C_hat.rows());
  require_shape(target_counts.size() == K, "saerens_em: size mismatch");
  if (target_counts.minCoeff() < 0.0) throw DomainError("saerens_em: negative count");
  const double n = target_counts.sum();
  require(n > 0.0, "saerens_em: target counts must not all be zero");
  require(max_iters > 0 && tol > 0.0, "saerens_em: invalid iteration controls");
  const Vector r_hat = target_counts / n;

  Vector q = Vector::Constant(K, 1.0 / K);
  PriorEstimate est;
  est.method = "em";
  est.converged = false;
  for (int it = 1; it <= max_iters; ++it) {
    const Vector r = C_hat * q;
    Vector ratio(K);
    for (int j = 0; j < K; ++j) ratio[j] = r_hat[j] > 0.0 ? r_hat[j] / r[j] : 0.0;
    Vector next = (q.array() * (C_hat.transpose() * ratio).array()).matrix();
    next /= next.sum();
    const double change = (next - q).lpNorm<1>();
    q = next;
    est.iterations = it;
    if (change < tol) {
      est.converged = true;
      break;
    }
  }
  const Vector r = C_hat * q;
  Vector ratio(K);
  for (int j = 0; j < K; ++j) ratio[j] = r_hat[j] > 0.0 ? r_hat[j] / r[j] : 0.0;
  const Vector g = C_hat.transpose() * ratio;
  double res = 0.0;
  for (int i = 0; i < K; ++i)
    if (q[i] > 1e-8) res = std::max(res, std::abs(g[i] - 1.0));
  est.residual = res;
  est.q_hat = SimplexVector(q);
  return est;
}

/// Default RLLS penalty 1 / sqrt(n').
inline double rlls_default_lambda(double n_target) {
  return n_target > 0.0 ? 1.0 / std::sqrt(n_target) : 1.0;
}

/// Ridge-regularised BBSE in the importance-weight parameterisation:
///   w = argmin ||C (p . w) - q~||^2 + lambda ||w - 1||^2,  q_hat = proj(p . w).
/// residual = ||C q_hat - q~||_2.
inline PriorEstimate rlls(const Matrix& C_hat, const SimplexVector& q_tilde,
                          const SimplexVector& p_source, double lambda_reg) {
  detail::check_confusion(C_hat, "rlls");
  const int K = static_cast<int>(C_hat.rows());
  require_shape(q_tilde.size() == K && p_source.size() == K, "rlls: size mismatch");
  require(lambda_reg >= 0.0 && std::isfinite(lambda_reg),
          "rlls: lambda must be finite and >= 0");
  if (lambda_reg == 0.0) {
    PriorEstimate est = bbse(C_hat, q_tilde);
    est.method = "rlls";
    return est;
  }
  const Matrix A = C_hat * p_source.values().asDiagonal();
  Matrix normal = A.transpose() * A;
  normal.diagonal().array() += lambda_reg;
  const Vector rhs = A.transpose() * q_tilde.values() + lambda_reg * Vector::Ones(K);
  const Vector w = normal.ldlt().solve(rhs);
  PriorEstimate est;
  est.method = "rlls";
  est.q_hat = euclidean_simplex_projection(
      (p_source.values().array() * w.array()).matrix());
  est.residual = (C_hat * est.q_hat.values() - q_tilde.values()).norm();
  return est;
}

/// Maximum likelihood of n~^T log(C q) over the simplex by exponentiated
/// gradient with backtracking. residual = KKT violation
///   max_i [ q_i |g_i - 1| + max(0, g_i - 1) ],  g = C^T (r_hat / r).
inline PriorEstimate mlls(const Matrix& C_hat, const Vector& target_counts,
                          int max_iters = 10000, double tol = 1e-10) {
  detail::check_confusion(C_hat, "mlls");
  const int K = static_cast<int>(C_hat.rows());
  require_shape(target_counts.size() == K, "mlls: size mismatch");
  if (target_counts.minCoeff() < 0.0) throw DomainError("mlls: negative count");
  const double n = target_counts.sum();
  require(n > 0.0, "mlls: target counts must not all be zero");
  const Vector r_hat = target_counts / n;

  auto objective = [&](const Vector& q) {
    return detail::multinomial_loglik(C_hat, r_hat, q);
  };
  auto gradient = [&](const Vector& q) {
    const Vector r = C_hat * q;
    Vector ratio(K);
    for (int j = 0; j < K; ++j) ratio[j] = r_hat[j] > 0.0 ? r_hat[j] / r[j] : 0.0;
    return Vector(C_hat.transpose() * ratio);
  };

  Vector q = Vector::Constant(K, 1.0 / K);
  double f = objective(q);
  double step = 1.0;
  PriorEstimate est;
  est.method = "mlls";
  est.converged = false;
  for (int it = 1; it <= max_iters; ++it) {
    const Vector g = gradient(q);
    Vector next;
    double fn = kNegInf;
    double eta = std::min(step * 2.0, 1e6);
    for (int bt = 0; bt < 60; ++bt) {
      // q_i exp(eta g_i), normalised; shifting g by max keeps exp bounded.
      next = (q.array() * (eta * (g.array() - g.maxCoeff())).exp()).matrix();
      next /= next.sum();
      fn = objective(next);
      if (fn >= f) break;
      eta *= 0.5;
    }
    est.iterations = it;
    if (!(fn >= f)) {
      est.converged = true;  // no ascent possible at machine precision
      break;
    }
    step = eta;
    const double change = (next - q).lpNorm<1>();
    q = next;
    f = fn;
    if (change < tol) {
      est.converged = true;
      break;
    }
  }
  const Vector g = gradient(q);
  double kkt = 0.0;
  for (int i = 0; i < K; ++i)
    kkt = std::max(kkt, q[i] * std::abs(g[i] - 1.0) + std::max(0.0, g[i] - 1.0));
  est.residual = kkt;
  est.q_hat = SimplexVector(q);
  return est;
}

struct CorrectedPosteriors {
  Matrix posteriors;        // n x K, rows on the simplex
  std::vector<int> labels;  // argmax per row
};

/// Row-wise reweighting s_i ∝ p(i|x) q_hat_i / p_i.
inline CorrectedPosteriors saerens_correction(const Matrix& posterior_matrix,
                                              const SimplexVector& p_source,
                                              const SimplexVector& q_hat) {
  const auto K = posterior_matrix.cols();
  require_shape(p_source.size() == K && q_hat.size() == K,
                "saerens_correction: size mismatch");
  if (!p_source.interior())
    throw DomainError("saerens_correction: source prior must be interior");
  const Eigen::RowVectorXd ratio =
      (q_hat.values().array() / p_source.values().array()).matrix().transpose();
  CorrectedPosteriors out;
  out.posteriors = posterior_matrix.array().rowwise() * ratio.array();
  out.labels.resize(posterior_matrix.rows());
  for (Eigen::Index t = 0; t < posterior_matrix.rows(); ++t) {
    const double s = out.posteriors.row(t).sum();
    if (!(s > 0.0))
      throw DomainError("saerens_correction: row " + std::to_string(t) +
                        " has zero mass after reweighting");
    out.posteriors.row(t) /= s;
    Eigen::Index arg = 0;
    out.posteriors.row(t).maxCoeff(&arg);
    out.labels[t] = static_cast<int>(arg);
  }
  return out;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_BASELINES_HPP_
