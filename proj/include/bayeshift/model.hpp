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

// The graph-smoothed hierarchical label-shift model.
//
//   tau_q ~ Gamma(a_q, b_q),  theta | tau_q ~ N(0, (tau_q L)^+),  q = softmax(theta)
//   tau_C ~ Gamma(a_C, b_C),  phi_i | tau_C ~ N(0, (tau_C L)^+),  C[:, i] = softmax(phi_i)
//   n^S_i | C ~ Multi(n^S_i, C[:, i]),   n~ | C, q ~ Multi(n', C q)
//
// Densities are placed on the centered log-odds coordinates (theta, phi).
// Multinomial coefficients and the constant parts of the Gaussian
// normalisers are dropped; the tau-dependent normaliser (rank/2) log tau is
// kept because hyper-parameter inference depends on it.

#ifndef BAYESHIFT_MODEL_HPP_
#define BAYESHIFT_MODEL_HPP_

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "bayeshift/common.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

/// Source confusion counts and target prediction counts.
///
/// source_counts(j, i) counts predictions j among validation examples of
/// true class i. Counts are stored as doubles so that expected-count data
/// (fractional) can be represented; file readers enforce integrality.
struct CountData {
  Matrix source_counts;  // K x K
  Vector source_totals;  // n^S_i, column sums
  Vector target_counts;  // n~
  double target_total = 0.0;

  int K() const { return static_cast<int>(target_counts.size()); }
  double total() const { return target_total + source_totals.sum(); }

  static CountData make(Matrix source, Vector target) {
    CountData d;
    d.source_counts = std::move(source);
    d.target_counts = std::move(target);
    d.source_totals = d.source_counts.colwise().sum().transpose();
    d.target_total = d.target_counts.sum();
    d.validate();
    return d;
  }

  void validate() const {
    const auto K = target_counts.size();
    if (K < 2) throw ParameterError("CountData: need K >= 2");
    require_shape(source_counts.rows() == K && source_counts.cols() == K,
                  "CountData: source_counts must be K x K");
    require_shape(source_totals.size() == K, "CountData: source_totals size");
    if (!source_counts.allFinite() || !target_counts.allFinite())
      throw DomainError("CountData: non-finite count");
    if (source_counts.minCoeff() < 0.0 || target_counts.minCoeff() < 0.0)
      throw DomainError("CountData: negative count");
    const Vector colsum = source_counts.colwise().sum().transpose();
    if ((colsum - source_totals).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + colsum.sum()))
      throw DomainError("CountData: column sums differ from source_totals");
    if (std::abs(target_counts.sum() - target_total) > 1e-9 * (1.0 + target_total))
      throw DomainError("CountData: target counts do not sum to target_total");
  }

  /// Column-normalised empirical confusion matrix with additive smoothing.
  Matrix empirical_confusion(double pseudo_count = 0.0) const {
    const int k = K();
    Matrix C(k, k);
    for (int i = 0; i < k; ++i) {
      const double tot = source_totals[i] + k * pseudo_count;
      if (tot <= 0.0) {
        C.col(i).setConstant(1.0 / k);
      } else {
        C.col(i) = (source_counts.col(i).array() + pseudo_count).matrix() / tot;
      }
    }
    return C;
  }

  /// Target prediction histogram n~ / n' (uniform when n' = 0).
  Vector target_histogram() const {
    if (target_total <= 0.0) return Vector::Constant(K(), 1.0 / K());
    return target_counts / target_total;
  }
};

/// Gamma shape/rate hyper-parameters for tau_q and tau_C.
struct HyperParams {
  double a_q = 1.0, b_q = 1.0, a_C = 1.0, b_C = 1.0;

  void validate() const {
    if (!(a_q > 0 && b_q > 0 && a_C > 0 && b_C > 0))
      throw ParameterError("HyperParams: all Gamma parameters must be > 0");
  }
};

/// A point of the parameter space: theta, phi (column i = phi_i), tau_q, tau_C.
struct ModelState {
  Vector theta;
  Matrix phi;
  double tau_q = 1.0;
  double tau_C = 1.0;

  int K() const { return static_cast<int>(theta.size()); }

  Vector q() const { return softmax(theta); }

  Matrix C() const {
    Matrix out(phi.rows(), phi.cols());
    for (Eigen::Index i = 0; i < phi.cols(); ++i) out.col(i) = softmax(phi.col(i));
    return out;
  }

  CenteredLogOdds theta_logodds() const { return CenteredLogOdds(theta); }

  /// Re-centres theta and every phi column onto the sum-zero subspace.
  void project() {
    theta.array() -= theta.mean();
    for (Eigen::Index i = 0; i < phi.cols(); ++i)
      phi.col(i).array() -= phi.col(i).mean();
  }

  void validate(double tol = kCenteredSumTol) const {
    const auto K = theta.size();
    require_shape(phi.rows() == K && phi.cols() == K, "ModelState: phi must be K x K");
    if (!theta.allFinite() || !phi.allFinite())
      throw DomainError("ModelState: non-finite entry");
    if (std::abs(theta.sum()) > tol * std::max(1.0, theta.cwiseAbs().maxCoeff()))
      throw DomainError("ModelState: theta does not sum to zero");
    for (Eigen::Index i = 0; i < K; ++i)
      if (std::abs(phi.col(i).sum()) > tol * std::max(1.0, phi.col(i).cwiseAbs().maxCoeff()))
        throw DomainError("ModelState: phi column does not sum to zero");
    if (!(tau_q > 0.0) || !(tau_C > 0.0))
      throw DomainError("ModelState: tau values must be positive");
  }

  static ModelState from_simplex(const Vector& q, const Matrix& C, double tau_q,
                                 double tau_C) {
    ModelState s;
    s.theta = centered_logodds(SimplexVector(q)).values();
    s.phi.resize(C.rows(), C.cols());
    for (Eigen::Index i = 0; i < C.cols(); ++i)
      s.phi.col(i) = centered_logodds(SimplexVector(C.col(i))).values();
    s.tau_q = tau_q;
    s.tau_C = tau_C;
    return s;
  }
};

/// Gradient of log_joint; tau components are d/d(log tau), Jacobian excluded.
struct ModelGradient {
  Vector theta;
  Matrix phi;
  double log_tau_q = 0.0;
  double log_tau_C = 0.0;

  double squared_norm() const {
    return theta.squaredNorm() + phi.squaredNorm() + log_tau_q * log_tau_q +
           log_tau_C * log_tau_C;
  }
};

/// F0 = diag(r) - r r^T with r = C q.
struct FisherInfo {
  Matrix F0;
};

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
  double mean() const { return shape / rate; }
  /// Mode of the density; shape <= 1 yields the boundary point 0.
  double mode() const { return shape > 1.0 ? (shape - 1.0) / rate : 0.0; }
};

inline double gamma_log_density(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

namespace detail {

inline void check_model_shapes(const ModelState& s, const CountData& d,
                               const LaplacianMatrix& lap) {
  const int K = d.K();
  require_shape(s.theta.size() == K && s.phi.rows() == K && s.phi.cols() == K,
                "model: state shape does not match data");
  require_shape(lap.K() == K, "model: Laplacian shape does not match data");
}

/// Column-wise log-softmax of phi.
inline Matrix log_softmax_columns(const Matrix& phi) {
  Matrix out(phi.rows(), phi.cols());
  for (Eigen::Index i = 0; i < phi.cols(); ++i) {
    const double m = phi.col(i).maxCoeff();
    const double lse = m + std::log((phi.col(i).array() - m).exp().sum());
    out.col(i) = (phi.col(i).array() - lse).matrix();
  }
  return out;
}

}  // namespace detail

/// Log-joint density (up to a state-independent constant) and optionally
/// its gradient. Returns -inf when (C q)_j = 0 for some j with n~_j > 0.
inline double log_joint_impl(const ModelState& s, const CountData& d,
                             const LaplacianMatrix& lap, const HyperParams& h,
                             ModelGradient* grad) {
  detail::check_model_shapes(s, d, lap);
  const int K = d.K();
  const int rank = lap.rank();

  const Matrix logC = detail::log_softmax_columns(s.phi);
  // std::exp underflows to exactly 0; Eigen's packet exp clamps at about 1e-308.
  const Matrix C = logC.unaryExpr([](double x) { return std::exp(x); });
  const Vector q = softmax(s.theta);
  const Vector r = C * q;

  double lp = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (d.source_counts(j, i) > 0.0) lp += d.source_counts(j, i) * logC(j, i);

  bool degenerate = false;
  for (int j = 0; j < K; ++j) {
    if (d.target_counts[j] <= 0.0) continue;
    if (!(r[j] > 0.0)) {
      degenerate = true;
      break;
    }
    lp += d.target_counts[j] * std::log(r[j]);
  }
  if (degenerate) {
    if (grad) {
      grad->theta = Vector::Constant(K, std::nan(""));
      grad->phi = Matrix::Constant(K, K, std::nan(""));
    }
    return kNegInf;
  }

  const Vector Ltheta = lap.L * s.theta;
  const Matrix Lphi = lap.L * s.phi;
  const double quad_q = s.theta.dot(Ltheta);
  const double quad_C = (s.phi.array() * Lphi.array()).sum();

  lp += -0.5 * s.tau_q * quad_q + 0.5 * rank * std::log(s.tau_q);
  lp += -0.5 * s.tau_C * quad_C + 0.5 * K * rank * std::log(s.tau_C);
  lp += gamma_log_density(s.tau_q, h.a_q, h.b_q);
  lp += gamma_log_density(s.tau_C, h.a_C, h.b_C);

  if (grad) {
    Vector w(K);
    for (int j = 0; j < K; ++j)
      w[j] = d.target_counts[j] > 0.0 ? d.target_counts[j] / r[j] : 0.0;
    const Vector Ctw = C.transpose() * w;

    grad->theta = (q.array() * Ctw.array()).matrix() - d.target_total * q -
                  s.tau_q * Ltheta;
    grad->theta.array() -= grad->theta.mean();

    grad->phi.resize(K, K);
    for (int i = 0; i < K; ++i) {
      const auto c = C.col(i);
      const double cw = c.dot(w);
      grad->phi.col(i) = d.source_counts.col(i) - d.source_totals[i] * c +
                         q[i] * (c.array() * w.array() - c.array() * cw).matrix() -
                         s.tau_C * Lphi.col(i);
      grad->phi.col(i).array() -= grad->phi.col(i).mean();
    }

    grad->log_tau_q = -0.5 * s.tau_q * quad_q + 0.5 * rank + (h.a_q - 1.0) -
                      h.b_q * s.tau_q;
    grad->log_tau_C = -0.5 * s.tau_C * quad_C + 0.5 * K * rank + (h.a_C - 1.0) -
                      h.b_C * s.tau_C;
  }
  return lp;
}

inline double log_joint(const ModelState& s, const CountData& d,
                        const LaplacianMatrix& lap, const HyperParams& h) {
  return log_joint_impl(s, d, lap, h, nullptr);
}

inline ModelGradient grad_log_joint(const ModelState& s, const CountData& d,
                                    const LaplacianMatrix& lap,
                                    const HyperParams& h) {
  ModelGradient g;
  log_joint_impl(s, d, lap, h, &g);
  return g;
}

/// Expected-information (Fisher scoring) Hessian-vector product of the
/// negative log-joint restricted to the theta block, tau_q held fixed:
///   H v = n' S C^T diag(1/r) C S v + tau_q L v,   S = diag(q) - q q^T.
inline Vector theta_block_fisher_apply(const ModelState& s, const CountData& d,
                                       const LaplacianMatrix& lap,
                                       const Eigen::Ref<const Vector>& v) {
  const Vector q = s.q();
  const Matrix C = s.C();
  const Vector r = C * q;
  const Vector Sv = (q.array() * v.array()).matrix() - q * q.dot(v);
  const Vector u = (C * Sv).array() / r.array();
  const Vector t = C.transpose() * u;
  Vector out = d.target_total * ((q.array() * t.array()).matrix() - q * q.dot(t));
  out += s.tau_q * (lap.L * v);
  return out;
}

/// Fisher-scoring Hessian-vector product for the joint phi block (all
/// columns), tau_C held fixed. V and the result are K x K, column i for phi_i.
inline Matrix phi_block_fisher_apply(const ModelState& s, const CountData& d,
                                     const LaplacianMatrix& lap, const Matrix& V) {
  const int K = d.K();
  const Vector q = s.q();
  const Matrix C = s.C();
  const Vector r = C * q;
  Matrix SV(K, K);
  for (int i = 0; i < K; ++i) {
    const auto c = C.col(i);
    SV.col(i) = (c.array() * V.col(i).array()).matrix() - c * c.dot(V.col(i));
  }
  const Vector dr = SV * q;
  const Vector u = (dr.array() / r.array()).matrix();
  Matrix out(K, K);
  for (int i = 0; i < K; ++i) {
    const auto c = C.col(i);
    const Vector tu = (c.array() * u.array()).matrix() - c * c.dot(u);
    out.col(i) = d.source_totals[i] * SV.col(i) + d.target_total * q[i] * tu;
  }
  out += s.tau_C * (lap.L * V);
  return out;
}

inline FisherInfo fisher_information(const Matrix& C, const Vector& q) {
  require_shape(C.rows() == C.cols() && C.cols() == q.size(),
                "fisher_information: shape mismatch");
  const Vector colsum = C.colwise().sum().transpose();
  if ((colsum.array() - 1.0).abs().maxCoeff() > 1e-9)
    throw DomainError("fisher_information: C must be column-stochastic");
  SimplexVector check(q);
  const Vector r = C * q;
  FisherInfo f;
  f.F0 = softmax_jacobian(r);
  return f;
}

/// One exact draw from N(0, (tau L)^+), supported on the sum-zero subspace.
template <class Rng>
CenteredLogOdds sample_gmrf(const LaplacianMatrix& lap, double tau, Rng& rng) {
  require_prior_precision(lap);
  require(tau > 0.0, "sample_gmrf: tau must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const int K = lap.K();
  const double tol = kSpectralTol * std::max(1.0, lap.eigenvalues.cwiseAbs().maxCoeff());
  Vector x = Vector::Zero(K);
  for (int k = 0; k < K; ++k) {
    const double lam = lap.eigenvalues[k];
    if (lam <= tol) continue;
    x += (normal(rng) / std::sqrt(tau * lam)) * lap.eigenvectors.col(k);
  }
  x.array() -= x.mean();
  return CenteredLogOdds(std::move(x));
}

/// Conjugate Gamma posterior of a precision scale given m block vectors:
/// Gamma(a + m rank(L)/2, b + 1/2 sum x^T L x).
inline GammaParams gamma_update(std::span<const Vector> blocks,
                                const LaplacianMatrix& lap, double a, double b) {
  require(a > 0.0 && b > 0.0, "gamma_update: a and b must be positive");
  double quad = 0.0;
  for (const Vector& x : blocks) {
    require_shape(x.size() == lap.K(), "gamma_update: block size mismatch");
    quad += lap.quadratic(x);
  }
  return GammaParams{a + 0.5 * static_cast<double>(blocks.size()) * lap.rank(),
                     b + 0.5 * quad};
}

/// Matrix overload: every column is one block vector.
inline GammaParams gamma_update(const Matrix& columns, const LaplacianMatrix& lap,
                                double a, double b) {
  std::vector<Vector> blocks;
  blocks.reserve(columns.cols());
  for (Eigen::Index i = 0; i < columns.cols(); ++i) blocks.emplace_back(columns.col(i));
  return gamma_update(std::span<const Vector>(blocks), lap, a, b);
}

}  // namespace bayeshift

#endif  // BAYESHIFT_MODEL_HPP_
