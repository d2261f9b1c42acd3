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

// Penalised objective on the simplex, its Fisher-Rao gradient, the
// replicator-Laplacian flow, the convexity modulus and the Pythagorean
// residual.

#ifndef BAYESHIFT_INFO_GEOMETRY_HPP_
#define BAYESHIFT_INFO_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "bayeshift/common.hpp"
#include "bayeshift/inference.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/model.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

/// Fixed inputs of the penalised objective F.
struct FlowProblem {
  SimplexVector r_hat;
  Matrix C;
  LaplacianMatrix lap;
  double tau_q = 1.0;
  double n_prime = 1.0;

  int K() const { return static_cast<int>(C.cols()); }
  void validate() const {
    const auto K = r_hat.size();
    require_shape(C.rows() == K && C.cols() == K, "FlowProblem: C must be K x K");
    require_shape(lap.K() == K, "FlowProblem: Laplacian shape mismatch");
    if (!(tau_q >= 0.0) || !(n_prime >= 0.0))
      throw ParameterError("FlowProblem: tau_q and n_prime must be >= 0");
    if (C.minCoeff() < 0.0 ||
        (C.colwise().sum().array() - 1.0).abs().maxCoeff() > 1e-10)
      throw DomainError("FlowProblem: C must be column-stochastic");
  }
};

struct FlowState {
  SimplexVector q;
  double t = 0.0;
  double F_value = 0.0;
};

/// F(q) = n' KL[r_hat || C q] + (tau_q / 2) theta^T L theta.
inline double penalised_objective(const SimplexVector& q, const FlowProblem& p) {
  const Vector theta = centered_logodds(q).values();
  const Vector r = p.C * q.values();
  const double kl = kl_divergence(p.r_hat.values(), r);
  if (!std::isfinite(kl)) return kPosInf;
  return p.n_prime * kl + 0.5 * p.tau_q * p.lap.quadratic(theta);
}

/// Fisher-Rao gradient of F: diag(q) n' C^T (1 - r_hat / r) + tau_q L theta.
/// Both terms lie in the tangent space, so the output sums to zero.
inline Vector natural_gradient(const SimplexVector& q, const FlowProblem& p) {
  if (!q.interior()) throw DomainError("natural_gradient: q must be interior");
  const Vector theta = centered_logodds(q).values();
  const Vector r = p.C * q.values();
  Vector resid(r.size());
  for (Eigen::Index j = 0; j < r.size(); ++j)
    resid[j] = p.r_hat[j] > 0.0 ? 1.0 - p.r_hat[j] / r[j] : 1.0;
  Vector g = p.n_prime * q.values().cwiseProduct(p.C.transpose() * resid) +
             p.tau_q * (p.lap.L * theta);
  return g;
}

/// Smallest eigenvalue of a symmetric matrix restricted to the sum-zero
/// subspace.
inline double restricted_min_eigenvalue(const Matrix& A) {
  const Matrix B = sum_zero_basis(static_cast<int>(A.rows()));
  const Matrix R = B.transpose() * A * B;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + R.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

/// alpha = n' lambda_min(F0 restricted to the sum-zero subspace) + tau_q lambda2(L),
/// F0 = diag(C q) - (C q)(C q)^T.
inline double convexity_modulus(const SimplexVector& q, const Matrix& C,
                                const LaplacianMatrix& lap, double tau_q, double n_prime) {
  const FisherInfo fi = fisher_information(C, q.values());
  return n_prime * restricted_min_eigenvalue(fi.F0) + tau_q * lap.lambda2;
}

inline double convexity_modulus(const SimplexVector& q, const FlowProblem& p) {
  return convexity_modulus(q, p.C, p.lap, p.tau_q, p.n_prime);
}

/// |KL[r_hat || q_center] - KL[r_hat || C q*] - KL[C q* || q_center]|.
inline double pythagorean_residual(const SimplexVector& r_hat, const Matrix& C,
                                   const SimplexVector& q_star,
                                   const SimplexVector& q_center) {
  if (!q_center.interior())
    throw DomainError("pythagorean_residual: q_center must be interior");
  require_shape(C.rows() == r_hat.size() && C.cols() == q_star.size(),
                "pythagorean_residual: shape mismatch");
  const Vector r_star = C * q_star.values();
  return std::abs(kl_divergence(r_hat.values(), q_center.values()) -
                  kl_divergence(r_hat.values(), r_star) -
                  kl_divergence(r_star, q_center.values()));
}

/// Minimiser of F, computed as the theta-block MAP of the model with C
/// fixed, tau_q fixed and (possibly fractional) target counts n' r_hat.
inline SimplexVector penalised_minimizer(const FlowProblem& p,
                                         const SimplexVector* start = nullptr) {
  p.validate();
  if (!(p.C.minCoeff() > 0.0))
    throw DomainError("penalised_minimizer: C must be strictly positive");
  const int K = p.K();
  const CountData data =
      CountData::make(Matrix::Zero(K, K), p.n_prime * p.r_hat.values());
  ModelState s;
  s.theta = start ? centered_logodds(*start).values() : Vector::Zero(K);
  s.phi.resize(K, K);
  for (int i = 0; i < K; ++i) s.phi.col(i) = centered_logodds(SimplexVector(p.C.col(i))).values();
  s.tau_q = p.tau_q > 0.0 ? p.tau_q : 1e-300;
  s.tau_C = 1.0;
  NewtonConfig cfg = NewtonConfig::precise();
  cfg.gradient_tol = 1e-10 * std::max(1.0, p.n_prime);
  const HyperParams hyper;
  const NewtonResult res = theta_block_map(data, p.lap, hyper, s, cfg);
  return SimplexVector(res.state.q());
}

struct FlowConfig {
  double dt = 0.0;  // 0 selects 1e-3 / alpha(q0)
  int steps = 1000;
  int record_every = 1;
  int max_halvings = 30;

  void validate() const {
    if (!(dt >= 0.0)) throw ParameterError("FlowConfig: dt must be >= 0");
    if (steps < 1 || record_every < 1 || max_halvings < 0)
      throw ParameterError("FlowConfig: counts must be positive");
  }
};

struct FlowTrajectory {
  std::vector<FlowState> states;  // states[0] is the start
  bool truncated = false;
  double dt = 0.0;
  double max_sum_drift = 0.0;  // max |sum q - 1| before renormalisation
  double max_F_increase = 0.0;  // max F(q_{t+1}) - F(q_t), 0 when monotone
  int halvings = 0;
};

/// Integrates dq/dt = -grad^FR F(q) by classical RK4 with renormalisation
/// after every step. A step that leaves the interior is retried with half
/// the step size; after `max_halvings` failures the trajectory stops.
inline FlowTrajectory replicator_flow(const SimplexVector& q0, const FlowProblem& p,
                                      const FlowConfig& cfg = {}) {
  p.validate();
  cfg.validate();
  if (!q0.interior()) throw DomainError("replicator_flow: q0 must be interior");
  FlowTrajectory traj;
  double dt = cfg.dt;
  if (dt == 0.0) {
    const double alpha = convexity_modulus(q0, p);
    if (!(alpha > 0.0))
      throw DomainError("replicator_flow: default dt needs a positive convexity modulus");
    dt = 1e-3 / alpha;
  }
  traj.dt = dt;

  auto field = [&](const Vector& q) -> Vector {
    if (!(q.minCoeff() > kInteriorFloor) || !q.allFinite()) return Vector();
    Vector qq = q;
    return -natural_gradient(SimplexVector(qq / qq.sum()), p);
  };

  Vector q = q0.values();
  double F = penalised_objective(q0, p);
  double t = 0.0;
  traj.states.push_back({q0, t, F});
  for (int step = 1; step <= cfg.steps; ++step) {
    double h = dt;
    bool ok = false;
    Vector next;
    for (int tries = 0; tries <= cfg.max_halvings; ++tries) {
      const Vector k1 = field(q);
      Vector k2, k3, k4;
      if (k1.size()) k2 = field(q + 0.5 * h * k1);
      if (k2.size()) k3 = field(q + 0.5 * h * k2);
      if (k3.size()) k4 = field(q + h * k3);
      if (k4.size()) {
        next = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (next.allFinite() && next.minCoeff() > kInteriorFloor) {
          ok = true;
          break;
        }
      }
      h *= 0.5;
      ++traj.halvings;
    }
    if (!ok) {
      traj.truncated = true;
      break;
    }
    traj.max_sum_drift = std::max(traj.max_sum_drift, std::abs(next.sum() - 1.0));
    q = next / next.sum();
    t += h;
    const SimplexVector qs(q);
    const double F_next = penalised_objective(qs, p);
    traj.max_F_increase = std::max(traj.max_F_increase, F_next - F);
    F = F_next;
    if (step % cfg.record_every == 0 || step == cfg.steps) traj.states.push_back({qs, t, F});
  }
  return traj;
}

/// Least-squares slope of log(F(q_t) - F_star) against t over the states
/// whose gap lies in [gap_floor, gap_ceiling].
inline double decay_slope(const FlowTrajectory& traj, double F_star, double gap_floor,
                          double gap_ceiling = kPosInf) {
  std::vector<double> ts, ys;
  for (const auto& s : traj.states) {
    const double gap = s.F_value - F_star;
    if (gap >= gap_floor && gap <= gap_ceiling) {
      ts.push_back(s.t);
      ys.push_back(std::log(gap));
    }
  }
  require(ts.size() >= 3, "decay_slope: fewer than 3 usable points");
  const double n = static_cast<double>(ts.size());
  double mt = 0, my = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    my += ys[i];
  }
  mt /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    sxy += (ts[i] - mt) * (ys[i] - my);
    sxx += (ts[i] - mt) * (ts[i] - mt);
  }
  return sxy / sxx;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_INFO_GEOMETRY_HPP_
