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

// Class-similarity graphs over labels and their unnormalised Laplacians.

#ifndef BAYESHIFT_LABEL_GRAPH_HPP_
#define BAYESHIFT_LABEL_GRAPH_HPP_

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bayeshift/common.hpp"
#include "bayeshift/simplex.hpp"

namespace bayeshift {

inline constexpr double kSpectralTol = 1e-10;

/// K class embeddings of dimension D, stored row-wise.
struct ClassEmbeddings {
  std::vector<std::string> labels;
  Matrix vectors;  // K x D

  int K() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }

  void validate() const {
    if (vectors.rows() < 2) throw ParameterError("embeddings: need K >= 2 rows");
    if (vectors.cols() < 1) throw ParameterError("embeddings: need D >= 1");
    if (static_cast<Eigen::Index>(labels.size()) != vectors.rows())
      throw ShapeError("embeddings: label count does not match row count");
    if (!vectors.allFinite())
      throw DomainError("embeddings: non-finite entry");
  }

  /// Rescales every row to unit Euclidean norm (zero rows are left alone).
  void normalize_rows() {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double n = vectors.row(i).norm();
      if (n > 0.0) vectors.row(i) /= n;
    }
  }
};

struct WeightedEdge {
  int i = 0;
  int j = 0;  // i < j
  double w = 0.0;
};

/// Undirected weighted graph on K labels.
struct LabelGraph {
  int K = 0;
  Matrix W;                         // symmetric, zero diagonal
  std::vector<WeightedEdge> edges;  // sorted by (i, j)
  double sigma = 0.0;               // kernel bandwidth (k-NN graphs only)
  bool knn_connected = true;        // connectivity before bridging
  int bridges_added = 0;
  // W = I "no similarity" configuration; priors use the projected identity.
  bool identity_fallback = false;
};

/// Laplacian L = D - W with its full eigendecomposition.
struct LaplacianMatrix {
  Matrix L;
  Vector degree;
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // columns match eigenvalues
  double lambda2 = 0.0;
  bool connected = false;
  bool identity_fallback = false;

  int K() const { return static_cast<int>(L.rows()); }
  double quadratic(const Eigen::Ref<const Vector>& x) const {
    return x.dot(L * x);
  }
  /// Number of eigenvalues above the spectral tolerance.
  int rank() const {
    int r = 0;
    const double tol = kSpectralTol * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k)
      if (eigenvalues[k] > tol) ++r;
    return r;
  }
};

namespace detail {

inline int count_components(const Matrix& W, std::vector<int>* labels_out) {
  const int K = static_cast<int>(W.rows());
  std::vector<int> comp(K, -1);
  int n = 0;
  for (int s = 0; s < K; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{s};
    comp[s] = n;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < K; ++v) {
        if (v != u && W(u, v) > 0.0 && comp[v] < 0) {
          comp[v] = n;
          stack.push_back(v);
        }
      }
    }
    ++n;
  }
  if (labels_out) *labels_out = std::move(comp);
  return n;
}

inline std::vector<WeightedEdge> edges_of(const Matrix& W) {
  std::vector<WeightedEdge> e;
  for (int i = 0; i < W.rows(); ++i)
    for (int j = i + 1; j < W.cols(); ++j)
      if (W(i, j) > 0.0) e.push_back({i, j, W(i, j)});
  return e;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Builds a graph from an explicit symmetric weight matrix.
inline LabelGraph graph_from_weights(const Matrix& W) {
  require_shape(W.rows() == W.cols(), "graph_from_weights: W must be square");
  require(W.rows() >= 2, "graph_from_weights: need K >= 2");
  if (!W.allFinite() || W.minCoeff() < 0.0 || W.maxCoeff() > 1.0)
    throw DomainError("graph_from_weights: weights must lie in [0, 1]");
  if ((W - W.transpose()).cwiseAbs().maxCoeff() != 0.0)
    throw DomainError("graph_from_weights: W must be exactly symmetric");
  if (W.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw DomainError("graph_from_weights: W must have zero diagonal");
  LabelGraph g;
  g.K = static_cast<int>(W.rows());
  g.W = W;
  g.edges = detail::edges_of(W);
  g.knn_connected = detail::count_components(W, nullptr) == 1;
  return g;
}

inline LabelGraph path_graph(int K, double w = 1.0) {
  Matrix W = Matrix::Zero(K, K);
  for (int i = 0; i + 1 < K; ++i) W(i, i + 1) = W(i + 1, i) = w;
  return graph_from_weights(W);
}

inline LabelGraph cycle_graph(int K, double w = 1.0) {
  require(K >= 3, "cycle_graph: need K >= 3");
  Matrix W = Matrix::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    const int j = (i + 1) % K;
    W(i, j) = W(j, i) = w;
  }
  return graph_from_weights(W);
}

inline LabelGraph complete_graph(int K, double w = 1.0) {
  Matrix W = Matrix::Constant(K, K, w);
  W.diagonal().setZero();
  return graph_from_weights(W);
}

/// Symmetrized k-nearest-neighbour graph with Gaussian kernel weights.
///
/// Neighbours are ranked by (Euclidean distance, class index). The kernel
/// bandwidth sigma is the median distance over the symmetrized edge set and
/// W_ij = exp(-d_ij^2 / sigma^2). When the k-NN graph is disconnected, the
/// shortest edge joining two different components is added repeatedly
/// (weighted with the same kernel) until one component remains.
inline LabelGraph build_knn_graph(const ClassEmbeddings& emb, int k) {
  emb.validate();
  const int K = emb.K();
  if (k < 1 || k >= K)
    throw ParameterError("build_knn_graph: k must satisfy 1 <= k < K (k=" +
                         std::to_string(k) + ", K=" + std::to_string(K) + ")");

  Matrix dist = Matrix::Zero(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      dist(i, j) = dist(j, i) = (emb.vectors.row(i) - emb.vectors.row(j)).norm();

  std::vector<std::vector<bool>> adj(K, std::vector<bool>(K, false));
  std::vector<int> order(K);
  for (int i = 0; i < K; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;
    });
    int taken = 0;
    for (int j : order) {
      if (j == i) continue;
      adj[i][j] = adj[j][i] = true;
      if (++taken == k) break;
    }
  }

  std::vector<double> edge_d;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      if (adj[i][j]) edge_d.push_back(dist(i, j));
  const double sigma = detail::median(edge_d);
  auto kernel = [sigma](double d) {
    return sigma > 0.0 ? std::exp(-(d * d) / (sigma * sigma)) : 1.0;
  };

  Matrix W = Matrix::Zero(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      if (adj[i][j]) {
        // A zero kernel value would silently drop the edge.
        const double w = std::max(kernel(dist(i, j)), 1e-300);
        W(i, j) = W(j, i) = w;
      }

  LabelGraph g;
  g.K = K;
  g.sigma = sigma;
  std::vector<int> comp;
  int ncomp = detail::count_components(W, &comp);
  g.knn_connected = ncomp == 1;
  while (ncomp > 1) {
    int bi = -1, bj = -1;
    double best = kPosInf;
    for (int i = 0; i < K; ++i)
      for (int j = i + 1; j < K; ++j)
        if (comp[i] != comp[j] && dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
    const double w = std::max(kernel(best), 1e-300);
    W(bi, bj) = W(bj, bi) = w;
    ++g.bridges_added;
    ncomp = detail::count_components(W, &comp);
  }
  g.W = W;
  g.edges = detail::edges_of(W);
  return g;
}

/// The W = I configuration used when no similarity information exists.
inline LabelGraph identity_fallback_graph(int K) {
  require(K >= 2, "identity_fallback_graph: need K >= 2");
  LabelGraph g;
  g.K = K;
  g.W = Matrix::Identity(K, K);
  g.identity_fallback = true;
  g.knn_connected = true;
  return g;
}

/// L = D - W and its eigendecomposition. For the identity fallback the
/// returned precision is the projector I - 11^T/K (identity on the sum-zero
/// subspace). A disconnected graph yields lambda2 = 0 and connected = false.
inline LaplacianMatrix laplacian(const LabelGraph& g) {
  require(g.K >= 2, "laplacian: need K >= 2");
  require_shape(g.W.rows() == g.K && g.W.cols() == g.K,
                "laplacian: W has wrong shape");
  LaplacianMatrix out;
  out.identity_fallback = g.identity_fallback;
  if (g.identity_fallback) {
    out.L = Matrix::Identity(g.K, g.K) -
            Matrix::Constant(g.K, g.K, 1.0 / g.K);
    out.degree = Vector::Ones(g.K);
  } else {
    out.degree = g.W.rowwise().sum();
    out.L = -g.W;
    out.L.diagonal() += out.degree;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.L);
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
  out.connected =
      g.identity_fallback || detail::count_components(g.W, nullptr) == 1;
  out.lambda2 = out.connected ? out.eigenvalues[1] : 0.0;
  return out;
}

/// Moore-Penrose pseudoinverse of tau * L.
inline Matrix precision_pseudoinverse(const LaplacianMatrix& lap, double tau = 1.0) {
  const int K = lap.K();
  Matrix out = Matrix::Zero(K, K);
  const double tol = kSpectralTol * std::max(1.0, lap.eigenvalues.cwiseAbs().maxCoeff());
  for (int k = 0; k < K; ++k) {
    const double lam = lap.eigenvalues[k];
    if (lam > tol) {
      const Vector u = lap.eigenvectors.col(k);
      out += (1.0 / (tau * lam)) * u * u.transpose();
    }
  }
  return out;
}

/// Throws unless `lap` can serve as a prior precision (lambda2 > 0).
inline void require_prior_precision(const LaplacianMatrix& lap) {
  if (!lap.connected || !(lap.lambda2 > kSpectralTol))
    throw ParameterError(
        "prior construction: Laplacian is disconnected (lambda2 = 0)");
}

}  // namespace bayeshift

#endif  // BAYESHIFT_LABEL_GRAPH_HPP_
