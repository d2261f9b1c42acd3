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

// MCMC convergence diagnostics: rank-normalised split-Rhat and bulk ESS.

#ifndef BAYESHIFT_DIAGNOSTICS_HPP_
#define BAYESHIFT_DIAGNOSTICS_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "bayeshift/common.hpp"

namespace bayeshift {

using ChainSeries = std::vector<std::vector<double>>;  // [chain][iteration]

/// Linear-interpolation sample quantile (R type 7).
inline double quantile(std::vector<double> x, double p) {
  require(!x.empty(), "quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

namespace detail {

inline ChainSeries split_chains(const ChainSeries& chains) {
  ChainSeries out;
  for (const auto& c : chains) {
    const size_t half = c.size() / 2;
    // Odd lengths drop the middle draw.
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

inline ChainSeries rank_normalize(const ChainSeries& chains) {
  std::vector<std::pair<double, size_t>> all;
  for (const auto& c : chains)
    for (double v : c) all.emplace_back(v, all.size());
  const size_t S = all.size();
  std::sort(all.begin(), all.end());
  std::vector<double> rank(S);
  for (size_t i = 0; i < S;) {
    size_t j = i;
    while (j + 1 < S && all[j + 1].first == all[i].first) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[all[k].second] = avg;
    i = j + 1;
  }
  boost::math::normal_distribution<double> normal;
  ChainSeries out;
  size_t idx = 0;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (size_t t = 0; t < c.size(); ++t) {
      const double p = (rank[idx++] - 0.375) / (static_cast<double>(S) + 0.25);
      z[t] = boost::math::quantile(normal, p);
    }
    out.push_back(std::move(z));
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline bool all_equal(const ChainSeries& chains) {
  for (const auto& c : chains)
    for (double v : c)
      if (v != chains.front().front()) return false;
  return true;
}

inline double plain_rhat(const ChainSeries& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(var_of(c));
  }
  const double W = mean_of(vars);
  const double B_over_n = var_of(means);
  if (!(W > 0.0)) return B_over_n > 0.0 ? kPosInf : 1.0;
  const double var_plus = (n - 1.0) / n * W + B_over_n;
  return std::sqrt(var_plus / W);
}

}  // namespace detail

/// Rank-normalised split-Rhat. NaN for fewer than two chains.
inline double split_rhat(const ChainSeries& chains) {
  if (chains.size() < 2) return std::nan("");
  for (const auto& c : chains)
    require(c.size() >= 4, "split_rhat: need at least 4 draws per chain");
  if (detail::all_equal(chains)) return 1.0;
  return detail::plain_rhat(detail::rank_normalize(detail::split_chains(chains)));
}

/// Bulk effective sample size (rank-normalised split chains, Geyer's
/// initial monotone sequence).
inline double bulk_ess(const ChainSeries& chains) {
  require(!chains.empty(), "bulk_ess: no chains");
  for (const auto& c : chains)
    require(c.size() >= 4, "bulk_ess: need at least 4 draws per chain");
  if (detail::all_equal(chains)) {
    double total = 0.0;
    for (const auto& c : chains) total += static_cast<double>(c.size());
    return total;
  }
  const ChainSeries z = detail::rank_normalize(detail::split_chains(chains));
  const size_t M = z.size();
  const size_t n = z.front().size();
  std::vector<double> means(M), vars(M);
  for (size_t m = 0; m < M; ++m) {
    means[m] = detail::mean_of(z[m]);
    vars[m] = detail::var_of(z[m]);
  }
  const double W = detail::mean_of(vars);
  const double var_plus =
      (static_cast<double>(n) - 1.0) / static_cast<double>(n) * W +
      (M > 1 ? detail::var_of(means) : 0.0);
  if (!(var_plus > 0.0)) return static_cast<double>(M * n);

  auto rho = [&](size_t lag) {
    double acov = 0.0;
    for (size_t m = 0; m < M; ++m) {
      double s = 0.0;
      for (size_t t = 0; t + lag < n; ++t)
        s += (z[m][t] - means[m]) * (z[m][t + lag] - means[m]);
      acov += s / static_cast<double>(n);
    }
    acov /= static_cast<double>(M);
    return 1.0 - (W - acov) / var_plus;
  };

  // Geyer: sum consecutive pairs while positive, enforce monotonicity.
  double tau = -1.0;
  double prev_pair = kPosInf;
  for (size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(M * n)));
  return static_cast<double>(M * n) / tau;
}

}  // namespace bayeshift

#endif  // BAYESHIFT_DIAGNOSTICS_HPP_
