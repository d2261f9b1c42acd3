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

// File formats: embeddings, counts and graphs in; estimates, summaries,
// reports, trajectories and draws out. JSON goes through nlohmann::json.

#ifndef BAYESHIFT_IO_HPP_
#define BAYESHIFT_IO_HPP_

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bayeshift/baselines.hpp"
#include "bayeshift/common.hpp"
#include "bayeshift/harness.hpp"
#include "bayeshift/inference.hpp"
#include "bayeshift/info_geometry.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/model.hpp"

#ifndef BAYESHIFT_VERSION
#define BAYESHIFT_VERSION "unknown"
#endif

namespace bayeshift {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = BAYESHIFT_VERSION;

// ---------------------------------------------------------------------------
// Low-level helpers
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

inline bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != e)
    throw ParseError("expected a number, got '" + s + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + s + "'", line);
  return v;
}

inline double parse_count(const std::string& s, int line) {
  long long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != e)
    throw ParseError("expected a non-negative integer count, got '" + s + "'", line);
  if (v < 0) throw ParseError("negative count '" + s + "'", line);
  return static_cast<double>(v);
}

/// Non-blank, non-comment lines with their 1-based line numbers.
inline std::vector<std::pair<int, std::string>> content_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  std::istringstream ss(text);
  std::string line;
  int no = 0;
  while (std::getline(ss, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.emplace_back(no, t);
  }
  return out;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// Row-major nested arrays.
inline json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline double json_number(const json& v) {
  return v.is_null() ? std::nan("") : v.get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

/// CSV rows "label,v1,...,vD"; an optional first row starting with "label"
/// is treated as a header.
inline ClassEmbeddings parse_embeddings_csv(const std::string& text) {
  ClassEmbeddings e;
  std::vector<std::vector<double>> rows;
  int dim = -1;
  bool first = true;
  for (const auto& [no, line] : detail::content_lines(text)) {
    const auto fields = detail::split_csv(line);
    if (first && !fields.empty() && fields[0] == "label") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() < 2) throw ParseError("expected a label and at least one value", no);
    if (fields[0].empty()) throw ParseError("empty label", no);
    std::vector<double> v;
    for (size_t k = 1; k < fields.size(); ++k) v.push_back(detail::parse_double(fields[k], no));
    if (dim >= 0 && static_cast<int>(v.size()) != dim)
      throw ParseError("expected " + std::to_string(dim) + " values, got " +
                           std::to_string(v.size()),
                       no);
    dim = static_cast<int>(v.size());
    e.labels.push_back(fields[0]);
    rows.push_back(std::move(v));
  }
  if (rows.size() < 2) throw ParseError("need at least 2 embedding rows");
  e.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < dim; ++c) e.vectors(static_cast<Eigen::Index>(r), c) = rows[r][c];
  e.validate();
  return e;
}

/// JSON array of {"label": ..., "vector": [...]}.
inline ClassEmbeddings parse_embeddings_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ParseError(std::string("invalid JSON: ") + ex.what());
  }
  if (!j.is_array() || j.size() < 2) throw ParseError("expected an array of >= 2 embeddings");
  ClassEmbeddings e;
  const auto K = static_cast<Eigen::Index>(j.size());
  Eigen::Index D = -1;
  for (Eigen::Index i = 0; i < K; ++i) {
    const json& item = j[static_cast<size_t>(i)];
    if (!item.is_object() || !item.contains("label") || !item.contains("vector") ||
        !item["vector"].is_array())
      throw ParseError("embedding " + std::to_string(i) + ": need label and vector");
    const json& vec = item["vector"];
    if (D < 0) {
      D = static_cast<Eigen::Index>(vec.size());
      if (D < 1) throw ParseError("embedding vectors must be non-empty");
      e.vectors.resize(K, D);
    }
    if (static_cast<Eigen::Index>(vec.size()) != D)
      throw ParseError("embedding " + std::to_string(i) + ": dimension mismatch");
    e.labels.push_back(item["label"].is_string() ? item["label"].get<std::string>()
                                                 : item["label"].dump());
    for (Eigen::Index d = 0; d < D; ++d) {
      if (!vec[static_cast<size_t>(d)].is_number())
        throw ParseError("embedding " + std::to_string(i) + ": non-numeric entry");
      e.vectors(i, d) = vec[static_cast<size_t>(d)].get<double>();
    }
  }
  e.validate();
  return e;
}

inline ClassEmbeddings load_embeddings(const std::string& path) {
  const std::string text = read_text_file(path);
  return has_suffix(path, ".json") ? parse_embeddings_json(text) : parse_embeddings_csv(text);
}

// ---------------------------------------------------------------------------
// Counts
// ---------------------------------------------------------------------------

/// K rows of K source counts (row j = prediction j, column i = true class
/// i) followed by one row of K target prediction counts.
inline CountData parse_counts_csv(const std::string& text) {
  const auto lines = detail::content_lines(text);
  if (lines.size() < 3) throw ParseError("need K >= 2 source rows plus a target row");
  const auto first = detail::split_csv(lines[0].second);
  const int K = static_cast<int>(first.size());
  if (static_cast<int>(lines.size()) != K + 1)
    throw ParseError("expected " + std::to_string(K + 1) + " rows (K=" + std::to_string(K) +
                         "), got " + std::to_string(lines.size()),
                     lines.back().first);
  Matrix S(K, K);
  Vector t(K);
  for (int r = 0; r <= K; ++r) {
    const auto& [no, line] = lines[r];
    const auto fields = detail::split_csv(line);
    if (static_cast<int>(fields.size()) != K)
      throw ParseError("expected " + std::to_string(K) + " values, got " +
                           std::to_string(fields.size()),
                       no);
    for (int c = 0; c < K; ++c) {
      const double v = detail::parse_count(fields[c], no);
      if (r < K) S(r, c) = v;
      else t[c] = v;
    }
  }
  return CountData::make(S, t);
}

/// {"source_counts": K x K rows as in the CSV, "target_counts": [...]}.
inline CountData parse_counts_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ParseError(std::string("invalid JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("source_counts") || !j.contains("target_counts"))
    throw ParseError("need source_counts and target_counts");
  const json& s = j["source_counts"];
  const json& t = j["target_counts"];
  if (!s.is_array() || !t.is_array()) throw ParseError("counts must be arrays");
  const int K = static_cast<int>(t.size());
  if (K < 2 || static_cast<int>(s.size()) != K)
    throw ParseError("source_counts must have K rows matching target_counts");
  auto count = [](const json& v, const std::string& where) {
    if (!v.is_number()) throw ParseError(where + ": counts must be numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x != std::floor(x))
      throw ParseError(where + ": counts must be integers");
    if (x < 0) throw ParseError(where + ": negative count");
    return x;
  };
  Matrix S(K, K);
  Vector tv(K);
  for (int r = 0; r < K; ++r) {
    const json& row = s[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != K)
      throw ParseError("source_counts row " + std::to_string(r) + " must have K entries");
    for (int c = 0; c < K; ++c)
      S(r, c) = count(row[static_cast<size_t>(c)], "source_counts[" + std::to_string(r) + "]");
  }
  for (int c = 0; c < K; ++c) tv[c] = count(t[static_cast<size_t>(c)], "target_counts");
  return CountData::make(S, tv);
}

inline CountData load_counts(const std::string& path) {
  const std::string text = read_text_file(path);
  return has_suffix(path, ".json") ? parse_counts_json(text) : parse_counts_csv(text);
}

inline std::string counts_to_csv(const CountData& d) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int K = d.K();
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < K; ++c) os << d.source_counts(r, c) << (c + 1 < K ? "," : "\n");
  for (int c = 0; c < K; ++c) os << d.target_counts[c] << (c + 1 < K ? "," : "\n");
  return os.str();
}

inline json counts_to_json(const CountData& d) {
  json j;
  j["source_counts"] = detail::to_json(d.source_counts);
  j["target_counts"] = detail::to_json(d.target_counts);
  return j;
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

inline json graph_to_json(const LabelGraph& g, const LaplacianMatrix& lap,
                          const std::vector<std::string>& labels = {}) {
  json j;
  j["K"] = g.K;
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back(json::array({e.i, e.j, e.w}));
  j["edges"] = std::move(edges);
  j["lambda2"] = lap.lambda2;
  j["connected"] = lap.connected;
  j["identity_fallback"] = g.identity_fallback;
  j["sigma"] = g.sigma;
  j["knn_connected"] = g.knn_connected;
  j["bridges_added"] = g.bridges_added;
  j["eigenvalues"] = detail::to_json(lap.eigenvalues);
  if (!labels.empty()) j["labels"] = labels;
  return j;
}

inline LabelGraph parse_graph_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ParseError(std::string("invalid JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("K") || !j["K"].is_number_integer())
    throw ParseError("graph JSON needs an integer K");
  const int K = j["K"].get<int>();
  if (K < 2) throw ParseError("graph JSON: K must be >= 2");
  if (j.value("identity_fallback", false)) return identity_fallback_graph(K);
  if (!j.contains("edges") || !j["edges"].is_array())
    throw ParseError("graph JSON needs an edges array");
  Matrix W = Matrix::Zero(K, K);
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
        !e[1].is_number_integer() || !e[2].is_number())
      throw ParseError("edges must be [i, j, w] triples");
    const int a = e[0].get<int>();
    const int b = e[1].get<int>();
    const double w = e[2].get<double>();
    if (a < 0 || b < 0 || a >= K || b >= K || a == b)
      throw ParseError("edge endpoints out of range");
    W(a, b) = W(b, a) = w;
  }
  LabelGraph g = graph_from_weights(W);
  g.sigma = j.value("sigma", 0.0);
  return g;
}

inline LabelGraph load_graph(const std::string& path) {
  return parse_graph_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

inline json to_json(const PriorEstimate& e) {
  json j;
  j["method"] = e.method;
  j["q_hat"] = detail::to_json(e.q_hat.values());
  j["residual"] = e.residual;
  j["iterations"] = e.iterations;
  j["converged"] = e.converged;
  j["singular"] = e.singular;
  return j;
}

inline json to_json(const PosteriorSummary& s) {
  json j;
  j["q_mean"] = detail::to_json(s.q_mean.values());
  j["q_ci_low"] = detail::to_json(s.q_ci_low);
  j["q_ci_high"] = detail::to_json(s.q_ci_high);
  j["credible_level"] = kCredibleLevel;
  j["q_variance"] = detail::to_json(s.q_variance);
  j["C_mean"] = detail::to_json(s.C_mean);
  j["theta_mean"] = detail::to_json(s.theta_mean);
  j["tau_q_mean"] = s.tau_q_mean;
  j["tau_C_mean"] = s.tau_C_mean;
  j["rhat_available"] = s.rhat_available;
  json rh = json::object();
  for (const auto& r : s.rhat) rh[r.name] = std::isfinite(r.value) ? json(r.value) : json();
  j["rhat"] = std::move(rh);
  json es = json::object();
  for (const auto& e : s.ess) es[e.name] = e.value;
  j["ess"] = std::move(es);
  j["max_rhat"] = std::isfinite(s.max_rhat()) ? json(s.max_rhat()) : json();
  j["min_ess"] = s.min_ess();
  j["chains"] = s.chains;
  j["draws_used"] = s.draws_used;
  j["accept_rates"] = s.accept_rates;
  j["divergences"] = s.divergence_count;
  return j;
}

inline json to_json(const NewtonResult& r) {
  json j;
  j["q_map"] = detail::to_json(r.state.q());
  j["C_map"] = detail::to_json(r.state.C());
  j["theta"] = detail::to_json(r.state.theta);
  j["tau_q"] = r.state.tau_q;
  j["tau_C"] = r.state.tau_C;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["gradient_norm"] = r.gradient_norm;
  j["log_joint"] = r.log_joint_trace.empty() ? json() : json(r.log_joint_trace.back());
  return j;
}

inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(); }

/// Report JSON. Runtimes are left out so that the bytes are reproducible;
/// see `eval_timings_json`.
inline json to_json(const EvalReport& rep) {
  json j;
  j["K"] = rep.K;
  j["true_q"] = detail::to_json(rep.true_q);
  j["bootstrap"] = rep.bootstrap;
  json ms = json::array();
  for (const auto& m : rep.methods) {
    json r;
    r["method"] = m.method;
    r["ok"] = m.ok;
    if (!m.ok) {
      r["error"] = m.error;
      ms.push_back(std::move(r));
      continue;
    }
    r["q_hat"] = detail::to_json(m.q_hat);
    r["l1_error"] = m.l1_error;
    r["l1_se"] = finite_or_null(m.l1_se);
    r["downstream_accuracy"] = finite_or_null(m.downstream_accuracy);
    r["accuracy_se"] = finite_or_null(m.accuracy_se);
    if (!m.ci_covers.empty()) {
      r["ci_low"] = detail::to_json(m.ci_low);
      r["ci_high"] = detail::to_json(m.ci_high);
      r["ci_width"] = detail::to_json(m.ci_width);
      r["ci_covers"] = m.ci_covers;
      r["max_rhat"] = finite_or_null(m.max_rhat);
      r["min_ess"] = finite_or_null(m.min_ess);
      r["accept_rates"] = m.accept_rates;
      r["divergences"] = m.divergences;
    }
    ms.push_back(std::move(r));
  }
  j["methods"] = std::move(ms);
  return j;
}

inline json eval_timings_json(const EvalReport& rep) {
  json j = json::object();
  for (const auto& m : rep.methods) j[m.method] = m.runtime_ms;
  return j;
}

inline std::string eval_report_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method,ok,l1_error,l1_se,downstream_accuracy,accuracy_se";
  for (int i = 0; i < rep.K; ++i) os << ",q_hat_" << i;
  os << "\n";
  auto num = [&](double x) {
    if (std::isfinite(x)) os << x;
  };
  for (const auto& m : rep.methods) {
    os << m.method << "," << (m.ok ? 1 : 0) << ",";
    num(m.l1_error);
    os << ",";
    num(m.l1_se);
    os << ",";
    num(m.downstream_accuracy);
    os << ",";
    num(m.accuracy_se);
    for (int i = 0; i < rep.K; ++i) {
      os << ",";
      if (m.ok) num(m.q_hat[i]);
    }
    os << "\n";
  }
  return os.str();
}

inline json to_json(const ContractionResult& r) {
  json j;
  j["N_grid"] = r.N_grid;
  j["mean_error"] = r.mean_error;
  j["errors"] = r.errors;
  j["slope"] = r.slope;
  return j;
}

inline json to_json(const VarianceResult& r) {
  json j;
  j["graphs"] = r.graph_names;
  j["lambda2"] = r.lambda2;
  j["N"] = r.N;
  j["mean_variance"] = r.mean_variance;
  j["variance"] = r.variance;
  j["monotone_seeds"] = r.monotone_seeds;
  j["monotone_fraction"] = r.monotone_fraction();
  j["comparisons"] = r.comparisons;
  j["inversions"] = r.inversions;
  j["fitted_C"] = r.fitted_C;
  j["bound_dominates"] = r.bound_dominates;
  return j;
}

inline json to_json(const RobustnessResult& r) {
  json j;
  j["N_grid"] = r.N_grid;
  j["bias"] = r.bias;
  j["bias_se"] = r.bias_se;
  j["bound"] = r.bound;
  j["seed_errors"] = r.seed_errors;
  j["zero_bias_path"] = r.zero_bias_path;
  j["decreasing_fraction"] = r.decreasing_fraction();
  j["below_bound"] = r.below_bound;
  return j;
}

inline std::string flow_to_csv(const FlowTrajectory& traj) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int K = traj.states.empty() ? 0 : static_cast<int>(traj.states[0].q.size());
  os << "t";
  for (int i = 0; i < K; ++i) os << ",q" << i;
  os << ",F\n";
  for (const auto& s : traj.states) {
    os << s.t;
    for (int i = 0; i < K; ++i) os << "," << s.q[i];
    os << "," << s.F_value << "\n";
  }
  return os.str();
}

/// One row per draw: chain, iter, theta..., phi (column-major), tau_q, tau_C.
inline std::string draws_to_csv(const PosteriorDraws& pd) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int K = pd.K;
  os << "chain,iter";
  for (int i = 0; i < K; ++i) os << ",theta" << i;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) os << ",phi" << j << "_" << i;
  os << ",tau_q,tau_C\n";
  for (int c = 0; c < pd.chains(); ++c)
    for (size_t t = 0; t < pd.draws[c].size(); ++t) {
      const ModelState& s = pd.draws[c][t];
      os << c << "," << t;
      for (int i = 0; i < K; ++i) os << "," << s.theta[i];
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) os << "," << s.phi(j, i);
      os << "," << s.tau_q << "," << s.tau_C << "\n";
    }
  return os.str();
}

inline json dataset_to_json(const SyntheticDataset& ds) {
  json j;
  j["K"] = ds.counts.K();
  j["true_q"] = detail::to_json(ds.true_q.values());
  j["true_C"] = detail::to_json(ds.true_C);
  j["p_source"] = detail::to_json(ds.p_source.values());
  j["counts"] = counts_to_json(ds.counts);
  j["true_target_labels"] = ds.true_target_labels;
  j["target_predictions"] = ds.target_predictions;
  j["posterior_matrix"] = detail::to_json(ds.posterior_matrix);
  j["embedding_labels"] = ds.embeddings.labels;
  j["embeddings"] = detail::to_json(ds.embeddings.vectors);
  json edges = json::array();
  for (const auto& e : ds.graph.edges) edges.push_back(json::array({e.i, e.j, e.w}));
  j["graph_edges"] = std::move(edges);
  return j;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Deterministic provenance stamped into every artifact. Wall-clock data
/// go to a separate sidecar (`write_run_sidecar`).
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<std::string> outputs;

  json to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["version"] = version;
    j["outputs"] = outputs;
    return j;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes `<path>.run.json` with the manifest plus wall-clock information.
inline void write_run_sidecar(const std::string& path, const RunManifest& m,
                              double elapsed_ms, const json& extra = json::object()) {
  json j = m.to_json();
  j["started_utc"] = utc_timestamp();
  j["wall_clock_ms"] = elapsed_ms;
  if (!extra.empty()) j["timings_ms"] = extra;
  write_text_file(path + ".run.json", j.dump(2) + "\n");
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace bayeshift

#endif  // BAYESHIFT_IO_HPP_
