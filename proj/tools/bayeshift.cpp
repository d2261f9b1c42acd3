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

// bayeshift command-line tool. Run `bayeshift --help` for the subcommands.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bayeshift/bayeshift.hpp"

namespace fs = std::filesystem;
using namespace bayeshift;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<int> chains, warmup, iters, leapfrog;
  std::optional<std::string> tau_fixed;
  std::optional<int> bootstrap;
  std::string config_path;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(read_text_file(path));
    if (!j.is_object()) throw UsageError("config '" + path + "' must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config key '") + key + "' has the wrong type");
  }
}

FixedTau parse_tau_fixed(const std::string& text) {
  FixedTau f;
  auto num = [&](const std::string& s) {
    try {
      size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("--tau-fixed: cannot parse '" + s + "'");
    }
  };
  if (text.find('=') == std::string::npos) {
    f.tau_q = f.tau_C = num(text);
  } else {
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw UsageError("--tau-fixed: expected q=X and/or C=Y");
      const std::string k = part.substr(0, eq);
      const double v = num(part.substr(eq + 1));
      if (k == "q") f.tau_q = v;
      else if (k == "C") f.tau_C = v;
      else throw UsageError("--tau-fixed: unknown block '" + k + "' (q or C)");
    }
  }
  f.validate();
  return f;
}

ScenarioConfig scenario_from(const json& cfg, ScenarioConfig s = {}) {
  if (!cfg.contains("scenario")) return s;
  const json& j = cfg["scenario"];
  take(j, "K", s.K);
  if (j.contains("shift_kind")) s.shift_kind = parse_shift_kind(j["shift_kind"].get<std::string>());
  take(j, "alpha", s.alpha);
  take(j, "uniform_concentration", s.uniform_concentration);
  take(j, "b", s.b);
  take(j, "n_source_per_class", s.n_source_per_class);
  take(j, "n_validation", s.n_validation);
  take(j, "n_target", s.n_target);
  take(j, "classifier_quality", s.classifier_quality);
  take(j, "spill", s.spill);
  take(j, "embedding_dim", s.embedding_dim);
  take(j, "knn_k", s.knn_k);
  take(j, "expected_counts", s.expected_counts);
  take(j, "with_posteriors", s.with_posteriors);
  take(j, "seed", s.seed);
  return s;
}

json scenario_to_json(const ScenarioConfig& s) {
  json j;
  j["K"] = s.K;
  j["shift_kind"] = to_string(s.shift_kind);
  j["alpha"] = s.alpha;
  j["uniform_concentration"] = s.uniform_concentration;
  j["b"] = s.b;
  j["n_source_per_class"] = s.source_per_class();
  j["n_validation"] = s.n_validation;
  j["n_target"] = s.n_target;
  j["classifier_quality"] = s.classifier_quality;
  j["spill"] = s.spill;
  j["embedding_dim"] = s.embedding_dim;
  j["knn_k"] = s.default_knn_k();
  j["expected_counts"] = s.expected_counts;
  j["with_posteriors"] = s.with_posteriors;
  j["seed"] = s.seed;
  return j;
}

HmcConfig hmc_from(const json& cfg, const CommonFlags& fl, HmcConfig h = {}) {
  if (cfg.contains("hmc")) {
    const json& j = cfg["hmc"];
    take(j, "chains", h.chains);
    take(j, "warmup_iters", h.warmup_iters);
    take(j, "sampling_iters", h.sampling_iters);
    take(j, "leapfrog_steps", h.leapfrog_steps);
    take(j, "target_accept", h.target_accept);
    take(j, "seed", h.seed);
    take(j, "adapt_metric", h.adapt_metric);
    if (j.contains("tau_q_fixed")) h.fixed.tau_q = j["tau_q_fixed"].get<double>();
    if (j.contains("tau_C_fixed")) h.fixed.tau_C = j["tau_C_fixed"].get<double>();
  }
  if (fl.chains) h.chains = *fl.chains;
  if (fl.warmup) h.warmup_iters = *fl.warmup;
  if (fl.iters) h.sampling_iters = *fl.iters;
  if (fl.leapfrog) h.leapfrog_steps = *fl.leapfrog;
  if (fl.seed) h.seed = *fl.seed;
  if (fl.tau_fixed) h.fixed = parse_tau_fixed(*fl.tau_fixed);
  h.validate();
  return h;
}

json hmc_to_json(const HmcConfig& h) {
  json j;
  j["chains"] = h.chains;
  j["warmup_iters"] = h.warmup_iters;
  j["sampling_iters"] = h.sampling_iters;
  j["leapfrog_steps"] = h.leapfrog_steps;
  j["target_accept"] = h.target_accept;
  j["seed"] = h.seed;
  j["adapt_metric"] = h.adapt_metric;
  j["tau_q_fixed"] = h.fixed.tau_q ? json(*h.fixed.tau_q) : json();
  j["tau_C_fixed"] = h.fixed.tau_C ? json(*h.fixed.tau_C) : json();
  return j;
}

NewtonConfig newton_from(const json& cfg, NewtonConfig n) {
  if (cfg.contains("newton")) {
    const json& j = cfg["newton"];
    take(j, "cg_tolerance", n.cg_tolerance);
    take(j, "max_cg_iters", n.max_cg_iters);
    take(j, "outer_rel_tol", n.outer_rel_tol);
    take(j, "max_outer_iters", n.max_outer_iters);
    take(j, "gradient_tol", n.gradient_tol);
  }
  n.validate();
  return n;
}

HyperParams hyper_from(const json& cfg) {
  HyperParams h;
  if (cfg.contains("hyper")) {
    const json& j = cfg["hyper"];
    take(j, "a_q", h.a_q);
    take(j, "b_q", h.b_q);
    take(j, "a_C", h.a_C);
    take(j, "b_C", h.b_C);
  }
  h.validate();
  return h;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  for (const auto& x : split_list(s)) {
    try {
      out.push_back(std::stod(x));
    } catch (const std::exception&) {
      throw UsageError("cannot parse grid value '" + x + "'");
    }
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

/// Writes {"manifest": ..., "result": ...} and the sidecar.
void write_artifact(const std::string& path, RunManifest m, const json& result,
                    const std::chrono::steady_clock::time_point& t0,
                    const json& timings = json::object()) {
  m.outputs.insert(m.outputs.begin(), path);
  json j;
  j["manifest"] = m.to_json();
  j["result"] = result;
  write_text_file(path, dump_json(j));
  write_run_sidecar(path, m,
                    std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0).count(),
                    timings);
}

LaplacianMatrix prior_laplacian(const std::string& graph_path, int K, bool& fallback) {
  fallback = graph_path.empty();
  const LabelGraph g = fallback ? identity_fallback_graph(K) : load_graph(graph_path);
  if (g.K != K) throw UsageError("graph has K=" + std::to_string(g.K) + " but counts have K=" +
                                 std::to_string(K));
  return laplacian(g);
}

void add_common_flags(CLI::App* app, CommonFlags& fl, bool sampling, bool bootstrap) {
  app->add_option("--config", fl.config_path, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", fl.seed, "RNG seed");
  if (sampling) {
    app->add_option("--chains", fl.chains, "HMC chains");
    app->add_option("--warmup", fl.warmup, "HMC warm-up iterations per chain");
    app->add_option("--iters", fl.iters, "HMC sampling iterations per chain");
    app->add_option("--leapfrog", fl.leapfrog, "HMC leapfrog steps per iteration");
    app->add_option("--tau-fixed", fl.tau_fixed,
                    "Fix precision scales: X (both), or q=X and/or C=Y");
  }
  if (bootstrap) app->add_option("--bootstrap", fl.bootstrap, "bootstrap resamples");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bayeshift: label-shift prior estimation with graph-smoothed Bayesian inference"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = command_line(argc, argv);

  // graph
  CommonFlags gfl;
  std::string g_emb, g_out;
  int g_k = 0;
  auto* graph_cmd = app.add_subcommand("graph", "build a k-NN label graph from class embeddings");
  graph_cmd->add_option("--embeddings", g_emb, "embeddings CSV or JSON")->required();
  graph_cmd->add_option("--k", g_k, "neighbours per class")->required();
  graph_cmd->add_option("--out", g_out, "output graph JSON")->required();

  // estimate
  CommonFlags efl;
  std::string e_counts, e_graph, e_method, e_out, e_draws;
  double e_lambda = -1.0;
  auto* est_cmd = app.add_subcommand("estimate", "estimate the target prior from counts");
  est_cmd->add_option("--counts", e_counts, "counts CSV or JSON")->required();
  est_cmd->add_option("--graph", e_graph, "graph JSON (identity fallback when omitted)");
  est_cmd->add_option("--method", e_method, "bbse|em|rlls|mlls|gsb3se-map|gsb3se-hmc")
      ->required();
  est_cmd->add_option("--out", e_out, "output JSON")->required();
  est_cmd->add_option("--rlls-lambda", e_lambda, "RLLS penalty (default 1/sqrt(n'))");
  est_cmd->add_option("--draws-out", e_draws, "optional CSV of HMC draws");
  add_common_flags(est_cmd, efl, true, false);

  // benchmark
  CommonFlags bfl;
  std::string b_out, b_methods;
  int b_seeds = 1;
  auto* bench_cmd = app.add_subcommand("benchmark", "evaluate methods on synthetic scenarios");
  bench_cmd->add_option("--out-dir", b_out, "output directory")->required();
  bench_cmd->add_option("--methods", b_methods, "comma-separated method list");
  bench_cmd->add_option("--seeds", b_seeds, "number of scenario seeds")->check(CLI::PositiveNumber);
  add_common_flags(bench_cmd, bfl, true, true);

  // flow
  CommonFlags ffl;
  std::string f_counts, f_graph, f_out;
  double f_tau = 1.0, f_dt = 0.0;
  int f_steps = 2000, f_every = 1;
  auto* flow_cmd = app.add_subcommand("flow", "integrate the replicator-Laplacian flow");
  flow_cmd->add_option("--counts", f_counts, "counts CSV or JSON")->required();
  flow_cmd->add_option("--graph", f_graph, "graph JSON (identity fallback when omitted)");
  flow_cmd->add_option("--out", f_out, "output CSV (t, q..., F)")->required();
  flow_cmd->add_option("--tau", f_tau, "tau_q")->check(CLI::NonNegativeNumber);
  flow_cmd->add_option("--dt", f_dt, "step size (default 1e-3 / alpha)");
  flow_cmd->add_option("--steps", f_steps, "RK4 steps")->check(CLI::PositiveNumber);
  flow_cmd->add_option("--record-every", f_every, "keep every n-th state")
      ->check(CLI::PositiveNumber);
  add_common_flags(flow_cmd, ffl, false, false);

  // theory
  CommonFlags tfl;
  std::string t_exp, t_out, t_grid, t_family;
  std::optional<int> t_seeds;
  auto* theory_cmd = app.add_subcommand("theory", "run an asymptotic-theory experiment");
  theory_cmd->add_option("experiment", t_exp, "contraction|variance|robustness")
      ->required()
      ->check(CLI::IsMember({"contraction", "variance", "robustness"}));
  theory_cmd->add_option("--out-dir", t_out, "output directory")->required();
  theory_cmd->add_option("--n-grid", t_grid, "comma-separated total sample sizes");
  theory_cmd->add_option("--family", t_family,
                         "variance: graph family (path,cycle,complete); "
                         "robustness: true,wrong graph pair");
  theory_cmd->add_option("--seeds", t_seeds, "number of seeds")->check(CLI::PositiveNumber);
  add_common_flags(theory_cmd, tfl, true, false);

  // simulate
  CommonFlags sfl;
  std::string s_out, s_counts;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic scenario");
  sim_cmd->add_option("--out", s_out, "dataset JSON")->required();
  sim_cmd->add_option("--counts-out", s_counts, "optional counts CSV");
  add_common_flags(sim_cmd, sfl, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*graph_cmd) {
      const ClassEmbeddings emb = load_embeddings(g_emb);
      const LabelGraph g = build_knn_graph(emb, g_k);
      const LaplacianMatrix lap = laplacian(g);
      manifest.config = {{"embeddings", g_emb}, {"k", g_k}};
      write_artifact(g_out, manifest, graph_to_json(g, lap, emb.labels), t0);
      std::cout << "K=" << g.K << " edges=" << g.edges.size() << " lambda2=" << lap.lambda2
                << " connected=" << (lap.connected ? "yes" : "no")
                << " bridges_added=" << g.bridges_added << "\n";
      return kExitOk;
    }

    if (*est_cmd) {
      const json cfg = load_config(efl.config_path);
      if (!is_known_method(e_method)) throw UsageError("unknown method '" + e_method + "'");
      const CountData data = load_counts(e_counts);
      const HyperParams hyper = hyper_from(cfg);
      json result;
      manifest.config = {{"counts", e_counts}, {"graph", e_graph}, {"method", e_method}};
      if (e_method.rfind("gsb3se", 0) == 0) {
        bool fallback = false;
        const LaplacianMatrix lap = prior_laplacian(e_graph, data.K(), fallback);
        if (fallback)
          std::cerr << "warning: no --graph given; using the identity fallback prior\n";
        if (e_method == "gsb3se-map") {
          NewtonConfig nc = EvalConfig().newton;
          nc = newton_from(cfg, nc);
          if (efl.tau_fixed) nc.fixed = parse_tau_fixed(*efl.tau_fixed);
          const NewtonResult r = block_newton_cg(data, lap, hyper, nc);
          result = to_json(r);
          manifest.config["newton"] = {{"cg_tolerance", nc.cg_tolerance},
                                       {"max_cg_iters", nc.max_cg_iters},
                                       {"outer_rel_tol", nc.outer_rel_tol},
                                       {"max_outer_iters", nc.max_outer_iters}};
        } else {
          const HmcConfig h = hmc_from(cfg, efl);
          const PosteriorDraws pd = run_hmc(data, lap, hyper, h);
          result = to_json(summarize(pd));
          manifest.seed = h.seed;
          manifest.config["hmc"] = hmc_to_json(h);
          if (!e_draws.empty()) {
            write_text_file(e_draws, draws_to_csv(pd));
            manifest.outputs.push_back(e_draws);
          }
        }
        result["method"] = e_method;
        result["identity_fallback"] = fallback;
      } else {
        EvalConfig ec;
        ec.rlls_lambda = e_lambda;
        const Matrix C_hat = data.empirical_confusion(0.0);
        const SimplexVector qt(data.target_histogram());
        PriorEstimate est;
        if (e_method == "bbse") est = bbse(C_hat, qt);
        else if (e_method == "em") est = saerens_em(C_hat, data.target_counts);
        else if (e_method == "mlls") est = mlls(C_hat, data.target_counts);
        else {
          const double lambda = e_lambda >= 0.0 ? e_lambda : rlls_default_lambda(data.target_total);
          est = rlls(C_hat, qt, SimplexVector(data.source_totals / data.source_totals.sum()),
                     lambda);
          manifest.config["rlls_lambda"] = lambda;
        }
        result = to_json(est);
      }
      write_artifact(e_out, manifest, result, t0);
      return kExitOk;
    }

    if (*bench_cmd) {
      const json cfg = load_config(bfl.config_path);
      ScenarioConfig sc = scenario_from(cfg);
      if (bfl.seed) sc.seed = *bfl.seed;
      EvalConfig ec;
      ec.hyper = hyper_from(cfg);
      ec.hmc = hmc_from(cfg, bfl);
      ec.newton = newton_from(cfg, ec.newton);
      take(cfg, "bootstrap", ec.bootstrap);
      take(cfg, "rlls_lambda", ec.rlls_lambda);
      if (bfl.bootstrap) ec.bootstrap = *bfl.bootstrap;
      std::vector<std::string> methods = default_benchmark_methods();
      if (cfg.contains("methods")) methods = cfg["methods"].get<std::vector<std::string>>();
      if (!b_methods.empty()) methods = split_list(b_methods);
      for (const auto& m : methods)
        if (!is_known_method(m)) throw UsageError("unknown method '" + m + "'");
      ensure_dir(b_out);
      int failures = 0;
      int total = 0;
      for (int s = 0; s < b_seeds; ++s) {
        ScenarioConfig c = sc;
        c.seed = sc.seed + static_cast<std::uint64_t>(s);
        EvalConfig e = ec;
        e.hmc.seed = ec.hmc.seed + static_cast<std::uint64_t>(s);
        e.bootstrap_seed = c.seed;
        const SyntheticDataset ds = generate_scenario(c);
        const EvalReport rep = evaluate_methods(ds, methods, laplacian(ds.graph), e);
        for (const auto& m : rep.methods) {
          ++total;
          if (!m.ok) {
            ++failures;
            std::cerr << "warning: method " << m.method << " failed: " << m.error << "\n";
          }
        }
        const std::string stem = (fs::path(b_out) / ("report_seed" + std::to_string(c.seed))).string();
        RunManifest m = manifest;
        m.seed = c.seed;
        m.config = {{"scenario", scenario_to_json(c)},
                    {"hmc", hmc_to_json(e.hmc)},
                    {"methods", methods},
                    {"bootstrap", e.bootstrap}};
        m.outputs.push_back(stem + ".csv");
        write_text_file(stem + ".csv", eval_report_csv(rep));
        write_artifact(stem + ".json", m, to_json(rep), t0, eval_timings_json(rep));
        std::cout << stem << ".json\n";
      }
      return failures == total ? kExitRuntime : kExitOk;
    }

    if (*flow_cmd) {
      const json cfg = load_config(ffl.config_path);
      const CountData data = load_counts(f_counts);
      bool fallback = false;
      FlowProblem p{SimplexVector(data.target_histogram()), data.empirical_confusion(1.0),
                    prior_laplacian(f_graph, data.K(), fallback), f_tau, data.target_total};
      FlowConfig fc;
      fc.dt = f_dt;
      fc.steps = f_steps;
      fc.record_every = f_every;
      take(cfg, "dt", fc.dt);
      const FlowTrajectory traj = replicator_flow(SimplexVector::uniform(data.K()), p, fc);
      write_text_file(f_out, flow_to_csv(traj));
      manifest.outputs = {f_out};
      manifest.config = {{"counts", f_counts}, {"graph", f_graph}, {"tau_q", f_tau},
                         {"dt", traj.dt}, {"steps", f_steps}, {"identity_fallback", fallback},
                         {"truncated", traj.truncated}, {"max_sum_drift", traj.max_sum_drift},
                         {"max_F_increase", traj.max_F_increase}};
      write_run_sidecar(f_out, manifest,
                        std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0).count());
      std::cout << "states=" << traj.states.size() << " F_final=" << traj.states.back().F_value
                << (traj.truncated ? " truncated" : "") << "\n";
      return kExitOk;
    }

    if (*theory_cmd) {
      const json cfg = load_config(tfl.config_path);
      ScenarioConfig sc = scenario_from(cfg, theory_base_scenario());
      if (tfl.seed) sc.seed = *tfl.seed;
      ExperimentConfig ex;
      ex.hyper = hyper_from(cfg);
      ex.hmc = hmc_from(cfg, tfl, ex.hmc);
      int seeds = 20;
      take(cfg, "seeds", seeds);
      if (t_seeds) seeds = *t_seeds;
      std::vector<double> grid = {1e3, 1e4, 1e5};
      take(cfg, "N_grid", grid);
      if (!t_grid.empty()) grid = parse_grid(t_grid);
      ensure_dir(t_out);
      auto named_graph = [&](const std::string& name) -> LabelGraph {
        if (name == "path") return path_graph(sc.K);
        if (name == "cycle") return cycle_graph(sc.K);
        if (name == "complete") return complete_graph(sc.K);
        if (name == "knn") return generate_scenario(sc).graph;
        throw UsageError("unknown graph '" + name + "' (path|cycle|complete|knn)");
      };
      json result;
      manifest.seed = sc.seed;
      manifest.config = {{"experiment", t_exp}, {"scenario", scenario_to_json(sc)},
                         {"hmc", hmc_to_json(ex.hmc)}, {"seeds", seeds}};
      if (t_exp == "contraction") {
        const ContractionResult r = contraction_experiment(sc, grid, seeds, ex);
        result = to_json(r);
        manifest.config["N_grid"] = grid;
        std::cout << "slope=" << r.slope << "\n";
      } else if (t_exp == "variance") {
        std::vector<std::string> names = {"path", "cycle", "complete"};
        if (cfg.contains("family")) names = cfg["family"].get<std::vector<std::string>>();
        if (!t_family.empty()) names = split_list(t_family);
        std::vector<std::pair<std::string, LabelGraph>> fam;
        for (const auto& n : names) fam.emplace_back(n, named_graph(n));
        double N = 1000.0;
        take(cfg, "N", N);
        if (!t_grid.empty()) N = grid.front();
        if (!ex.hmc.fixed.tau_q) ex.hmc.fixed.tau_q = 1.0;
        manifest.config["hmc"] = hmc_to_json(ex.hmc);
        manifest.config["family"] = names;
        manifest.config["N"] = N;
        const VarianceResult r =
            variance_connectivity_experiment(sc.with_total_N(N), fam, seeds, ex);
        result = to_json(r);
        const bool mono = r.monotone_fraction() >= 0.8;
        result["verdict"] = mono && r.bound_dominates ? "non-increasing" : "violated";
        std::cout << "monotone_fraction=" << r.monotone_fraction()
                  << " bound_dominates=" << (r.bound_dominates ? "yes" : "no") << "\n";
      } else {
        std::vector<std::string> names = {"path", "complete"};
        if (cfg.contains("family")) names = cfg["family"].get<std::vector<std::string>>();
        if (!t_family.empty()) names = split_list(t_family);
        if (names.size() != 2) throw UsageError("robustness needs --family true,wrong");
        std::optional<SimplexVector> truth;
        if (cfg.contains("theta0")) {
          const auto t = cfg["theta0"].get<std::vector<double>>();
          if (static_cast<int>(t.size()) != sc.K)
            throw UsageError("theta0 must have K entries");
          Vector th = Eigen::Map<const Vector>(t.data(), sc.K);
          th.array() -= th.mean();
          truth = softmax_centered(CenteredLogOdds(th));
          manifest.config["theta0"] = t;
        }
        const RobustnessResult r = robustness_experiment(
            sc, named_graph(names[0]), named_graph(names[1]), grid, seeds, ex, truth);
        result = to_json(r);
        manifest.config["family"] = names;
        manifest.config["N_grid"] = grid;
        std::cout << "decreasing_fraction=" << r.decreasing_fraction()
                  << " below_bound=" << (r.below_bound ? "yes" : "no")
                  << (r.zero_bias_path ? " (L_wrong == L_true: bound term is 0)" : "") << "\n";
      }
      write_artifact((fs::path(t_out) / (t_exp + ".json")).string(), manifest, result, t0);
      return kExitOk;
    }

    if (*sim_cmd) {
      const json cfg = load_config(sfl.config_path);
      ScenarioConfig sc = scenario_from(cfg);
      if (sfl.seed) sc.seed = *sfl.seed;
      const SyntheticDataset ds = generate_scenario(sc);
      manifest.seed = sc.seed;
      manifest.config = {{"scenario", scenario_to_json(sc)}};
      if (!s_counts.empty()) {
        write_text_file(s_counts, counts_to_csv(ds.counts));
        manifest.outputs.push_back(s_counts);
      }
      write_artifact(s_out, manifest, dataset_to_json(ds), t0);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
