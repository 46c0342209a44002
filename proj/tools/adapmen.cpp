// adapmen: command-line front end for training runs, verification sweeps,
// scaling experiments, D_Q histograms, MDP dumps and the HITL server.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "adapmen/analysis.hpp"
#include "adapmen/config.hpp"
#include "adapmen/hitl/server.hpp"
#include "adapmen/mdp_io.hpp"
#include "adapmen/metrics_io.hpp"
#include "adapmen/sweeps.hpp"
#include "adapmen/training.hpp"

namespace fs = std::filesystem;
using namespace adapmen;

namespace {

constexpr const char* kOutRootEnv = "ADAPMEN_OUT_ROOT";

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

/// Relative paths land under $ADAPMEN_OUT_ROOT when it is set.
fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / p;
  return p;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) continue;
    seeds.push_back(parse_u64(tok));
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds needs at least one integer");
  return seeds;
}

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string out;
};

ExperimentConfig load_with_flags(const CommonOptions& o) {
  ExperimentConfig cfg = load_config(o.config, o.overrides);
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

// ------------------------------------------------------------------ run

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig cfg = load_with_flags(o);
  const Environment env = make_env(cfg.env);
  const OptimalSolution opt = value_iteration_finite(env.mdp);
  const fs::path out_dir = resolve_out(cfg.output_dir);

  std::vector<TrainingResult> results(cfg.seeds.size());
  std::vector<std::thread> pool;
  const std::size_t threads =
      std::min<std::size_t>(cfg.seeds.size(), std::max(1u, std::thread::hardware_concurrency()));
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < cfg.seeds.size(); i += threads) {
        TrainingConfig tc = cfg.training;
        tc.seed = cfg.seeds[i];
        results[i] = train(env.mdp, opt, tc);
      }
    });
  for (auto& th : pool) th.join();

  std::ostringstream summary;
  double gap_sum = 0.0;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const fs::path seed_dir = out_dir / ("seed-" + std::to_string(cfg.seeds[i]));
    auto jsonl = open_out(seed_dir / "metrics.jsonl");
    write_metrics_jsonl(results[i].metrics, jsonl);
    auto csv = open_out(seed_dir / "metrics.csv");
    write_metrics_csv(results[i].metrics, csv);
    FlatRecord r;
    r.add("record", "seed_final").add("seed", static_cast<std::size_t>(cfg.seeds[i]));
    if (!results[i].metrics.empty()) {
      const auto& m = results[i].metrics.back();
      r.add("suboptimality_gap", m.suboptimality_gap)
          .add("J_learner", m.J_learner)
          .add("J_expert", m.J_expert)
          .add("p", m.p)
          .add("expert_action_usage", m.expert_action_usage);
      gap_sum += m.suboptimality_gap;
    }
    summary << r.str() << '\n';
  }
  summary << FlatRecord()
                 .add("record", "aggregate")
                 .add("algorithm", to_string(cfg.training.algorithm))
                 .add("env", to_string(cfg.env.kind))
                 .add("horizon", cfg.env.horizon)
                 .add("seeds", cfg.seeds.size())
                 .add("mean_final_gap", gap_sum / static_cast<double>(cfg.seeds.size()))
                 .str()
          << '\n';
  auto sum_out = open_out(out_dir / "summary.jsonl");
  sum_out << summary.str();
  std::cout << "wrote " << cfg.seeds.size() << " run(s) to " << out_dir.string() << '\n';
  return 0;
}

// ------------------------------------------------------------------ verify

struct VerifyOptions {
  std::string suite = "all";
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  std::string out = "verify";
  std::size_t scaling_seeds = 10;
};

bool verify_bounds(const VerifyOptions& o, const fs::path& dir) {
  const BoundsSweepResult res = run_bounds_sweep(o.instances, o.seed);
  auto out = open_out(dir / "bounds.jsonl");
  for (const auto& r : res.reports) out << to_record(r).str() << '\n';
  std::cout << "bounds: " << res.instances << " instances, " << res.reports.size() << " checks, "
            << res.violations.size() << " violations\n";
  for (const auto& v : res.violations)
    std::cout << "  VIOLATION " << v.report.name << " instance=" << v.instance.index
              << " seed=" << v.instance.seed << " S=" << v.instance.num_states << " A=" << v.instance.num_actions
              << " H=" << v.instance.horizon << " lhs=" << format_double(v.report.lhs)
              << " rhs=" << format_double(v.report.rhs) << '\n';
  return res.violations.empty();
}

bool verify_tails(const VerifyOptions& o, const fs::path& dir) {
  const TailSweepResult res = run_tail_sweep(o.instances, o.seed);
  auto out = open_out(dir / "tails.jsonl");
  for (std::size_t i = 0; i < res.reports.size(); ++i) {
    out << FlatRecord()
               .add("record", "tail_instance")
               .add("instance", res.instances[i].index)
               .add("seed", std::to_string(res.instances[i].seed))
               .add("monotone", survival_monotone(res.reports[i]))
               .str()
        << '\n';
    write_tail_report(res.reports[i], out);
  }
  std::cout << "tails: " << res.reports.size() << " instances, " << res.non_monotone.size()
            << " non-monotone survival curves\n";
  for (const auto& p : res.non_monotone)
    std::cout << "  VIOLATION survival_monotone instance=" << p.index << " seed=" << p.seed << '\n';
  return res.non_monotone.empty();
}

bool verify_scaling(const VerifyOptions& o, const fs::path& dir) {
  if (o.scaling_seeds == 0) {
    open_out(dir / "scaling.jsonl");
    std::cout << "scaling: 0 seeds, nothing to check\n";
    return true;
  }
  ScalingSettings s;
  s.seeds = o.scaling_seeds;
  s.base_seed = o.seed;
  const auto reports = scaling_experiment(s);
  const ScalingVerdict verdict = judge_scaling(reports);
  auto out = open_out(dir / "scaling.jsonl");
  for (const auto& r : reports) write_scaling_report(r, out);
  for (const auto& c : verdict.checks) out << to_record(c).str() << '\n';
  for (const auto& r : reports) std::cout << "scaling: " << r.algorithm << " slope " << format_double(r.slope) << '\n';
  for (const auto& c : verdict.checks)
    if (!c.holds)
      std::cout << "  VIOLATION " << c.name << " lhs=" << format_double(c.lhs) << " rhs=" << format_double(c.rhs)
                << " base_seed=" << o.seed << '\n';
  return verdict.pass;
}

int cmd_verify(const VerifyOptions& o) {
  const fs::path dir = resolve_out(o.out);
  bool ok = true;
  if (o.suite == "bounds" || o.suite == "all") ok = verify_bounds(o, dir) && ok;
  if (o.suite == "tails" || o.suite == "all") ok = verify_tails(o, dir) && ok;
  if (o.suite == "scaling" || o.suite == "all") ok = verify_scaling(o, dir) && ok;
  std::cout << (ok ? "verify: all checks hold\n" : "verify: violations found\n");
  return ok ? 0 : 1;
}

// ------------------------------------------------------------------ scaling

struct ScalingOptions {
  ScalingSettings settings;
  std::string horizons;
  std::string out = "scaling.jsonl";
};

int cmd_scaling(ScalingOptions o) {
  if (!o.horizons.empty()) {
    o.settings.horizons.clear();
    for (auto v : parse_seed_list(o.horizons)) o.settings.horizons.push_back(static_cast<std::size_t>(v));
  }
  const auto reports = scaling_experiment(o.settings);
  auto out = open_out(resolve_out(o.out));
  for (const auto& r : reports) write_scaling_report(r, out);
  for (const auto& r : reports) {
    std::cout << r.algorithm << ": slope " << format_double(r.slope) << (r.degenerate ? " (degenerate)" : "") << '\n';
    for (const auto& p : r.points)
      std::cout << "  H=" << p.horizon << " gap=" << format_double(p.mean_gap) << " sd=" << format_double(p.std_gap)
                << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------ dq-hist

struct HistOptions {
  CommonOptions common;
  std::size_t samples = 10000;
  std::string weighting = "teacher";
};

int cmd_dq_hist(const HistOptions& o) {
  const ExperimentConfig cfg = load_with_flags(o.common);
  if (o.weighting != "teacher" && o.weighting != "learner")
    throw std::invalid_argument("--weighting must be teacher or learner");
  const Environment env = make_env(cfg.env);
  const OptimalSolution opt = value_iteration_finite(env.mdp);
  const fs::path out_dir = resolve_out(cfg.output_dir);
  for (std::uint64_t seed : cfg.seeds) {
    TrainingConfig tc = cfg.training;
    tc.seed = seed;
    const TrainingResult r = train(env.mdp, opt, tc);
    const double p = r.metrics.empty() ? tc.criterion.threshold : r.metrics.back().p;
    const TailReport rep =
        dq_tail_analysis(env.mdp, opt, r.learner,
                         o.weighting == "teacher" ? TailWeighting::teacher : TailWeighting::learner, p, o.samples,
                         derive_seed(seed, 4));
    const fs::path base = out_dir / ("seed-" + std::to_string(seed));
    auto samples = open_out(base / "dq_samples.txt");
    write_samples(rep.samples, samples);
    auto tail = open_out(base / "dq_tail.jsonl");
    write_tail_report(rep, tail);
  }
  std::cout << "wrote D_Q samples for " << cfg.seeds.size() << " seed(s) to " << out_dir.string() << '\n';
  return 0;
}

// ------------------------------------------------------------------ dump-mdp

int cmd_dump_mdp(const CommonOptions& o, const std::string& file) {
  const ExperimentConfig cfg = load_config(o.config, o.overrides);
  const Environment env = make_env(cfg.env);
  if (file.empty() || file == "-") {
    dump_mdp(env.mdp, std::cout);
  } else {
    auto out = open_out(resolve_out(file));
    dump_mdp(env.mdp, out);
  }
  return 0;
}

// ------------------------------------------------------------------ serve

int cmd_serve(const CommonOptions& o, const std::string& host, std::uint16_t port) {
  const ExperimentConfig cfg = load_with_flags(o);
  hitl::ServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.log_dir = resolve_out(cfg.session.log_dir).string();
  std::unique_ptr<hitl::Server> server;
  try {
    server = std::make_unique<hitl::Server>(cfg, opts);
  } catch (const hitl::ws::SocketError& e) {
    std::cerr << "adapmen serve: " << e.what() << '\n';
    return 3;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ':' << server->port() << ", logs in " << server->log_dir() << std::endl;
  server->run(g_stop);
  std::cout << "stopped after " << server->sessions_started() << " session(s)" << std::endl;
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_seeds = true) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--override", o.overrides, "Dotted key=value applied to the config")->take_all();
  if (with_seeds) {
    cmd->add_option("--seed", o.seed, "Run this single seed");
    cmd->add_option("--seeds", o.seeds, "Comma-separated seed list");
    cmd->add_option("--out", o.out, "Output directory");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive expert intervention for tabular imitation learning"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Train per seed and write metrics");
  add_common(run, run_opts);

  VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "Run a verification sweep");
  verify->add_option("suite", verify_opts.suite, "bounds, tails, scaling or all")
      ->check(CLI::IsMember({"bounds", "tails", "scaling", "all"}));
  verify->add_option("--instances", verify_opts.instances, "Random instances for bounds and tails");
  verify->add_option("--seed", verify_opts.seed, "Base seed");
  verify->add_option("--seeds", verify_opts.scaling_seeds, "Seeds per horizon for the scaling suite");
  verify->add_option("--out", verify_opts.out, "Report directory");

  ScalingOptions scaling_opts;
  auto* scaling = app.add_subcommand("scaling", "Final gap against horizon on cliffwalk");
  scaling->add_option("--seeds", scaling_opts.settings.seeds, "Seeds per horizon");
  scaling->add_option("--seed", scaling_opts.settings.base_seed, "Base seed");
  scaling->add_option("--horizons", scaling_opts.horizons, "Comma-separated horizons");
  scaling->add_option("--width", scaling_opts.settings.width, "Cliffwalk width");
  scaling->add_option("--label-noise", scaling_opts.settings.label_noise, "Label flip probability");
  scaling->add_option("--steps", scaling_opts.settings.total_steps, "Environment steps per run");
  scaling->add_option("--threads", scaling_opts.settings.threads, "Worker threads (0 = all cores)");
  scaling->add_option("--out", scaling_opts.out, "Report file (JSONL)");

  HistOptions hist_opts;
  auto* hist = app.add_subcommand("dq-hist", "Train, then sample D_Q under the final teacher or learner");
  add_common(hist, hist_opts.common);
  hist->add_option("--samples", hist_opts.samples, "Number of D_Q samples");
  hist->add_option("--weighting", hist_opts.weighting, "teacher or learner");

  CommonOptions dump_opts;
  std::string dump_file;
  auto* dump = app.add_subcommand("dump-mdp", "Write the configured environment in the MDP text format");
  add_common(dump, dump_opts, false);
  dump->add_option("--out", dump_file, "Output file (default stdout)");

  CommonOptions serve_opts;
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;
  auto* serve = app.add_subcommand("serve", "Serve human-in-the-loop sessions over WebSocket");
  add_common(serve, serve_opts);
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Listen address");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*verify) return cmd_verify(verify_opts);
    if (*scaling) return cmd_scaling(scaling_opts);
    if (*hist) return cmd_dq_hist(hist_opts);
    if (*dump) return cmd_dump_mdp(dump_opts, dump_file);
    if (*serve) return cmd_serve(serve_opts, host, port);
  } catch (const ConfigError& e) {
    std::cerr << "adapmen: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "adapmen: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
