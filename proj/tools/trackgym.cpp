// trackgym: run scripted episodes, summarize traces, export plot tables.
//
// Exit codes: 0 success, 2 config or usage error, 3 runtime fault.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "trackgym/harness.hpp"

namespace {

using namespace trackgym;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunArgs {
  std::string config;
  std::string comms;
  BatchOptions opt;
};

struct TraceArgs {
  std::string dir;
  std::string kind;
  std::string out;
};

SimulationConfig load(const RunArgs& a) {
  auto cfg = load_config_file(a.config, a.comms);
  if (const char* env = std::getenv("TRACKGYM_BASE_PORT")) {
    try {
      std::size_t used = 0;
      const int port = std::stoi(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      cfg.server.base_port = port;
    } catch (const std::exception&) {
      throw ConfigError("TRACKGYM_BASE_PORT", std::string("not an integer: '") + env + "'");
    }
    validate_config(cfg);
  }
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const auto cfg = load(a);
  if (a.opt.transport == "udp") {
    std::cerr << "learning ports:";
    const auto plan = assign_ports(cfg.max_traffic(), cfg.n_learning(), cfg.server.base_port);
    for (int p : plan.learning) std::cerr << " " << p;
    std::cerr << "\n";
  }
  const auto s = run_batch(cfg, a.opt);
  nlohmann::ordered_json j;
  j["episodes"] = s.episodes;
  j["metrics"] = s.metrics ? metrics_json(*s.metrics) : nlohmann::ordered_json(nullptr);
  j["steps"] = s.steps;
  j["physics_ticks"] = s.physics_ticks;
  j["wall_time_s"] = s.wall_time;
  if (!a.opt.out_dir.empty()) j["out_dir"] = a.opt.out_dir;
  std::cout << j.dump(2) << "\n";
  return 0;
}

std::vector<EpisodeTrace> traces_in(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError(dir, "not a directory");
  std::vector<EpisodeTrace> out;
  for (const auto& f : trace_files(dir)) out.push_back(read_trace(f));
  return out;
}

int cmd_metrics(const TraceArgs& a) {
  std::vector<AgentOutcome> all;
  for (const auto& t : traces_in(a.dir)) all.insert(all.end(), t.outcomes.begin(), t.outcomes.end());
  if (all.empty()) {
    std::cerr << "trackgym: no episode outcomes under " << a.dir << "\n";
    return kExitRuntime;
  }
  std::cout << metrics_json(compute_metrics(all)).dump(2) << "\n";
  return 0;
}

int cmd_plot(const TraceArgs& a) {
  const auto traces = traces_in(a.dir);
  if (a.out.empty() || a.out == "-") {
    emit_plot_data(traces, a.kind, std::cout);
  } else {
    std::ofstream f(a.out);
    if (!f) throw SimulationFault("cannot write " + a.out);
    emit_plot_data(traces, a.kind, f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent track-driving simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* r = app.add_subcommand("run", "run episodes with scripted agents and write traces");
  r->add_option("--config", run.config, "simulation YAML")->required();
  r->add_option("--comms", run.comms, "communications YAML");
  r->add_option("--episodes", run.opt.episodes, "episodes to run")->check(CLI::NonNegativeNumber);
  r->add_option("--seed", run.opt.seed, "master seed");
  r->add_option("--agent", run.opt.agent, "policy for all agents, or name=policy,...  (center_follow, weave, full_throttle, external)");
  r->add_option("--out-dir", run.opt.out_dir, "trace directory");
  r->add_flag("--realtime", run.opt.realtime, "pace steps at 0.02 s");
  r->add_option("--transport", run.opt.transport, "inproc or udp")->check(CLI::IsMember({"inproc", "udp"}));
  r->add_option("--host", run.opt.host, "udp bind address");
  r->add_option("--connect-timeout", run.opt.connect_timeout, "udp: seconds to wait for clients");

  TraceArgs metrics;
  auto* m = app.add_subcommand("metrics", "summarize a trace directory");
  m->add_option("dir", metrics.dir, "trace directory")->required();

  TraceArgs plot;
  auto* p = app.add_subcommand("plot", "export a plot table as CSV");
  p->add_option("dir", plot.dir, "trace directory")->required();
  p->add_option("--kind", plot.kind, "episode_reward, speed_profile or trajectory_xy")
      ->required()
      ->check(CLI::IsMember(plot_kinds()));
  p->add_option("--out", plot.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*r) return cmd_run(run);
    if (*m) return cmd_metrics(metrics);
    if (*p) return cmd_plot(plot);
  } catch (const ConfigError& e) {
    std::cerr << "trackgym: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "trackgym: invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "trackgym: parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "trackgym: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
