#pragma once

// Batch runner, JSON-lines traces, evaluation metrics and plot tables.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackgym/agents.hpp"
#include "trackgym/config.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/simulation.hpp"
#include "trackgym/udp.hpp"

namespace trackgym {

// Agent assignment: "name" for every learning agent, or
// "a1=center_follow,a2=weave". "external" leaves sessions to remote clients.
inline std::map<std::string, std::string> parse_agent_spec(const std::string& spec, const SimulationConfig& cfg) {
  std::map<std::string, std::string> out;
  if (spec.find('=') == std::string::npos) {
    for (const auto& a : cfg.agents) out[a.name] = spec;
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("agent spec entry '" + item + "' is not name=policy");
      const auto name = item.substr(0, eq);
      cfg.agent_index(name);
      out[name] = item.substr(eq + 1);
    }
    for (const auto& a : cfg.agents)
      if (!out.count(a.name)) out[a.name] = "center_follow";
  }
  for (const auto& [name, policy] : out) {
    if (policy == "external") continue;
    const auto& known = scripted_agent_names();
    if (std::find(known.begin(), known.end(), policy) == known.end()) {
      throw ValidationError("unknown scripted agent '" + policy + "' (known: center_follow, weave, full_throttle)");
    }
  }
  return out;
}

// Drives a Simulation with in-process clients over the wire strings.
class InProcessDriver : public StepDriver {
 public:
  explicit InProcessDriver(Simulation& sim) : sim_(sim) {}

  void attach(const std::string& agent, std::unique_ptr<ScriptedClient> client) {
    clients_[sim_.session_of_agent(agent)] = std::move(client);
  }

  ScriptedClient& client(const std::string& agent) { return *clients_.at(sim_.session_of_agent(agent)); }

  void start() override {
    for (auto& [idx, c] : clients_) c->on_message(sim_.handle_message(idx, c->hello()));
    sim_.start();
    deliver();
  }

  StepReport step() override {
    auto rep = sim_.step();
    deliver();
    return rep;
  }

 private:
  void deliver() {
    for (auto& out : sim_.drain_outbox()) {
      auto it = clients_.find(out.session);
      if (it == clients_.end()) continue;
      if (auto reply = it->second->on_message(out.message)) {
        const auto err = sim_.handle_message(out.session, *reply);
        if (!err.empty()) it->second->on_message(err);
      }
    }
  }

  Simulation& sim_;
  std::map<std::size_t, std::unique_ptr<ScriptedClient>> clients_;
};

inline nlohmann::ordered_json car_log_json(int episode, int step, const CarLog& c) {
  nlohmann::ordered_json j;
  j["type"] = "step";
  j["episode"] = episode;
  j["step"] = step;
  j["agent"] = c.agent;
  j["kind"] = c.kind == SessionKind::learning ? "learning" : "traffic";
  j["x"] = c.x;
  j["y"] = c.y;
  j["heading"] = c.heading;
  j["s"] = c.s;
  j["track_pos"] = c.track_pos;
  j["speed_kmh"] = c.speed_kmh;
  j["lat_speed_kmh"] = c.lat_speed_kmh;
  j["distance"] = c.distance;
  j["steer"] = c.steer;
  j["accel"] = c.accel;
  j["brake"] = c.brake;
  j["damage"] = c.damage;
  j["rank"] = c.rank;
  j["reward"] = c.reward;
  j["done"] = c.done;
  j["reason"] = c.reason;
  return j;
}

inline nlohmann::ordered_json outcome_json(const AgentOutcome& o) {
  nlohmann::ordered_json j;
  j["agent"] = o.agent;
  j["car"] = o.car;
  j["steps"] = o.steps;
  j["distance"] = o.distance;
  j["time"] = o.time;
  j["fraction_of_lap"] = o.fraction_of_lap;
  j["avg_speed_kmh"] = o.avg_speed_kmh;
  j["lap_completed"] = o.lap_completed;
  j["final_rank"] = o.final_rank;
  j["damage"] = o.damage;
  j["reward_sum"] = o.reward_sum;
  j["overtakes"] = o.overtakes;
  j["rank1_events"] = o.rank1_events;
  j["done_reason"] = o.done_reason;
  return j;
}

inline AgentOutcome outcome_from_json(const nlohmann::json& j) {
  AgentOutcome o;
  o.agent = j.at("agent").get<std::string>();
  o.car = j.at("car").get<std::string>();
  o.steps = j.at("steps").get<int>();
  o.distance = j.at("distance").get<double>();
  o.time = j.at("time").get<double>();
  o.fraction_of_lap = j.at("fraction_of_lap").get<double>();
  o.avg_speed_kmh = j.at("avg_speed_kmh").get<double>();
  o.lap_completed = j.at("lap_completed").get<bool>();
  o.final_rank = j.at("final_rank").get<int>();
  o.damage = j.at("damage").get<double>();
  o.reward_sum = j.at("reward_sum").get<double>();
  o.overtakes = j.at("overtakes").get<int>();
  o.rank1_events = j.at("rank1_events").get<int>();
  o.done_reason = j.at("done_reason").get<std::string>();
  return o;
}

struct MetricsSummary {
  int records = 0;
  double mean_fraction_of_lap = 0.0;
  double avg_speed_kmh = 0.0;
  double completion_rate = 0.0;

  bool operator==(const MetricsSummary&) const = default;
};

// Means over agent-episode records; speed is total distance over total
// driving time.
inline MetricsSummary compute_metrics(const std::vector<AgentOutcome>& records) {
  if (records.empty()) throw ValidationError("compute_metrics: no records");
  MetricsSummary m;
  m.records = static_cast<int>(records.size());
  double frac = 0.0, dist = 0.0, time = 0.0;
  int completed = 0;
  for (const auto& r : records) {
    frac += r.fraction_of_lap;
    dist += r.distance;
    time += r.time;
    if (r.fraction_of_lap >= 1.0) ++completed;
  }
  m.mean_fraction_of_lap = frac / m.records;
  m.avg_speed_kmh = time > 0.0 ? dist / time * 3.6 : 0.0;
  m.completion_rate = static_cast<double>(completed) / m.records;
  return m;
}

inline nlohmann::ordered_json metrics_json(const MetricsSummary& m) {
  nlohmann::ordered_json j;
  j["records"] = m.records;
  j["mean_fraction_of_lap"] = m.mean_fraction_of_lap;
  j["avg_speed_kmh"] = m.avg_speed_kmh;
  j["completion_rate"] = m.completion_rate;
  return j;
}

// Parsed trace file.
struct EpisodeTrace {
  nlohmann::json header;
  std::vector<nlohmann::json> steps;
  std::vector<AgentOutcome> outcomes;
};

inline EpisodeTrace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open trace");
  EpisodeTrace t;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(n) + ": " + e.what());
    }
    const auto type = j.value("type", "");
    if (type == "episode") {
      t.header = j;
    } else if (type == "step") {
      t.steps.push_back(std::move(j));
    } else if (type == "outcome") {
      for (const auto& a : j.at("agents")) t.outcomes.push_back(outcome_from_json(a));
    } else {
      throw ParseError(path + ":" + std::to_string(n) + ": unknown record type '" + type + "'");
    }
  }
  return t;
}

inline std::vector<std::string> trace_files(const std::string& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) throw ParseError(dir + ": not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("episode_", 0) == 0 && e.path().extension() == ".jsonl") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Outcomes rebuilt from step rows alone, used to cross-check the stored
// outcome records.
inline std::vector<AgentOutcome> outcomes_from_steps(const EpisodeTrace& t) {
  const double lap = t.header.at("track_length").get<double>();
  std::map<std::string, AgentOutcome> by_agent;
  std::vector<std::string> order;
  for (const auto& row : t.steps) {
    if (row.at("kind") != "learning") continue;
    const auto name = row.at("agent").get<std::string>();
    auto [it, fresh] = by_agent.try_emplace(name);
    if (fresh) order.push_back(name);
    auto& o = it->second;
    if (row.at("done").get<bool>() && o.done_reason.empty()) {
      o.steps = row.at("step").get<int>();
      o.distance = row.at("distance").get<double>();
      o.final_rank = row.at("rank").get<int>();
      o.damage = row.at("damage").get<double>();
      o.done_reason = row.at("reason").get<std::string>();
    }
    if (o.done_reason.empty() || row.at("step").get<int>() == o.steps) o.reward_sum += row.at("reward").get<double>();
  }
  std::vector<AgentOutcome> out;
  for (const auto& name : order) {
    auto o = by_agent[name];
    o.agent = name;
    o.time = o.steps * kControlDt;
    o.fraction_of_lap = o.distance / lap;
    o.avg_speed_kmh = o.time > 0.0 ? o.distance / o.time * 3.6 : 0.0;
    o.lap_completed = o.fraction_of_lap >= 1.0;
    out.push_back(o);
  }
  return out;
}

inline const std::vector<std::string>& plot_kinds() {
  static const std::vector<std::string> k{"episode_reward", "speed_profile", "trajectory_xy"};
  return k;
}

// CSV with a one-line header.
//   episode_reward: episode,agent,reward_sum
//   speed_profile:  episode,step,agent,speed_kmh
//   trajectory_xy:  step,agent,x,y  (plus episode as the first column)
inline void emit_plot_data(const std::vector<EpisodeTrace>& traces, const std::string& kind, std::ostream& out) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  if (kind == "episode_reward") {
    out << "episode,agent,reward_sum\n";
    for (const auto& t : traces) {
      const int ep = t.header.value("episode", 0);
      for (const auto& o : t.outcomes) out << ep << "," << o.agent << "," << num(o.reward_sum) << "\n";
    }
  } else if (kind == "speed_profile") {
    out << "episode,step,agent,speed_kmh\n";
    for (const auto& t : traces) {
      for (const auto& r : t.steps) {
        out << r.at("episode").get<int>() << "," << r.at("step").get<int>() << "," << r.at("agent").get<std::string>()
            << "," << num(r.at("speed_kmh").get<double>()) << "\n";
      }
    }
  } else if (kind == "trajectory_xy") {
    out << "episode,step,agent,x,y\n";
    for (const auto& t : traces) {
      for (const auto& r : t.steps) {
        out << r.at("episode").get<int>() << "," << r.at("step").get<int>() << "," << r.at("agent").get<std::string>()
            << "," << num(r.at("x").get<double>()) << "," << num(r.at("y").get<double>()) << "\n";
      }
    }
  } else {
    throw ValidationError("unknown plot kind '" + kind + "' (known: episode_reward, speed_profile, trajectory_xy)");
  }
}

struct BatchOptions {
  int episodes = 1;
  std::uint64_t seed = 0;
  std::string agent = "center_follow";
  std::string out_dir;  // empty: no files
  bool realtime = false;
  std::string transport = "inproc";  // inproc | udp
  std::string host = "127.0.0.1";
  double connect_timeout = 10.0;     // udp: seconds to wait for clients
};

struct BatchSummary {
  int episodes = 0;
  std::optional<MetricsSummary> metrics;
  std::vector<EpisodeResult> results;
  double wall_time = 0.0;
  std::uint64_t physics_ticks = 0;
  std::uint64_t steps = 0;
};

inline nlohmann::ordered_json episode_header_json(const Simulation& sim) {
  const auto& s = sim.setup();
  nlohmann::ordered_json j;
  j["type"] = "episode";
  j["episode"] = s.episode;
  j["seed"] = s.seed;
  j["track"] = s.track;
  j["track_length"] = sim.track().total_length();
  j["learning_cars"] = s.learning_cars;
  j["n_traffic"] = s.n_traffic;
  nlohmann::ordered_json traffic = nlohmann::ordered_json::array();
  for (int i = 0; i < s.n_traffic; ++i) {
    const auto k = static_cast<std::size_t>(i);
    traffic.push_back({{"behavior", to_string(s.traffic[k].behavior)},
                       {"distance", s.traffic_spawns[k].distance},
                       {"track_pos", s.traffic_spawns[k].track_pos}});
  }
  j["traffic"] = traffic;
  j["action_noise_std"] = s.action_noise_std;
  j["noisy_observations"] = s.noisy_observations;
  return j;
}

// Observer for each step; used by tests and the acceptance binary.
using StepObserver = std::function<void(const Simulation&, const StepReport&)>;

inline void write_summary(const std::string& path, const BatchSummary& b) {
  nlohmann::ordered_json j;
  j["episodes"] = b.episodes;
  j["metrics"] = b.metrics ? metrics_json(*b.metrics) : nlohmann::ordered_json(nullptr);
  j["wall_time_s"] = b.wall_time;
  std::ofstream(path) << j.dump(1) << "\n";
}

// Runs episodes with in-process scripted clients.
inline BatchSummary run_batch(const SimulationConfig& cfg, const BatchOptions& opt, const StepObserver& observe = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  BatchSummary out;
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);
  if (opt.episodes <= 0) {
    if (!opt.out_dir.empty()) write_summary(opt.out_dir + "/summary.json", out);
    return out;
  }
  if (opt.transport != "inproc" && opt.transport != "udp") {
    throw ValidationError("unknown transport '" + opt.transport + "' (known: inproc, udp)");
  }
  const auto assignment = parse_agent_spec(opt.agent, cfg);
  const bool udp = opt.transport == "udp";
  for (const auto& [name, policy] : assignment) {
    if (policy == "external" && !udp) throw ValidationError("external agents need the udp transport");
  }
  Simulation sim(cfg, opt.seed);
  auto client_for = [&](const AgentConfig& a) {
    return std::make_unique<ScriptedClient>(a.name, make_policy(assignment.at(a.name), a.target_speed, a.normalize_actions));
  };
  std::unique_ptr<StepDriver> driver;
  std::unique_ptr<udp::ServerDriver> server;
  std::vector<std::unique_ptr<udp::ClientThread>> threads;
  if (udp) {
    server = std::make_unique<udp::ServerDriver>(sim, opt.host, opt.connect_timeout);
    for (const auto& a : cfg.agents) {
      if (assignment.at(a.name) == "external") continue;
      const int port = sim.sessions()[sim.session_of_agent(a.name)].port;
      threads.push_back(std::make_unique<udp::ClientThread>(opt.host, port, client_for(a)));
    }
  } else {
    auto local = std::make_unique<InProcessDriver>(sim);
    for (const auto& a : cfg.agents) local->attach(a.name, client_for(a));
    driver = std::move(local);
  }
  StepDriver& drv = udp ? static_cast<StepDriver&>(*server) : *driver;
  drv.start();

  std::vector<AgentOutcome> all;
  std::unique_ptr<std::ofstream> trace;
  auto open_trace = [&] {
    if (opt.out_dir.empty()) return;
    char name[64];
    std::snprintf(name, sizeof name, "/episode_%04d.jsonl", sim.episode());
    trace = std::make_unique<std::ofstream>(opt.out_dir + name);
    *trace << episode_header_json(sim).dump() << "\n";
  };
  open_trace();
  auto next_tick = std::chrono::steady_clock::now();
  while (out.episodes < opt.episodes) {
    if (opt.realtime) {
      next_tick += std::chrono::microseconds(static_cast<long>(kControlDt * 1e6));
      std::this_thread::sleep_until(next_tick);
    }
    const int episode = sim.episode();
    auto rep = drv.step();
    if (observe) observe(sim, rep);
    if (trace) {
      for (const auto& c : rep.cars) *trace << car_log_json(episode, rep.step, c).dump() << "\n";
    }
    if (rep.episode_ended) {
      ++out.episodes;
      for (const auto& a : rep.result.agents) all.push_back(a);
      if (trace) {
        nlohmann::ordered_json o;
        o["type"] = "outcome";
        o["episode"] = rep.result.episode;
        o["agents"] = nlohmann::ordered_json::array();
        for (const auto& a : rep.result.agents) o["agents"].push_back(outcome_json(a));
        *trace << o.dump() << "\n";
        trace.reset();
      }
      out.results.push_back(std::move(rep.result));
      if (out.episodes < opt.episodes) open_trace();
    }
  }
  if (server) server->shutdown();
  for (auto& t : threads) t->join();
  out.metrics = compute_metrics(all);
  out.physics_ticks = sim.physics_ticks();
  out.steps = sim.steps_total();
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!opt.out_dir.empty()) write_summary(opt.out_dir + "/summary.json", out);
  return out;
}

}  // namespace trackgym
