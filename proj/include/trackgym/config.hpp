#pragma once

// Simulation configuration (server / agents / traffic / curriculum), the
// communications document, per-episode sampling and curriculum stages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "trackgym/control.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/reward.hpp"
#include "trackgym/sensing.hpp"
#include "trackgym/traffic.hpp"

#ifndef TRACKGYM_DATA_DIR
#define TRACKGYM_DATA_DIR "data"
#endif

namespace trackgym {

struct BottleneckSpec {
  Range parking_distance{30.0, 40.0};
  Range gap_width{2.76, 4.06};

  bool operator==(const BottleneckSpec&) const = default;
};

struct ServerConfig {
  int base_port = 3001;
  int max_cars = 1;
  int min_traffic_cars = 0;
  std::vector<std::string> track_names{"oval"};
  std::optional<Range> track_limits;
  double distance_to_start = 0.0;
  std::string torcs_server_config_dir;
  std::string scr_server_config_dir;
  std::string traffic_car = "touring";
  std::vector<std::string> learning_car{"touring"};
  bool randomize_env = false;
  bool add_noise_to_actions = false;
  double action_noise_std = 0.0;
  bool noisy_observations = false;
  bool visualise = false;
  int no_of_visualisations = 1;
  int max_steps = 5000;
  std::string data_dir;
  double action_timeout = 1.0;
  std::optional<BottleneckSpec> bottleneck;

  bool operator==(const ServerConfig&) const = default;
};

struct AgentConfig {
  std::string name;
  bool vision = false;
  bool throttle = true;
  bool gear_change = false;
  int client_max_steps = -1;
  double target_speed = 50.0;  // km/h
  int state_dim = 0;           // 0: derived
  bool normalize_actions = true;
  bool pid_assist = true;
  PIDGains accel_pid = kDefaultAccelGains;
  PIDGains steer_pid = kDefaultSteerGains;
  double accel_scale = 0.04;
  double steer_scale = 0.5;
  int pid_latency = 5;
  ObservationSpec observations;
  bool multi_flag = false;
  RewardSpec rewards;
  std::vector<std::string> dones;

  bool operator==(const AgentConfig&) const = default;
};

struct CommLink {
  std::vector<std::string> comms;
  std::vector<std::string> vars;
  int buff_size = 1;

  bool operator==(const CommLink&) const = default;
};

struct CurriculumStage {
  int until_episode = 0;
  std::string overrides_yaml;  // flow-style mapping, validated at parse

  bool operator==(const CurriculumStage&) const = default;
};

struct SimulationConfig {
  ServerConfig server;
  std::vector<AgentConfig> agents;
  std::vector<TrafficConfig> traffic;
  std::vector<CurriculumStage> curriculum;
  std::map<std::string, CommLink> communications;
  int active_learning_agents = 0;  // 0: all

  bool operator==(const SimulationConfig&) const = default;

  int n_learning() const {
    return active_learning_agents > 0 ? active_learning_agents : static_cast<int>(agents.size());
  }
  int max_traffic() const { return server.max_cars - n_learning(); }

  std::string data_dir() const { return server.data_dir.empty() ? std::string(TRACKGYM_DATA_DIR) : server.data_dir; }
  std::string track_path(const std::string& name) const { return resolve_asset("tracks", name); }
  std::string car_path(const std::string& name) const { return resolve_asset("cars", name); }

  std::size_t agent_index(const std::string& name) const {
    for (std::size_t i = 0; i < agents.size(); ++i)
      if (agents[i].name == name) return i;
    throw ConfigError("agents", "no agent named '" + name + "'");
  }

 private:
  std::string resolve_asset(const char* kind, const std::string& name) const {
    if (name.find('/') != std::string::npos || name.ends_with(".yml") || name.ends_with(".yaml")) return name;
    return data_dir() + "/" + kind + "/" + name + ".yml";
  }
};

inline const std::vector<std::string>& known_comm_vars() {
  static const std::vector<std::string> v{"peerActions", "angle",  "trackPos", "speedX",
                                          "speedY",      "damage", "distRaced", "racePos", "rpm"};
  return v;
}

// Values contributed by one source agent per buffered step.
inline int comm_var_width(const std::string& var, const AgentConfig& source) {
  if (var == "peerActions") return source.pid_assist ? 2 : 3;
  return 1;
}

inline int comm_block_width(const SimulationConfig& cfg, const std::string& agent) {
  auto it = cfg.communications.find(agent);
  if (it == cfg.communications.end()) return 0;
  int per_step = 0;
  for (const auto& src : it->second.comms) {
    const auto& s = cfg.agents[cfg.agent_index(src)];
    for (const auto& v : it->second.vars) per_step += comm_var_width(v, s);
  }
  return per_step * it->second.buff_size;
}

inline int observation_dim(const SimulationConfig& cfg, const AgentConfig& a) {
  return static_cast<int>(observation_width(a.observations.mode)) + comm_block_width(cfg, a.name);
}

namespace cfgio {

inline std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

inline void allow_only(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& path) {
  if (!n.IsMap()) throw ConfigError(path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown key");
  }
}

template <typename T>
T as(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw ConfigError(path, "type mismatch: expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, "type mismatch");
  }
}

template <typename T>
void read(const YAML::Node& parent, const char* key, T& dst, const std::string& path) {
  if (const auto n = parent[key]) dst = as<T>(n, join(path, key));
}

inline Range read_range(const YAML::Node& n, const std::string& path) {
  if (n.IsScalar()) {
    const double v = as<double>(n, path);
    return {v, v};
  }
  if (!n.IsSequence() || n.size() != 2) throw ConfigError(path, "expected [low, high]");
  Range r{as<double>(n[0], path + "[0]"), as<double>(n[1], path + "[1]")};
  if (r.first > r.second) throw ConfigError(path, "low must be <= high");
  return r;
}

inline std::vector<std::string> read_names(const YAML::Node& n, const std::string& path) {
  std::vector<std::string> out;
  if (n.IsScalar()) {
    out.push_back(as<std::string>(n, path));
    return out;
  }
  if (!n.IsSequence()) throw ConfigError(path, "expected a list of names");
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as<std::string>(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline PIDGains read_gains(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence() || n.size() != 3) throw ConfigError(path, "expected [kp, ki, kd]");
  PIDGains g{as<double>(n[0], path + "[0]"), as<double>(n[1], path + "[1]"), as<double>(n[2], path + "[2]")};
  if (!std::isfinite(g.kp) || !std::isfinite(g.ki) || !std::isfinite(g.kd)) throw ConfigError(path, "gains must be finite");
  if (g.kp < 0.0) throw ConfigError(path, "kp must be >= 0");
  return g;
}

inline void read_pid_settings(const YAML::Node& n, PIDGains& accel, PIDGains& steer, const std::string& path) {
  allow_only(n, {"accel_pid", "steer_pid"}, path);
  if (n["accel_pid"]) accel = read_gains(n["accel_pid"], join(path, "accel_pid"));
  if (n["steer_pid"]) steer = read_gains(n["steer_pid"], join(path, "steer_pid"));
}

inline ServerConfig parse_server(const YAML::Node& n) {
  const std::string p = "server";
  allow_only(n, {"torcs_server_port", "max_cars", "min_traffic_cars", "track_names", "track_limits",
                 "distance_to_start", "torcs_server_config_dir", "scr_server_config_dir", "traffic_car",
                 "learning_car", "randomize_env", "add_noise_to_actions", "action_noise_std",
                 "noisy_observations", "visualise", "no_of_visualisations", "max_steps", "data_dir",
                 "action_timeout", "bottleneck"},
             p);
  ServerConfig s;
  read(n, "torcs_server_port", s.base_port, p);
  read(n, "max_cars", s.max_cars, p);
  read(n, "min_traffic_cars", s.min_traffic_cars, p);
  if (n["track_names"]) s.track_names = read_names(n["track_names"], p + ".track_names");
  if (n["track_limits"]) s.track_limits = read_range(n["track_limits"], p + ".track_limits");
  read(n, "distance_to_start", s.distance_to_start, p);
  read(n, "torcs_server_config_dir", s.torcs_server_config_dir, p);
  read(n, "scr_server_config_dir", s.scr_server_config_dir, p);
  read(n, "traffic_car", s.traffic_car, p);
  if (n["learning_car"]) s.learning_car = read_names(n["learning_car"], p + ".learning_car");
  read(n, "randomize_env", s.randomize_env, p);
  read(n, "add_noise_to_actions", s.add_noise_to_actions, p);
  read(n, "action_noise_std", s.action_noise_std, p);
  read(n, "noisy_observations", s.noisy_observations, p);
  read(n, "visualise", s.visualise, p);
  read(n, "no_of_visualisations", s.no_of_visualisations, p);
  read(n, "max_steps", s.max_steps, p);
  read(n, "data_dir", s.data_dir, p);
  read(n, "action_timeout", s.action_timeout, p);
  if (const auto b = n["bottleneck"]) {
    allow_only(b, {"parking_distance", "gap_width"}, p + ".bottleneck");
    BottleneckSpec spec;
    if (b["parking_distance"]) spec.parking_distance = read_range(b["parking_distance"], p + ".bottleneck.parking_distance");
    if (b["gap_width"]) spec.gap_width = read_range(b["gap_width"], p + ".bottleneck.gap_width");
    s.bottleneck = spec;
  }
  return s;
}

inline AgentConfig parse_agent(const std::string& name, const YAML::Node& n) {
  const std::string p = "agents." + name;
  AgentConfig a;
  a.name = name;
  if (n.IsNull()) return a;
  allow_only(n, {"vision", "throttle", "gear_change", "client_max_steps", "target_speed", "state_dim",
                 "normalize_actions", "pid_assist", "pid_settings", "accel_scale", "steer_scale", "pid_latency",
                 "observations", "obs_min", "obs_max", "rewards", "dones"},
             p);
  read(n, "vision", a.vision, p);
  read(n, "throttle", a.throttle, p);
  read(n, "gear_change", a.gear_change, p);
  read(n, "client_max_steps", a.client_max_steps, p);
  read(n, "target_speed", a.target_speed, p);
  read(n, "state_dim", a.state_dim, p);
  read(n, "normalize_actions", a.normalize_actions, p);
  read(n, "pid_assist", a.pid_assist, p);
  if (n["pid_settings"]) read_pid_settings(n["pid_settings"], a.accel_pid, a.steer_pid, p + ".pid_settings");
  read(n, "accel_scale", a.accel_scale, p);
  read(n, "steer_scale", a.steer_scale, p);
  read(n, "pid_latency", a.pid_latency, p);
  if (const auto o = n["observations"]) {
    const std::string op = p + ".observations";
    allow_only(o, {"mode", "multi_flag", "buff_size", "normalize"}, op);
    read(o, "mode", a.observations.mode, op);
    read(o, "multi_flag", a.multi_flag, op);
    read(o, "buff_size", a.observations.buff_size, op);
    read(o, "normalize", a.observations.normalize, op);
  }
  const std::set<std::string> bound_keys{"angle", "track", "trackPos", "speedX", "speedY", "speedZ", "opponents"};
  for (const char* which : {"obs_min", "obs_max"}) {
    if (const auto b = n[which]) {
      const std::string bp = p + "." + which;
      allow_only(b, bound_keys, bp);
      for (const auto& kv : b) {
        const auto key = kv.first.as<std::string>();
        const double v = as<double>(kv.second, bp + "." + key);
        auto& bound = a.observations.bounds[key];
        (std::string(which) == "obs_min" ? bound.min : bound.max) = v;
      }
    }
  }
  if (const auto r = n["rewards"]) {
    const std::string rp = p + ".rewards";
    if (!r.IsMap()) throw ConfigError(rp, "expected a mapping of component name to {scale, ...}");
    for (const auto& kv : r) {
      RewardComponent c;
      c.name = kv.first.as<std::string>();
      const std::string cp = rp + "." + c.name;
      const auto& body = kv.second;
      if (body.IsScalar()) {
        c.weight = as<double>(body, cp);
      } else if (body.IsMap()) {
        for (const auto& pkv : body) {
          const auto key = pkv.first.as<std::string>();
          const double v = as<double>(pkv.second, cp + "." + key);
          if (key == "scale") {
            c.weight = v;
          } else {
            c.params[key] = v;
          }
        }
      } else if (!body.IsNull()) {
        throw ConfigError(cp, "expected a scale or a mapping");
      }
      a.rewards.components.push_back(c);
    }
  }
  if (n["dones"]) a.dones = read_names(n["dones"], p + ".dones");
  return a;
}

inline TrafficConfig parse_traffic(const YAML::Node& n, const std::string& p) {
  allow_only(n, {"name", "target_speed", "target_lane_pos", "initial_distance", "initial_trackpos", "track_len",
                 "pid_settings", "accel_scale", "steer_scale", "pid_latency", "collision_time_window", "parking",
                 "period", "p_switch", "p_stop", "stop_duration", "park_decel", "min_gap"},
             p);
  TrafficConfig t;
  if (!n["name"]) throw ConfigError(p + ".name", "missing traffic behavior name");
  const auto name = as<std::string>(n["name"], p + ".name");
  try {
    t.behavior = behavior_from_string(name);
  } catch (const ValidationError& e) {
    throw ConfigError(p + ".name", e.what());
  }
  read(n, "target_speed", t.target_speed, p);
  read(n, "target_lane_pos", t.target_lane_pos, p);
  if (n["initial_distance"]) t.initial_distance = read_range(n["initial_distance"], p + ".initial_distance");
  if (n["initial_trackpos"]) t.initial_trackpos = read_range(n["initial_trackpos"], p + ".initial_trackpos");
  read(n, "track_len", t.track_len, p);
  if (n["pid_settings"]) read_pid_settings(n["pid_settings"], t.accel_pid, t.steer_pid, p + ".pid_settings");
  read(n, "accel_scale", t.accel_scale, p);
  read(n, "steer_scale", t.steer_scale, p);
  read(n, "pid_latency", t.pid_latency, p);
  read(n, "collision_time_window", t.collision_time_window, p);
  if (const auto pk = n["parking"]) {
    allow_only(pk, {"distance", "track_pos"}, p + ".parking");
    ParkingSpec ps;
    if (!pk["distance"]) throw ConfigError(p + ".parking.distance", "missing");
    ps.distance = read_range(pk["distance"], p + ".parking.distance");
    if (pk["track_pos"]) ps.track_pos = read_range(pk["track_pos"], p + ".parking.track_pos");
    t.parking = ps;
  }
  read(n, "period", t.period, p);
  read(n, "p_switch", t.p_switch, p);
  read(n, "p_stop", t.p_stop, p);
  read(n, "stop_duration", t.stop_duration, p);
  read(n, "park_decel", t.park_decel, p);
  read(n, "min_gap", t.min_gap, p);
  return t;
}

inline const std::set<std::string>& curriculum_keys() {
  static const std::set<std::string> keys{
      "learning_agents",  "learning_car",     "track_names",      "min_traffic_cars",  "max_cars",
      "traffic",          "target_speed",     "add_noise_to_actions", "action_noise_std", "noisy_observations",
      "distance_to_start", "initial_distance", "initial_trackpos", "parking_distance",  "parking_trackpos",
      "gap_width"};
  return keys;
}

inline std::string to_flow(const YAML::Node& n) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::Flow << n;
  return e.c_str();
}

inline std::map<std::string, CommLink> parse_comms_node(const YAML::Node& doc) {
  std::map<std::string, CommLink> out;
  if (!doc || doc.IsNull()) return out;
  if (!doc.IsMap()) throw ConfigError("communications", "expected a mapping of agent name to {comms, vars, buff_size}");
  for (const auto& kv : doc) {
    const auto agent = kv.first.as<std::string>();
    const std::string p = "communications." + agent;
    allow_only(kv.second, {"comms", "vars", "buff_size"}, p);
    CommLink link;
    if (kv.second["comms"]) link.comms = read_names(kv.second["comms"], p + ".comms");
    if (kv.second["vars"]) link.vars = read_names(kv.second["vars"], p + ".vars");
    read(kv.second, "buff_size", link.buff_size, p);
    out[agent] = link;
  }
  return out;
}

inline YAML::Node load_yaml(const std::string& text, const std::string& what) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(what, std::string("malformed document: ") + e.what());
  }
}

}  // namespace cfgio

inline void validate_config(const SimulationConfig& cfg) {
  const auto& s = cfg.server;
  if (s.base_port < 1 || s.base_port > 65535) throw ConfigError("server.torcs_server_port", "must be in [1, 65535]");
  if (s.max_cars < 1) throw ConfigError("server.max_cars", "must be >= 1");
  if (s.min_traffic_cars < 0) throw ConfigError("server.min_traffic_cars", "must be >= 0");
  if (s.max_steps <= 0) throw ConfigError("server.max_steps", "must be > 0");
  if (!(s.action_noise_std >= 0.0 && s.action_noise_std <= 1.0)) {
    throw ConfigError("server.action_noise_std", "must be in [0, 1]");
  }
  if (!(s.action_timeout > 0.0)) throw ConfigError("server.action_timeout", "must be > 0");
  if (s.no_of_visualisations < 1) throw ConfigError("server.no_of_visualisations", "must be >= 1");
  if (s.track_names.empty()) throw ConfigError("server.track_names", "must not be empty");
  if (s.learning_car.empty()) throw ConfigError("server.learning_car", "must not be empty");
  if (s.track_limits && !(s.track_limits->first < s.track_limits->second)) {
    throw ConfigError("server.track_limits", "must be [low, high] with low < high");
  }
  if (s.bottleneck && s.bottleneck->gap_width.first <= 0.0) throw ConfigError("server.bottleneck.gap_width", "must be > 0");
  for (const auto& t : s.track_names) {
    if (!std::filesystem::exists(cfg.track_path(t))) throw ConfigError("server.track_names", "no track '" + t + "'");
  }
  for (const auto& c : s.learning_car) {
    if (!std::filesystem::exists(cfg.car_path(c))) throw ConfigError("server.learning_car", "no car '" + c + "'");
  }
  if (!std::filesystem::exists(cfg.car_path(s.traffic_car))) {
    throw ConfigError("server.traffic_car", "no car '" + s.traffic_car + "'");
  }

  if (cfg.agents.empty()) throw ConfigError("agents", "at least one learning agent is required");
  if (cfg.active_learning_agents < 0 || cfg.active_learning_agents > static_cast<int>(cfg.agents.size())) {
    throw ConfigError("learning_agents", "must be in [1, number of configured agents]");
  }
  const int n_l = cfg.n_learning();
  if (n_l + s.min_traffic_cars > s.max_cars) {
    throw ConfigError("server.min_traffic_cars", "N_l + min_traffic_cars <= max_cars violated (" + std::to_string(n_l) +
                                                     " + " + std::to_string(s.min_traffic_cars) + " > " +
                                                     std::to_string(s.max_cars) + ")");
  }
  if (static_cast<int>(cfg.traffic.size()) < cfg.max_traffic()) {
    throw ConfigError("traffic", "needs at least max_cars - N_l = " + std::to_string(cfg.max_traffic()) + " entries");
  }
  for (std::size_t i = 0; i < cfg.traffic.size(); ++i) {
    try {
      cfg.traffic[i].validate("traffic[" + std::to_string(i) + "]");
    } catch (const ValidationError& e) {
      throw ConfigError("traffic[" + std::to_string(i) + "]", e.what());
    }
  }

  std::set<std::string> names;
  for (const auto& a : cfg.agents) {
    const std::string p = "agents." + a.name;
    if (!names.insert(a.name).second) throw ConfigError(p, "duplicate agent name");
    if (a.vision) throw ConfigError(p + ".vision", "visual observations are not supported");
    if (!(a.target_speed > 0.0)) throw ConfigError(p + ".target_speed", "must be > 0");
    if (a.pid_latency < 1) throw ConfigError(p + ".pid_latency", "must be >= 1");
    if (!(a.accel_scale > 0.0)) throw ConfigError(p + ".accel_scale", "must be > 0");
    if (!(a.steer_scale > 0.0)) throw ConfigError(p + ".steer_scale", "must be > 0");
    if (a.client_max_steps == 0 || a.client_max_steps < -1) throw ConfigError(p + ".client_max_steps", "must be > 0 or -1");
    if (!is_known_observation_mode(a.observations.mode)) {
      throw ConfigError(p + ".observations.mode", "unknown observation mode '" + a.observations.mode + "'");
    }
    try {
      a.observations.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(p + ".observations", e.what());
    }
    try {
      a.rewards.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(p + ".rewards", e.what());
    }
    DoneSpec probe;
    for (const auto& d : a.dones) {
      try {
        probe.enable(d);
      } catch (const ValidationError& e) {
        throw ConfigError(p + ".dones", e.what());
      }
    }
  }
  for (const auto& [agent, link] : cfg.communications) {
    const std::string p = "communications." + agent;
    if (!names.count(agent)) throw ConfigError(p, "unknown agent '" + agent + "'");
    if (link.buff_size < 1) throw ConfigError(p + ".buff_size", "must be >= 1");
    for (const auto& src : link.comms) {
      if (!names.count(src)) throw ConfigError(p + ".comms", "unknown source agent '" + src + "'");
      if (src == agent) throw ConfigError(p + ".comms", "an agent cannot listen to itself");
    }
    for (const auto& v : link.vars) {
      const auto& known = known_comm_vars();
      if (std::find(known.begin(), known.end(), v) == known.end()) {
        throw ConfigError(p + ".vars", "unknown variable '" + v + "'");
      }
    }
    const auto& a = cfg.agents[cfg.agent_index(agent)];
    if (a.observations.mode != "comms") throw ConfigError(p, "agent observation mode must be 'comms'");
  }
  for (const auto& a : cfg.agents) {
    if (a.state_dim != 0 && a.state_dim != observation_dim(cfg, a)) {
      throw ConfigError("agents." + a.name + ".state_dim",
                        "is " + std::to_string(a.state_dim) + " but the observation has " +
                            std::to_string(observation_dim(cfg, a)) + " values");
    }
  }
  int prev = 0;
  for (std::size_t i = 0; i < cfg.curriculum.size(); ++i) {
    if (cfg.curriculum[i].until_episode <= prev) {
      throw ConfigError("curriculum[" + std::to_string(i) + "].until_episode", "stage boundaries must strictly increase");
    }
    prev = cfg.curriculum[i].until_episode;
  }
}

inline SimulationConfig parse_config_node(const YAML::Node& doc, const YAML::Node& comms_doc, bool check = true);

// Main document plus an optional communications document.
inline SimulationConfig parse_config(const std::string& text, const std::string& comms_text = "") {
  const YAML::Node doc = cfgio::load_yaml(text, "<config>");
  const YAML::Node comms = comms_text.empty() ? YAML::Node() : cfgio::load_yaml(comms_text, "communications");
  return parse_config_node(doc, comms);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline SimulationConfig load_config_file(const std::string& path, const std::string& comms_path = "") {
  return parse_config(read_text_file(path), comms_path.empty() ? "" : read_text_file(comms_path));
}

namespace cfgio {

inline YAML::Node emit_range(const Range& r) {
  YAML::Node n;
  n.SetStyle(YAML::EmitterStyle::Flow);
  n.push_back(r.first);
  n.push_back(r.second);
  return n;
}

inline YAML::Node emit_gains(const PIDGains& g) {
  YAML::Node n;
  n.SetStyle(YAML::EmitterStyle::Flow);
  n.push_back(g.kp);
  n.push_back(g.ki);
  n.push_back(g.kd);
  return n;
}

inline YAML::Node emit_names(const std::vector<std::string>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const auto& s : v) n.push_back(s);
  return n;
}

inline YAML::Node emit_traffic(const TrafficConfig& t) {
  YAML::Node n;
  n["name"] = to_string(t.behavior);
  n["target_speed"] = t.target_speed;
  n["target_lane_pos"] = t.target_lane_pos;
  n["initial_distance"] = emit_range(t.initial_distance);
  n["initial_trackpos"] = emit_range(t.initial_trackpos);
  n["track_len"] = t.track_len;
  n["pid_settings"]["accel_pid"] = emit_gains(t.accel_pid);
  n["pid_settings"]["steer_pid"] = emit_gains(t.steer_pid);
  n["accel_scale"] = t.accel_scale;
  n["steer_scale"] = t.steer_scale;
  n["pid_latency"] = t.pid_latency;
  n["collision_time_window"] = t.collision_time_window;
  if (t.parking) {
    n["parking"]["distance"] = emit_range(t.parking->distance);
    n["parking"]["track_pos"] = emit_range(t.parking->track_pos);
  }
  n["period"] = t.period;
  n["p_switch"] = t.p_switch;
  n["p_stop"] = t.p_stop;
  n["stop_duration"] = t.stop_duration;
  n["park_decel"] = t.park_decel;
  n["min_gap"] = t.min_gap;
  return n;
}

inline YAML::Node emit_document(const SimulationConfig& cfg, bool with_curriculum) {
  YAML::Node root;
  const auto& s = cfg.server;
  YAML::Node sv;
  sv["torcs_server_port"] = s.base_port;
  sv["max_cars"] = s.max_cars;
  sv["min_traffic_cars"] = s.min_traffic_cars;
  sv["track_names"] = emit_names(s.track_names);
  if (s.track_limits) sv["track_limits"] = emit_range(*s.track_limits);
  sv["distance_to_start"] = s.distance_to_start;
  sv["torcs_server_config_dir"] = s.torcs_server_config_dir;
  sv["scr_server_config_dir"] = s.scr_server_config_dir;
  sv["traffic_car"] = s.traffic_car;
  sv["learning_car"] = emit_names(s.learning_car);
  sv["randomize_env"] = s.randomize_env;
  sv["add_noise_to_actions"] = s.add_noise_to_actions;
  sv["action_noise_std"] = s.action_noise_std;
  sv["noisy_observations"] = s.noisy_observations;
  sv["visualise"] = s.visualise;
  sv["no_of_visualisations"] = s.no_of_visualisations;
  sv["max_steps"] = s.max_steps;
  sv["data_dir"] = s.data_dir;
  sv["action_timeout"] = s.action_timeout;
  if (s.bottleneck) {
    sv["bottleneck"]["parking_distance"] = emit_range(s.bottleneck->parking_distance);
    sv["bottleneck"]["gap_width"] = emit_range(s.bottleneck->gap_width);
  }
  root["server"] = sv;

  YAML::Node agents;
  for (const auto& a : cfg.agents) {
    YAML::Node n;
    n["vision"] = a.vision;
    n["throttle"] = a.throttle;
    n["gear_change"] = a.gear_change;
    n["client_max_steps"] = a.client_max_steps;
    n["target_speed"] = a.target_speed;
    n["state_dim"] = a.state_dim;
    n["normalize_actions"] = a.normalize_actions;
    n["pid_assist"] = a.pid_assist;
    n["pid_settings"]["accel_pid"] = emit_gains(a.accel_pid);
    n["pid_settings"]["steer_pid"] = emit_gains(a.steer_pid);
    n["accel_scale"] = a.accel_scale;
    n["steer_scale"] = a.steer_scale;
    n["pid_latency"] = a.pid_latency;
    n["observations"]["mode"] = a.observations.mode;
    n["observations"]["multi_flag"] = a.multi_flag;
    n["observations"]["buff_size"] = a.observations.buff_size;
    n["observations"]["normalize"] = a.observations.normalize;
    for (const auto& [k, b] : a.observations.bounds) {
      n["obs_min"][k] = b.min;
      n["obs_max"][k] = b.max;
    }
    YAML::Node rewards(YAML::NodeType::Map);
    for (const auto& c : a.rewards.components) {
      YAML::Node body;
      body["scale"] = c.weight;
      for (const auto& [k, v] : c.params) body[k] = v;
      rewards[c.name] = body;
    }
    n["rewards"] = rewards;
    n["dones"] = emit_names(a.dones);
    agents[a.name] = n;
  }
  root["agents"] = agents;
  if (cfg.active_learning_agents > 0) root["learning_agents"] = cfg.active_learning_agents;

  YAML::Node traffic(YAML::NodeType::Sequence);
  for (const auto& t : cfg.traffic) traffic.push_back(emit_traffic(t));
  root["traffic"] = traffic;

  if (with_curriculum && !cfg.curriculum.empty()) {
    YAML::Node cur(YAML::NodeType::Sequence);
    for (const auto& st : cfg.curriculum) {
      YAML::Node n;
      n["until_episode"] = st.until_episode;
      n["overrides"] = YAML::Load(st.overrides_yaml);
      cur.push_back(n);
    }
    root["curriculum"] = cur;
  }
  if (!cfg.communications.empty()) {
    YAML::Node comms;
    for (const auto& [agent, link] : cfg.communications) {
      comms[agent]["comms"] = emit_names(link.comms);
      comms[agent]["vars"] = emit_names(link.vars);
      comms[agent]["buff_size"] = link.buff_size;
    }
    root["communications"] = comms;
  }
  return root;
}

}  // namespace cfgio

// Normalized single-document form; communications are embedded under a
// top-level "communications" key, which parse_config also accepts.
inline std::string serialize_config(const SimulationConfig& cfg) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << cfgio::emit_document(cfg, true);
  return std::string(e.c_str()) + "\n";
}

// Applies one stage's overrides to a document node in place.
inline void merge_overrides(YAML::Node& doc, const YAML::Node& ov, const std::string& path) {
  cfgio::allow_only(ov, cfgio::curriculum_keys(), path);
  for (const auto& kv : ov) {
    const auto key = kv.first.as<std::string>();
    const auto& v = kv.second;
    if (key == "learning_agents") {
      doc["learning_agents"] = v;
    } else if (key == "target_speed") {
      for (auto a : doc["agents"]) a.second["target_speed"] = v;
    } else if (key == "traffic") {
      doc["traffic"] = YAML::Clone(v);
    } else if (key == "initial_distance" || key == "initial_trackpos") {
      for (auto t : doc["traffic"]) t[key] = v;
    } else if (key == "parking_distance" || key == "parking_trackpos") {
      const char* sub = key == "parking_distance" ? "distance" : "track_pos";
      for (auto t : doc["traffic"]) {
        if (t["parking"]) t["parking"][sub] = v;
      }
      if (key == "parking_distance" && doc["server"]["bottleneck"]) doc["server"]["bottleneck"]["parking_distance"] = v;
    } else if (key == "gap_width") {
      doc["server"]["bottleneck"]["gap_width"] = v;
    } else {
      doc["server"][key] = v;
    }
  }
}

inline SimulationConfig parse_config_node(const YAML::Node& doc, const YAML::Node& comms_doc, bool check) {
  if (!doc.IsMap()) throw ConfigError("<root>", "expected a mapping with server/agents/traffic sections");
  cfgio::allow_only(doc, {"server", "agents", "traffic", "curriculum", "communications", "learning_agents"}, "");
  SimulationConfig cfg;
  if (doc["server"]) cfg.server = cfgio::parse_server(doc["server"]);
  if (!doc["agents"] || !doc["agents"].IsMap()) throw ConfigError("agents", "expected a mapping of agent name to settings");
  for (const auto& kv : doc["agents"]) cfg.agents.push_back(cfgio::parse_agent(kv.first.as<std::string>(), kv.second));
  cfgio::read(doc, "learning_agents", cfg.active_learning_agents, "");
  if (const auto t = doc["traffic"]) {
    if (!t.IsSequence() && !t.IsNull()) throw ConfigError("traffic", "expected a list");
    for (std::size_t i = 0; i < t.size(); ++i) {
      cfg.traffic.push_back(cfgio::parse_traffic(t[i], "traffic[" + std::to_string(i) + "]"));
    }
  }
  if (doc["communications"]) cfg.communications = cfgio::parse_comms_node(doc["communications"]);
  if (comms_doc && !comms_doc.IsNull()) {
    for (auto& [k, v] : cfgio::parse_comms_node(comms_doc)) cfg.communications[k] = v;
  }
  if (const auto cur = doc["curriculum"]) {
    if (!cur.IsSequence()) throw ConfigError("curriculum", "expected a list of stages");
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const std::string p = "curriculum[" + std::to_string(i) + "]";
      cfgio::allow_only(cur[i], {"until_episode", "overrides"}, p);
      CurriculumStage st;
      if (!cur[i]["until_episode"]) throw ConfigError(p + ".until_episode", "missing");
      st.until_episode = cfgio::as<int>(cur[i]["until_episode"], p + ".until_episode");
      const YAML::Node ov = cur[i]["overrides"] ? cur[i]["overrides"] : YAML::Node(YAML::NodeType::Map);
      cfgio::allow_only(ov, cfgio::curriculum_keys(), p + ".overrides");
      st.overrides_yaml = cfgio::to_flow(ov);
      cfg.curriculum.push_back(st);
    }
  }
  if (check) {
    validate_config(cfg);
    // Every stage must itself produce a valid configuration.
    for (std::size_t i = 0; i < cfg.curriculum.size(); ++i) {
      YAML::Node d = cfgio::emit_document(cfg, false);
      merge_overrides(d, YAML::Load(cfg.curriculum[i].overrides_yaml), "curriculum[" + std::to_string(i) + "].overrides");
      parse_config_node(d, YAML::Node(), true);
    }
  }
  return cfg;
}

// Effective configuration for a 1-based episode number. Stage i covers
// episodes up to and including until_episode; later episodes keep the last
// stage.
inline SimulationConfig apply_curriculum(const SimulationConfig& base, int episode) {
  if (base.curriculum.empty()) return base;
  std::size_t stage = base.curriculum.size() - 1;
  for (std::size_t i = 0; i < base.curriculum.size(); ++i) {
    if (episode <= base.curriculum[i].until_episode) {
      stage = i;
      break;
    }
  }
  YAML::Node d = cfgio::emit_document(base, false);
  merge_overrides(d, YAML::Load(base.curriculum[stage].overrides_yaml), "curriculum");
  SimulationConfig eff = parse_config_node(d, YAML::Node(), true);
  eff.curriculum = base.curriculum;
  return eff;
}

struct Spawn {
  double distance = 0.0;
  double track_pos = 0.0;

  bool operator==(const Spawn&) const = default;
};

struct EpisodeSetup {
  int episode = 1;
  std::uint64_t seed = 0;
  std::string track;
  std::vector<std::string> learning_cars;
  std::vector<Spawn> learning_spawns;
  int n_traffic = 0;
  std::vector<TrafficConfig> traffic;
  std::vector<Spawn> traffic_spawns;
  std::vector<Spawn> traffic_parking;
  bool add_noise_to_actions = false;
  double action_noise_std = 0.0;
  bool noisy_observations = false;

  bool operator==(const EpisodeSetup&) const = default;
};

inline constexpr double kLearningSpawnSpacing = 10.0;

inline EpisodeSetup sample_episode_setup(const SimulationConfig& cfg, Rng& rng, double car_width = 1.95) {
  const auto& s = cfg.server;
  if (s.track_names.empty()) throw ConfigError("server.track_names", "empty track list");
  if (s.learning_car.empty()) throw ConfigError("server.learning_car", "empty car list");
  EpisodeSetup e;
  const int n_l = cfg.n_learning();
  const int lo = s.min_traffic_cars, hi = s.max_cars - n_l;
  auto uniform = [&](const Range& r) {
    if (!s.randomize_env) return 0.5 * (r.first + r.second);
    if (r.first == r.second) return r.first;
    return std::uniform_real_distribution<double>(r.first, r.second)(rng);
  };
  if (s.randomize_env) {
    e.track = s.track_names[std::uniform_int_distribution<std::size_t>(0, s.track_names.size() - 1)(rng)];
    for (int i = 0; i < n_l; ++i) {
      e.learning_cars.push_back(
          s.learning_car[std::uniform_int_distribution<std::size_t>(0, s.learning_car.size() - 1)(rng)]);
    }
    e.n_traffic = std::uniform_int_distribution<int>(lo, hi)(rng);
  } else {
    e.track = s.track_names.front();
    e.learning_cars.assign(static_cast<std::size_t>(n_l), s.learning_car.front());
    e.n_traffic = lo;
  }
  for (int i = 0; i < n_l; ++i) e.learning_spawns.push_back({s.distance_to_start - kLearningSpawnSpacing * i, 0.0});
  for (int i = 0; i < e.n_traffic; ++i) {
    const auto& t = cfg.traffic[static_cast<std::size_t>(i)];
    e.traffic.push_back(t);
    Spawn sp{uniform(t.initial_distance), uniform(t.initial_trackpos)};
    Spawn park = sp;
    if (t.parking) park = {uniform(t.parking->distance), uniform(t.parking->track_pos)};
    e.traffic_spawns.push_back(sp);
    e.traffic_parking.push_back(park);
  }
  // Two parked cars leaving a gap of the sampled width around the centerline.
  if (s.bottleneck && e.n_traffic >= 2) {
    const double d = uniform(s.bottleneck->parking_distance);
    const double gap = uniform(s.bottleneck->gap_width);
    const double half_w = 0.5 * load_track_file(cfg.track_path(e.track)).width_at(d);
    const double tp = (0.5 * gap + 0.5 * car_width) / half_w;
    for (int i = 0; i < 2; ++i) {
      const Spawn p{d, i == 0 ? tp : -tp};
      e.traffic[static_cast<std::size_t>(i)].behavior = Behavior::parked;
      e.traffic_spawns[static_cast<std::size_t>(i)] = p;
      e.traffic_parking[static_cast<std::size_t>(i)] = p;
    }
  }
  e.add_noise_to_actions = s.add_noise_to_actions;
  e.action_noise_std = s.add_noise_to_actions ? s.action_noise_std : 0.0;
  e.noisy_observations = s.noisy_observations;
  return e;
}

inline DoneSpec done_spec_for(const SimulationConfig& cfg, const AgentConfig& a) {
  DoneSpec d;
  for (const auto& name : a.dones) d.enable(name);
  d.max_steps = cfg.server.max_steps;
  d.client_max_steps = a.client_max_steps;
  if (cfg.server.track_limits) {
    d.track_limit_lo = cfg.server.track_limits->first;
    d.track_limit_hi = cfg.server.track_limits->second;
  }
  return d;
}

inline TSControllerState controller_for(const AgentConfig& a) {
  TSControllerState c;
  c.accel_gains = a.accel_pid;
  c.steer_gains = a.steer_pid;
  c.accel_scale = a.accel_scale;
  c.steer_scale = a.steer_scale;
  c.pid_latency = a.pid_latency;
  return c;
}

inline TSControllerState controller_for(const TrafficConfig& t) {
  TSControllerState c;
  c.accel_gains = t.accel_pid;
  c.steer_gains = t.steer_pid;
  c.accel_scale = t.accel_scale;
  c.steer_scale = t.steer_scale;
  c.pid_latency = t.pid_latency;
  return c;
}

}  // namespace trackgym
