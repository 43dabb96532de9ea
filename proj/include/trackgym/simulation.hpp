#pragma once

// The simulation engine: session table, port plan, the poll-step-dispatch
// loop and the episode lifecycle. Transport-agnostic: callers feed inbound
// datagrams through handle_message() and deliver drain_outbox().

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trackgym/comm_buffer.hpp"
#include "trackgym/config.hpp"
#include "trackgym/control.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/protocol.hpp"
#include "trackgym/reward.hpp"
#include "trackgym/sensing.hpp"
#include "trackgym/track.hpp"
#include "trackgym/traffic.hpp"
#include "trackgym/vehicle.hpp"

namespace trackgym {

struct PortPlan {
  std::vector<int> traffic;
  std::vector<int> learning;
};

// Traffic first, then learning agents, contiguous from base_port.
// port_budget <= 0 means no budget beyond the valid port range.
inline PortPlan assign_ports(int n_traffic, int n_learning, int base_port, int port_budget = 0) {
  if (n_traffic < 0 || n_learning < 0) throw ValidationError("session counts must be >= 0");
  const int n = n_traffic + n_learning;
  if (port_budget > 0 && n > port_budget) {
    throw NetworkError("port budget exhausted: " + std::to_string(n) + " sessions but only " +
                       std::to_string(port_budget) + " ports; first conflicting port " +
                       std::to_string(base_port + port_budget));
  }
  if (base_port < 1 || base_port + n - 1 > 65535) {
    throw NetworkError("port range exhausted: ports " + std::to_string(base_port) + ".." +
                       std::to_string(base_port + n - 1) + " do not fit in [1, 65535]");
  }
  PortPlan p;
  for (int i = 0; i < n_traffic; ++i) p.traffic.push_back(base_port + i);
  for (int i = 0; i < n_learning; ++i) p.learning.push_back(base_port + n_traffic + i);
  return p;
}

enum class SessionKind { traffic, learning };
enum class EpisodeStatus { idle, running, done, disconnected };

inline const char* to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::idle: return "idle";
    case EpisodeStatus::running: return "running";
    case EpisodeStatus::done: return "done";
    case EpisodeStatus::disconnected: return "disconnected";
  }
  return "?";
}

struct Session {
  std::size_t index = 0;
  SessionKind kind = SessionKind::learning;
  int port = 0;
  std::string name;
  std::size_t agent = 0;  // learning: index into config agents; traffic: slot
  std::string client_id;
  bool identified = false;
  BeamAngles beams = default_beam_angles();
  EpisodeStatus status = EpisodeStatus::idle;
  int car = -1;  // index into the world's cars, -1 when not spawned

  std::optional<wire::ActionMessage> pending;
  wire::ActionMessage last_action;
  bool meta_requested = false;
  bool lost = false;
  TSControllerState ctrl;
  Rng obs_rng;
  Rng act_rng;

  // Learning-agent episode bookkeeping.
  SensorFrame last_frame;  // noise-free
  std::deque<double> angles;
  double spawn_distance = 0.0;
  double prev_distance = 0.0;
  double prev_damage = 0.0;
  int prev_rank = 1;
  bool lap_done = false;
  int steps = 0;
  double reward_sum = 0.0;
  int overtakes = 0;
  int rank1_events = 0;
  DoneReason done_reason = DoneReason::none;
  double final_distance = 0.0;  // frozen at the done step
  double final_damage = 0.0;
  std::optional<PrimitiveAction> applied;
};

struct CarLog {
  std::string agent;
  SessionKind kind = SessionKind::learning;
  double x = 0.0, y = 0.0, heading = 0.0;
  double s = 0.0, track_pos = 0.0;
  double speed_kmh = 0.0, lat_speed_kmh = 0.0;
  double distance = 0.0;  // progress since spawn
  double steer = 0.0, accel = 0.0, brake = 0.0;
  double damage = 0.0;
  int rank = 1;
  double reward = 0.0;
  bool done = false;
  std::string reason = "none";
};

struct AgentOutcome {
  std::string agent;
  std::string car;
  int steps = 0;
  double distance = 0.0;  // m since spawn
  double time = 0.0;      // s driven
  double fraction_of_lap = 0.0;
  double avg_speed_kmh = 0.0;
  bool lap_completed = false;
  int final_rank = 1;
  double damage = 0.0;
  double reward_sum = 0.0;
  int overtakes = 0;
  int rank1_events = 0;
  std::string done_reason;
};

struct EpisodeResult {
  int episode = 1;
  std::uint64_t seed = 0;
  std::string track;
  int n_traffic = 0;
  int steps = 0;
  std::vector<AgentOutcome> agents;
};

struct StepReport {
  int episode = 1;
  int step = 0;
  std::vector<CarLog> cars;
  bool episode_ended = false;
  EpisodeResult result;  // valid when episode_ended
};

struct Outgoing {
  std::size_t session = 0;
  std::string message;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Scripted traffic driver served in-process over the wire format.
struct TrafficClient {
  TrafficConfig cfg;
  TrafficBehaviorState st;
  int step = 0;

  std::string on_frame(const std::string& msg) {
    const auto d = wire::decode_sensor(msg);
    auto desire = traffic_policy_step(cfg, d.frame, st, step++);
    desire = collision_avoidance_override(d.frame, cfg, st, desire);
    return wire::encode_action(desire);
  }
};

}  // namespace detail

class Simulation {
 public:
  Simulation(SimulationConfig base, std::uint64_t seed) : base_(std::move(base)), seed_(seed), rng_(seed) {
    validate_config(base_);
    int max_traffic = base_.max_traffic();
    for (std::size_t i = 0; i < base_.curriculum.size(); ++i) {
      max_traffic = std::max(max_traffic, apply_curriculum(base_, base_.curriculum[i].until_episode).max_traffic());
    }
    const int n_agents = static_cast<int>(base_.agents.size());
    const auto plan = assign_ports(max_traffic, n_agents, base_.server.base_port);
    for (int i = 0; i < max_traffic; ++i) {
      Session s;
      s.kind = SessionKind::traffic;
      s.port = plan.traffic[static_cast<std::size_t>(i)];
      s.name = "traffic" + std::to_string(i);
      s.agent = static_cast<std::size_t>(i);
      s.index = sessions_.size();
      sessions_.push_back(std::move(s));
    }
    for (int i = 0; i < n_agents; ++i) {
      Session s;
      s.kind = SessionKind::learning;
      s.port = plan.learning[static_cast<std::size_t>(i)];
      s.name = base_.agents[static_cast<std::size_t>(i)].name;
      s.agent = static_cast<std::size_t>(i);
      s.index = sessions_.size();
      sessions_.push_back(std::move(s));
    }
    traffic_clients_.resize(static_cast<std::size_t>(max_traffic));
    for (auto& s : sessions_) {
      if (s.kind == SessionKind::traffic) {
        handle_message(s.index, wire::encode_init("traffic", wire::default_beam_degrees()));
      }
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const std::vector<Session>& sessions() const { return sessions_; }
  const SimulationConfig& base_config() const { return base_; }
  const SimulationConfig& config() const { return cfg_; }
  const EpisodeSetup& setup() const { return setup_; }
  const Track& track() const { return *track_; }
  const std::vector<VehicleState>& cars() const { return cars_; }
  bool started() const { return started_; }
  int episode() const { return episode_; }
  int step_count() const { return step_count_; }
  std::uint64_t physics_ticks() const { return physics_ticks_; }
  std::uint64_t steps_total() const { return steps_total_; }
  int resets() const { return resets_; }

  std::size_t session_of_agent(const std::string& name) const {
    for (const auto& s : sessions_)
      if (s.kind == SessionKind::learning && s.name == name) return s.index;
    throw ValidationError("no learning agent named '" + name + "'");
  }

  std::optional<std::size_t> session_by_port(int port) const {
    for (const auto& s : sessions_)
      if (s.port == port) return s.index;
    return std::nullopt;
  }

  // Learning sessions taking part in the current (or first) episode.
  std::vector<std::size_t> active_learning_sessions() const {
    std::vector<std::size_t> out;
    const SimulationConfig& c = started_ ? cfg_ : base_;
    const int n = started_ ? c.n_learning() : apply_curriculum(base_, 1).n_learning();
    for (const auto& s : sessions_)
      if (s.kind == SessionKind::learning && static_cast<int>(s.agent) < n) out.push_back(s.index);
    return out;
  }

  bool ready() const {
    for (auto i : active_learning_sessions())
      if (!sessions_[i].identified) return false;
    return true;
  }

  // Inbound datagram. Returns the immediate reply ("" for none).
  std::string handle_message(std::size_t idx, std::string_view msg) {
    auto& s = sessions_.at(idx);
    if (wire::looks_like_init(msg)) {
      try {
        const auto init = wire::parse_init(msg);
        s.client_id = init.client_id;
        s.beams = init.beams_rad();
        s.identified = true;
        return wire::kIdentified;
      } catch (const ParseError& e) {
        return wire::error_message(e.what());
      }
    }
    if (!s.identified) return wire::error_message("not identified");
    wire::ActionMessage m;
    try {
      m = wire::decode_action(msg);
    } catch (const ParseError& e) {
      return wire::error_message(e.what());
    }
    if (m.kind == wire::ActionKind::meta) {
      if (s.kind == SessionKind::learning && s.status == EpisodeStatus::running) s.meta_requested = true;
      return "";
    }
    const bool wants_desire = s.kind == SessionKind::traffic || base_.agents[s.agent].pid_assist;
    if ((m.kind == wire::ActionKind::desire) != wants_desire) {
      return wire::error_message(wants_desire ? "expected (trackpos F)(speed F)" : "expected (accel F)(brake F)(steer F)(gear I)");
    }
    if (s.status == EpisodeStatus::running) s.pending = m;
    return "";
  }

  // Transport failure on a session: the agent is finished for this episode.
  void mark_disconnected(std::size_t idx) { sessions_.at(idx).lost = true; }

  void start() {
    if (started_) throw SimulationFault("simulation already started");
    if (!ready()) throw SimulationFault("learning sessions not identified");
    started_ = true;
    begin_episode();
  }

  std::vector<Outgoing> drain_outbox() { return std::exchange(outbox_, {}); }

  void shutdown() {
    for (const auto& s : sessions_)
      if (s.kind == SessionKind::learning && s.identified) outbox_.push_back({s.index, wire::kShutdown});
  }

  StepReport step() {
    if (!started_) throw SimulationFault("step before start");
    ++step_count_;
    ++steps_total_;

    // Collect actions; absent ones repeat.
    for (auto& s : sessions_) {
      if (s.status != EpisodeStatus::running) continue;
      if (s.pending) {
        s.last_action = *s.pending;
        s.pending.reset();
      }
    }

    // Peer records describe the previous step.
    for (auto& s : sessions_) {
      if (s.kind != SessionKind::learning) continue;
      if (s.status == EpisodeStatus::running) {
        comm_.push(s.agent, shared_from_frame(s.last_frame, submitted_values(s)));
      } else {
        comm_.push(s.agent, std::nullopt);
      }
    }

    // Realize controls.
    std::vector<Controls> controls(cars_.size());
    for (auto& s : sessions_) {
      if (s.car < 0) continue;
      controls[static_cast<std::size_t>(s.car)] = realize(s);
    }

    // Physics.
    std::vector<const CarModel*> models;
    for (const auto& m : car_models_) models.push_back(&m);
    for (int t = 0; t < kTicksPerStep; ++t) {
      for (std::size_t c = 0; c < cars_.size(); ++c) cars_[c] = physics_tick(cars_[c], *models[c], controls[c], *track_);
      ++physics_ticks_;
    }
    if (physics_ticks_ != static_cast<std::uint64_t>(kTicksPerStep) * steps_total_) {
      throw SimulationFault("physics tick counter out of step");
    }

    // Collisions.
    std::vector<bool> collided(cars_.size(), false);
    for (auto [i, j] : detect_collisions(cars_, models)) collided[i] = collided[j] = true;
    for (std::size_t c = 0; c < cars_.size(); ++c) cars_[c] = apply_damage(cars_[c], collided[c]);

    StepReport rep;
    rep.episode = episode_;
    rep.step = step_count_;
    const int n_cars = static_cast<int>(cars_.size());
    std::vector<SensorFrame> frames(sessions_.size());
    std::vector<wire::StepTail> tails(sessions_.size());
    std::vector<bool> finished_now(sessions_.size(), false);

    for (auto& s : sessions_) {
      if (s.car < 0) continue;
      frames[s.index] = frame_for(s);
    }

    // Rewards and dones.
    for (auto& s : sessions_) {
      if (s.kind != SessionKind::learning || s.status != EpisodeStatus::running) continue;
      const auto& agent = cfg_.agents[s.agent];
      const auto& car = cars_[static_cast<std::size_t>(s.car)];
      const SensorFrame& f = frames[s.index];
      ++s.steps;
      s.angles.push_back(f.angle);
      while (s.angles.size() > 3) s.angles.pop_front();
      const double progress = car.distance_raced - s.spawn_distance;
      const bool lap_now = !s.lap_done && progress >= track_->total_length();
      if (lap_now) s.lap_done = true;

      RewardContext ctx;
      ctx.d = car.distance_raced - s.prev_distance;
      ctx.s_target = step_target_from_kmh(agent.target_speed);
      ctx.angles.assign(s.angles.begin(), s.angles.end());
      ctx.damage_delta = car.damage - s.prev_damage;
      ctx.lap_completed = lap_now;
      ctx.s_avg = s.steps > 0 ? progress / (s.steps * kControlDt) : 0.0;
      ctx.s_avg_target = agent.target_speed / 3.6;
      ctx.turned_backward = std::abs(f.angle) > kTurnBackwardAngle;
      ctx.rank_prev = s.prev_rank;
      ctx.rank_now = f.race_pos;
      ctx.n_cars = n_cars;
      ctx.race_over = race_is_over(f.race_pos, n_cars);
      const auto rr = overtake_and_rank_rewards(ctx.rank_prev, ctx.rank_now, ctx.race_over, n_cars);
      s.overtakes += rr.overtake_count;
      if (rr.rank1 > 0.0) ++s.rank1_events;
      const double reward = compose_reward(agent.rewards, ctx);
      s.reward_sum += reward;

      AgentDoneState ds;
      ds.step_count = s.steps;
      ds.angle = f.angle;
      ds.track_pos = f.track_pos;
      ds.collided = collided[static_cast<std::size_t>(s.car)];
      ds.lap_completed = s.lap_done;
      ds.rank = f.race_pos;
      ds.n_cars = n_cars;
      if (s.lost) {
        ds.already = DoneReason::disconnected;
      } else if (s.meta_requested) {
        ds.already = DoneReason::meta;
      }
      const auto done = evaluate_done(done_specs_[s.agent], ds);
      tails[s.index].reward = reward;
      tails[s.index].done = done.done;
      tails[s.index].done_reason = to_string(done.reason);
      if (done.done) {
        s.done_reason = done.reason;
        s.final_distance = progress;
        s.final_damage = car.damage;
        finished_now[s.index] = true;
      }
      s.prev_distance = car.distance_raced;
      s.prev_damage = car.damage;
      s.prev_rank = f.race_pos;
      s.last_frame = f;
    }
    for (auto& s : sessions_) {
      if (s.kind == SessionKind::traffic && s.car >= 0) s.last_frame = frames[s.index];
    }

    rep.cars = log_cars(tails);

    // Dispatch.
    dispatch(frames, tails);
    for (auto& s : sessions_) {
      if (!finished_now[s.index]) continue;
      s.status = s.done_reason == DoneReason::disconnected ? EpisodeStatus::disconnected : EpisodeStatus::done;
      if (s.status == EpisodeStatus::done) outbox_.push_back({s.index, wire::done_message(to_string(s.done_reason))});
    }

    bool any_running = false;
    for (const auto& s : sessions_) {
      if (s.kind == SessionKind::learning && s.status == EpisodeStatus::running) any_running = true;
    }
    if (!any_running) {
      rep.episode_ended = true;
      rep.result = episode_result();
      ++resets_;
      ++episode_;
      for (const auto& s : sessions_) {
        if (s.kind == SessionKind::learning && s.identified && !s.lost) outbox_.push_back({s.index, wire::kRestart});
      }
      begin_episode();
    }
    return rep;
  }

  EpisodeResult episode_result() const {
    EpisodeResult r;
    r.episode = episode_;
    r.seed = setup_.seed;
    r.track = setup_.track;
    r.n_traffic = setup_.n_traffic;
    r.steps = step_count_;
    for (const auto& s : sessions_) {
      if (s.kind != SessionKind::learning || s.car < 0) continue;
      const auto& car = cars_[static_cast<std::size_t>(s.car)];
      AgentOutcome o;
      o.agent = s.name;
      o.car = car_models_[static_cast<std::size_t>(s.car)].name;
      o.steps = s.steps;
      const bool finished = s.done_reason != DoneReason::none;
      o.distance = finished ? s.final_distance : car.distance_raced - s.spawn_distance;
      o.time = s.steps * kControlDt;
      o.fraction_of_lap = lap_fraction(*track_, o.distance);
      o.avg_speed_kmh = o.time > 0.0 ? o.distance / o.time * 3.6 : 0.0;
      o.lap_completed = o.fraction_of_lap >= 1.0;
      o.final_rank = s.prev_rank;
      o.damage = finished ? s.final_damage : car.damage;
      o.reward_sum = s.reward_sum;
      o.overtakes = s.overtakes;
      o.rank1_events = s.rank1_events;
      o.done_reason = to_string(s.done_reason);
      r.agents.push_back(o);
    }
    return r;
  }

 private:
  std::vector<double> submitted_values(const Session& s) const {
    const auto& a = s.last_action;
    if (cfg_.agents[s.agent].pid_assist) return {a.desire.target_track_pos, a.desire.target_speed_norm};
    return {a.primitive.accel, a.primitive.brake, a.primitive.steer};
  }

  Controls realize(Session& s) {
    if (s.status != EpisodeStatus::running) {
      s.applied = PrimitiveAction{0.0, 0.0, 1.0, 0};
      return to_controls(*s.applied);
    }
    const double noise_std = setup_.add_noise_to_actions ? setup_.action_noise_std : 0.0;
    PrimitiveAction p;
    if (s.kind == SessionKind::traffic) {
      auto out = ts_to_primitive(s.last_action.desire, s.last_frame, s.ctrl);
      s.ctrl = out.state;
      p = out.action;
      // Stopped traffic holds the brake; the speed PID alone leaves a creep.
      if (speed_from_norm(s.ctrl.held_desire.target_speed_norm) <= 0.0 && s.last_frame.speed_x < 5.0) {
        p.accel = 0.0;
        p.brake = 1.0;
      }
    } else {
      const auto& agent = cfg_.agents[s.agent];
      if (agent.pid_assist) {
        DesireAction d = s.last_action.desire;
        if (!agent.normalize_actions) d.target_speed_norm = norm_from_kmh(d.target_speed_norm);
        d = add_action_noise(d, noise_std, s.act_rng);
        auto out = ts_to_primitive(d, s.last_frame, s.ctrl);
        s.ctrl = out.state;
        p = out.action;
      } else {
        p = add_action_noise(s.last_action.primitive, noise_std, s.act_rng);
        if (!agent.throttle) {
          // Speed held by the longitudinal PID at the agent's target.
          DesireAction d{s.last_frame.track_pos, norm_from_kmh(agent.target_speed)};
          auto out = ts_to_primitive(d, s.last_frame, s.ctrl);
          s.ctrl = out.state;
          p.accel = out.action.accel;
          p.brake = out.action.brake;
        }
        if (!agent.gear_change) p.gear = 0;
      }
    }
    s.applied = p;
    return to_controls(p);
  }

  SensorFrame frame_for(const Session& s) const {
    FrameContext ctx;
    ctx.track = track_.get();
    ctx.cars = cars_;
    ctx.ego = static_cast<std::size_t>(s.car);
    ctx.beams = s.beams;
    ctx.cur_lap_time = step_count_ * kControlDt;
    return build_sensor_frame(ctx);
  }

  void dispatch(const std::vector<SensorFrame>& frames, const std::vector<wire::StepTail>& tails) {
    for (auto& s : sessions_) {
      if (s.car < 0 || s.status != EpisodeStatus::running) continue;
      if (s.kind == SessionKind::traffic) {
        const auto msg = wire::encode_sensor(frames[s.index], tails[s.index]);
        auto& client = traffic_clients_[s.agent];
        handle_message(s.index, client.on_frame(msg));
        continue;
      }
      if (s.lost) continue;
      const bool noisy = setup_.noisy_observations;
      wire::StepTail tail = tails[s.index];
      tail.comms = comm_.block(s.name);
      const auto f = apply_observation_noise(frames[s.index], noisy, s.obs_rng);
      outbox_.push_back({s.index, wire::encode_sensor(f, tail)});
    }
  }

  std::vector<CarLog> log_cars(const std::vector<wire::StepTail>& tails) const {
    std::vector<CarLog> out;
    for (const auto& s : sessions_) {
      if (s.car < 0) continue;
      const auto& c = cars_[static_cast<std::size_t>(s.car)];
      const auto fp = track_->project(c.position, c.heading);
      CarLog l;
      l.agent = s.name;
      l.kind = s.kind;
      l.x = c.position.x;
      l.y = c.position.y;
      l.heading = c.heading;
      l.s = fp.s;
      l.track_pos = fp.track_pos;
      l.speed_kmh = c.v_long * 3.6;
      l.lat_speed_kmh = c.v_lat * 3.6;
      l.distance = c.distance_raced - s.spawn_distance;
      if (s.applied) {
        l.steer = s.applied->steer;
        l.accel = s.applied->accel;
        l.brake = s.applied->brake;
      }
      l.damage = c.damage;
      l.rank = race_position(cars_, static_cast<std::size_t>(s.car));
      l.reward = tails[s.index].reward;
      l.done = tails[s.index].done || (s.kind == SessionKind::learning && s.status != EpisodeStatus::running);
      l.reason = s.kind == SessionKind::learning && s.status != EpisodeStatus::running ? to_string(s.done_reason)
                                                                                        : tails[s.index].done_reason;
      out.push_back(l);
    }
    return out;
  }

  const Track& load_track_cached(const std::string& name) {
    auto it = tracks_.find(name);
    if (it == tracks_.end()) it = tracks_.emplace(name, std::make_shared<Track>(load_track_file(cfg_.track_path(name)))).first;
    track_ = it->second;
    return *track_;
  }

  const CarModel& car_cached(const std::string& name) {
    auto it = models_.find(name);
    if (it == models_.end()) it = models_.emplace(name, load_car_model_file(cfg_.car_path(name))).first;
    return it->second;
  }

  VehicleState spawn_car(const Spawn& sp) const {
    const double s = track_->normalize_s(sp.distance);
    const double lateral = sp.track_pos * 0.5 * track_->width_at(s);
    const auto [pos, heading] = track_->frenet_to_world(s, lateral);
    VehicleState v;
    v.position = pos;
    v.heading = heading;
    v.distance_raced = sp.distance;
    v.track_s = s;
    return v;
  }

  void begin_episode() {
    cfg_ = apply_curriculum(base_, episode_);
    setup_ = sample_episode_setup(cfg_, rng_);
    setup_.episode = episode_;
    setup_.seed = detail::mix_seed(seed_, static_cast<std::uint64_t>(episode_), 1, 0);
    load_track_cached(setup_.track);
    if (!track_->closed()) {
      auto check = [&](const Spawn& sp, const std::string& who) {
        if (sp.distance < 0.0 || sp.distance > track_->total_length()) {
          throw ConfigError(who, "spawn distance outside open track '" + setup_.track + "'");
        }
      };
      for (const auto& sp : setup_.learning_spawns) check(sp, "server.distance_to_start");
      for (const auto& sp : setup_.traffic_spawns) check(sp, "traffic.initial_distance");
    }

    cars_.clear();
    car_models_.clear();
    done_specs_.clear();
    for (const auto& a : cfg_.agents) done_specs_.push_back(done_spec_for(cfg_, a));
    comm_ = CommBuffer(cfg_);
    step_count_ = 0;

    for (auto& s : sessions_) {
      s.car = -1;
      s.status = EpisodeStatus::idle;
      s.pending.reset();
      s.last_action = {};
      s.meta_requested = false;
      s.applied.reset();
      s.angles.clear();
      s.lap_done = false;
      s.steps = 0;
      s.reward_sum = 0.0;
      s.overtakes = 0;
      s.rank1_events = 0;
      s.done_reason = DoneReason::none;
      s.obs_rng.seed(detail::mix_seed(seed_, static_cast<std::uint64_t>(episode_), 2, s.index));
      s.act_rng.seed(detail::mix_seed(seed_, static_cast<std::uint64_t>(episode_), 3, s.index));
      if (s.kind == SessionKind::traffic) {
        if (static_cast<int>(s.agent) >= setup_.n_traffic) continue;
        const auto& tc = setup_.traffic[s.agent];
        s.ctrl = controller_for(tc);
        s.last_action.kind = wire::ActionKind::desire;
        s.car = static_cast<int>(cars_.size());
        cars_.push_back(spawn_car(setup_.traffic_spawns[s.agent]));
        car_models_.push_back(car_cached(cfg_.server.traffic_car));
        const auto& park = setup_.traffic_parking[s.agent];
        traffic_clients_[s.agent] = {tc, make_behavior_state(tc, detail::mix_seed(seed_, static_cast<std::uint64_t>(episode_), 4, s.index), park.distance,
                                                             park.track_pos), 0};
      } else {
        if (static_cast<int>(s.agent) >= cfg_.n_learning()) continue;
        const auto& a = cfg_.agents[s.agent];
        s.ctrl = controller_for(a);
        s.last_action.kind = a.pid_assist ? wire::ActionKind::desire : wire::ActionKind::primitive;
        if (a.pid_assist && !a.normalize_actions) s.last_action.desire.target_speed_norm = 0.0;
        s.car = static_cast<int>(cars_.size());
        cars_.push_back(spawn_car(setup_.learning_spawns[s.agent]));
        car_models_.push_back(car_cached(setup_.learning_cars[s.agent]));
      }
      s.status = EpisodeStatus::running;
      if (s.lost && s.kind == SessionKind::learning) s.status = EpisodeStatus::disconnected;
    }
    if (!any_learning_connected()) throw NetworkError("all learning agents disconnected");

    std::vector<SensorFrame> frames(sessions_.size());
    std::vector<wire::StepTail> tails(sessions_.size());
    for (auto& s : sessions_) {
      if (s.car < 0) continue;
      const auto& car = cars_[static_cast<std::size_t>(s.car)];
      frames[s.index] = frame_for(s);
      s.last_frame = frames[s.index];
      s.spawn_distance = car.distance_raced;
      s.prev_distance = car.distance_raced;
      s.prev_damage = car.damage;
      s.prev_rank = frames[s.index].race_pos;
    }
    dispatch(frames, tails);
  }

  bool any_learning_connected() const {
    for (const auto& s : sessions_)
      if (s.kind == SessionKind::learning && s.status == EpisodeStatus::running) return true;
    return false;
  }

  SimulationConfig base_;
  SimulationConfig cfg_;
  std::uint64_t seed_;
  Rng rng_;
  std::vector<Session> sessions_;
  std::vector<detail::TrafficClient> traffic_clients_;
  std::vector<Outgoing> outbox_;
  EpisodeSetup setup_;
  std::map<std::string, std::shared_ptr<Track>> tracks_;
  std::map<std::string, CarModel> models_;
  std::shared_ptr<Track> track_;
  std::vector<VehicleState> cars_;
  std::vector<CarModel> car_models_;
  std::vector<DoneSpec> done_specs_;
  CommBuffer comm_;
  bool started_ = false;
  int episode_ = 1;
  int step_count_ = 0;
  std::uint64_t physics_ticks_ = 0;
  std::uint64_t steps_total_ = 0;
  int resets_ = 0;
};

// Something that advances a Simulation one control step at a time and
// carries its messages to the clients.
class StepDriver {
 public:
  virtual ~StepDriver() = default;
  virtual void start() = 0;
  virtual StepReport step() = 0;
};

}  // namespace trackgym
