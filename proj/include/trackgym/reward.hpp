#pragma once

// Per-agent reward components, their weighted composition, and done
// conditions.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trackgym/errors.hpp"
#include "trackgym/geometry.hpp"
#include "trackgym/vehicle.hpp"

namespace trackgym {

inline double progress_reward(double d, double s_target) { return std::min(1.0, d / s_target); }

inline double average_speed_reward(double s_avg, double s_target, bool lap_completed) {
  return lap_completed ? s_avg / s_target : 0.0;
}

// |a_t + a_{t-2} - 2 a_{t-1}| / alpha_reference.
inline double angular_acceleration_penalty(double a_t, double a_t1, double a_t2, double alpha_reference) {
  return std::abs(a_t + a_t2 - 2.0 * a_t1) / alpha_reference;
}

struct EventPenalties {
  double turn_backward = 0.0;
  double collision = 0.0;
};

inline EventPenalties fixed_event_penalties(bool turned_backward, double damage_delta) {
  return {turned_backward ? 1.0 : 0.0, damage_delta > 0.0 ? 1.0 : 0.0};
}

struct RankRewards {
  int overtake_count = 0;
  double rank1 = 0.0;
};

inline RankRewards overtake_and_rank_rewards(int rank_prev, int rank_now, bool race_over, int n_cars) {
  if (rank_prev < 1 || rank_now < 1 || rank_prev > n_cars || rank_now > n_cars) {
    throw ValidationError("rank outside [1, n_cars]");
  }
  return {std::max(0, rank_prev - rank_now), race_over && rank_now == 1 ? 1.0 : 0.0};
}

// Meters per control step at a target speed in km/h.
inline double step_target_from_kmh(double kmh) { return kmh / 3.6 * kControlDt; }

struct RewardContext {
  double d = 0.0;                 // meters advanced this step
  double s_target = 0.0;          // meters per step
  std::vector<double> angles;     // oldest first; the last three are used
  double damage_delta = 0.0;
  bool lap_completed = false;
  double s_avg = 0.0;             // m/s over the completed lap
  double s_avg_target = 0.0;      // m/s
  bool turned_backward = false;
  int rank_prev = 1;
  int rank_now = 1;
  bool race_over = false;
  int n_cars = 1;
  double alpha_reference = 2.0;
};

struct RewardComponent {
  std::string name;
  double weight = 1.0;
  std::map<std::string, double> params;

  bool operator==(const RewardComponent&) const = default;
};

struct RewardSpec {
  std::vector<RewardComponent> components;

  bool operator==(const RewardSpec&) const = default;

  static const std::vector<std::string>& known_names() {
    static const std::vector<std::string> names{"progress",           "average_speed",
                                                "angular_acceleration_penalty", "turn_backward_penalty",
                                                "collision_penalty",  "overtake",
                                                "rank_1"};
    return names;
  }

  static bool is_penalty(const std::string& name) {
    return name == "angular_acceleration_penalty" || name == "turn_backward_penalty" ||
           name == "collision_penalty";
  }

  void validate() const {
    std::set<std::string> seen;
    const auto& known = known_names();
    for (const auto& c : components) {
      if (std::find(known.begin(), known.end(), c.name) == known.end()) {
        throw ValidationError("unknown reward component '" + c.name + "'");
      }
      if (!seen.insert(c.name).second) throw ValidationError("duplicate reward component '" + c.name + "'");
      if (!std::isfinite(c.weight)) throw ValidationError("reward '" + c.name + "' has a non-finite scale");
      if (!(c.weight >= 0.0)) throw ValidationError("reward '" + c.name + "' scale must be >= 0");
      for (const auto& [k, v] : c.params) {
        if ((k == "target_speed" || k == "alpha_reference") && !(v > 0.0)) {
          throw ValidationError("reward '" + c.name + "' param '" + k + "' must be > 0");
        }
      }
    }
  }
};

// Unweighted magnitude of one component (always >= 0 for penalties).
inline double component_value(const RewardComponent& c, const RewardContext& ctx) {
  auto param = [&](const char* key, double fallback) {
    auto it = c.params.find(key);
    return it == c.params.end() ? fallback : it->second;
  };
  if (c.name == "progress") {
    const double s_target = c.params.count("target_speed") ? step_target_from_kmh(param("target_speed", 0)) : ctx.s_target;
    return progress_reward(ctx.d, s_target);
  }
  if (c.name == "average_speed") {
    const double target = c.params.count("target_speed") ? param("target_speed", 0) / 3.6 : ctx.s_avg_target;
    return average_speed_reward(ctx.s_avg, target, ctx.lap_completed);
  }
  if (c.name == "angular_acceleration_penalty") {
    const auto& a = ctx.angles;
    if (a.size() < 3) return 0.0;
    const std::size_t n = a.size();
    return angular_acceleration_penalty(a[n - 1], a[n - 2], a[n - 3], param("alpha_reference", ctx.alpha_reference));
  }
  if (c.name == "turn_backward_penalty") return fixed_event_penalties(ctx.turned_backward, 0.0).turn_backward;
  if (c.name == "collision_penalty") return fixed_event_penalties(false, ctx.damage_delta).collision;
  if (c.name == "overtake") {
    return overtake_and_rank_rewards(ctx.rank_prev, ctx.rank_now, ctx.race_over, ctx.n_cars).overtake_count;
  }
  if (c.name == "rank_1") return overtake_and_rank_rewards(ctx.rank_prev, ctx.rank_now, ctx.race_over, ctx.n_cars).rank1;
  throw ValidationError("unknown reward component '" + c.name + "'");
}

struct RewardBreakdown {
  double total = 0.0;
  std::map<std::string, double> terms;  // signed, weighted
};

inline RewardBreakdown compose_reward_terms(const RewardSpec& spec, const RewardContext& ctx) {
  RewardBreakdown out;
  for (const auto& c : spec.components) {
    const double v = c.weight * component_value(c, ctx);
    const double signed_v = RewardSpec::is_penalty(c.name) ? -v : v;
    out.terms[c.name] = signed_v;
    out.total += signed_v;
  }
  return out;
}

inline double compose_reward(const RewardSpec& spec, const RewardContext& ctx) {
  return compose_reward_terms(spec, ctx).total;
}

enum class DoneReason { none, task_complete, timeout, collision, turn_backward, out_of_track, meta, disconnected };

inline const char* to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none: return "none";
    case DoneReason::task_complete: return "task_complete";
    case DoneReason::timeout: return "timeout";
    case DoneReason::collision: return "collision";
    case DoneReason::turn_backward: return "turn_backward";
    case DoneReason::out_of_track: return "out_of_track";
    case DoneReason::meta: return "meta";
    case DoneReason::disconnected: return "disconnected";
  }
  return "none";
}

enum class TaskKind { one_lap, rank_1, race_over };

struct DoneSpec {
  bool turn_backward = false;
  bool out_of_track = false;
  bool collision = false;
  bool timeout = true;
  std::vector<TaskKind> tasks;
  int max_steps = 5000;
  int client_max_steps = -1;  // per-agent limit, -1 = none
  double track_limit_lo = -1.0;
  double track_limit_hi = 1.0;

  bool operator==(const DoneSpec&) const = default;

  void validate() const {
    if (max_steps <= 0) throw ValidationError("max_steps must be > 0");
    if (client_max_steps == 0 || client_max_steps < -1) throw ValidationError("client_max_steps must be > 0 or -1");
    if (!(track_limit_lo < track_limit_hi)) throw ValidationError("track_limits must be [low, high] with low < high");
  }

  // Config spellings: turn_backward, out_of_track, collision, timeout,
  // task_complete (one lap), one_lap, rank_1, race_over.
  void enable(const std::string& name) {
    if (name == "turn_backward") {
      turn_backward = true;
    } else if (name == "out_of_track") {
      out_of_track = true;
    } else if (name == "collision") {
      collision = true;
    } else if (name == "timeout") {
      timeout = true;
    } else if (name == "task_complete" || name == "one_lap") {
      tasks.push_back(TaskKind::one_lap);
    } else if (name == "rank_1") {
      tasks.push_back(TaskKind::rank_1);
    } else if (name == "race_over") {
      tasks.push_back(TaskKind::race_over);
    } else {
      throw ValidationError("unknown done condition '" + name + "'");
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (turn_backward) out.push_back("turn_backward");
    if (out_of_track) out.push_back("out_of_track");
    if (collision) out.push_back("collision");
    if (timeout) out.push_back("timeout");
    for (auto t : tasks) out.push_back(t == TaskKind::one_lap ? "one_lap" : t == TaskKind::rank_1 ? "rank_1" : "race_over");
    return out;
  }
};

inline constexpr double kTurnBackwardAngle = kPi / 2.0;

struct AgentDoneState {
  int step_count = 0;
  double angle = 0.0;
  double track_pos = 0.0;
  bool collided = false;
  bool lap_completed = false;  // progress since spawn covers a full lap
  int rank = 1;
  int n_cars = 1;
  DoneReason already = DoneReason::none;
};

struct DoneResult {
  bool done = false;
  DoneReason reason = DoneReason::none;
};

// Passing every other car: ranked first in a world with traffic.
inline bool race_is_over(int rank, int n_cars) { return n_cars > 1 && rank == 1; }

inline DoneResult evaluate_done(const DoneSpec& spec, const AgentDoneState& st) {
  if (st.already != DoneReason::none) return {true, st.already};
  for (auto t : spec.tasks) {
    const bool fired = t == TaskKind::one_lap ? st.lap_completed : race_is_over(st.rank, st.n_cars);
    if (fired) return {true, DoneReason::task_complete};
  }
  const int limit = spec.client_max_steps > 0 ? std::min(spec.client_max_steps, spec.max_steps) : spec.max_steps;
  if (spec.timeout && st.step_count >= limit) return {true, DoneReason::timeout};
  if (spec.collision && st.collided) return {true, DoneReason::collision};
  if (spec.turn_backward && std::abs(st.angle) > kTurnBackwardAngle) return {true, DoneReason::turn_backward};
  if (spec.out_of_track && (st.track_pos > spec.track_limit_hi || st.track_pos < spec.track_limit_lo)) {
    return {true, DoneReason::out_of_track};
  }
  return {};
}

}  // namespace trackgym
