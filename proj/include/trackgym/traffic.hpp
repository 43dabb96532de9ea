#pragma once

// Scripted traffic behaviors. Each returns a track-position/speed desire that
// goes through the same PID stack as a learning agent.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trackgym/control.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/sensing.hpp"

namespace trackgym {

enum class Behavior { const_vel, sinusoidal_speed, random_lane_switch, drive_and_park, parked, random_stopping };

inline const std::array<std::pair<Behavior, const char*>, 6>& behavior_names() {
  static const std::array<std::pair<Behavior, const char*>, 6> names{{
      {Behavior::const_vel, "ConstVelTrafficAgent"},
      {Behavior::sinusoidal_speed, "SinusoidalSpeedAgent"},
      {Behavior::random_lane_switch, "RandomLaneSwitchAgent"},
      {Behavior::drive_and_park, "DriveAndParkAgent"},
      {Behavior::parked, "ParkedAgent"},
      {Behavior::random_stopping, "RandomStoppingAgent"},
  }};
  return names;
}

inline const char* to_string(Behavior b) {
  for (const auto& [k, v] : behavior_names())
    if (k == b) return v;
  return "?";
}

inline Behavior behavior_from_string(const std::string& s) {
  for (const auto& [k, v] : behavior_names())
    if (s == v) return k;
  throw ValidationError("unknown traffic behavior '" + s + "'");
}

using Range = std::pair<double, double>;

struct ParkingSpec {
  Range distance{0.0, 0.0};
  Range track_pos{0.0, 0.0};

  bool operator==(const ParkingSpec&) const = default;
};

struct TrafficConfig {
  Behavior behavior = Behavior::const_vel;
  double target_speed = 50.0;  // km/h
  double target_lane_pos = 0.0;
  std::optional<ParkingSpec> parking;
  Range initial_distance{20.0, 20.0};
  Range initial_trackpos{0.0, 0.0};
  double collision_time_window = 2.0;  // s
  PIDGains accel_pid = kDefaultAccelGains;
  PIDGains steer_pid = kDefaultSteerGains;
  double accel_scale = 0.04;
  double steer_scale = 0.5;
  int pid_latency = 1;
  double track_len = 0.0;  // informational
  int period = 200;
  double p_switch = 0.01;
  double p_stop = 0.005;
  int stop_duration = 100;
  double park_decel = 1.5;  // m/s^2 used to shape the approach
  double min_gap = 6.0;     // center distance treated as contact

  bool operator==(const TrafficConfig&) const = default;

  void validate(const std::string& where) const {
    auto fail = [&](const std::string& what) { throw ValidationError(where + ": " + what); };
    if (!(target_speed >= 0.0)) fail("target_speed must be >= 0");
    if (!(std::abs(target_lane_pos) <= 1.0)) fail("target_lane_pos must be in [-1, 1]");
    if (!(collision_time_window > 0.0)) fail("collision_time_window must be > 0");
    if (initial_distance.first > initial_distance.second) fail("initial_distance must be [low, high]");
    if (initial_trackpos.first > initial_trackpos.second) fail("initial_trackpos must be [low, high]");
    if (!(accel_scale > 0.0 && steer_scale > 0.0)) fail("accel_scale and steer_scale must be > 0");
    if (pid_latency < 1) fail("pid_latency must be >= 1");
    if (period <= 0) fail("period must be > 0");
    if (!(p_switch >= 0.0 && p_switch <= 1.0 && p_stop >= 0.0 && p_stop <= 1.0)) fail("probabilities must be in [0, 1]");
    if (stop_duration < 0) fail("stop_duration must be >= 0");
    if (behavior == Behavior::drive_and_park && !parking) fail("DriveAndParkAgent needs a parking entry");
    if (parking) {
      if (parking->distance.first > parking->distance.second) fail("parking.distance must be [low, high]");
      if (parking->track_pos.first > parking->track_pos.second) fail("parking.track_pos must be [low, high]");
    }
  }
};

struct TrafficBehaviorState {
  Rng rng{0};
  double lane = 0.0;
  int stop_remaining = 0;
  double park_distance = 0.0;
  double park_track_pos = 0.0;
  std::optional<double> prev_front;
};

inline TrafficBehaviorState make_behavior_state(const TrafficConfig& cfg, std::uint64_t seed, double park_distance,
                                                double park_track_pos) {
  TrafficBehaviorState st;
  st.rng.seed(seed);
  st.lane = cfg.target_lane_pos;
  st.park_distance = park_distance;
  st.park_track_pos = park_track_pos;
  if (cfg.behavior == Behavior::drive_and_park) st.lane = park_track_pos;
  return st;
}

inline DesireAction traffic_policy_step(const TrafficConfig& cfg, const SensorFrame& frame, TrafficBehaviorState& st,
                                        int step) {
  double speed_kmh = cfg.target_speed;
  switch (cfg.behavior) {
    case Behavior::const_vel:
      break;
    case Behavior::sinusoidal_speed:
      speed_kmh = cfg.target_speed * (1.0 + 0.5 * std::sin(kTwoPi * step / cfg.period));
      break;
    case Behavior::random_lane_switch: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(st.rng) < cfg.p_switch) st.lane = std::uniform_real_distribution<double>(-0.8, 0.8)(st.rng);
      break;
    }
    case Behavior::drive_and_park: {
      const double remaining = st.park_distance - frame.dist_raced;
      if (remaining < 0.5) {
        speed_kmh = 0.0;
      } else {
        speed_kmh = std::min(cfg.target_speed, std::sqrt(2.0 * cfg.park_decel * remaining) * 3.6);
      }
      st.lane = st.park_track_pos;
      break;
    }
    case Behavior::parked:
      speed_kmh = 0.0;
      break;
    case Behavior::random_stopping: {
      if (st.stop_remaining > 0) {
        --st.stop_remaining;
        speed_kmh = 0.0;
      } else if (std::uniform_real_distribution<double>(0.0, 1.0)(st.rng) < cfg.p_stop) {
        st.stop_remaining = cfg.stop_duration - 1;
        speed_kmh = 0.0;
      }
      break;
    }
  }
  return clip(DesireAction{st.lane, norm_from_kmh(speed_kmh)});
}

inline double front_distance(const SensorFrame& frame) { return std::min(frame.opponents[17], frame.opponents[18]); }

// Stops the car when the car ahead is within collision_time_window and
// keeps the lane target away from the edges.
inline DesireAction collision_avoidance_override(const SensorFrame& frame, const TrafficConfig& cfg,
                                                 TrafficBehaviorState& st, DesireAction desire,
                                                 double dt = kControlDt) {
  const double front = front_distance(frame);
  const std::optional<double> prev = st.prev_front;
  st.prev_front = front;
  if (front < kSensorRange) {
    const double gap = front - cfg.min_gap;
    double closing = 0.0;
    if (prev && *prev < kSensorRange) closing = (*prev - front) / dt;
    if (gap <= 0.0 || (closing > 0.0 && gap / closing < cfg.collision_time_window)) {
      desire.target_speed_norm = -1.0;
    }
  }
  if (std::abs(frame.track_pos) > 0.9) {
    desire.target_track_pos = clamp(desire.target_track_pos, -0.8, 0.8);
  }
  return desire;
}

// One slot of a parked-traffic layout.
struct ParkingSlot {
  ParkingSpec parking;
  Range initial_distance;
  Range initial_trackpos;
};

// Parking ranges on alternating sides of the road, `spacing` meters apart
// starting at first_distance. Each slot is a box of +-along_jitter meters
// along the track and +-across_jitter meters across (converted to
// track_pos with the half width). Cars start approach meters before their
// slot in the same lane.
inline std::vector<ParkingSlot> alternating_parking_layout(int n, double first_distance, double spacing,
                                                           double lane_track_pos, double half_width,
                                                           double along_jitter = 5.0, double across_jitter = 0.25,
                                                           double approach = 40.0, bool start_left = true) {
  if (spacing - 2.0 * along_jitter < 10.0) throw ValidationError("parking slots closer than 10 m");
  std::vector<ParkingSlot> out;
  const double dtp = across_jitter / half_width;
  for (int i = 0; i < n; ++i) {
    const double side = ((i % 2 == 0) == start_left) ? 1.0 : -1.0;
    const double centre = first_distance + spacing * i;
    const double tp = side * lane_track_pos;
    ParkingSlot slot;
    slot.parking.distance = {centre - along_jitter, centre + along_jitter};
    slot.parking.track_pos = {tp - dtp, tp + dtp};
    slot.initial_distance = {centre - approach - along_jitter, centre - approach + along_jitter};
    slot.initial_trackpos = slot.parking.track_pos;
    out.push_back(slot);
  }
  return out;
}

}  // namespace trackgym
