#pragma once

// Built-in scenario configs used by the tests, the acceptance checks and
// the example files under configs/.

#include "trackgym/config.hpp"
#include "trackgym/traffic.hpp"

namespace trackgym {

// Narrow-road overtaking: n DriveAndParkAgents park on alternating sides of
// a 5 m road; one learner spawns behind them and must pass all of them.
inline SimulationConfig narrow_overtaking_config(int n_parked = 4) {
  auto cfg = parse_config_node(cfgio::load_yaml(R"(
server:
  max_cars: 5
  min_traffic_cars: 4
  track_names: [narrow]
  distance_to_start: 20
  max_steps: 3000
  randomize_env: true
agents:
  passer:
    target_speed: 36
    rewards:
      progress: {scale: 1.0}
      overtake: {scale: 1.0}
      rank_1: {scale: 5.0}
      collision_penalty: {scale: 1.0}
    dones: [race_over, out_of_track, collision]
)", "<scenario>"), YAML::Node(), false);
  cfg.server.max_cars = n_parked + 1;
  cfg.server.min_traffic_cars = n_parked;
  const double half_width = 2.5;
  for (const auto& slot : alternating_parking_layout(n_parked, 150.0, 60.0, 0.5, half_width)) {
    TrafficConfig t;
    t.behavior = Behavior::drive_and_park;
    t.target_speed = 30.0;
    t.target_lane_pos = 0.5 * (slot.parking.track_pos.first + slot.parking.track_pos.second);
    t.initial_distance = slot.initial_distance;
    t.initial_trackpos = slot.initial_trackpos;
    t.parking = slot.parking;
    cfg.traffic.push_back(t);
  }
  validate_config(cfg);
  return cfg;
}

}  // namespace trackgym
