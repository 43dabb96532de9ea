#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "trackgym/traffic.hpp"

using namespace trackgym;

namespace {

SensorFrame open_road() {
  SensorFrame f;
  f.opponents.fill(kSensorRange);
  return f;
}

double kmh_of(const DesireAction& d) { return speed_from_norm(d.target_speed_norm) * 3.6; }

}  // namespace

TEST(Behaviors, NamesRoundTrip) {
  for (const auto& [b, name] : behavior_names()) EXPECT_EQ(behavior_from_string(name), b);
  EXPECT_THROW(behavior_from_string("KamikazeAgent"), ValidationError);
}

TEST(Behaviors, ConstVelHoldsTargetAndLane) {
  TrafficConfig cfg;
  cfg.target_speed = 50.0;
  cfg.target_lane_pos = 0.3;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  for (int step = 0; step < 50; ++step) {
    const auto d = traffic_policy_step(cfg, open_road(), st, step);
    EXPECT_NEAR(kmh_of(d), 50.0, 1e-9);
    EXPECT_DOUBLE_EQ(d.target_track_pos, 0.3);
  }
}

TEST(Behaviors, SinusoidalSpeedShape) {
  TrafficConfig cfg;
  cfg.behavior = Behavior::sinusoidal_speed;
  cfg.target_speed = 40.0;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, open_road(), st, 0)), 40.0, 1e-9);
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, open_road(), st, 50)), 60.0, 1e-9);
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, open_road(), st, 150)), 20.0, 1e-9);
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, open_road(), st, 200)), 40.0, 1e-9);
}

TEST(Behaviors, RandomLaneSwitchRateAndRange) {
  TrafficConfig cfg;
  cfg.behavior = Behavior::random_lane_switch;
  auto st = make_behavior_state(cfg, 7, 0.0, 0.0);
  int changes = 0;
  double prev = st.lane;
  const int n = 100000;
  for (int step = 0; step < n; ++step) {
    const auto d = traffic_policy_step(cfg, open_road(), st, step);
    EXPECT_LE(std::abs(d.target_track_pos), 0.8);
    if (d.target_track_pos != prev) ++changes;
    prev = d.target_track_pos;
  }
  // Binomial(1e5, 0.01): mean 1000, sd ~31.
  EXPECT_NEAR(changes, 1000, 150);
}

TEST(Behaviors, RandomStoppingLastsStopDuration) {
  TrafficConfig cfg;
  cfg.behavior = Behavior::random_stopping;
  cfg.p_stop = 1.0;
  cfg.stop_duration = 100;
  auto st = make_behavior_state(cfg, 3, 0.0, 0.0);
  for (int step = 0; step < 100; ++step) EXPECT_EQ(kmh_of(traffic_policy_step(cfg, open_road(), st, step)), 0.0);
  cfg.p_stop = 0.0;
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, open_road(), st, 100)), 50.0, 1e-9);
}

TEST(Behaviors, ParkedAlwaysZero) {
  TrafficConfig cfg;
  cfg.behavior = Behavior::parked;
  auto st = make_behavior_state(cfg, 3, 0.0, 0.0);
  EXPECT_EQ(traffic_policy_step(cfg, open_road(), st, 0).target_speed_norm, -1.0);
}

TEST(Behaviors, DriveAndParkSpeedProfile) {
  TrafficConfig cfg;
  cfg.behavior = Behavior::drive_and_park;
  cfg.parking = ParkingSpec{{300, 300}, {0.5, 0.5}};
  auto st = make_behavior_state(cfg, 3, 300.0, 0.5);
  auto f = open_road();
  f.dist_raced = 0.0;
  auto d = traffic_policy_step(cfg, f, st, 0);
  EXPECT_NEAR(kmh_of(d), 50.0, 1e-9);
  EXPECT_DOUBLE_EQ(d.target_track_pos, 0.5);
  f.dist_raced = 296.0;  // 4 m left: sqrt(2*1.5*4) m/s
  EXPECT_NEAR(kmh_of(traffic_policy_step(cfg, f, st, 1)), std::sqrt(12.0) * 3.6, 1e-9);
  f.dist_raced = 299.7;
  EXPECT_EQ(kmh_of(traffic_policy_step(cfg, f, st, 2)), 0.0);
  f.dist_raced = 310.0;
  EXPECT_EQ(kmh_of(traffic_policy_step(cfg, f, st, 3)), 0.0);
}

TEST(Avoidance, StopsWhenTimeToContactBelowWindow) {
  // 5 m ahead, closing at 10 m/s, window 2 s -> speed 0.
  TrafficConfig cfg;
  cfg.min_gap = 0.0;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  auto f = open_road();
  f.opponents[18] = 5.2;
  const DesireAction want{0.0, norm_from_kmh(50.0)};
  collision_avoidance_override(f, cfg, st, want);
  f.opponents[18] = 5.0;
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, want).target_speed_norm, -1.0);
}

TEST(Avoidance, KeepsSpeedWhenFarOrOpening) {
  TrafficConfig cfg;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  auto f = open_road();
  const DesireAction want{0.0, norm_from_kmh(50.0)};
  f.opponents[17] = 60.0;
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, want), want);
  f.opponents[17] = 59.9;  // 5 m/s closing, 53.9 m gap -> 10.8 s
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, want), want);
  f.opponents[17] = 61.0;
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, want), want);
}

TEST(Avoidance, InsideMinGapStops) {
  TrafficConfig cfg;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  auto f = open_road();
  f.opponents[17] = 5.5;
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, {0.0, 0.0}).target_speed_norm, -1.0);
}

TEST(Avoidance, SideSectorsIgnored) {
  TrafficConfig cfg;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  auto f = open_road();
  f.opponents[27] = 2.0;  // directly left
  const DesireAction want{0.0, 0.2};
  EXPECT_EQ(collision_avoidance_override(f, cfg, st, want), want);
}

TEST(Avoidance, EdgeGuardClampsLaneTarget) {
  TrafficConfig cfg;
  auto st = make_behavior_state(cfg, 1, 0.0, 0.0);
  auto f = open_road();
  f.track_pos = 0.95;
  EXPECT_DOUBLE_EQ(collision_avoidance_override(f, cfg, st, {1.0, 0.0}).target_track_pos, 0.8);
  f.track_pos = 0.5;
  EXPECT_DOUBLE_EQ(collision_avoidance_override(f, cfg, st, {1.0, 0.0}).target_track_pos, 1.0);
}

TEST(Layout, AlternatingSlots) {
  const auto slots = alternating_parking_layout(4, 100.0, 60.0, 0.5, 5.0);
  ASSERT_EQ(slots.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const auto& s = slots[static_cast<std::size_t>(i)];
    const double centre = 100.0 + 60.0 * i;
    EXPECT_DOUBLE_EQ(s.parking.distance.first, centre - 5.0);
    EXPECT_DOUBLE_EQ(s.parking.distance.second, centre + 5.0);
    const double side = i % 2 == 0 ? 1.0 : -1.0;
    EXPECT_NEAR(0.5 * (s.parking.track_pos.first + s.parking.track_pos.second), 0.5 * side, 1e-12);
    EXPECT_NEAR(s.parking.track_pos.second - s.parking.track_pos.first, 2 * 0.25 / 5.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.initial_distance.first, centre - 45.0);
    EXPECT_EQ(s.initial_trackpos, s.parking.track_pos);
  }
  EXPECT_THROW(alternating_parking_layout(2, 0.0, 19.0, 0.5, 5.0), ValidationError);
}

TEST(TrafficConfigValidation, Rejects) {
  TrafficConfig c;
  EXPECT_NO_THROW(c.validate("t"));
  c.behavior = Behavior::drive_and_park;
  EXPECT_THROW(c.validate("t"), ValidationError);
  c = {};
  c.collision_time_window = 0.0;
  EXPECT_THROW(c.validate("t"), ValidationError);
  c = {};
  c.initial_distance = {10, 5};
  EXPECT_THROW(c.validate("t"), ValidationError);
}
