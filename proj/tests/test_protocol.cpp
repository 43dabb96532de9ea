#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "trackgym/protocol.hpp"

using namespace trackgym;
using nlohmann::json;

namespace {

const json& corpus() {
  static const json j = [] {
    std::ifstream in(std::string(TRACKGYM_FIXTURE_DIR) + "/protocol/corpus.json");
    return json::parse(in);
  }();
  return j;
}

}  // namespace

TEST(Codec, FixtureSensorsDecodeExactly) {
  ASSERT_FALSE(corpus()["sensor"].empty());
  for (const auto& c : corpus()["sensor"]) {
    SCOPED_TRACE(c["name"].get<std::string>());
    const auto d = wire::decode_sensor(c["wire"].get<std::string>());
    const auto& e = c["expected"];
    EXPECT_EQ(d.frame.angle, e["angle"].get<double>());
    EXPECT_EQ(d.frame.cur_lap_time, e["curLapTime"].get<double>());
    EXPECT_EQ(d.frame.damage, e["damage"].get<double>());
    EXPECT_EQ(d.frame.dist_from_start, e["distFromStart"].get<double>());
    EXPECT_EQ(d.frame.dist_raced, e["distRaced"].get<double>());
    EXPECT_EQ(d.frame.gear, e["gear"].get<int>());
    EXPECT_EQ(d.frame.race_pos, e["racePos"].get<int>());
    EXPECT_EQ(d.frame.rpm, e["rpm"].get<double>());
    EXPECT_EQ(d.frame.speed_x, e["speedX"].get<double>());
    EXPECT_EQ(d.frame.speed_y, e["speedY"].get<double>());
    EXPECT_EQ(d.frame.speed_z, e["speedZ"].get<double>());
    for (std::size_t i = 0; i < kNumBeams; ++i) EXPECT_EQ(d.frame.track[i], e["track"][i].get<double>());
    EXPECT_EQ(d.frame.track_pos, e["trackPos"].get<double>());
    for (std::size_t i = 0; i < kNumSectors; ++i) EXPECT_EQ(d.frame.opponents[i], e["opponents"][i].get<double>());
    EXPECT_EQ(d.tail.reward, e["reward"].get<double>());
    EXPECT_EQ(d.tail.done, e["done"].get<bool>());
    EXPECT_EQ(d.tail.done_reason, e["doneReason"].get<std::string>());
    EXPECT_EQ(d.tail.comms, e["comms"].get<std::vector<double>>());
  }
}

TEST(Codec, FixtureSensorsReencodeByteIdentical) {
  for (const auto& c : corpus()["sensor"]) {
    const auto w = c["wire"].get<std::string>();
    const auto d = wire::decode_sensor(w);
    EXPECT_EQ(wire::encode_sensor(d.frame, d.tail), w);
  }
}

TEST(Codec, BadSensorsRejected) {
  for (const auto& w : corpus()["bad_sensor"]) EXPECT_THROW(wire::decode_sensor(w.get<std::string>()), ParseError);
}

TEST(Codec, FixtureActions) {
  for (const auto& c : corpus()["action"]) {
    const auto w = c["wire"].get<std::string>();
    SCOPED_TRACE(w);
    const auto m = wire::decode_action(w);
    const auto kind = c["kind"].get<std::string>();
    if (kind == "meta") {
      EXPECT_EQ(m.kind, wire::ActionKind::meta);
    } else if (kind == "primitive") {
      ASSERT_EQ(m.kind, wire::ActionKind::primitive);
      EXPECT_EQ(m.primitive.accel, c["accel"].get<double>());
      EXPECT_EQ(m.primitive.brake, c["brake"].get<double>());
      EXPECT_EQ(m.primitive.steer, c["steer"].get<double>());
      EXPECT_EQ(m.primitive.gear, c["gear"].get<int>());
    } else {
      ASSERT_EQ(m.kind, wire::ActionKind::desire);
      EXPECT_EQ(m.desire.target_track_pos, c["trackpos"].get<double>());
      EXPECT_EQ(m.desire.target_speed_norm, c["speed"].get<double>());
    }
  }
  for (const auto& w : corpus()["bad_action"]) EXPECT_THROW(wire::decode_action(w.get<std::string>()), ParseError);
}

TEST(Codec, FixtureInits) {
  for (const auto& c : corpus()["init"]) {
    const auto w = c["wire"].get<std::string>();
    SCOPED_TRACE(w);
    if (!c["ok"].get<bool>()) {
      EXPECT_THROW(wire::parse_init(w), ParseError);
      continue;
    }
    const auto r = wire::parse_init(w);
    EXPECT_EQ(r.client_id, c["id"].get<std::string>());
    for (std::size_t i = 0; i < kNumBeams; ++i) EXPECT_EQ(r.beams_deg[i], c["beams"][i].get<double>());
  }
}

TEST(Codec, InitRoundTripAndRadians) {
  const auto w = wire::encode_init("SCR", wire::default_beam_degrees());
  EXPECT_EQ(w, "SCR(init -90 -80 -70 -60 -50 -40 -30 -20 -10 0 10 20 30 40 50 60 70 80 90)");
  const auto r = wire::parse_init(w);
  const auto rad = r.beams_rad();
  const auto ref = default_beam_angles();
  for (std::size_t i = 0; i < kNumBeams; ++i) EXPECT_NEAR(rad[i], ref[i], 1e-15);
}

TEST(Codec, FuzzedActionRoundTrip) {
  Rng rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> big(-1e6, 1e6);
  std::uniform_int_distribution<int> gear(-1, 6);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const PrimitiveAction a{u(rng), u(rng), big(rng), gear(rng)};
    const auto w = wire::encode_action(a);
    const auto m = wire::decode_action(w);
    // Oracle: each field equals its 6-significant-digit rendering.
    const bool ok = m.kind == wire::ActionKind::primitive && m.primitive.accel == std::stod(wire::fmt(a.accel)) &&
                    m.primitive.brake == std::stod(wire::fmt(a.brake)) &&
                    m.primitive.steer == std::stod(wire::fmt(a.steer)) && m.primitive.gear == a.gear &&
                    wire::encode_action(m.primitive) == w;
    const DesireAction d{u(rng), u(rng)};
    const auto md = wire::decode_action(wire::encode_action(d));
    const bool ok_d = md.kind == wire::ActionKind::desire &&
                      md.desire.target_track_pos == std::stod(wire::fmt(d.target_track_pos)) &&
                      md.desire.target_speed_norm == std::stod(wire::fmt(d.target_speed_norm));
    if (!ok || !ok_d) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Codec, SixSignificantDigits) {
  EXPECT_EQ(wire::fmt(3.14159265), "3.14159");
  EXPECT_EQ(wire::fmt(1234567.0), "1.23457e+06");
  EXPECT_EQ(wire::fmt(200.0), "200");
  EXPECT_EQ(wire::fmt(-1.0), "-1");
}

TEST(Codec, ControlMessages) {
  EXPECT_EQ(wire::done_message("timeout"), "***done*** (reason timeout)");
  EXPECT_EQ(wire::error_message("bad init"), "***error*** bad init");
  EXPECT_TRUE(wire::looks_like_init("SCR(init 1)"));
  EXPECT_FALSE(wire::looks_like_init("(accel 1)"));
}
