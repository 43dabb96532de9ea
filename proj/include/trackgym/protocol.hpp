#pragma once

// Text codec for the UDP wire format: "(name v1 v2 ...)" groups, control
// messages wrapped in "***", floats printed with 6 significant digits.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trackgym/control.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/reward.hpp"
#include "trackgym/sensing.hpp"

namespace trackgym::wire {

inline constexpr const char* kIdentified = "***identified***";
inline constexpr const char* kRestart = "***restart***";
inline constexpr const char* kShutdown = "***shutdown***";

inline std::string done_message(const std::string& reason) { return "***done*** (reason " + reason + ")"; }
inline std::string error_message(const std::string& reason) { return "***error*** " + reason; }

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt(int v) { return std::to_string(v); }

struct Group {
  std::string name;
  std::vector<std::string> values;
};

// Splits "(a 1)(b 2 3)" into groups. Whitespace between groups is allowed.
inline std::vector<Group> parse_groups(std::string_view s) {
  std::vector<Group> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r' || s[i] == '\0')) ++i;
  };
  skip_ws();
  while (i < s.size()) {
    if (s[i] != '(') throw ParseError("expected '(' at offset " + std::to_string(i));
    const auto close = s.find(')', i);
    if (close == std::string_view::npos) throw ParseError("unterminated group at offset " + std::to_string(i));
    const auto inner = s.substr(i + 1, close - i - 1);
    if (inner.find('(') != std::string_view::npos) throw ParseError("nested group at offset " + std::to_string(i));
    Group g;
    std::size_t j = 0;
    while (j < inner.size()) {
      while (j < inner.size() && inner[j] == ' ') ++j;
      const auto start = j;
      while (j < inner.size() && inner[j] != ' ') ++j;
      if (j > start) {
        std::string tok(inner.substr(start, j - start));
        if (g.name.empty()) {
          g.name = std::move(tok);
        } else {
          g.values.push_back(std::move(tok));
        }
      }
    }
    if (g.name.empty()) throw ParseError("empty group at offset " + std::to_string(i));
    out.push_back(std::move(g));
    i = close + 1;
    skip_ws();
  }
  return out;
}

inline double to_double(const std::string& tok, const std::string& field) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE) {
    throw ParseError("field '" + field + "': bad number '" + tok + "'");
  }
  return v;
}

inline int to_int(const std::string& tok, const std::string& field) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE) {
    throw ParseError("field '" + field + "': bad integer '" + tok + "'");
  }
  return static_cast<int>(v);
}

struct InitRequest {
  std::string client_id;
  BeamAngles beams_deg{};

  BeamAngles beams_rad() const {
    BeamAngles r{};
    for (std::size_t i = 0; i < kNumBeams; ++i) r[i] = beams_deg[i] * kPi / 180.0;
    return r;
  }
};

inline bool looks_like_init(std::string_view s) { return s.find("(init") != std::string_view::npos; }

// "<id>(init a1 ... a19)" with beam angles in degrees.
inline InitRequest parse_init(std::string_view s) {
  const auto open = s.find('(');
  if (open == std::string_view::npos) throw ParseError("init: missing '('");
  InitRequest r;
  r.client_id = std::string(s.substr(0, open));
  if (r.client_id.empty()) throw ParseError("init: missing client id");
  const auto groups = parse_groups(s.substr(open));
  if (groups.size() != 1 || groups[0].name != "init") throw ParseError("init: expected a single (init ...) group");
  if (groups[0].values.size() != kNumBeams) {
    throw ParseError("init: expected 19 beam angles, got " + std::to_string(groups[0].values.size()));
  }
  for (std::size_t i = 0; i < kNumBeams; ++i) {
    const double a = to_double(groups[0].values[i], "init");
    if (!(a >= -180.0 && a <= 180.0)) throw ParseError("init: beam angle out of [-180, 180]");
    r.beams_deg[i] = a;
  }
  return r;
}

inline std::string encode_init(const std::string& client_id, const BeamAngles& beams_deg) {
  std::string s = client_id + "(init";
  for (double a : beams_deg) s += " " + fmt(a);
  return s + ")";
}

inline BeamAngles default_beam_degrees() {
  BeamAngles a{};
  for (std::size_t i = 0; i < kNumBeams; ++i) a[i] = -90.0 + 10.0 * static_cast<double>(i);
  return a;
}

// Everything the server sends per step besides the frame itself.
struct StepTail {
  double reward = 0.0;
  bool done = false;
  std::string done_reason = "none";
  std::vector<double> comms;

  bool operator==(const StepTail&) const = default;
};

inline std::string encode_sensor(const SensorFrame& f, const StepTail& t) {
  std::string s;
  s.reserve(1024);
  auto one = [&](const char* name, const std::string& v) { s += "("; s += name; s += " "; s += v; s += ")"; };
  auto many = [&](const char* name, std::span<const double> vs) {
    s += "(";
    s += name;
    for (double v : vs) {
      s += " ";
      s += fmt(v);
    }
    s += ")";
  };
  one("angle", fmt(f.angle));
  one("curLapTime", fmt(f.cur_lap_time));
  one("damage", fmt(f.damage));
  one("distFromStart", fmt(f.dist_from_start));
  one("distRaced", fmt(f.dist_raced));
  one("gear", fmt(f.gear));
  one("racePos", fmt(f.race_pos));
  one("rpm", fmt(f.rpm));
  one("speedX", fmt(f.speed_x));
  one("speedY", fmt(f.speed_y));
  one("speedZ", fmt(f.speed_z));
  many("track", f.track);
  one("trackPos", fmt(f.track_pos));
  many("opponents", f.opponents);
  one("reward", fmt(t.reward));
  one("done", t.done ? "1" : "0");
  one("doneReason", t.done_reason);
  if (!t.comms.empty()) many("comms", t.comms);
  return s;
}

struct DecodedSensor {
  SensorFrame frame;
  StepTail tail;
};

inline DecodedSensor decode_sensor(std::string_view s) {
  static const char* kOrder[] = {"angle",  "curLapTime", "damage",   "distFromStart", "distRaced", "gear",
                                 "racePos", "rpm",       "speedX",   "speedY",        "speedZ",    "track",
                                 "trackPos", "opponents", "reward",  "done",          "doneReason"};
  const auto groups = parse_groups(s);
  const std::size_t n_fixed = std::size(kOrder);
  if (groups.size() != n_fixed && groups.size() != n_fixed + 1) {
    throw ParseError("sensor: expected 17 or 18 groups, got " + std::to_string(groups.size()));
  }
  for (std::size_t i = 0; i < n_fixed; ++i) {
    if (groups[i].name != kOrder[i]) {
      throw ParseError("sensor: group " + std::to_string(i) + " is '" + groups[i].name + "', expected '" + kOrder[i] + "'");
    }
  }
  if (groups.size() == n_fixed + 1 && groups.back().name != "comms") throw ParseError("sensor: trailing group must be comms");
  auto scalar = [&](std::size_t i) -> const std::string& {
    if (groups[i].values.size() != 1) throw ParseError("sensor: '" + groups[i].name + "' expects one value");
    return groups[i].values[0];
  };
  DecodedSensor d;
  auto& f = d.frame;
  f.angle = to_double(scalar(0), "angle");
  f.cur_lap_time = to_double(scalar(1), "curLapTime");
  f.damage = to_double(scalar(2), "damage");
  f.dist_from_start = to_double(scalar(3), "distFromStart");
  f.dist_raced = to_double(scalar(4), "distRaced");
  f.gear = to_int(scalar(5), "gear");
  f.race_pos = to_int(scalar(6), "racePos");
  f.rpm = to_double(scalar(7), "rpm");
  f.speed_x = to_double(scalar(8), "speedX");
  f.speed_y = to_double(scalar(9), "speedY");
  f.speed_z = to_double(scalar(10), "speedZ");
  if (groups[11].values.size() != kNumBeams) throw ParseError("sensor: 'track' expects 19 values");
  for (std::size_t i = 0; i < kNumBeams; ++i) f.track[i] = to_double(groups[11].values[i], "track");
  f.track_pos = to_double(scalar(12), "trackPos");
  if (groups[13].values.size() != kNumSectors) throw ParseError("sensor: 'opponents' expects 36 values");
  for (std::size_t i = 0; i < kNumSectors; ++i) f.opponents[i] = to_double(groups[13].values[i], "opponents");
  d.tail.reward = to_double(scalar(14), "reward");
  const int done = to_int(scalar(15), "done");
  if (done != 0 && done != 1) throw ParseError("sensor: 'done' must be 0 or 1");
  d.tail.done = done == 1;
  d.tail.done_reason = scalar(16);
  if (groups.size() == n_fixed + 1) {
    for (const auto& v : groups.back().values) d.tail.comms.push_back(to_double(v, "comms"));
  }
  return d;
}

enum class ActionKind { primitive, desire, meta };

struct ActionMessage {
  ActionKind kind = ActionKind::primitive;
  PrimitiveAction primitive;
  DesireAction desire;  // speed field is raw: normalized or km/h per agent config

  bool operator==(const ActionMessage&) const = default;
};

inline std::string encode_action(const PrimitiveAction& a) {
  return "(accel " + fmt(a.accel) + ")(brake " + fmt(a.brake) + ")(steer " + fmt(a.steer) + ")(gear " + fmt(a.gear) + ")";
}

inline std::string encode_action(const DesireAction& d) {
  return "(trackpos " + fmt(d.target_track_pos) + ")(speed " + fmt(d.target_speed_norm) + ")";
}

inline std::string encode_meta() { return "(meta 1)"; }

// Missing fields of the chosen kind default to zero. A (meta 1) group wins
// over any other content.
inline ActionMessage decode_action(std::string_view s) {
  const auto groups = parse_groups(s);
  if (groups.empty()) throw ParseError("action: empty message");
  ActionMessage m;
  bool prim = false, desire = false;
  m.desire.target_speed_norm = 0.0;
  for (const auto& g : groups) {
    if (g.values.size() != 1) throw ParseError("action: '" + g.name + "' expects one value");
    const auto& v = g.values[0];
    if (g.name == "meta") {
      if (to_int(v, "meta") == 1) {
        m.kind = ActionKind::meta;
        return m;
      }
    } else if (g.name == "accel") {
      m.primitive.accel = to_double(v, g.name), prim = true;
    } else if (g.name == "brake") {
      m.primitive.brake = to_double(v, g.name), prim = true;
    } else if (g.name == "steer") {
      m.primitive.steer = to_double(v, g.name), prim = true;
    } else if (g.name == "gear") {
      m.primitive.gear = to_int(v, g.name), prim = true;
    } else if (g.name == "trackpos") {
      m.desire.target_track_pos = to_double(v, g.name), desire = true;
    } else if (g.name == "speed") {
      m.desire.target_speed_norm = to_double(v, g.name), desire = true;
    } else {
      throw ParseError("action: unknown field '" + g.name + "'");
    }
  }
  if (prim && desire) throw ParseError("action: mixes primitive and track-position/speed fields");
  if (!prim && !desire) throw ParseError("action: no action fields");
  m.kind = desire ? ActionKind::desire : ActionKind::primitive;
  return m;
}

}  // namespace trackgym::wire
