#pragma once

// Egocentric sensor frames: rangefinders against the track edges, 36
// opponent sectors, unit conversion, optional noise and normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trackgym/errors.hpp"
#include "trackgym/geometry.hpp"
#include "trackgym/track.hpp"
#include "trackgym/vehicle.hpp"

namespace trackgym {

inline constexpr std::size_t kNumBeams = 19;
inline constexpr std::size_t kNumSectors = 36;
inline constexpr double kSensorRange = 200.0;
inline constexpr double kOffTrackSentinel = -1.0;
inline constexpr double kMpsToKmh = 3.6;
inline constexpr double kObservationNoiseStd = 0.1;

using Rng = std::mt19937_64;
using BeamAngles = std::array<double, kNumBeams>;

// Default beam layout: -90..+90 degrees in 10 degree steps (positive = left).
inline BeamAngles default_beam_angles() {
  BeamAngles a{};
  for (std::size_t i = 0; i < kNumBeams; ++i) a[i] = (-90.0 + 10.0 * static_cast<double>(i)) * kPi / 180.0;
  return a;
}

struct SensorFrame {
  double angle = 0.0;  // track tangent minus car heading
  std::array<double, kNumBeams> track{};
  double track_pos = 0.0;
  double speed_x = 0.0;  // km/h
  double speed_y = 0.0;  // km/h
  double speed_z = 0.0;  // km/h, flat world
  std::array<double, kNumSectors> opponents{};
  double rpm = 0.0;
  int gear = 1;
  double damage = 0.0;
  double dist_from_start = 0.0;
  double dist_raced = 0.0;
  double cur_lap_time = 0.0;
  int race_pos = 1;

  bool operator==(const SensorFrame&) const = default;
};

// Distances from the car to the track edge along each beam, clipped at the
// sensor range. Off track (|track_pos| > 1) every beam reads the sentinel -1.
inline std::array<double, kNumBeams> rangefinder_scan(const Track& track, const FrenetPose& fp,
                                                      const Pose2& world, const BeamAngles& beams) {
  std::array<double, kNumBeams> out{};
  if (std::abs(fp.track_pos) > 1.0) {
    out.fill(kOffTrackSentinel);
    return out;
  }
  for (std::size_t i = 0; i < kNumBeams; ++i) {
    out[i] = std::min(kSensorRange, track.cast_ray(world.position, world.heading + beams[i], kSensorRange));
  }
  return out;
}

// Sector index of a bearing relative to the car axis (positive = left).
// Sector 0 starts directly behind the car; indices grow counterclockwise.
inline std::size_t sector_of(double bearing) {
  const double from_back = wrap_positive(bearing + kPi);
  auto idx = static_cast<std::size_t>(std::floor(from_back / (kTwoPi / kNumSectors)));
  return std::min(idx, kNumSectors - 1);
}

inline std::array<double, kNumSectors> opponents_scan(const VehicleState& ego,
                                                      std::span<const VehicleState> others) {
  std::array<double, kNumSectors> out{};
  out.fill(kSensorRange);
  for (const auto& o : others) {
    const Vec2 d = o.position - ego.position;
    const double dist = norm(d);
    if (dist >= kSensorRange) continue;
    const double bearing = wrap_angle(std::atan2(d.y, d.x) - ego.heading);
    auto& cell = out[sector_of(bearing)];
    cell = std::min(cell, dist);
  }
  return out;
}

// Everything needed to build one agent's frame from the shared world.
struct FrameContext {
  const Track* track = nullptr;
  std::span<const VehicleState> cars;
  std::size_t ego = 0;
  BeamAngles beams = default_beam_angles();
  double cur_lap_time = 0.0;
};

inline int race_position(std::span<const VehicleState> cars, std::size_t ego) {
  int ahead = 0;
  for (std::size_t i = 0; i < cars.size(); ++i) {
    if (i != ego && cars[i].distance_raced > cars[ego].distance_raced) ++ahead;
  }
  return 1 + ahead;
}

inline SensorFrame build_sensor_frame(const FrameContext& ctx) {
  const auto& me = ctx.cars[ctx.ego];
  const Track& track = *ctx.track;
  const FrenetPose fp = track.project(me.position, me.heading);
  SensorFrame f;
  f.angle = -fp.angle;
  f.track_pos = fp.track_pos;
  f.track = rangefinder_scan(track, fp, {me.position, me.heading}, ctx.beams);
  f.speed_x = me.v_long * kMpsToKmh;
  f.speed_y = me.v_lat * kMpsToKmh;
  f.speed_z = 0.0;
  std::vector<VehicleState> others;
  others.reserve(ctx.cars.size());
  for (std::size_t i = 0; i < ctx.cars.size(); ++i) {
    if (i != ctx.ego) others.push_back(ctx.cars[i]);
  }
  f.opponents = opponents_scan(me, others);
  f.rpm = me.rpm;
  f.gear = me.gear;
  f.damage = me.damage;
  f.dist_from_start = fp.s;
  f.dist_raced = me.distance_raced;
  f.cur_lap_time = ctx.cur_lap_time;
  f.race_pos = race_position(ctx.cars, ctx.ego);
  return f;
}

// Multiplicative Gaussian noise on the range sensors; sentinels are kept.
inline SensorFrame apply_observation_noise(SensorFrame frame, bool enabled, Rng& rng) {
  if (!enabled) return frame;
  std::normal_distribution<double> eps(0.0, kObservationNoiseStd);
  auto perturb = [&](double& d) {
    const double e = eps(rng);
    if (d < 0.0) return;
    d = clamp(d * (1.0 + e), 0.0, kSensorRange);
  };
  for (auto& d : frame.track) perturb(d);
  for (auto& d : frame.opponents) perturb(d);
  return frame;
}

struct Bounds {
  double min = -1.0;
  double max = 1.0;

  bool operator==(const Bounds&) const = default;
};

struct ObservationSpec {
  std::string mode = "basic";
  bool normalize = true;
  bool noisy = false;
  int buff_size = 1;
  std::map<std::string, Bounds> bounds = default_bounds();

  bool operator==(const ObservationSpec&) const = default;

  static std::map<std::string, Bounds> default_bounds() {
    return {{"angle", {-kPi, kPi}},          {"track", {0.0, kSensorRange}},
            {"trackPos", {-1.0, 1.0}},       {"speedX", {-100.0, 300.0}},
            {"speedY", {-100.0, 100.0}},     {"speedZ", {-100.0, 100.0}},
            {"opponents", {0.0, kSensorRange}}};
  }

  void validate() const {
    if (mode != "basic" && mode != "traffic" && mode != "comms") {
      throw ValidationError("unknown observation mode '" + mode + "'");
    }
    if (buff_size < 1) throw ValidationError("observation buff_size must be >= 1");
    for (const auto& [name, b] : bounds) {
      if (!(b.min < b.max)) throw ValidationError("obs_min must be < obs_max for '" + name + "'");
    }
  }
};

inline bool is_known_observation_mode(const std::string& mode) {
  return mode == "basic" || mode == "traffic" || mode == "comms";
}

// Number of frame values for a mode, excluding any comms block.
inline std::size_t observation_width(const std::string& mode) {
  if (mode == "basic") return 1 + kNumBeams + 1 + 3;
  if (mode == "traffic" || mode == "comms") return 1 + kNumBeams + 1 + 3 + kNumSectors;
  throw ValidationError("unknown observation mode '" + mode + "'");
}

// Affine map of [lo, hi] onto [-1, 1], clipped.
inline double normalize_value(double v, Bounds b) {
  return clamp(2.0 * (v - b.min) / (b.max - b.min) - 1.0, -1.0, 1.0);
}

// Flat observation vector. Order: angle, track[19], trackPos, speedX,
// speedY, speedZ, then opponents[36] for "traffic"/"comms", then the comms
// block (passed through unnormalized) for "comms".
inline std::vector<double> normalize_observation(const SensorFrame& f, const ObservationSpec& spec,
                                                 std::span<const double> comms = {}) {
  const std::size_t width = observation_width(spec.mode);
  std::vector<double> out;
  out.reserve(width + comms.size());
  auto bound = [&](const char* key) {
    auto it = spec.bounds.find(key);
    return it != spec.bounds.end() ? it->second : ObservationSpec::default_bounds().at(key);
  };
  auto push = [&](double v, const char* key) { out.push_back(spec.normalize ? normalize_value(v, bound(key)) : v); };
  push(f.angle, "angle");
  for (double d : f.track) push(d, "track");
  push(f.track_pos, "trackPos");
  push(f.speed_x, "speedX");
  push(f.speed_y, "speedY");
  push(f.speed_z, "speedZ");
  if (spec.mode == "traffic" || spec.mode == "comms") {
    for (double d : f.opponents) push(d, "opponents");
  }
  if (spec.mode == "comms") out.insert(out.end(), comms.begin(), comms.end());
  return out;
}

}  // namespace trackgym
