#pragma once

// Simplified per-car dynamics: a dynamic bicycle model with linear tires,
// friction-circle saturation and a kinematic blend at low speed, integrated
// with explicit Euler steps. Also oriented-box collision checks and damage.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "trackgym/errors.hpp"
#include "trackgym/geometry.hpp"
#include "trackgym/track.hpp"

namespace trackgym {

inline constexpr double kGravity = 9.81;
inline constexpr double kPhysicsDt = 0.002;
inline constexpr double kControlDt = 0.02;
inline constexpr int kTicksPerStep = 10;

enum class DriveType { rwd, awd };

struct TorquePoint {
  double rpm = 0.0;
  double torque = 0.0;
};

struct CarModel {
  std::string name;
  double mass = 1150.0;
  double cg_height = 0.25;
  DriveType drive_type = DriveType::rwd;
  double length = 4.5;
  double width = 1.95;
  std::vector<TorquePoint> torque_curve;
  std::vector<double> gear_ratios;
  double final_drive = 3.5;
  double wheel_radius = 0.33;
  double max_steer_lock = 0.366;
  double drag_coeff = 0.4;
  double rolling_resist = 10.0;
  double brake_force_max = 12000.0;
  double idle_rpm = 1000.0;
  double max_rpm = 8000.0;

  double wheelbase() const { return 0.58 * length; }
  double yaw_inertia() const { return mass * (length * length + width * width) / 12.0; }

  void validate() const {
    auto fail = [&](const std::string& what) {
      throw ValidationError("car '" + name + "': " + what);
    };
    if (!(mass > 0.0)) fail("mass must be > 0");
    if (!(length > 0.0 && width > 0.0)) fail("length and width must be > 0");
    if (!(cg_height >= 0.0)) fail("cg_height must be >= 0");
    if (torque_curve.empty()) fail("torque_curve must not be empty");
    for (std::size_t i = 0; i < torque_curve.size(); ++i) {
      if (torque_curve[i].torque < 0.0) fail("torque_curve point " + std::to_string(i) + " is negative");
      if (i > 0 && !(torque_curve[i].rpm > torque_curve[i - 1].rpm)) {
        fail("torque_curve rpm must be strictly increasing at point " + std::to_string(i));
      }
    }
    if (gear_ratios.empty()) fail("gear_ratios must not be empty");
    for (double g : gear_ratios) {
      if (!(g > 0.0)) fail("gear ratios must be > 0");
    }
    if (!(final_drive > 0.0 && wheel_radius > 0.0)) fail("final_drive and wheel_radius must be > 0");
    if (!(max_steer_lock > 0.0)) fail("max_steer_lock must be > 0");
    if (!(drag_coeff >= 0.0 && rolling_resist >= 0.0 && brake_force_max >= 0.0)) {
      fail("resistive coefficients must be >= 0");
    }
    if (!(idle_rpm >= 0.0 && idle_rpm < max_rpm)) fail("rpm_range must satisfy 0 <= idle < max");
  }
};

struct VehicleState {
  Vec2 position;
  double heading = 0.0;
  double v_long = 0.0;
  double v_lat = 0.0;
  double yaw_rate = 0.0;
  double rpm = 0.0;
  int gear = 1;
  double damage = 0.0;
  // Race distance from the start line, nondecreasing.
  double distance_raced = 0.0;
  // Cached centerline arc length of the last projection.
  double track_s = 0.0;
  bool alive = true;

  bool operator==(const VehicleState&) const = default;
};

// Controls as seen by the integrator: steer in [-1, 1] (positive left),
// accel/brake in [0, 1]; gear <= 0 selects the automatic transmission.
struct Controls {
  double steer = 0.0;
  double accel = 0.0;
  double brake = 0.0;
  int gear = 0;
};

inline double torque_at(const CarModel& model, double rpm) {
  const auto& c = model.torque_curve;
  if (rpm <= c.front().rpm) return c.front().torque;
  if (rpm >= c.back().rpm) return c.back().torque;
  auto hi = std::upper_bound(c.begin(), c.end(), rpm,
                             [](double r, const TorquePoint& p) { return r < p.rpm; });
  auto lo = hi - 1;
  const double f = (rpm - lo->rpm) / (hi->rpm - lo->rpm);
  return lo->torque + f * (hi->torque - lo->torque);
}

inline double wheel_rpm_to_engine(const CarModel& m, double v_long, int gear) {
  const double ratio = m.gear_ratios[static_cast<std::size_t>(gear - 1)] * m.final_drive;
  return std::abs(v_long) / m.wheel_radius * ratio * 60.0 / kTwoPi;
}

inline bool finite_state(const VehicleState& s) {
  return std::isfinite(s.position.x) && std::isfinite(s.position.y) && std::isfinite(s.heading) &&
         std::isfinite(s.v_long) && std::isfinite(s.v_lat) && std::isfinite(s.yaw_rate) &&
         std::isfinite(s.rpm) && std::isfinite(s.distance_raced);
}

namespace tuning {
inline constexpr double cornering_stiffness = 12.0;  // per axle, N/rad per N of static load
inline constexpr double off_track_grip = 0.5;
inline constexpr double load_transfer_loss = 0.25;
inline constexpr double kinematic_below = 2.0;  // m/s, pure kinematic model
inline constexpr double dynamic_above = 5.0;    // m/s, pure dynamic model
inline constexpr double upshift_fraction = 0.95;
inline constexpr double downshift_fraction = 0.40;
}  // namespace tuning

// Weight of the dynamic model in the low-speed kinematic blend.
inline double w_dyn(double v) {
  return clamp((v - tuning::kinematic_below) / (tuning::dynamic_above - tuning::kinematic_below), 0.0, 1.0);
}

// One explicit-Euler step of length dt. Throws SimulationFault if the
// result is not finite.
inline VehicleState physics_tick(const VehicleState& state, const CarModel& m, const Controls& c,
                                 const Track& track, double dt = kPhysicsDt) {
  VehicleState n = state;
  const int n_gears = static_cast<int>(m.gear_ratios.size());

  if (c.gear > 0) {
    n.gear = std::min(c.gear, n_gears);
  } else {
    const double rpm_now = wheel_rpm_to_engine(m, n.v_long, n.gear);
    if (rpm_now > tuning::upshift_fraction * m.max_rpm && n.gear < n_gears) {
      ++n.gear;
    } else if (n.gear > 1 && rpm_now < tuning::downshift_fraction * m.max_rpm) {
      const double rpm_down = wheel_rpm_to_engine(m, n.v_long, n.gear - 1);
      if (rpm_down < tuning::upshift_fraction * m.max_rpm) --n.gear;
    }
  }

  const double accel = clamp(c.accel, 0.0, 1.0);
  const double brake = clamp(c.brake, 0.0, 1.0);
  const double steer = clamp(c.steer, -1.0, 1.0);

  const double L = m.wheelbase();
  const double lf = 0.5 * L;
  const double lr = 0.5 * L;
  const double v = n.v_long;

  const FrenetPose fp = track.project(n.position, n.heading);
  const double mu = track.segments()[fp.segment].friction *
                    (std::abs(fp.track_pos) > 1.0 ? tuning::off_track_grip : 1.0);

  // Longitudinal.
  const double engine_rpm = std::max(m.idle_rpm, wheel_rpm_to_engine(m, v, n.gear));
  const double ratio = m.gear_ratios[static_cast<std::size_t>(n.gear - 1)] * m.final_drive;
  const double torque = engine_rpm > m.max_rpm ? 0.0 : torque_at(m, engine_rpm);
  double f_drive = accel * torque * ratio / m.wheel_radius;

  const double weight = m.mass * kGravity;
  const double a_lat_prev = v * n.yaw_rate;
  const double transfer = std::min(1.0, 2.0 * m.cg_height * std::abs(a_lat_prev) / (kGravity * m.width));
  const double grip = 1.0 - tuning::load_transfer_loss * transfer;
  const double fz_f = weight * lr / L;
  const double fz_r = weight * lf / L;
  const double drive_load = m.drive_type == DriveType::awd ? fz_f + fz_r : fz_r;
  f_drive = std::min(f_drive, mu * drive_load);

  const double f_resist = m.drag_coeff * v * std::abs(v) + m.rolling_resist * v;
  const double f_brake = v > 0.0 ? brake * m.brake_force_max : 0.0;
  const double f_x = f_drive - f_resist - f_brake;

  // Lateral / yaw.
  const double delta = steer * m.max_steer_lock;
  double v_lat_dyn = n.v_lat;
  double r_dyn = n.yaw_rate;
  double f_yf = 0.0;
  const double v_ref = std::max(v, tuning::kinematic_below);
  {
    const double alpha_f = delta - std::atan2(n.v_lat + lf * n.yaw_rate, v_ref);
    const double alpha_r = -std::atan2(n.v_lat - lr * n.yaw_rate, v_ref);
    const double cap_f = mu * grip * fz_f;
    const double f_x_rear = m.drive_type == DriveType::awd ? 0.5 * f_drive : f_drive;
    const double cap_r = std::sqrt(std::max(0.0, std::pow(mu * grip * fz_r, 2) - f_x_rear * f_x_rear));
    f_yf = clamp(tuning::cornering_stiffness * fz_f * alpha_f, -cap_f, cap_f);
    const double f_yr = clamp(tuning::cornering_stiffness * fz_r * alpha_r, -cap_r, cap_r);
    v_lat_dyn += dt * ((f_yf * std::cos(delta) + f_yr) / m.mass - v_ref * n.yaw_rate);
    r_dyn += dt * ((lf * f_yf * std::cos(delta) - lr * f_yr) / m.yaw_inertia());
  }

  // No reverse gear: resistive forces stop the car but never push it back.
  double v_new = v + dt * ((f_x - w_dyn(v) * f_yf * std::sin(delta)) / m.mass + w_dyn(v) * n.v_lat * n.yaw_rate);
  if (v_new < 0.0) v_new = 0.0;

  const double r_kin = v_new * std::tan(delta) / L;
  const double v_lat_kin = r_kin * lr;
  const double w = w_dyn(v);
  n.v_lat = w * v_lat_dyn + (1.0 - w) * v_lat_kin;
  n.yaw_rate = w * r_dyn + (1.0 - w) * r_kin;
  n.v_long = v_new;

  const double ch = std::cos(state.heading);
  const double sh = std::sin(state.heading);
  n.position.x += dt * (v * ch - state.v_lat * sh);
  n.position.y += dt * (v * sh + state.v_lat * ch);
  n.heading = wrap_angle(state.heading + dt * state.yaw_rate);

  n.rpm = std::min(std::max(m.idle_rpm, wheel_rpm_to_engine(m, n.v_long, n.gear)), 1.05 * m.max_rpm);

  const FrenetPose after = track.project(n.position, n.heading);
  const double ds = track.delta_s(state.track_s, after.s);
  if (ds > 0.0) n.distance_raced += ds;
  n.track_s = after.s;

  if (!finite_state(n)) {
    std::ostringstream os;
    os << "non-finite vehicle state for car '" << m.name << "' (v_long=" << n.v_long
       << ", yaw_rate=" << n.yaw_rate << ")";
    throw SimulationFault(os.str());
  }
  return n;
}

// Corners of the car's footprint rectangle.
inline std::array<Vec2, 4> footprint(const VehicleState& s, const CarModel& m) {
  const Vec2 f = unit(s.heading) * (0.5 * m.length);
  const Vec2 l = left_normal(s.heading) * (0.5 * m.width);
  return {s.position + f + l, s.position - f + l, s.position - f - l, s.position + f - l};
}

// Separating-axis test between two oriented rectangles.
inline bool boxes_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  auto separated_on = [&](Vec2 axis) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const auto& p : a) {
      const double d = dot(p, axis);
      amin = std::min(amin, d);
      amax = std::max(amax, d);
    }
    for (const auto& p : b) {
      const double d = dot(p, axis);
      bmin = std::min(bmin, d);
      bmax = std::max(bmax, d);
    }
    return amax < bmin || bmax < amin;
  };
  for (const auto* poly : {&a, &b}) {
    for (int i = 0; i < 2; ++i) {
      const Vec2 e = (*poly)[i + 1] - (*poly)[i];
      if (separated_on({-e.y, e.x})) return false;
    }
  }
  return true;
}

inline std::vector<std::pair<std::size_t, std::size_t>> detect_collisions(
    std::span<const VehicleState> states, std::span<const CarModel* const> models) {
  std::vector<std::array<Vec2, 4>> boxes;
  boxes.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) boxes.push_back(footprint(states[i], *models[i]));
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      const double reach = 0.5 * (std::hypot(models[i]->length, models[i]->width) +
                                  std::hypot(models[j]->length, models[j]->width));
      if (norm(states[i].position - states[j].position) > reach) continue;
      if (boxes_overlap(boxes[i], boxes[j])) out.emplace_back(i, j);
    }
  }
  return out;
}

inline constexpr double kDamageQuantum = 1.0;

inline VehicleState apply_damage(VehicleState state, bool collided) {
  if (collided) state.damage += kDamageQuantum;
  return state;
}

// Car model document (YAML) with the CarModel field names; torque_curve is a
// list of [rpm, torque] pairs and rpm_range is [idle_rpm, max_rpm].
inline CarModel load_car_model(std::istream& in) {
  YAML::Node doc;
  try {
    doc = YAML::Load(in);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("car document: ") + e.what());
  }
  if (!doc.IsMap()) throw ParseError("car document: expected a mapping");
  detail::reject_unknown_keys(
      doc,
      {"name", "mass", "cg_height", "drive_type", "length", "width", "torque_curve", "gear_ratios",
       "final_drive", "wheel_radius", "max_steer_lock", "drag_coeff", "rolling_resist",
       "brake_force_max", "rpm_range"},
      "car");
  CarModel m;
  auto num = [&](const char* key, double& dst, bool required) {
    if (doc[key]) {
      dst = detail::scalar_as<double>(doc[key], std::string("car.") + key);
    } else if (required) {
      throw ParseError(std::string("car: missing '") + key + "'");
    }
  };
  if (!doc["name"]) throw ParseError("car: missing 'name'");
  m.name = detail::scalar_as<std::string>(doc["name"], "car.name");
  num("mass", m.mass, true);
  num("cg_height", m.cg_height, true);
  num("length", m.length, true);
  num("width", m.width, true);
  num("final_drive", m.final_drive, false);
  num("wheel_radius", m.wheel_radius, false);
  num("max_steer_lock", m.max_steer_lock, false);
  num("drag_coeff", m.drag_coeff, false);
  num("rolling_resist", m.rolling_resist, false);
  num("brake_force_max", m.brake_force_max, false);
  if (doc["drive_type"]) {
    const auto dt = detail::scalar_as<std::string>(doc["drive_type"], "car.drive_type");
    if (dt == "RWD") {
      m.drive_type = DriveType::rwd;
    } else if (dt == "4WD") {
      m.drive_type = DriveType::awd;
    } else {
      throw ParseError("car.drive_type: expected RWD or 4WD, got '" + dt + "'");
    }
  }
  if (!doc["torque_curve"] || !doc["torque_curve"].IsSequence()) {
    throw ParseError("car.torque_curve: expected a list of [rpm, torque] pairs");
  }
  for (const auto& p : doc["torque_curve"]) {
    if (!p.IsSequence() || p.size() != 2) throw ParseError("car.torque_curve: each point is [rpm, torque]");
    m.torque_curve.push_back({detail::scalar_as<double>(p[0], "car.torque_curve"),
                              detail::scalar_as<double>(p[1], "car.torque_curve")});
  }
  if (!doc["gear_ratios"] || !doc["gear_ratios"].IsSequence()) {
    throw ParseError("car.gear_ratios: expected a list");
  }
  for (const auto& g : doc["gear_ratios"]) m.gear_ratios.push_back(detail::scalar_as<double>(g, "car.gear_ratios"));
  if (doc["rpm_range"]) {
    const auto& r = doc["rpm_range"];
    if (!r.IsSequence() || r.size() != 2) throw ParseError("car.rpm_range: expected [idle, max]");
    m.idle_rpm = detail::scalar_as<double>(r[0], "car.rpm_range");
    m.max_rpm = detail::scalar_as<double>(r[1], "car.rpm_range");
  }
  m.validate();
  return m;
}

inline CarModel load_car_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open car file '" + path + "'");
  return load_car_model(in);
}

inline CarModel load_car_model_string(const std::string& text) {
  std::istringstream in(text);
  return load_car_model(in);
}

}  // namespace trackgym
