#pragma once

// Action spaces and the PID stack that turns track-position/speed desires
// into steer/accel/brake commands.

#include <cmath>
#include <random>

#include "trackgym/geometry.hpp"
#include "trackgym/sensing.hpp"
#include "trackgym/vehicle.hpp"

namespace trackgym {

inline constexpr double kSpeedCapKmh = 300.0;
inline constexpr double kSpeedCapMps = kSpeedCapKmh / 3.6;
inline constexpr double kIntegralCap = 10.0;

struct PrimitiveAction {
  double steer = 0.0;
  double accel = 0.0;
  double brake = 0.0;
  int gear = 0;  // <= 0: automatic

  bool operator==(const PrimitiveAction&) const = default;
};

struct DesireAction {
  double target_track_pos = 0.0;
  double target_speed_norm = -1.0;

  bool operator==(const DesireAction&) const = default;
};

inline PrimitiveAction clip(PrimitiveAction a) {
  a.steer = clamp(a.steer, -1.0, 1.0);
  a.accel = clamp(a.accel, 0.0, 1.0);
  a.brake = clamp(a.brake, 0.0, 1.0);
  return a;
}

inline DesireAction clip(DesireAction d) {
  d.target_track_pos = clamp(d.target_track_pos, -1.0, 1.0);
  d.target_speed_norm = clamp(d.target_speed_norm, -1.0, 1.0);
  return d;
}

inline Controls to_controls(const PrimitiveAction& a) { return {a.steer, a.accel, a.brake, a.gear}; }

// [-1, 1] <-> [0, speed cap] m/s.
inline double speed_from_norm(double n) { return 0.5 * (clamp(n, -1.0, 1.0) + 1.0) * kSpeedCapMps; }
inline double norm_from_speed(double mps) { return clamp(2.0 * mps / kSpeedCapMps - 1.0, -1.0, 1.0); }
inline double norm_from_kmh(double kmh) { return norm_from_speed(kmh / 3.6); }

struct PIDGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;

  bool operator==(const PIDGains&) const = default;
};

inline constexpr PIDGains kDefaultAccelGains{10.5, 0.05, 2.8};
inline constexpr PIDGains kDefaultSteerGains{5.1, 0.001, 0.000001};

struct PIDState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool initialized = false;

  bool operator==(const PIDState&) const = default;
};

struct PIDOutput {
  double u = 0.0;
  PIDState state;
};

inline PIDOutput pid_step(const PIDGains& g, const PIDState& s, double error, double dt,
                          double integral_cap = kIntegralCap) {
  PIDState n = s;
  n.integral = clamp(s.integral + error * dt, -integral_cap, integral_cap);
  const double prev = s.initialized ? s.prev_error : 0.0;
  const double derivative = (error - prev) / dt;
  n.prev_error = error;
  n.initialized = true;
  return {g.kp * error + g.ki * n.integral + g.kd * derivative, n};
}

// Track-position error: theta - (TP - TP_target) * scale, with theta the
// frame angle (tangent minus heading).
inline double ts_error_track_pos(double angle_prev, double track_pos_prev, double target, double scale) {
  return angle_prev - (track_pos_prev - target) * scale;
}

// Speed error: (V - V_target) * scale. Positive means over speed.
inline double ts_error_speed(double v_prev, double v_target, double scale) { return (v_prev - v_target) * scale; }

struct TSControllerState {
  PIDState steer_pid;
  PIDState accel_pid;
  DesireAction held_desire;
  int hold_countdown = 0;
  int pid_latency = 5;
  double accel_scale = 0.04;
  double steer_scale = 0.5;
  PIDGains accel_gains = kDefaultAccelGains;
  PIDGains steer_gains = kDefaultSteerGains;

  // Clears controller memory for a new episode, keeping the settings.
  void reset() {
    steer_pid = {};
    accel_pid = {};
    held_desire = {};
    hold_countdown = 0;
  }
};

struct TSOutput {
  PrimitiveAction action;
  TSControllerState state;
};

inline TSOutput ts_to_primitive(const DesireAction& desire, const SensorFrame& frame, const TSControllerState& ctrl,
                                double dt = kControlDt) {
  TSControllerState n = ctrl;
  if (n.hold_countdown > 0) {
    --n.hold_countdown;
  } else {
    n.held_desire = clip(desire);
    n.hold_countdown = n.pid_latency - 1;
  }
  const DesireAction& d = n.held_desire;

  const double e_steer = ts_error_track_pos(frame.angle, frame.track_pos, d.target_track_pos, n.steer_scale);
  const auto steer = pid_step(n.steer_gains, n.steer_pid, e_steer, dt);
  n.steer_pid = steer.state;

  const double v = frame.speed_x / kMpsToKmh;
  const double e_speed = ts_error_speed(v, speed_from_norm(d.target_speed_norm), n.accel_scale);
  const auto speed = pid_step(n.accel_gains, n.accel_pid, e_speed, dt);
  n.accel_pid = speed.state;

  PrimitiveAction a;
  a.steer = clamp(steer.u, -1.0, 1.0);
  a.accel = clamp(-speed.u, 0.0, 1.0);
  a.brake = clamp(speed.u, 0.0, 1.0);
  return {a, n};
}

// Unclipped perturbation of each channel; add_action_noise clips it.
inline PrimitiveAction perturb_action(PrimitiveAction a, double std, Rng& rng) {
  if (std <= 0.0) return a;
  std::normal_distribution<double> n(0.0, std);
  a.steer += n(rng);
  a.accel += n(rng);
  a.brake += n(rng);
  return a;
}

inline DesireAction perturb_action(DesireAction d, double std, Rng& rng) {
  if (std <= 0.0) return d;
  std::normal_distribution<double> n(0.0, std);
  d.target_track_pos += n(rng);
  d.target_speed_norm += n(rng);
  return d;
}

inline PrimitiveAction add_action_noise(const PrimitiveAction& a, double std, Rng& rng) {
  return clip(perturb_action(a, std, rng));
}

inline DesireAction add_action_noise(const DesireAction& d, double std, Rng& rng) {
  return clip(perturb_action(d, std, rng));
}

}  // namespace trackgym
