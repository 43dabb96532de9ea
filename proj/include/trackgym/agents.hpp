#pragma once

// Scripted driver policies and a wire-level client wrapper. Policies only
// see decoded sensor strings, the same view an external client has.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trackgym/control.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/protocol.hpp"

namespace trackgym {

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  // Wire action for this frame, or nullopt to stay silent this step.
  virtual std::optional<std::string> act(const wire::DecodedSensor& obs) = 0;
};

// T-S desire: hold the centerline at a fixed speed.
class CenterFollow : public Policy {
 public:
  explicit CenterFollow(double target_kmh = 50.0, bool normalized = true) : kmh_(target_kmh), normalized_(normalized) {}

  std::optional<std::string> act(const wire::DecodedSensor&) override {
    return wire::encode_action(DesireAction{0.0, normalized_ ? norm_from_kmh(kmh_) : kmh_});
  }

 private:
  double kmh_;
  bool normalized_;
};

// T-S desire that alternates sides: starts in first_side * lane and
// switches after each car it passes (race position drops), once it is
// clearance meters beyond the passing point.
class Weave : public Policy {
 public:
  explicit Weave(double target_kmh = 36.0, double lane = 0.55, double first_side = -1.0, double clearance = 10.0)
      : kmh_(target_kmh), lane_(lane), first_side_(first_side), clearance_(clearance) {
    reset();
  }

  void reset() override {
    side_ = first_side_;
    last_pos_.reset();
    switch_at_.reset();
  }

  std::optional<std::string> act(const wire::DecodedSensor& obs) override {
    const auto& f = obs.frame;
    if (last_pos_ && f.race_pos < *last_pos_) switch_at_ = f.dist_raced + clearance_;
    last_pos_ = f.race_pos;
    if (switch_at_ && f.dist_raced >= *switch_at_) {
      side_ = -side_;
      switch_at_.reset();
    }
    return wire::encode_action(DesireAction{side_ * lane_, norm_from_kmh(kmh_)});
  }

 private:
  double kmh_, lane_, first_side_, clearance_;
  double side_ = -1.0;
  std::optional<int> last_pos_;
  std::optional<double> switch_at_;
};

// S-A-B stressor: full throttle with a proportional lane keeper.
class FullThrottle : public Policy {
 public:
  std::optional<std::string> act(const wire::DecodedSensor& obs) override {
    const double steer = clamp(obs.frame.angle - 0.5 * obs.frame.track_pos, -1.0, 1.0);
    return wire::encode_action(PrimitiveAction{steer, 1.0, 0.0, 0});
  }
};

// S-A-B driver that keeps the lane for `straight_steps` frames and then
// steers hard left until it leaves the track.
class Veer : public Policy {
 public:
  explicit Veer(int straight_steps, double accel = 0.5) : straight_steps_(straight_steps), accel_(accel) {}

  void reset() override { frames_ = 0; }

  std::optional<std::string> act(const wire::DecodedSensor& obs) override {
    const bool veer = frames_++ >= straight_steps_;
    const double steer = veer ? 1.0 : clamp(obs.frame.angle - 0.5 * obs.frame.track_pos, -1.0, 1.0);
    return wire::encode_action(PrimitiveAction{steer, accel_, 0.0, 0});
  }

 private:
  int straight_steps_;
  double accel_;
  int frames_ = 0;
};

inline const std::vector<std::string>& scripted_agent_names() {
  static const std::vector<std::string> names{"center_follow", "weave", "full_throttle"};
  return names;
}

// kmh is the agent's configured target speed; normalized mirrors the
// agent's normalize_actions setting.
inline std::unique_ptr<Policy> make_policy(const std::string& name, double kmh, bool normalized) {
  if (name == "center_follow") return std::make_unique<CenterFollow>(kmh, normalized);
  if (name == "weave") return std::make_unique<Weave>(kmh);
  if (name == "full_throttle") return std::make_unique<FullThrottle>();
  throw ValidationError("unknown scripted agent '" + name + "' (known: center_follow, weave, full_throttle)");
}

// Client side of one session: handshake, frames in, actions out.
class ScriptedClient {
 public:
  ScriptedClient(std::string id, std::unique_ptr<Policy> policy) : id_(std::move(id)), policy_(std::move(policy)) {}

  std::string hello() const { return wire::encode_init(id_, wire::default_beam_degrees()); }

  // Reply to a server message, if any.
  std::optional<std::string> on_message(const std::string& msg) {
    if (msg == wire::kIdentified) {
      identified_ = true;
      return std::nullopt;
    }
    if (msg == wire::kRestart) {
      policy_->reset();
      done_ = false;
      ++restarts_;
      return std::nullopt;
    }
    if (msg == wire::kShutdown) {
      shutdown_ = true;
      return std::nullopt;
    }
    if (msg.rfind("***done***", 0) == 0) {
      done_ = true;
      return std::nullopt;
    }
    if (msg.rfind("***error***", 0) == 0) {
      last_error_ = msg;
      return std::nullopt;
    }
    const auto obs = wire::decode_sensor(msg);
    ++frames_;
    // A terminal frame takes no action; the next one belongs to a new episode.
    if (obs.tail.done) return std::nullopt;
    return policy_->act(obs);
  }

  bool identified() const { return identified_; }
  bool done() const { return done_; }
  bool shut_down() const { return shutdown_; }
  long frames() const { return frames_; }
  int restarts() const { return restarts_; }
  const std::string& last_error() const { return last_error_; }

 private:
  std::string id_;
  std::unique_ptr<Policy> policy_;
  bool identified_ = false;
  bool done_ = false;
  bool shutdown_ = false;
  long frames_ = 0;
  int restarts_ = 0;
  std::string last_error_;
};

}  // namespace trackgym
