#pragma once

// Peer-variable exchange between learning agents. Each step the engine
// records what every agent did and saw at the previous step; listeners get
// the last buff_size records of their sources, newest first.

#include <deque>
#include <string>
#include <vector>

#include "trackgym/config.hpp"
#include "trackgym/sensing.hpp"

namespace trackgym {

struct SharedVars {
  std::vector<double> peer_actions;  // (trackpos, speed) or (accel, brake, steer)
  double angle = 0.0;
  double track_pos = 0.0;
  double speed_x = 0.0;
  double speed_y = 0.0;
  double damage = 0.0;
  double dist_raced = 0.0;
  double race_pos = 0.0;
  double rpm = 0.0;
};

inline SharedVars shared_from_frame(const SensorFrame& f, std::vector<double> actions) {
  SharedVars v;
  v.peer_actions = std::move(actions);
  v.angle = f.angle;
  v.track_pos = f.track_pos;
  v.speed_x = f.speed_x;
  v.speed_y = f.speed_y;
  v.damage = f.damage;
  v.dist_raced = f.dist_raced;
  v.race_pos = f.race_pos;
  v.rpm = f.rpm;
  return v;
}

class CommBuffer {
 public:
  CommBuffer() = default;
  explicit CommBuffer(const SimulationConfig& cfg) : cfg_(&cfg), history_(cfg.agents.size()) {
    for (const auto& [agent, link] : cfg.communications) depth_ = std::max(depth_, link.buff_size);
  }

  void clear() {
    for (auto& h : history_) h.clear();
  }

  // Record for agent i covering the step that just finished. A missing
  // record (inactive or finished agent) reads as zeros.
  void push(std::size_t agent, std::optional<SharedVars> rec) {
    auto& h = history_.at(agent);
    h.push_front(std::move(rec));
    while (static_cast<int>(h.size()) > depth_) h.pop_back();
  }

  // Layout: lag 1..buff_size, then source in listed order, then var.
  std::vector<double> block(const std::string& listener) const {
    std::vector<double> out;
    if (!cfg_) return out;
    auto it = cfg_->communications.find(listener);
    if (it == cfg_->communications.end()) return out;
    const auto& link = it->second;
    for (int lag = 1; lag <= link.buff_size; ++lag) {
      for (const auto& src : link.comms) {
        const std::size_t j = cfg_->agent_index(src);
        const auto& h = history_[j];
        const SharedVars* rec = static_cast<int>(h.size()) >= lag && h[lag - 1] ? &*h[lag - 1] : nullptr;
        for (const auto& var : link.vars) {
          const int w = comm_var_width(var, cfg_->agents[j]);
          if (!rec) {
            out.insert(out.end(), static_cast<std::size_t>(w), 0.0);
            continue;
          }
          if (var == "peerActions") {
            for (int k = 0; k < w; ++k) {
              out.push_back(k < static_cast<int>(rec->peer_actions.size()) ? rec->peer_actions[k] : 0.0);
            }
          } else {
            out.push_back(scalar(*rec, var));
          }
        }
      }
    }
    return out;
  }

 private:
  static double scalar(const SharedVars& r, const std::string& var) {
    if (var == "angle") return r.angle;
    if (var == "trackPos") return r.track_pos;
    if (var == "speedX") return r.speed_x;
    if (var == "speedY") return r.speed_y;
    if (var == "damage") return r.damage;
    if (var == "distRaced") return r.dist_raced;
    if (var == "racePos") return r.race_pos;
    if (var == "rpm") return r.rpm;
    return 0.0;
  }

  const SimulationConfig* cfg_ = nullptr;
  std::vector<std::deque<std::optional<SharedVars>>> history_;
  int depth_ = 1;
};

}  // namespace trackgym
