// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trackgym/harness.hpp"
#include "trackgym/scenarios.hpp"

using namespace trackgym;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path repo_path(const std::string& rel) { return fs::path(TRACKGYM_DATA_DIR).parent_path() / rel; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict tick_ratio() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = parse_config("server: {max_steps: 400}\nagents: {a: {}}\n");
  Simulation sim(cfg, 1);
  InProcessDriver drv(sim);
  drv.attach("a", std::make_unique<ScriptedClient>("a", std::make_unique<CenterFollow>()));
  drv.start();
  bool equal = true;
  bool ended = false;
  while (!ended) {
    ended = drv.step().episode_ended;
    equal = equal && sim.physics_ticks() == 10u * sim.steps_total();
  }
  const double dt = seconds_since(t0);
  return {equal && dt < 1.0, fmt("%llu ticks / %llu steps, %.3f s", (unsigned long long)sim.physics_ticks(),
                                 (unsigned long long)sim.steps_total(), dt)};
}

Verdict pid() {
  const double u = pid_step({10.5, 0.05, 2.8}, {}, 0.1, 0.02).u;
  bool ok = std::abs(u - 15.0501) <= 1e-9;
  // Superposition and scaling over error sequences small enough that the
  // integral clamp never engages.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> e(-1.0, 1.0), k(-3.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double c = k(rng);
    PIDState sa, sb, sab, sc;
    for (int i = 0; i < 40; ++i) {
      const double ea = e(rng), eb = e(rng);
      const auto oa = pid_step(kDefaultAccelGains, sa, ea, 0.02);
      const auto ob = pid_step(kDefaultAccelGains, sb, eb, 0.02);
      const auto oab = pid_step(kDefaultAccelGains, sab, ea + eb, 0.02);
      const auto oc = pid_step(kDefaultAccelGains, sc, c * ea, 0.02);
      sa = oa.state, sb = ob.state, sab = oab.state, sc = oc.state;
      worst = std::max(worst, std::abs(oab.u - (oa.u + ob.u)) / (1.0 + std::abs(oab.u)));
      worst = std::max(worst, std::abs(oc.u - c * oa.u) / (1.0 + std::abs(oc.u)));
    }
  }
  ok = ok && worst < 1e-9;
  return {ok, fmt("first call %.10f, worst relative linearity residual %.2e", u, worst)};
}

Verdict progress_cap() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(1e-3, 5.0), f(0.0, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double st = s(rng), d = f(rng) * st * 0.5;
    const double want = d >= st ? 1.0 : d / st;
    worst = std::max(worst, std::abs(progress_reward(d, st) - want));
  }
  for (double st : {0.1, 0.5556, 2.0}) worst = std::max(worst, std::abs(progress_reward(st, st) - 1.0));
  return {worst <= 1e-12, fmt("worst |r - min(1, d/s)| = %.2e over 1e5 draws", worst)};
}

Verdict angular_penalty() {
  const double p = angular_acceleration_penalty(2.0, 0.5, 0.0, 2.0);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), m = u(rng) * 0.1;
    worst = std::max(worst, std::abs(angular_acceleration_penalty(a, a, a, 2.0)));
    worst = std::max(worst, std::abs(angular_acceleration_penalty(a + 2 * m, a + m, a, 2.0)));
  }
  return {std::abs(p - 0.5) <= 1e-12 && worst <= 1e-12, fmt("(0, 0.5, 2.0) -> %.12f, worst ramp %.2e", p, worst)};
}

RewardSpec table_weights() {
  return {{{"progress", 1.0, {}},
           {"average_speed", 1.0, {}},
           {"collision_penalty", 10.0, {}},
           {"turn_backward_penalty", 10.0, {}},
           {"angular_acceleration_penalty", 5.0, {}}}};
}

Verdict composition() {
  RewardContext ctx;
  ctx.s_target = 1.0;
  ctx.d = 0.6;
  ctx.damage_delta = 1.0;
  ctx.s_avg_target = 10.0;
  const double total = compose_reward(table_weights(), ctx);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1), w(0.1, 10);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto spec = table_weights();
    RewardContext c;
    c.s_target = 0.5;
    c.d = u(rng);
    c.damage_delta = u(rng) < 0.5 ? 1.0 : 0.0;
    c.turned_backward = u(rng) < 0.5;
    c.angles = {u(rng), u(rng), u(rng)};
    c.lap_completed = u(rng) < 0.3;
    c.s_avg = 10 * u(rng);
    c.s_avg_target = 8.0;
    const auto base = compose_reward_terms(spec, c);
    const std::size_t k = static_cast<std::size_t>(i) % spec.components.size();
    const double factor = w(rng);
    spec.components[k].weight *= factor;
    const auto scaled = compose_reward_terms(spec, c);
    const auto& name = spec.components[k].name;
    worst = std::max(worst, std::abs(scaled.terms.at(name) - factor * base.terms.at(name)));
    worst = std::max(worst, std::abs((scaled.total - scaled.terms.at(name)) - (base.total - base.terms.at(name))));
  }
  return {std::abs(total + 9.4) <= 1e-12 && worst <= 1e-9, fmt("total %.12f, worst scaling residual %.2e", total, worst)};
}

Verdict closed_loop() {
  const auto cfg = load_config_file(repo_path("configs/oval_center_follow.yml").string());
  BatchOptions opt;
  opt.episodes = 20;
  opt.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = run_batch(cfg, opt);
  const double dt = seconds_since(t0);
  int bad = 0;
  for (const auto& r : s.results)
    for (const auto& a : r.agents)
      if (a.done_reason == "out_of_track" || a.done_reason == "collision") ++bad;
  const double rate = s.metrics ? s.metrics->completion_rate : 0.0;
  return {rate == 1.0 && bad == 0 && dt < 30.0,
          fmt("completion %.3f, out-of-track/collision dones %d, %.2f s", rate, bad, dt)};
}

Verdict lifecycle() {
  const auto cfg = load_config_file(repo_path("configs/lifecycle.yml").string());
  Simulation sim(cfg, 5);
  InProcessDriver drv(sim);
  std::vector<int> a_frames;  // step index of frames A's policy acted on
  struct Spy : Policy {
    std::unique_ptr<Policy> inner;
    std::vector<int>* log;
    std::optional<std::string> act(const wire::DecodedSensor& o) override {
      log->push_back(static_cast<int>(std::lround(o.frame.cur_lap_time / kControlDt)));
      return inner->act(o);
    }
  };
  auto spy = std::make_unique<Spy>();
  spy->inner = std::make_unique<Veer>(20, 1.0);
  spy->log = &a_frames;
  drv.attach("A", std::make_unique<ScriptedClient>("A", std::move(spy)));
  drv.attach("B", std::make_unique<ScriptedClient>("B", std::make_unique<CenterFollow>()));
  drv.start();
  int done_a = -1, reset_at = -1;
  long a_client_frames_at_done = -1;
  for (int i = 0; i < 1000 && reset_at < 0; ++i) {
    const auto rep = drv.step();
    for (const auto& c : rep.cars)
      if (c.agent == "A" && c.done && done_a < 0) {
        done_a = rep.step;
        a_client_frames_at_done = drv.client("A").frames();
      }
    if (rep.episode_ended) reset_at = rep.step;
  }
  // Frames A got between its done step and the reset, excluding the
  // restart frame of the next episode.
  const long between = drv.client("A").frames() - a_client_frames_at_done - 1;
  const bool ok = sim.resets() == 1 && reset_at == 300 && done_a > 0 && done_a < 300 && between == 0;
  return {ok, fmt("A done at step %d, B done/reset at step %d, resets %d, frames to A in between %ld", done_a, reset_at,
                  sim.resets(), between)};
}

Verdict port_order() {
  int checked = 0, bad = 0;
  for (int t = 0; t <= 8; ++t) {
    for (int l = 0; l <= 4; ++l) {
      const auto p = assign_ports(t, l, 3001);
      std::vector<int> all = p.traffic;
      all.insert(all.end(), p.learning.begin(), p.learning.end());
      for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i] != 3001 + static_cast<int>(i)) ++bad;
      if (!p.traffic.empty() && !p.learning.empty() && !(p.traffic.back() < p.learning.front())) ++bad;
      ++checked;
    }
  }
  return {bad == 0, fmt("%d (n_traffic, n_learning) pairs, %d violations", checked, bad)};
}

Verdict distributions() {
  std::string yaml = "server: {max_cars: 6, min_traffic_cars: 4, randomize_env: true}\nagents: {a: {}}\ntraffic:\n";
  for (int i = 0; i < 5; ++i) yaml += "  - {name: ConstVelTrafficAgent, initial_distance: [20, 60], initial_trackpos: [-0.5, 0.5]}\n";
  const auto cfg = parse_config(yaml);
  Rng rng(2024);
  const int n = 10000;
  std::map<int, int> counts;
  double dlo = 1e9, dhi = -1e9, dsum = 0, tlo = 1e9, thi = -1e9, tsum = 0;
  long m = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) {
    const auto e = sample_episode_setup(cfg, rng);
    ++counts[e.n_traffic];
    for (const auto& s : e.traffic_spawns) {
      dlo = std::min(dlo, s.distance), dhi = std::max(dhi, s.distance), dsum += s.distance;
      tlo = std::min(tlo, s.track_pos), thi = std::max(thi, s.track_pos), tsum += s.track_pos;
      ++m;
    }
  }
  const double dt = seconds_since(t0);
  const double f4 = counts[4] / double(n), f5 = counts[5] / double(n);
  const double dmean = dsum / m, tmean = tsum / m;
  // Means are held to 2% of the range width; a relative bound is
  // meaningless for the [-0.5, 0.5] range whose midpoint is 0.
  const bool ok = counts.size() == 2 && f4 >= 0.48 && f4 <= 0.52 && f5 >= 0.48 && f5 <= 0.52 && dlo >= 20 && dhi <= 60 &&
                  tlo >= -0.5 && thi <= 0.5 && std::abs(dmean - 40.0) <= 0.02 * 40.0 &&
                  std::abs(tmean) <= 0.02 * 1.0 && dt < 5.0;
  return {ok, fmt("freq(4)=%.4f freq(5)=%.4f, dist [%.3f, %.3f] mean %.3f, tp [%.3f, %.3f] mean %.4f, %.2f s", f4, f5,
                  dlo, dhi, dmean, tlo, thi, tmean, dt)};
}

Verdict action_noise() {
  Rng rng(4);
  const int n = 10000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = perturb_action(PrimitiveAction{}, 0.5, rng).steer;
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sq - n * mean * mean) / (n - 1));
  return {sd >= 0.475 && sd <= 0.525 && mean >= -0.02 && mean <= 0.02, fmt("std %.4f, mean %.4f", sd, mean)};
}

Verdict overtaking() {
  const auto cfg = narrow_overtaking_config();
  int good = 0;
  std::string counts;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    BatchOptions opt;
    opt.seed = seed;
    opt.agent = "weave";
    const auto s = run_batch(cfg, opt);
    const auto& o = s.results.at(0).agents.at(0);
    if (o.overtakes == 4 && o.rank1_events == 1) ++good;
    counts += fmt("%s%d/%d", counts.empty() ? "" : " ", o.overtakes, o.rank1_events);
  }
  return {good == 10, fmt("%d/10 seeds with 4 overtakes and one rank_1; per seed %s", good, counts.c_str())};
}

Verdict determinism() {
  const auto cfg = parse_config(R"(
server: {max_cars: 4, min_traffic_cars: 1, randomize_env: true, track_names: [oval, serpent, hairpin],
         add_noise_to_actions: true, action_noise_std: 0.2, noisy_observations: true, max_steps: 400}
agents: {a: {}, b: {pid_assist: false}}
traffic:
  - {name: RandomLaneSwitchAgent, initial_distance: [40, 80]}
  - {name: RandomStoppingAgent, initial_distance: [90, 120]}
)");
  std::vector<fs::path> dirs;
  for (int run = 0; run < 2; ++run) {
    dirs.push_back(fs::temp_directory_path() / ("trackgym_accept_det" + std::to_string(run)));
    fs::remove_all(dirs.back());
    BatchOptions opt;
    opt.episodes = 3;
    opt.seed = 77;
    opt.agent = "a=weave,b=full_throttle";
    opt.out_dir = dirs.back().string();
    run_batch(cfg, opt);
  }
  const auto files = trace_files(dirs[0].string());
  int same = 0;
  for (const auto& f : files)
    if (slurp(f) == slurp(dirs[1] / fs::path(f).filename())) ++same;
  const bool ok = files.size() == 3 && same == 3 && trace_files(dirs[1].string()).size() == 3;
  return {ok, fmt("%d/%zu trace files byte-identical", same, files.size())};
}

// Independent polygon oracle: vertex containment or edge crossing.
bool polygons_intersect(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  auto inside = [](Vec2 p, const std::array<Vec2, 4>& poly) {
    bool pos = false, neg = false;
    for (int i = 0; i < 4; ++i) {
      const double c = cross(poly[(i + 1) % 4] - poly[i], p - poly[i]);
      pos |= c > 0;
      neg |= c < 0;
    }
    return !(pos && neg);
  };
  auto crosses = [](Vec2 p, Vec2 q, Vec2 r, Vec2 s) {
    const double d1 = cross(q - p, r - p), d2 = cross(q - p, s - p);
    const double d3 = cross(s - r, p - r), d4 = cross(s - r, q - r);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  };
  for (const auto& p : a)
    if (inside(p, b)) return true;
  for (const auto& p : b)
    if (inside(p, a)) return true;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (crosses(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
  return false;
}

Verdict geometry() {
  double worst = 0.0;
  for (const char* name : {"oval", "serpent", "hairpin", "narrow"}) {
    const Track t = load_track_file(std::string(TRACKGYM_DATA_DIR) + "/tracks/" + name + ".yml");
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> us(0.0, t.total_length()), ul(-0.95, 0.95);
    for (int i = 0; i < 1000; ++i) {
      const double s = us(rng);
      const double lat = ul(rng) * 0.5 * t.width_at(s);
      const auto [p, h] = t.frenet_to_world(s, lat);
      const auto fp = t.project(p, h);
      const auto [q, hq] = t.frenet_to_world(fp.s, fp.lateral);
      (void)hq;
      worst = std::max(worst, std::hypot(q.x - p.x, q.y - p.y));
    }
  }
  const CarModel a = load_car_model_file(std::string(TRACKGYM_DATA_DIR) + "/cars/touring.yml");
  const CarModel b = load_car_model_file(std::string(TRACKGYM_DATA_DIR) + "/cars/buggy_light.yml");
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-6.0, 6.0), ang(-kPi, kPi);
  int disagree = 0, hits = 0;
  for (int i = 0; i < 1000; ++i) {
    VehicleState s1, s2;
    s1.position = {pos(rng), pos(rng)};
    s2.position = {pos(rng), pos(rng)};
    s1.heading = ang(rng);
    s2.heading = ang(rng);
    const std::vector<VehicleState> st{s1, s2};
    const std::vector<const CarModel*> md{&a, &b};
    const bool oracle = polygons_intersect(footprint(s1, a), footprint(s2, b));
    if (detect_collisions(st, md).empty() == oracle) ++disagree;
    hits += oracle;
  }
  return {worst < 1e-9 && disagree == 0,
          fmt("round trip worst %.2e m on 4x1000 points; collision disagreements %d/1000 (%d overlapping)", worst,
              disagree, hits)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> checks{
      {"tick-ratio", tick_ratio},
      {"pid-eq1", pid},
      {"progress-cap", progress_cap},
      {"angular-acceleration-penalty", angular_penalty},
      {"reward-composition", composition},
      {"closed-loop-oval", closed_loop},
      {"episode-lifecycle", lifecycle},
      {"port-order", port_order},
      {"domain-randomization", distributions},
      {"action-noise", action_noise},
      {"narrow-road-overtaking", overtaking},
      {"determinism", determinism},
      {"geometry-oracle", geometry},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    failed += !v.pass;
  }
  return failed;
}
