#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trackgym/reward.hpp"

using namespace trackgym;

namespace {

RewardSpec reference_weights() {
  return {{{"progress", 1.0, {}},
           {"average_speed", 1.0, {}},
           {"collision_penalty", 10.0, {}},
           {"turn_backward_penalty", 10.0, {}},
           {"angular_acceleration_penalty", 5.0, {}}}};
}

}  // namespace

TEST(Progress, CapAndRatio) {
  EXPECT_EQ(progress_reward(0.0, 0.5), 0.0);
  EXPECT_EQ(progress_reward(0.5, 0.5), 1.0);
  EXPECT_EQ(progress_reward(1.0, 0.5), 1.0);
  EXPECT_LT(progress_reward(-0.25, 0.5), 0.0);
}

TEST(Progress, HundredKmhStepTarget) {
  const double s = step_target_from_kmh(100.0);
  EXPECT_NEAR(s, 100.0 / 3.6 * 0.02, 1e-15);
  EXPECT_NEAR(s, 0.5556, 1e-4);
  EXPECT_NEAR(progress_reward(0.2778, s), 0.5, 1e-4);
}

TEST(Progress, RandomSweep) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> st(0.01, 3.0), f(0.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double s = st(rng), d = f(rng) * s;
    if (d >= s) {
      ASSERT_EQ(progress_reward(d, s), 1.0);
    } else {
      ASSERT_NEAR(progress_reward(d, s), d / s, 1e-12);
    }
  }
}

TEST(AverageSpeed, GatedAndUncapped) {
  EXPECT_EQ(average_speed_reward(20.0, 10.0, false), 0.0);
  EXPECT_EQ(average_speed_reward(10.0, 10.0, true), 1.0);
  EXPECT_NEAR(average_speed_reward(12.0, 10.0, true), 1.2, 1e-12);
}

TEST(AngularAcceleration, Examples) {
  EXPECT_EQ(angular_acceleration_penalty(0.1, 0.1, 0.1, 2.0), 0.0);
  EXPECT_NEAR(angular_acceleration_penalty(2.0, 0.5, 0.0, 2.0), 0.5, 1e-12);
  EXPECT_NEAR(angular_acceleration_penalty(0.3, 0.2, 0.1, 2.0), 0.0, 1e-12);
}

TEST(AngularAcceleration, InvariantUnderRamp) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double a0 = u(rng), a1 = u(rng), a2 = u(rng), c = u(rng), m = u(rng);
    const double base = angular_acceleration_penalty(a2, a1, a0, 2.0);
    const double shifted = angular_acceleration_penalty(a2 + c + 2 * m, a1 + c + m, a0 + c, 2.0);
    ASSERT_NEAR(base, shifted, 1e-12);
  }
}

TEST(AngularAcceleration, NeedsThreeAngles) {
  RewardSpec spec{{{"angular_acceleration_penalty", 1.0, {}}}};
  RewardContext ctx;
  ctx.angles = {0.0, 1.0};
  EXPECT_EQ(compose_reward(spec, ctx), 0.0);
  ctx.angles = {0.0, 0.5, 2.0};
  EXPECT_NEAR(compose_reward(spec, ctx), -0.5, 1e-12);
}

TEST(Events, Flags) {
  EXPECT_EQ(fixed_event_penalties(false, 0.0).turn_backward, 0.0);
  EXPECT_EQ(fixed_event_penalties(false, 0.0).collision, 0.0);
  EXPECT_EQ(fixed_event_penalties(false, 1.0).collision, 1.0);
  EXPECT_EQ(fixed_event_penalties(true, 0.0).turn_backward, 1.0);
}

TEST(Rank, OvertakeCounts) {
  EXPECT_EQ(overtake_and_rank_rewards(3, 2, false, 5).overtake_count, 1);
  EXPECT_EQ(overtake_and_rank_rewards(5, 2, false, 5).overtake_count, 3);
  EXPECT_EQ(overtake_and_rank_rewards(2, 3, false, 5).overtake_count, 0);
  EXPECT_EQ(overtake_and_rank_rewards(2, 1, true, 5).rank1, 1.0);
  EXPECT_EQ(overtake_and_rank_rewards(3, 2, true, 5).rank1, 0.0);
  EXPECT_THROW(overtake_and_rank_rewards(6, 1, false, 5), ValidationError);
}

TEST(Rank, OvertakeSumMatchesRankTrace) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    int rank = 8, total = 0;
    const int start = rank;
    std::uniform_int_distribution<int> drop(0, 2);
    for (int step = 0; step < 30 && rank > 1; ++step) {
      const int next = std::max(1, rank - drop(rng));
      total += overtake_and_rank_rewards(rank, next, false, 8).overtake_count;
      rank = next;
    }
    ASSERT_EQ(total, start - rank);
  }
}

TEST(Compose, ProgressAndCollision) {
  RewardContext ctx;
  ctx.s_target = 1.0;
  ctx.d = 0.6;
  ctx.damage_delta = 1.0;
  ctx.s_avg_target = 10.0;
  EXPECT_NEAR(compose_reward(reference_weights(), ctx), -9.4, 1e-12);
}

TEST(Compose, EmptySpec) { EXPECT_EQ(compose_reward(RewardSpec{}, RewardContext{}), 0.0); }

TEST(Compose, ReferenceWeightsValidate) { EXPECT_NO_THROW(reference_weights().validate()); }

TEST(Compose, RejectsUnknownAndDuplicate) {
  EXPECT_THROW((RewardSpec{{{"speed_bonus", 1.0, {}}}}.validate()), ValidationError);
  EXPECT_THROW((RewardSpec{{{"progress", 1.0, {}}, {"progress", 2.0, {}}}}.validate()), ValidationError);
}

TEST(Compose, WeightScalingLinearity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1), w(0.1, 10);
  for (int i = 0; i < 1000; ++i) {
    RewardSpec spec = reference_weights();
    for (auto& c : spec.components) c.weight = w(rng);
    RewardContext ctx;
    ctx.s_target = 0.5;
    ctx.d = u(rng);
    ctx.damage_delta = u(rng) < 0.5 ? 1.0 : 0.0;
    ctx.turned_backward = u(rng) < 0.5;
    ctx.angles = {u(rng), u(rng), u(rng)};
    ctx.lap_completed = u(rng) < 0.3;
    ctx.s_avg = 10 * u(rng);
    ctx.s_avg_target = 8.0;
    const auto base = compose_reward_terms(spec, ctx);
    const std::size_t k = i % spec.components.size();
    const double c = w(rng);
    RewardSpec scaled = spec;
    scaled.components[k].weight *= c;
    const auto sc = compose_reward_terms(scaled, ctx);
    const auto& name = spec.components[k].name;
    ASSERT_NEAR(sc.terms.at(name), c * base.terms.at(name), 1e-12);
    ASSERT_NEAR(sc.total - sc.terms.at(name), base.total - base.terms.at(name), 1e-9);
  }
}

TEST(Done, TimeoutAtMaxSteps) {
  DoneSpec spec;
  spec.max_steps = 100;
  AgentDoneState st;
  st.step_count = 100;
  const auto r = evaluate_done(spec, st);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.reason, DoneReason::timeout);
}

TEST(Done, ClientMaxSteps) {
  DoneSpec spec;
  spec.max_steps = 1000;
  spec.client_max_steps = 300;
  AgentDoneState st;
  st.step_count = 299;
  EXPECT_FALSE(evaluate_done(spec, st).done);
  st.step_count = 300;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::timeout);
}

TEST(Done, OutOfTrackThreshold) {
  DoneSpec spec;
  spec.out_of_track = true;
  AgentDoneState st;
  st.track_pos = 1.0;
  EXPECT_FALSE(evaluate_done(spec, st).done);
  st.track_pos = 1.01;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::out_of_track);
  spec.track_limit_hi = 1.5;
  EXPECT_FALSE(evaluate_done(spec, st).done);
}

TEST(Done, LapCompleted) {
  DoneSpec spec;
  spec.enable("task_complete");
  AgentDoneState st;
  st.lap_completed = true;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::task_complete);
}

TEST(Done, PrecedenceOrder) {
  DoneSpec spec;
  for (const char* n : {"turn_backward", "out_of_track", "collision", "timeout", "one_lap"}) spec.enable(n);
  spec.max_steps = 10;
  AgentDoneState st;
  st.angle = 3.0;
  st.track_pos = 2.0;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::turn_backward);
  st.collided = true;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::collision);
  st.step_count = 10;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::timeout);
  st.lap_completed = true;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::task_complete);
}

TEST(Done, Monotone) {
  DoneSpec spec;
  spec.out_of_track = true;
  AgentDoneState st;
  st.already = DoneReason::out_of_track;
  st.track_pos = 0.0;
  const auto r = evaluate_done(spec, st);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.reason, DoneReason::out_of_track);
}

TEST(Done, RaceOver) {
  DoneSpec spec;
  spec.enable("race_over");
  AgentDoneState st;
  st.n_cars = 5;
  st.rank = 2;
  EXPECT_FALSE(evaluate_done(spec, st).done);
  st.rank = 1;
  EXPECT_EQ(evaluate_done(spec, st).reason, DoneReason::task_complete);
  st.n_cars = 1;
  EXPECT_FALSE(evaluate_done(spec, st).done);
  EXPECT_THROW(spec.enable("spin"), ValidationError);
}
