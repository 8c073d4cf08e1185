#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "hintrl/rollout.hpp"

using namespace hintrl;

namespace {

TrainerConfig config_with(HintMode mode, std::size_t prefix = 0) {
  TrainerConfig c;
  c.hint = HintSpec{mode, prefix, 0.25};
  return c;
}

// Policy that emits `answer` with probability ~1 at every position of the
// plain context of `t`.
PolicyParams sure_policy(const Task& t) {
  PolicyParams p(t.difficulty);
  const auto ctx = plain_context(t);
  for (std::size_t i = 0; i < t.length(); ++i) p.logits.at(ctx.rows[i], t.answer[i]) = 50.0;
  return p;
}

}  // namespace

TEST(Advantages, HandExample) {
  const std::vector<double> r{1, 0, 0, 0};
  // mean 0.25, population std sqrt(3)/4
  const double sd = std::sqrt(3.0) / 4.0;
  const auto a = compute_advantages(r, 1e-6);
  EXPECT_NEAR(a[0], 0.75 / (sd + 1e-6), 1e-12);
  EXPECT_NEAR(a[0], 1.7320, 1e-3);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(a[i], -0.5773, 1e-3);
}

TEST(Advantages, ZeroVarianceGivesZeros) {
  for (double v : {0.0, 1.0}) {
    for (double x : compute_advantages(std::vector<double>(8, v))) EXPECT_EQ(x, 0.0);
  }
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}), InputError);
}

TEST(Advantages, MeanZeroUnitVarianceProperty) {
  std::mt19937_64 g(5);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(2 + trial % 15);
    for (double& x : r) x = coin(g) ? 1.0 : 0.0;
    const auto a = compute_advantages(r, 0.0);
    const double n = static_cast<double>(r.size());
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    if (std::adjacent_find(r.begin(), r.end(), std::not_equal_to<>()) != r.end()) {
      double var = 0.0;
      for (double x : a) var += x * x;
      EXPECT_NEAR(var / n, 1.0, 1e-9);
    }
  }
}

TEST(Rollout, SuccessfulStageOneSkipsHint) {
  const auto t = generate_task_set(1, 4, {4, 8}, 0.25)[0];
  const auto p = sure_policy(t);
  auto cfg = config_with(HintMode::heuristic);
  Rng rng(3);
  const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
  EXPECT_FALSE(g.used_hint);
  EXPECT_EQ(g.rollout_context, plain_context(t));
  EXPECT_EQ(g.trajectories.size(), 8u);
  EXPECT_TRUE(is_valid_group(g));
  EXPECT_EQ(g.rewards, g.stage1_rewards);
}

TEST(Rollout, SparseStageOneTriggersHeuristicRescue) {
  const auto t = generate_task_set(1, 4, {4, 8}, 0.25)[0];
  PolicyParams p(t.difficulty);
  // plain context is sure of a wrong answer
  const auto plain = plain_context(t);
  for (std::size_t i = 0; i < 4; ++i) p.logits.at(plain.rows[i], (t.answer[i] + 1) % 8) = 50.0;
  auto cfg = config_with(HintMode::heuristic);
  Rng rng(4);
  const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
  EXPECT_TRUE(g.used_hint);
  for (double r : g.stage1_rewards) EXPECT_EQ(r, 0.0);
  EXPECT_TRUE(g.rollout_context.masked());
  EXPECT_EQ(g.policy_context, plain);  // decoupled by default
  for (const auto& tr : g.trajectories) {
    EXPECT_EQ(tr.sampling_context, g.rollout_context);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_TRUE(std::binary_search(t.candidates[i].begin(), t.candidates[i].end(), tr.tokens[i]));
    }
  }
  cfg.decoupled_prompts = false;
  Rng rng2(4);
  EXPECT_EQ(rollout_group(p, t, cfg.hint, cfg, rng2).policy_context, g.rollout_context);
}

TEST(Rollout, NoHintModeReturnsSparseGroupAsIs) {
  const auto t = generate_task_set(1, 4, {4, 8}, 0.25)[0];
  PolicyParams p(t.difficulty);
  const auto plain = plain_context(t);
  for (std::size_t i = 0; i < 4; ++i) p.logits.at(plain.rows[i], (t.answer[i] + 1) % 8) = 50.0;
  auto cfg = config_with(HintMode::none);
  Rng rng(4);
  const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
  EXPECT_FALSE(g.used_hint);
  EXPECT_FALSE(g.injected);
  EXPECT_FALSE(is_valid_group(g));
  for (double a : g.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Rollout, NoHintModeMatchesPlainSampling) {
  // byte-identical to sampling G times from the plain context directly
  const auto tasks = generate_task_set(9, 20, {3, 4}, 0.5);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0.0, 1.0);
  PolicyParams p(tasks[0].difficulty);
  for (double& x : p.logits.values()) x = n(gen);
  const auto cfg = config_with(HintMode::none);
  for (const auto& t : tasks) {
    Rng a(42), b(42);
    const auto g = rollout_group(p, t, cfg.hint, cfg, a);
    for (std::size_t i = 0; i < cfg.group_size; ++i) {
      const auto ref = sample(p, plain_context(t), cfg.temperature, b);
      EXPECT_EQ(g.trajectories[i].tokens, ref.tokens);
      EXPECT_EQ(g.trajectories[i].old_logprobs, ref.old_logprobs);
    }
  }
}

TEST(Rollout, AnswerPrefixRescueForcesPrefix) {
  const auto t = generate_task_set(1, 4, {4, 8}, 0.25)[3];
  PolicyParams p(t.difficulty);
  const auto plain = plain_context(t);
  for (std::size_t i = 0; i < 4; ++i) p.logits.at(plain.rows[i], (t.answer[i] + 1) % 8) = 50.0;
  auto cfg = config_with(HintMode::answer_prefix, 2);
  Rng rng(6);
  const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
  ASSERT_TRUE(g.used_hint);
  for (const auto& tr : g.trajectories) {
    EXPECT_EQ(tr.tokens[0], t.answer[0]);
    EXPECT_EQ(tr.tokens[1], t.answer[1]);
    EXPECT_EQ(tr.old_logprobs[0], 0.0);
  }
}

TEST(Rollout, InjectionReplacesLastFailureWithGroundTruth) {
  const auto t = generate_task_set(1, 4, {4, 8}, 0.25)[0];
  PolicyParams p(t.difficulty);
  const auto plain = plain_context(t);
  for (std::size_t i = 0; i < 4; ++i) p.logits.at(plain.rows[i], (t.answer[i] + 1) % 8) = 50.0;
  auto cfg = config_with(HintMode::none);
  cfg.inject_ground_truth = true;
  Rng rng(7);
  const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
  EXPECT_TRUE(g.injected);
  EXPECT_FALSE(g.used_hint);
  const auto& last = g.trajectories.back();
  EXPECT_EQ(last.tokens, t.answer);
  EXPECT_EQ(last.origin, Origin::injected);
  EXPECT_EQ(last.reward, 1.0);
  for (double lp : last.old_logprobs) EXPECT_EQ(lp, 0.0);
  EXPECT_GT(g.advantages.back(), 0.0);
  for (std::size_t i = 0; i + 1 < g.trajectories.size(); ++i) EXPECT_EQ(g.trajectories[i].origin, Origin::policy);
}

TEST(Rollout, HintedGroupImpliesAllZeroStageOne) {
  const auto tasks = generate_task_set(4, 60, {4, 8}, 0.25);
  const PolicyParams p(tasks[0].difficulty);
  const auto cfg = config_with(HintMode::heuristic);
  Rng rng(8);
  int hinted = 0;
  for (const auto& t : tasks) {
    const auto g = rollout_group(p, t, cfg.hint, cfg, rng);
    ASSERT_EQ(g.trajectories.size(), cfg.group_size);
    ASSERT_EQ(g.advantages.size(), cfg.group_size);
    if (g.used_hint) {
      ++hinted;
      for (double r : g.stage1_rewards) EXPECT_EQ(r, 0.0);
    }
    for (double a : g.advantages) EXPECT_TRUE(std::isfinite(a));
  }
  EXPECT_GT(hinted, 50);  // uniform start: stage 1 almost never succeeds
}

TEST(Rollout, GroupSizeBelowTwoIsAConfigError) {
  const auto t = generate_task_set(1, 2, {2, 3}, 0.5)[0];
  auto cfg = config_with(HintMode::none);
  cfg.group_size = 1;
  Rng rng(1);
  EXPECT_THROW(rollout_group(PolicyParams(t.difficulty), t, cfg.hint, cfg, rng), ConfigError);
}
