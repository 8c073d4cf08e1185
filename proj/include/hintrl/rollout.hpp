#pragma once

// Two-stage rollout. Stage 1 samples G responses from the hint-free
// context; only when every one of them fails does stage 2 resample under
// the hint-augmented context (or, in injection mode, splice in the ground
// truth). Stage-1 rewards are retained for audit.

#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "hintrl/config.hpp"
#include "hintrl/policy.hpp"
#include "hintrl/tasks.hpp"

namespace hintrl {

struct RolloutGroup {
  std::uint64_t task_id = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> stage1_rewards;
  bool used_hint = false;
  bool injected = false;
  Context rollout_context;  // context the final trajectories were drawn from
  Context policy_context;   // context the policy is optimized under
};

/// Group-normalized advantages (r - mean) / (std + eps_std), population std.
/// All-equal rewards give exactly zero.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double eps_std = 1e-6) {
  if (rewards.size() < 2) throw InputError("advantages need a group of at least 2");
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::adjacent_find(rewards.begin(), rewards.end(), std::not_equal_to<>()) == rewards.end()) return adv;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + eps_std);
  return adv;
}

inline bool is_valid_group(const RolloutGroup& g) {
  return std::any_of(g.rewards.begin(), g.rewards.end(), [](double r) { return r > 0.0; });
}

namespace detail {

inline std::vector<Trajectory> sample_group(const PolicyParams& params, const Task& task, const Context& ctx,
                                            const TrainerConfig& cfg, Rng& rng) {
  std::vector<Trajectory> out;
  out.reserve(cfg.group_size);
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    Trajectory t = sample(params, ctx, cfg.temperature, rng, cfg.max_response);
    t.reward = verify(task, t.tokens);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<double> rewards_of(const std::vector<Trajectory>& ts) {
  std::vector<double> r;
  r.reserve(ts.size());
  for (const auto& t : ts) r.push_back(t.reward);
  return r;
}

}  // namespace detail

inline RolloutGroup rollout_group(const PolicyParams& params_old, const Task& task, const HintSpec& hint,
                                  const TrainerConfig& cfg, Rng& rng) {
  if (cfg.group_size < 2) throw ConfigError("group_size must be >= 2");
  RolloutGroup g;
  g.task_id = task.task_id;
  g.rollout_context = plain_context(task);
  g.policy_context = g.rollout_context;
  g.trajectories = detail::sample_group(params_old, task, g.rollout_context, cfg, rng);
  g.stage1_rewards = detail::rewards_of(g.trajectories);

  const bool sparse = std::none_of(g.stage1_rewards.begin(), g.stage1_rewards.end(), [](double r) { return r > 0.0; });
  if (sparse && cfg.inject_ground_truth) {
    // Off-policy rescue: the ground truth replaces the last failure. Its
    // source emitted it with certainty, so the recorded behaviour log-probs
    // are 0 and the ratio is pi_theta(answer) itself.
    Trajectory& t = g.trajectories.back();
    t.tokens = task.answer;
    t.old_logprobs.assign(t.tokens.size(), 0.0);
    t.reward = verify(task, t.tokens);
    t.origin = Origin::injected;
    g.injected = true;
  } else if (sparse && hint.mode != HintMode::none) {
    g.rollout_context = render_context(task, hint, cfg.decoupled_prompts, Phase::rollout);
    g.policy_context = render_context(task, hint, cfg.decoupled_prompts, Phase::policy);
    g.trajectories = detail::sample_group(params_old, task, g.rollout_context, cfg, rng);
    g.used_hint = true;
  }
  g.rewards = detail::rewards_of(g.trajectories);
  g.advantages = compute_advantages(g.rewards, cfg.eps_std);
  return g;
}

/// One line of the rollout trace log.
inline nlohmann::json rollout_trace_json(std::uint64_t step, const RolloutGroup& g) {
  return nlohmann::json{{"step", step},
                        {"task_id", g.task_id},
                        {"used_hint", g.used_hint},
                        {"injected", g.injected},
                        {"rewards", g.rewards},
                        {"stage1_rewards", g.stage1_rewards}};
}

}  // namespace hintrl
