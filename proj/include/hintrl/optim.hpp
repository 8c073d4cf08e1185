#pragma once

// Clipped group-relative policy update.
//
// Objective per batch of B groups:
//   J = 1/B sum_g [ 1/G sum_i 1/n_i sum_t A_i * min(r_it, clip(r_it, 1-eps, 1+eps))
//                   - beta * KL(pi || pi_ref) ]
// maximized by plain gradient ascent (or Adam). Clipped tokens pass no
// gradient.

#include <sstream>
#include <thread>
#include <vector>

#include "hintrl/config.hpp"
#include "hintrl/policy.hpp"
#include "hintrl/rollout.hpp"

namespace hintrl {

/// One (trajectory, token) record for the update-quality metrics.
struct UpdateSample {
  double ell = 0.0;     // log pi_theta / pi_old at the start of an inner iteration
  double weight = 0.0;  // |A_i|
  std::uint32_t group = 0;
  std::uint32_t trajectory = 0;
  std::uint32_t position = 0;
  std::uint32_t iteration = 0;
};

struct TrajectoryRatios {
  std::vector<double> log_ratio;
  std::vector<double> ratio;
};

inline const Context& ratio_context(const RolloutGroup& g, const Trajectory& t, const TrainerConfig& cfg) {
  return cfg.ratio_context == RatioContext::literal_qstar ? t.sampling_context : g.policy_context;
}

inline const Context& kl_context(const RolloutGroup& g, const TrainerConfig& cfg) {
  return cfg.ratio_context == RatioContext::literal_qstar ? g.rollout_context : g.policy_context;
}

/// Whether token p of t enters the loss (forced-prefix tokens are optional).
inline bool in_loss(const Trajectory& t, std::size_t p, const TrainerConfig& cfg) {
  return cfg.forced_tokens_in_loss || p >= t.sampling_context.forced_prefix.size();
}

/// Denominator log-probs of a trajectory under the ratio context. Injected
/// and forced tokens keep their recorded behaviour log-probs; sampled tokens
/// are scored by the old policy in the ratio context (identical to the
/// recorded values when that is the sampling context).
inline std::vector<double> old_logprobs_in(const PolicyParams& params_old, const Trajectory& t, const Context& ctx) {
  if (t.old_logprobs.size() != t.tokens.size() || t.tokens.size() > ctx.length()) {
    throw InternalError("trajectory does not fit its ratio context");
  }
  if (t.origin == Origin::injected || ctx == t.sampling_context) return t.old_logprobs;
  auto out = logprob(params_old, t.tokens, ctx);
  const std::size_t forced = std::min(t.tokens.size(), t.sampling_context.forced_prefix.size());
  for (std::size_t p = 0; p < forced; ++p) out[p] = t.old_logprobs[p];
  return out;
}

inline std::vector<TrajectoryRatios> importance_ratios(const PolicyParams& params, const PolicyParams& params_old,
                                                       const RolloutGroup& group, const TrainerConfig& cfg) {
  std::vector<TrajectoryRatios> out;
  out.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories) {
    const Context& ctx = ratio_context(group, t, cfg);
    const auto old_lp = old_logprobs_in(params_old, t, ctx);
    const auto new_lp = logprob(params, t.tokens, ctx);
    TrajectoryRatios r;
    r.log_ratio.resize(t.tokens.size());
    r.ratio.resize(t.tokens.size());
    for (std::size_t p = 0; p < t.tokens.size(); ++p) {
      r.log_ratio[p] = new_lp[p] - old_lp[p];
      r.ratio[p] = std::exp(r.log_ratio[p]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct LossResult {
  double objective = 0.0;  // surrogate - beta * kl (maximize)
  double surrogate = 0.0;
  double kl = 0.0;
  Gradient gradient;
  std::size_t clipped_tokens = 0;
  std::size_t active_tokens = 0;  // tokens with A != 0
};

inline LossResult hint_loss(const PolicyParams& params, const PolicyParams& params_old, const PolicyParams& params_ref,
                            std::span<const RolloutGroup> groups, const TrainerConfig& cfg) {
  LossResult res;
  res.gradient = Gradient(params);
  if (groups.empty()) return res;
  if (!params.logits.same_shape(params_old.logits) || !params.logits.same_shape(params_ref.logits)) {
    throw InputError("hint_loss: parameter shapes differ");
  }
  const double lo = 1.0 - cfg.eps_clip;
  const double hi = 1.0 + cfg.eps_clip;
  const double inv_b = 1.0 / static_cast<double>(groups.size());

  for (const auto& g : groups) {
    if (g.advantages.size() != g.trajectories.size()) throw InternalError("advantages/trajectories size mismatch");
    const auto ratios = importance_ratios(params, params_old, g, cfg);
    const double inv_g = 1.0 / static_cast<double>(g.trajectories.size());
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      const auto& t = g.trajectories[i];
      const double a = g.advantages[i];
      std::size_t n = 0;
      for (std::size_t p = 0; p < t.tokens.size(); ++p) n += in_loss(t, p, cfg) ? 1 : 0;
      if (n == 0) continue;
      const double w = inv_b * inv_g / static_cast<double>(n);
      const Context& ctx = ratio_context(g, t, cfg);
      for (std::size_t p = 0; p < t.tokens.size(); ++p) {
        if (!in_loss(t, p, cfg)) continue;
        const double r = ratios[i].ratio[p];
        const double rc = std::clamp(r, lo, hi);
        const bool clipped = a * rc < a * r;
        res.surrogate += w * a * (clipped ? rc : r);
        if (a != 0.0) {
          ++res.active_tokens;
          if (clipped) ++res.clipped_tokens;
        }
        if (!clipped && a != 0.0) add_grad_logprob(res.gradient, params, ctx, p, t.tokens[p], w * a * r);
      }
    }
    if (cfg.beta > 0.0) {
      const Context& ctx = kl_context(g, cfg);
      res.kl += inv_b * kl(params, params_ref, ctx);
      for (std::size_t p = 0; p < ctx.length(); ++p) add_grad_kl(res.gradient, params, params_ref, ctx, p, -cfg.beta * inv_b);
    }
  }
  res.objective = res.surrogate - cfg.beta * res.kl;
  if (!std::isfinite(res.objective) || !all_finite(res.gradient.values)) {
    std::ostringstream os;
    os << "non-finite loss: objective=" << res.objective << " surrogate=" << res.surrogate << " kl=" << res.kl
       << " groups=" << groups.size() << " clipped=" << res.clipped_tokens << "/" << res.active_tokens;
    throw DivergenceError(os.str());
  }
  return res;
}

/// Gradient-ascent optimizer with optional Adam moments.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(const PolicyParams& like) : m_(like.rows(), like.vocab()), v_(like.rows(), like.vocab()) {}

  void step(PolicyParams& params, const Gradient& grad, const TrainerConfig& cfg) {
    auto x = params.logits.values();
    const auto g = grad.values.values();
    if (cfg.optimizer == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += cfg.learning_rate * g[k];
      return;
    }
    if (!m_.same_shape(params.logits)) *this = Optimizer(params);
    ++t_;
    auto m = m_.values();
    auto v = v_.values();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < x.size(); ++k) {
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
      x[k] += cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
    }
  }

 private:
  Table m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainState {
  PolicyParams params;
  PolicyParams ref;
  Optimizer optimizer;
  std::uint64_t step = 0;

  TrainState() = default;
  explicit TrainState(const Difficulty& d) : params(d), ref(d), optimizer(params) {}
};

struct StepDiagnostics {
  double mean_reward = 0.0;       // over the final (post-rescue) groups
  double valid_fraction = 0.0;
  double hint_fraction = 0.0;     // groups rescued by a hint or injection
  double stage1_valid_fraction = 0.0;
  double clip_fraction = 0.0;     // clipped / active tokens over all inner iterations
  double objective = 0.0;         // at the first inner iteration
};

struct StepResult {
  std::vector<RolloutGroup> groups;
  std::vector<UpdateSample> samples;
  StepDiagnostics diagnostics;
  PolicyParams params_old;
};

/// Runs rollout_group for each task; group j draws from its own stream
/// derived from (step_seed, j), so results do not depend on `threads`.
inline std::vector<RolloutGroup> rollout_batch(const PolicyParams& params_old, std::span<const Task> batch,
                                               const TrainerConfig& cfg, std::uint64_t step_seed) {
  std::vector<RolloutGroup> groups(batch.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      Rng rng(derive_seed(step_seed, j));
      groups[j] = rollout_group(params_old, batch[j], cfg.hint, cfg, rng);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(batch.size(), 1));
  if (threads == 1) {
    work(0, batch.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (batch.size() + threads - 1) / threads;
    for (std::size_t b = 0; b < batch.size(); b += chunk) pool.emplace_back(work, b, std::min(batch.size(), b + chunk));
  }
  return groups;
}

inline StepResult train_step(TrainState& state, std::span<const Task> batch, const TrainerConfig& cfg,
                             std::uint64_t step_seed) {
  cfg.validate();
  if (cfg.ref_refresh_interval > 0 && state.step % cfg.ref_refresh_interval == 0) state.ref = state.params;

  StepResult res;
  res.params_old = state.params;
  res.groups = rollout_batch(res.params_old, batch, cfg, step_seed);

  std::size_t clipped = 0;
  std::size_t active = 0;
  for (std::size_t it = 0; it < cfg.mu; ++it) {
    for (std::size_t gi = 0; gi < res.groups.size(); ++gi) {
      const auto& g = res.groups[gi];
      const auto ratios = importance_ratios(state.params, res.params_old, g, cfg);
      for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
        const auto& t = g.trajectories[i];
        for (std::size_t p = 0; p < t.tokens.size(); ++p) {
          if (!in_loss(t, p, cfg)) continue;
          res.samples.push_back({ratios[i].log_ratio[p], std::abs(g.advantages[i]), static_cast<std::uint32_t>(gi),
                                 static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(p),
                                 static_cast<std::uint32_t>(it)});
        }
      }
    }
    const auto loss = hint_loss(state.params, res.params_old, state.ref, res.groups, cfg);
    if (it == 0) res.diagnostics.objective = loss.objective;
    clipped += loss.clipped_tokens;
    active += loss.active_tokens;
    state.optimizer.step(state.params, loss.gradient, cfg);
    if (!all_finite(state.params.logits)) {
      throw DivergenceError("non-finite logits after update at step " + std::to_string(state.step));
    }
  }

  auto& d = res.diagnostics;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  for (const auto& g : res.groups) {
    for (double r : g.rewards) reward_sum += r;
    reward_count += g.rewards.size();
    d.valid_fraction += is_valid_group(g) ? 1.0 : 0.0;
    d.hint_fraction += (g.used_hint || g.injected) ? 1.0 : 0.0;
    d.stage1_valid_fraction +=
        std::any_of(g.stage1_rewards.begin(), g.stage1_rewards.end(), [](double r) { return r > 0.0; }) ? 1.0 : 0.0;
  }
  const double n = res.groups.empty() ? 1.0 : static_cast<double>(res.groups.size());
  d.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
  d.valid_fraction /= n;
  d.hint_fraction /= n;
  d.stage1_valid_fraction /= n;
  d.clip_fraction = active ? static_cast<double>(clipped) / static_cast<double>(active) : 0.0;
  ++state.step;
  return res;
}

}  // namespace hintrl
