#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "hintrl/core.hpp"
#include "hintrl/tasks.hpp"

namespace hintrl {

/// Context in which importance ratios (and hence gradients) are evaluated.
enum class RatioContext {
  literal_qstar,  // the context the trajectory was sampled under
  decoupled,      // the hint-free policy context
};

enum class OptimizerKind { sgd, adam };

struct TrainerConfig {
  std::size_t group_size = 8;      // G
  double eps_clip = 0.2;           // epsilon
  double beta = 0.0;               // KL coefficient
  std::size_t mu = 1;              // inner update iterations per batch
  double learning_rate = 0.05;
  double temperature = 0.9;
  std::size_t max_response = 0;    // 0: the task's answer length
  bool decoupled_prompts = true;
  RatioContext ratio_context = RatioContext::decoupled;
  HintSpec hint;
  bool inject_ground_truth = false;  // off-policy rescue instead of a hint
  bool forced_tokens_in_loss = true;
  std::size_t batch_size = 16;     // tasks per step
  double eps_std = 1e-6;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t ref_refresh_interval = 0;  // steps per outer iteration; 0: never refresh
  std::size_t threads = 1;

  void validate() const {
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (!(eps_clip > 0.0 && eps_clip < 1.0)) throw ConfigError("eps_clip must lie in (0, 1)");
    if (mu < 1) throw ConfigError("mu must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(eps_std >= 0.0)) throw ConfigError("eps_std must be >= 0");
    if (inject_ground_truth && hint.mode != HintMode::none) {
      throw ConfigError("ground-truth injection and hinting are mutually exclusive");
    }
  }

  /// Default trust-region half-width for metrics: log(1 + eps).
  double default_delta() const { return std::log1p(eps_clip); }
};

}  // namespace hintrl
