#pragma once

// Update-quality metrics over advantage-weighted log-ratio samples:
//   EUR      = sum_i w_i 1{|l_i| <= delta} / sum_i w_i
//   UC       = weighted population std of l over I = {i : |l_i| <= delta}
//   Affinity = EUR * exp(-UC / tau),  tau = delta / 2
// plus visited-state entropies and per-step records. Every record is a pure
// function of a StepTrace, which is also what the trace log stores, so
// offline recomputation reproduces the online log exactly.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hintrl/optim.hpp"
#include "hintrl/policy.hpp"
#include "hintrl/rollout.hpp"

namespace hintrl {

inline constexpr const char* kMetricsSchema = "hintrl.metrics/1";
inline constexpr const char* kTraceSchema = "hintrl.trace/1";

struct WeightedLogRatio {
  double ell;
  double weight;
};

namespace detail {

inline void check_delta(double delta) {
  if (!(delta > 0.0)) throw ConfigError("trust-region delta must be > 0");
}

}  // namespace detail

/// EUR. Returns 1 when the total weight is zero (see is_degenerate).
inline double eur(std::span<const WeightedLogRatio> samples, double delta) {
  detail::check_delta(delta);
  double in = 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    total += s.weight;
    if (std::abs(s.ell) <= delta) in += s.weight;
  }
  if (total <= 0.0) return 1.0;
  return std::clamp(in / total, 0.0, 1.0);
}

inline double uc(std::span<const WeightedLogRatio> samples, double delta) {
  detail::check_delta(delta);
  double wsum = 0.0;
  double wl = 0.0;
  std::size_t count = 0;
  bool all_equal = true;
  double first = 0.0;
  for (const auto& s : samples) {
    if (std::abs(s.ell) > delta || s.weight <= 0.0) continue;
    if (count == 0) {
      first = s.ell;
    } else if (s.ell != first) {
      all_equal = false;
    }
    ++count;
    wsum += s.weight;
    wl += s.weight * s.ell;
  }
  if (count <= 1 || all_equal) return 0.0;
  const double mu = wl / wsum;
  double var = 0.0;
  for (const auto& s : samples) {
    if (std::abs(s.ell) > delta || s.weight <= 0.0) continue;
    var += s.weight * (s.ell - mu) * (s.ell - mu);
  }
  return std::sqrt(var / wsum);
}

inline double affinity(double eur_val, double uc_val, double delta) {
  detail::check_delta(delta);
  return eur_val * std::exp(-uc_val / (delta / 2.0));
}

/// True when the batch carries no update (zero total weight) or when no
/// weighted sample lies inside the trust region.
inline bool is_degenerate(std::span<const WeightedLogRatio> samples, double delta) {
  double total = 0.0;
  double in = 0.0;
  for (const auto& s : samples) {
    total += s.weight;
    if (std::abs(s.ell) <= delta) in += s.weight;
  }
  return total <= 0.0 || in <= 0.0;
}

inline std::vector<WeightedLogRatio> weighted_log_ratios(std::span<const UpdateSample> samples) {
  std::vector<WeightedLogRatio> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.ell, s.weight});
  return out;
}

// ---------------------------------------------------------------------------
// Entropy of visited states

struct StateEntropy {
  double entropy;
  bool hinted;  // source group used a hint
};

/// Entropies of the states the final trajectories were generated from.
/// Forced-prefix positions are not generated and are skipped.
inline std::vector<StateEntropy> visited_state_entropies(const PolicyParams& params, std::span<const RolloutGroup> groups) {
  std::vector<StateEntropy> out;
  for (const auto& g : groups) {
    const Context& ctx = g.rollout_context;
    for (std::size_t p = ctx.forced_prefix.size(); p < ctx.length(); ++p) {
      out.push_back({entropy(params, ctx, p), g.used_hint});
    }
  }
  return out;
}

struct EntropyReport {
  std::optional<double> mean_all;
  std::optional<double> mean_hinted;    // absent when no group used a hint
  std::optional<double> mean_unhinted;
};

inline EntropyReport summarize_entropy(std::span<const StateEntropy> states) {
  double all = 0.0, h = 0.0, u = 0.0;
  std::size_t na = 0, nh = 0, nu = 0;
  for (const auto& s : states) {
    all += s.entropy;
    ++na;
    if (s.hinted) {
      h += s.entropy;
      ++nh;
    } else {
      u += s.entropy;
      ++nu;
    }
  }
  EntropyReport r;
  if (na) r.mean_all = all / static_cast<double>(na);
  if (nh) r.mean_hinted = h / static_cast<double>(nh);
  if (nu) r.mean_unhinted = u / static_cast<double>(nu);
  return r;
}

inline EntropyReport entropy_report(const PolicyParams& params, std::span<const RolloutGroup> groups) {
  const auto states = visited_state_entropies(params, groups);
  return summarize_entropy(states);
}

// ---------------------------------------------------------------------------
// Step traces and records

struct GroupTrace {
  std::uint64_t task_id = 0;
  bool used_hint = false;
  bool injected = false;
  std::vector<double> rewards;
  std::vector<double> stage1_rewards;
};

struct StepTrace {
  std::uint64_t step = 0;
  std::vector<GroupTrace> groups;
  std::vector<WeightedLogRatio> samples;
  std::vector<StateEntropy> entropies;
  double clip_fraction = 0.0;
  double delta = 0.0;  // trust-region half-width the run used
};

inline StepTrace make_step_trace(std::uint64_t step, const StepResult& res, double delta) {
  StepTrace tr;
  tr.step = step;
  tr.delta = delta;
  for (const auto& g : res.groups) tr.groups.push_back({g.task_id, g.used_hint, g.injected, g.rewards, g.stage1_rewards});
  tr.samples = weighted_log_ratios(res.samples);
  tr.entropies = visited_state_entropies(res.params_old, res.groups);
  tr.clip_fraction = res.diagnostics.clip_fraction;
  return tr;
}

struct MetricsRecord {
  std::uint64_t step = 0;
  double eur = 1.0;
  double uc = 0.0;
  double affinity = 1.0;
  bool degenerate = false;
  std::optional<double> mean_entropy;
  std::optional<double> mean_entropy_hinted;
  std::optional<double> mean_entropy_unhinted;
  double valid_fraction = 0.0;
  double mean_reward = 0.0;
  double hint_fraction = 0.0;
  double clip_fraction = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

inline MetricsRecord compute_record(const StepTrace& tr, double delta) {
  MetricsRecord m;
  m.step = tr.step;
  m.degenerate = is_degenerate(tr.samples, delta);
  m.eur = eur(tr.samples, delta);
  m.uc = uc(tr.samples, delta);
  m.affinity = affinity(m.eur, m.uc, delta);
  const auto e = summarize_entropy(tr.entropies);
  m.mean_entropy = e.mean_all;
  m.mean_entropy_hinted = e.mean_hinted;
  m.mean_entropy_unhinted = e.mean_unhinted;
  double reward = 0.0;
  std::size_t n = 0;
  for (const auto& g : tr.groups) {
    for (double r : g.rewards) reward += r;
    n += g.rewards.size();
    if (std::any_of(g.rewards.begin(), g.rewards.end(), [](double r) { return r > 0.0; })) m.valid_fraction += 1.0;
    if (g.used_hint || g.injected) m.hint_fraction += 1.0;
  }
  if (!tr.groups.empty()) {
    m.valid_fraction /= static_cast<double>(tr.groups.size());
    m.hint_fraction /= static_cast<double>(tr.groups.size());
  }
  m.mean_reward = n ? reward / static_cast<double>(n) : 0.0;
  m.clip_fraction = tr.clip_fraction;
  return m;
}

/// Sliding-window means, one per full window (length n - window + 1).
inline std::vector<double> aggregate(std::span<const double> series, std::size_t window) {
  if (window == 0) throw ConfigError("aggregate: window must be >= 1");
  std::vector<double> out;
  if (series.size() < window) return out;
  for (std::size_t i = 0; i + window <= series.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + window; ++k) s += series[k];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json record_to_json(const MetricsRecord& m) {
  return nlohmann::json{{"schema", kMetricsSchema},
                        {"step", m.step},
                        {"eur", m.eur},
                        {"uc", m.uc},
                        {"affinity", m.affinity},
                        {"degenerate", m.degenerate},
                        {"mean_entropy", detail::opt_json(m.mean_entropy)},
                        {"mean_entropy_hinted", detail::opt_json(m.mean_entropy_hinted)},
                        {"mean_entropy_unhinted", detail::opt_json(m.mean_entropy_unhinted)},
                        {"valid_fraction", m.valid_fraction},
                        {"mean_reward", m.mean_reward},
                        {"hint_fraction", m.hint_fraction},
                        {"clip_fraction", m.clip_fraction}};
}

inline MetricsRecord record_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kMetricsSchema) throw InputError("metrics record: schema mismatch");
    MetricsRecord m;
    m.step = j.at("step").get<std::uint64_t>();
    m.eur = j.at("eur").get<double>();
    m.uc = j.at("uc").get<double>();
    m.affinity = j.at("affinity").get<double>();
    m.degenerate = j.at("degenerate").get<bool>();
    m.mean_entropy = detail::opt_from(j, "mean_entropy");
    m.mean_entropy_hinted = detail::opt_from(j, "mean_entropy_hinted");
    m.mean_entropy_unhinted = detail::opt_from(j, "mean_entropy_unhinted");
    m.valid_fraction = j.at("valid_fraction").get<double>();
    m.mean_reward = j.at("mean_reward").get<double>();
    m.hint_fraction = j.at("hint_fraction").get<double>();
    m.clip_fraction = j.at("clip_fraction").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("metrics record: ") + e.what());
  }
}

/// Trace lines for one step: one "rollout" line per group, then one
/// "update" line with the weighted log-ratios and visited-state entropies.
inline std::vector<nlohmann::json> trace_to_json(const StepTrace& tr) {
  std::vector<nlohmann::json> lines;
  for (const auto& g : tr.groups) {
    lines.push_back({{"schema", kTraceSchema},
                     {"type", "rollout"},
                     {"step", tr.step},
                     {"task_id", g.task_id},
                     {"used_hint", g.used_hint},
                     {"injected", g.injected},
                     {"rewards", g.rewards},
                     {"stage1_rewards", g.stage1_rewards}});
  }
  std::vector<double> ell, weight, ent;
  std::vector<bool> hinted;
  for (const auto& s : tr.samples) {
    ell.push_back(s.ell);
    weight.push_back(s.weight);
  }
  for (const auto& e : tr.entropies) {
    ent.push_back(e.entropy);
    hinted.push_back(e.hinted);
  }
  lines.push_back({{"schema", kTraceSchema},
                   {"type", "update"},
                   {"step", tr.step},
                   {"ell", ell},
                   {"weight", weight},
                   {"entropy", ent},
                   {"entropy_hinted", hinted},
                   {"clip_fraction", tr.clip_fraction},
                   {"delta", tr.delta}});
  return lines;
}

/// Parses a trace log back into per-step traces (in file order).
inline std::vector<StepTrace> read_trace(std::istream& in) {
  std::vector<StepTrace> steps;
  std::vector<GroupTrace> pending;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.at("schema").get<std::string>() != kTraceSchema) throw InputError("trace: schema mismatch");
      const auto type = j.at("type").get<std::string>();
      if (type == "rollout") {
        pending.push_back({j.at("task_id").get<std::uint64_t>(), j.at("used_hint").get<bool>(),
                           j.at("injected").get<bool>(), j.at("rewards").get<std::vector<double>>(),
                           j.at("stage1_rewards").get<std::vector<double>>()});
      } else if (type == "update") {
        StepTrace tr;
        tr.step = j.at("step").get<std::uint64_t>();
        tr.groups = std::move(pending);
        pending.clear();
        const auto ell = j.at("ell").get<std::vector<double>>();
        const auto weight = j.at("weight").get<std::vector<double>>();
        const auto ent = j.at("entropy").get<std::vector<double>>();
        const auto hinted = j.at("entropy_hinted").get<std::vector<bool>>();
        if (ell.size() != weight.size() || ent.size() != hinted.size()) throw InputError("trace: ragged update record");
        for (std::size_t k = 0; k < ell.size(); ++k) tr.samples.push_back({ell[k], weight[k]});
        for (std::size_t k = 0; k < ent.size(); ++k) tr.entropies.push_back({ent[k], hinted[k]});
        tr.clip_fraction = j.at("clip_fraction").get<double>();
        tr.delta = j.at("delta").get<double>();
        steps.push_back(std::move(tr));
      } else {
        throw InputError("trace: unknown record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("trace: ") + e.what());
  }
  if (!pending.empty()) throw InputError("trace: rollout records without a closing update record");
  return steps;
}

inline std::vector<MetricsRecord> read_metrics_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  return out;
}

/// Offline mode: recompute the metrics log from a trace file, using the
/// recorded delta unless one is given.
inline std::vector<MetricsRecord> recompute_from_trace(const std::string& path, std::optional<double> delta = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<MetricsRecord> out;
  for (const auto& tr : read_trace(in)) out.push_back(compute_record(tr, delta.value_or(tr.delta)));
  return out;
}

}  // namespace hintrl
