#pragma once

// Experiment runner: configuration files, per-seed training runs, held-out
// evaluation, run directories and cross-run comparison tables.
//
// Run directory layout
//   manifest.json                 written before step 0
//   summary.csv                   compare() of this directory alone
//   seed_<s>/tasks.jsonl          task set (train + test)
//   seed_<s>/metrics.jsonl        one MetricsRecord per step
//   seed_<s>/eval.jsonl           {"step", "test_accuracy", "train_accuracy"}
//   seed_<s>/trace.jsonl          rollout/update trace (optional)
//   seed_<s>/checkpoints/step_<n>.ckpt, seed_<s>/final.ckpt

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hintrl/config.hpp"
#include "hintrl/metrics.hpp"
#include "hintrl/optim.hpp"
#include "hintrl/policy.hpp"
#include "hintrl/rollout.hpp"
#include "hintrl/tasks.hpp"

namespace hintrl {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRunSchema = "hintrl.run/1";

enum class GuidanceMode { grpo, hint, answer_prefix, inject };

inline std::string to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::grpo: return "grpo";
    case GuidanceMode::hint: return "hint";
    case GuidanceMode::answer_prefix: return "answer-prefix";
    case GuidanceMode::inject: return "inject";
  }
  return "?";
}

inline GuidanceMode parse_mode(const std::string& s) {
  if (s == "grpo") return GuidanceMode::grpo;
  if (s == "hint") return GuidanceMode::hint;
  if (s == "answer-prefix" || s == "answer_prefix") return GuidanceMode::answer_prefix;
  if (s == "inject") return GuidanceMode::inject;
  throw ConfigError("unknown guidance mode '" + s + "'");
}

struct ExperimentConfig {
  TrainerConfig trainer;
  std::size_t train_tasks = 200;
  std::size_t test_tasks = 50;
  Difficulty difficulty{4, 8};
  double narrowing_factor = 0.25;
  std::size_t prefix_len = 2;  // answer-prefix mode
  std::size_t steps = 500;
  std::size_t eval_interval = 50;
  std::size_t checkpoint_interval = 100;  // 0: final checkpoint only
  std::size_t window = 100;               // final-window length for summaries
  bool trace = false;
  std::optional<double> delta;            // default: log(1 + eps_clip)

  double metric_delta() const { return delta.value_or(trainer.default_delta()); }

  void validate() const {
    trainer.validate();
    difficulty.validate();
    if (train_tasks == 0) throw ConfigError("train_tasks must be >= 1");
    if (test_tasks == 0) throw ConfigError("test_tasks must be >= 1");
    if (steps == 0) throw ConfigError("steps must be >= 1");
    if (window == 0) throw ConfigError("window must be >= 1");
    if (prefix_len >= difficulty.length) throw ConfigError("prefix_len must be smaller than the answer length");
    if (delta && !(*delta > 0.0)) throw ConfigError("delta must be > 0");
    HintSpec{HintMode::heuristic, prefix_len, narrowing_factor}.validate(difficulty.length);
  }
};

/// Trainer settings for one guidance mode.
inline TrainerConfig trainer_for(const ExperimentConfig& cfg, GuidanceMode mode) {
  TrainerConfig t = cfg.trainer;
  t.hint = HintSpec{HintMode::none, 0, cfg.narrowing_factor};
  t.inject_ground_truth = false;
  switch (mode) {
    case GuidanceMode::grpo: break;
    case GuidanceMode::hint: t.hint.mode = HintMode::heuristic; break;
    case GuidanceMode::answer_prefix:
      // Answer-level baselines train on the hinted prompt itself.
      t.hint.mode = HintMode::answer_prefix;
      t.hint.prefix_len = cfg.prefix_len;
      t.decoupled_prompts = false;
      break;
    case GuidanceMode::inject: t.inject_ground_truth = true; break;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Config files (JSON; every field optional, defaults as above)

namespace detail {

inline std::string ratio_name(RatioContext r) { return r == RatioContext::literal_qstar ? "literal_qstar" : "decoupled"; }

inline RatioContext parse_ratio(const std::string& s) {
  if (s == "literal_qstar") return RatioContext::literal_qstar;
  if (s == "decoupled") return RatioContext::decoupled;
  throw ConfigError("unknown ratio_context '" + s + "'");
}

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& t = c.trainer;
  return nlohmann::json{
      {"trainer",
       {{"group_size", t.group_size},
        {"eps_clip", t.eps_clip},
        {"beta", t.beta},
        {"mu", t.mu},
        {"learning_rate", t.learning_rate},
        {"temperature", t.temperature},
        {"max_response", t.max_response},
        {"decoupled_prompts", t.decoupled_prompts},
        {"ratio_context", detail::ratio_name(t.ratio_context)},
        {"forced_tokens_in_loss", t.forced_tokens_in_loss},
        {"batch_size", t.batch_size},
        {"eps_std", t.eps_std},
        {"optimizer", detail::optimizer_name(t.optimizer)},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"ref_refresh_interval", t.ref_refresh_interval}}},
      {"tasks",
       {{"train", c.train_tasks},
        {"test", c.test_tasks},
        {"length", c.difficulty.length},
        {"vocab", c.difficulty.vocab},
        {"narrowing_factor", c.narrowing_factor}}},
      {"hints", {{"prefix_len", c.prefix_len}}},
      {"run",
       {{"steps", c.steps},
        {"eval_interval", c.eval_interval},
        {"checkpoint_interval", c.checkpoint_interval},
        {"window", c.window},
        {"trace", c.trace},
        {"delta", c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr)}}}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    const auto section = [&](const char* k) { return j.contains(k) ? j.at(k) : nlohmann::json::object(); };
    const auto tr = section("trainer");
    auto& t = c.trainer;
    t.group_size = tr.value("group_size", t.group_size);
    t.eps_clip = tr.value("eps_clip", t.eps_clip);
    t.beta = tr.value("beta", t.beta);
    t.mu = tr.value("mu", t.mu);
    t.learning_rate = tr.value("learning_rate", t.learning_rate);
    t.temperature = tr.value("temperature", t.temperature);
    t.max_response = tr.value("max_response", t.max_response);
    t.decoupled_prompts = tr.value("decoupled_prompts", t.decoupled_prompts);
    t.ratio_context = detail::parse_ratio(tr.value("ratio_context", detail::ratio_name(t.ratio_context)));
    t.forced_tokens_in_loss = tr.value("forced_tokens_in_loss", t.forced_tokens_in_loss);
    t.batch_size = tr.value("batch_size", t.batch_size);
    t.eps_std = tr.value("eps_std", t.eps_std);
    t.optimizer = detail::parse_optimizer(tr.value("optimizer", detail::optimizer_name(t.optimizer)));
    t.adam_beta1 = tr.value("adam_beta1", t.adam_beta1);
    t.adam_beta2 = tr.value("adam_beta2", t.adam_beta2);
    t.adam_eps = tr.value("adam_eps", t.adam_eps);
    t.ref_refresh_interval = tr.value("ref_refresh_interval", t.ref_refresh_interval);

    const auto ts = section("tasks");
    c.train_tasks = ts.value("train", c.train_tasks);
    c.test_tasks = ts.value("test", c.test_tasks);
    c.difficulty.length = ts.value("length", c.difficulty.length);
    c.difficulty.vocab = ts.value("vocab", c.difficulty.vocab);
    c.narrowing_factor = ts.value("narrowing_factor", c.narrowing_factor);

    c.prefix_len = section("hints").value("prefix_len", c.prefix_len);

    const auto run = section("run");
    c.steps = run.value("steps", c.steps);
    c.eval_interval = run.value("eval_interval", c.eval_interval);
    c.checkpoint_interval = run.value("checkpoint_interval", c.checkpoint_interval);
    c.window = run.value("window", c.window);
    c.trace = run.value("trace", c.trace);
    if (run.contains("delta") && !run.at("delta").is_null()) c.delta = run.at("delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Evaluation. Hint-blind by construction: only plain_context() is used.

/// Greedy-decode accuracy on `tasks`.
inline double evaluate(const PolicyParams& params, std::span<const Task> tasks) {
  if (tasks.empty()) throw InputError("evaluate: empty task set");
  std::size_t correct = 0;
  for (const auto& t : tasks) {
    if (verify(t, greedy_decode(params, plain_context(t))) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

/// Exact expected accuracy of one untempered sample per task.
inline double expected_accuracy(const PolicyParams& params, std::span<const Task> tasks) {
  if (tasks.empty()) throw InputError("expected_accuracy: empty task set");
  double s = 0.0;
  for (const auto& t : tasks) {
    double lp = 0.0;
    for (double x : logprob(params, t.answer, plain_context(t))) lp += x;
    s += std::exp(lp);
  }
  return s / static_cast<double>(tasks.size());
}

// ---------------------------------------------------------------------------
// Training runs

struct EvalPoint {
  std::uint64_t step = 0;  // number of updates applied
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double test_expected_accuracy = 0.0;  // one untempered sample per task
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  std::vector<EvalPoint> evals;
  PolicyParams final_params;
};

namespace detail {

inline std::vector<std::size_t> sample_batch(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

inline void write_line(std::ofstream* out, const nlohmann::json& j) {
  if (out) *out << j.dump() << '\n';
}

inline nlohmann::json eval_json(const EvalPoint& e) {
  return {{"step", e.step},
          {"test_accuracy", e.test_accuracy},
          {"train_accuracy", e.train_accuracy},
          {"test_expected_accuracy", e.test_expected_accuracy}};
}

}  // namespace detail

inline std::vector<Task> tasks_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  return generate_task_split(seed, cfg.train_tasks + cfg.test_tasks, cfg.test_tasks, cfg.difficulty,
                             cfg.narrowing_factor);
}

/// Trains one seed. With `dir` set, writes the per-seed files there.
inline SeedRun run_seed(const ExperimentConfig& cfg, GuidanceMode mode, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& dir = {}, std::size_t threads = 1) {
  namespace fs = std::filesystem;
  cfg.validate();
  TrainerConfig tcfg = trainer_for(cfg, mode);
  tcfg.threads = threads;
  const double delta = cfg.metric_delta();

  const auto all = tasks_for_seed(cfg, seed);
  const auto train = select_split(all, Split::train);
  const auto test = select_split(all, Split::test);

  std::optional<std::ofstream> metrics_out, eval_out, trace_out;
  if (dir) {
    fs::create_directories(*dir / "checkpoints");
    write_tasks((*dir / "tasks.jsonl").string(), all);
    metrics_out.emplace(*dir / "metrics.jsonl");
    eval_out.emplace(*dir / "eval.jsonl");
    if (cfg.trace) trace_out.emplace(*dir / "trace.jsonl");
    if (!*metrics_out || !*eval_out || (trace_out && !*trace_out)) {
      throw std::runtime_error("cannot write run files under " + dir->string());
    }
  }
  auto* mo = metrics_out ? &*metrics_out : nullptr;
  auto* eo = eval_out ? &*eval_out : nullptr;
  auto* to = trace_out ? &*trace_out : nullptr;

  SeedRun run;
  run.seed = seed;
  TrainState state(cfg.difficulty);

  const auto do_eval = [&](std::uint64_t step) {
    EvalPoint e{step, evaluate(state.params, test), evaluate(state.params, train),
                expected_accuracy(state.params, test)};
    run.evals.push_back(e);
    detail::write_line(eo, detail::eval_json(e));
  };
  const auto do_checkpoint = [&](const fs::path& path) {
    if (dir) save_checkpoint(path.string(), Checkpoint{state.params, cfg.difficulty, state.step});
  };

  do_eval(0);
  std::vector<Task> batch;
  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    Rng batch_rng(derive_seed(seed, 1, step));
    batch.clear();
    for (std::size_t i : detail::sample_batch(train.size(), tcfg.batch_size, batch_rng)) batch.push_back(train[i]);

    const auto res = train_step(state, batch, tcfg, derive_seed(seed, 2, step));
    const auto tr = make_step_trace(step, res, delta);
    const auto rec = compute_record(tr, delta);
    run.records.push_back(rec);
    detail::write_line(mo, record_to_json(rec));
    if (to) {
      for (const auto& line : trace_to_json(tr)) detail::write_line(to, line);
    }
    const std::uint64_t done = step + 1;
    if ((cfg.eval_interval && done % cfg.eval_interval == 0) || done == cfg.steps) {
      if (run.evals.empty() || run.evals.back().step != done) do_eval(done);
    }
    if (cfg.checkpoint_interval && done % cfg.checkpoint_interval == 0) {
      do_checkpoint(*dir / "checkpoints" / ("step_" + std::to_string(done) + ".ckpt"));
    }
  }
  if (dir) do_checkpoint(*dir / "final.ckpt");
  run.final_params = state.params;
  return run;
}

// ---------------------------------------------------------------------------
// Summaries

/// Per-seed summary statistics, in a fixed column order.
struct SeedSummary {
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& key) const {
    for (const auto& [k, v] : values) {
      if (k == key) return v;
    }
    throw InputError("summary has no column '" + key + "'");
  }
};

namespace detail {

template <typename Get>
double mean_over(std::span<const MetricsRecord> recs, Get get) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : recs) {
    const std::optional<double> v = get(r);
    if (v) {
      s += *v;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Run means skip degenerate steps for EUR/UC/Affinity and absent entropy
/// partitions; "final_*" columns average the last `window` steps.
inline SeedSummary summarize_seed(std::span<const MetricsRecord> recs, std::span<const EvalPoint> evals,
                                  std::size_t window) {
  if (recs.empty()) throw InputError("summary: empty metrics log");
  const std::size_t w = std::min(window, recs.size());
  const auto tail = recs.subspan(recs.size() - w);
  const auto quartile = recs.subspan(0, std::max<std::size_t>(1, recs.size() / 4));

  using R = const MetricsRecord&;
  using O = std::optional<double>;
  const auto live = [](auto f) {
    return [f](R r) -> O { return r.degenerate ? O{} : O{f(r)}; };
  };
  const auto eur_f = live([](R r) { return r.eur; });
  const auto uc_f = live([](R r) { return r.uc; });
  const auto aff_f = live([](R r) { return r.affinity; });
  const auto reward_f = [](R r) -> O { return r.mean_reward; };
  const auto valid_f = [](R r) -> O { return r.valid_fraction; };

  SeedSummary s;
  auto& v = s.values;
  v.emplace_back("mean_reward", detail::mean_over(recs, reward_f));
  v.emplace_back("first_quartile_reward", detail::mean_over(quartile, reward_f));
  v.emplace_back("final_reward", detail::mean_over(tail, reward_f));
  v.emplace_back("valid_fraction", detail::mean_over(recs, valid_f));
  v.emplace_back("final_valid_fraction", detail::mean_over(tail, valid_f));
  v.emplace_back("hint_fraction", detail::mean_over(recs, [](R r) -> O { return r.hint_fraction; }));
  v.emplace_back("eur", detail::mean_over(recs, eur_f));
  v.emplace_back("uc", detail::mean_over(recs, uc_f));
  v.emplace_back("affinity", detail::mean_over(recs, aff_f));
  v.emplace_back("final_affinity", detail::mean_over(tail, aff_f));
  v.emplace_back("clip_fraction", detail::mean_over(recs, [](R r) -> O { return r.clip_fraction; }));
  v.emplace_back("entropy", detail::mean_over(recs, [](R r) { return r.mean_entropy; }));
  v.emplace_back("entropy_hinted", detail::mean_over(recs, [](R r) { return r.mean_entropy_hinted; }));
  v.emplace_back("entropy_unhinted", detail::mean_over(recs, [](R r) { return r.mean_entropy_unhinted; }));
  const double test_acc = evals.empty() ? std::numeric_limits<double>::quiet_NaN() : evals.back().test_accuracy;
  const double train_acc = evals.empty() ? std::numeric_limits<double>::quiet_NaN() : evals.back().train_accuracy;
  v.emplace_back("final_test_accuracy", test_acc);
  v.emplace_back("final_train_accuracy", train_acc);
  v.emplace_back("final_test_expected_accuracy",
                 evals.empty() ? std::numeric_limits<double>::quiet_NaN() : evals.back().test_expected_accuracy);
  v.emplace_back("illusion_gap", detail::mean_over(tail, reward_f) - test_acc);
  return s;
}

struct RunSummary {
  std::string name;
  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedSummary> per_seed;

  std::vector<std::string> columns() const {
    std::vector<std::string> c;
    if (!per_seed.empty()) {
      for (const auto& kv : per_seed.front().values) c.push_back(kv.first);
    }
    return c;
  }
  /// Mean and population std over seeds; NaN seeds are skipped.
  std::pair<double, double> stat(const std::string& key) const {
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const auto& p : per_seed) {
      const double x = p.get(key);
      if (std::isnan(x)) continue;
      s += x;
      ++n;
    }
    if (!n) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double m = s / static_cast<double>(n);
    for (const auto& p : per_seed) {
      const double x = p.get(key);
      if (!std::isnan(x)) ss += (x - m) * (x - m);
    }
    return {m, std::sqrt(ss / static_cast<double>(n))};
  }
};

inline std::vector<EvalPoint> read_evals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<EvalPoint> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("step").get<std::uint64_t>(), j.at("test_accuracy").get<double>(),
                     j.at("train_accuracy").get<double>(), j.at("test_expected_accuracy").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InputError("no manifest.json in " + dir.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.at("schema").get<std::string>() != kRunSchema) throw InputError(dir.string() + ": run schema mismatch");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(dir.string() + "/manifest.json: " + e.what());
  }
}

inline RunSummary summarize_run_dir(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  const auto cfg = config_from_json(manifest.at("config"));
  RunSummary rs;
  rs.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
  rs.mode = manifest.at("mode").get<std::string>();
  rs.seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
  for (auto s : rs.seeds) {
    const auto sd = dir / ("seed_" + std::to_string(s));
    const auto recs = read_metrics_log((sd / "metrics.jsonl").string());
    const auto evals = read_evals((sd / "eval.jsonl").string());
    rs.per_seed.push_back(summarize_seed(recs, evals, cfg.window));
  }
  return rs;
}

// ---------------------------------------------------------------------------
// Comparison tables (CSV). One row per run: seed mean and population std of
// every summary column, then the difference of each mean from the first run.

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << x;
  return os.str();
}

inline std::string comparison_csv(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw InputError("compare: no runs");
  const auto cols = runs.front().columns();
  for (const auto& r : runs) {
    if (r.columns() != cols) throw InputError("compare: schema mismatch between runs");
  }
  std::ostringstream os;
  os << "run,mode,seeds";
  for (const auto& c : cols) os << ',' << c << "_mean," << c << "_std";
  for (const auto& c : cols) os << ",delta_" << c;
  os << '\n';
  for (const auto& r : runs) {
    os << r.name << ',' << r.mode << ',' << r.seeds.size();
    for (const auto& c : cols) {
      const auto [m, sd] = r.stat(c);
      os << ',' << format_number(m) << ',' << format_number(sd);
    }
    for (const auto& c : cols) os << ',' << format_number(r.stat(c).first - runs.front().stat(c).first);
    os << '\n';
  }
  return os.str();
}

inline std::string compare(const std::vector<std::filesystem::path>& dirs) {
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(summarize_run_dir(d));
  return comparison_csv(runs);
}

// ---------------------------------------------------------------------------
// Whole runs

struct RunManifest {
  std::string run_id;
  GuidanceMode mode = GuidanceMode::hint;
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out;

  nlohmann::json to_json() const {
    nlohmann::json outputs = nlohmann::json::object();
    for (auto s : seeds) outputs[std::to_string(s)] = "seed_" + std::to_string(s);
    return {{"schema", kRunSchema},
            {"run_id", run_id},
            {"mode", to_string(mode)},
            {"version", kVersion},
            {"seeds", seeds},
            {"config", config_to_json(config)},
            {"outputs", outputs}};
  }
};

inline std::string make_run_id(const ExperimentConfig& cfg, GuidanceMode mode, const std::vector<std::uint64_t>& seeds) {
  const auto text = config_to_json(cfg).dump() + to_string(mode) + nlohmann::json(seeds).dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
  std::ostringstream os;
  os << to_string(mode) << '-' << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Trains every seed (in parallel up to `threads`) and writes the run
/// directory. Returns the in-memory results in seed order.
inline std::vector<SeedRun> run(const ExperimentConfig& cfg, GuidanceMode mode, const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& out, std::size_t threads = 1) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (seeds.empty()) throw ConfigError("run: no seeds given");
  fs::create_directories(out);
  RunManifest manifest{make_run_id(cfg, mode, seeds), mode, cfg, seeds, out};
  {
    std::ofstream mf(out / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write " + (out / "manifest.json").string());
    mf << manifest.to_json().dump(2) << '\n';
  }

  std::vector<SeedRun> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  auto work = [&](std::size_t i) {
    try {
      results[i] = run_seed(cfg, mode, seeds[i], out / ("seed_" + std::to_string(seeds[i])));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, seeds.size());
  for (std::size_t b = 0; b < seeds.size(); b += threads) {
    std::vector<std::jthread> pool;
    for (std::size_t i = b; i < std::min(seeds.size(), b + threads); ++i) pool.emplace_back(work, i);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::ofstream(out / "summary.csv") << compare({out});
  return results;
}

/// Thread count from HINTRL_THREADS (default 1).
inline std::size_t env_threads() {
  if (const char* s = std::getenv("HINTRL_THREADS")) {
    try {
      return std::max<std::size_t>(1, std::stoul(s));
    } catch (...) {
      throw ConfigError("HINTRL_THREADS is not a number");
    }
  }
  return 1;
}

/// Relative output paths resolve against HINTRL_OUT_ROOT when set.
inline std::filesystem::path resolve_out(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("HINTRL_OUT_ROOT")) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace hintrl
