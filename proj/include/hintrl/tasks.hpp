#pragma once

// Constraint-lock task family.
//
// Every task shows a question string of L cue symbols over the vocabulary.
// The answer is obtained position-wise through a hidden per-position
// permutation (the "lock cipher") shared by all tasks drawn from one seed,
// so a policy that learns the cipher on the train split generalizes to the
// held-out split. A heuristic hint narrows each position to a small
// candidate set that always contains the answer; an answer-level hint
// forces a prefix of the ground-truth answer.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hintrl/core.hpp"

namespace hintrl {

enum class Split { train, test };
enum class HintMode { none, heuristic, answer_prefix };
enum class Phase { rollout, policy };

/// Parameter bucket of a context (the hint fingerprint). Each hint kind
/// changes the prompt and therefore reads its own rows.
enum class Bucket : std::uint8_t { plain = 0, heuristic = 1, answer_prefix = 2 };
inline constexpr std::size_t kBucketCount = 3;

struct Difficulty {
  std::size_t length = 4;  // L
  std::size_t vocab = 8;   // V

  void validate() const {
    if (length == 0) throw ConfigError("difficulty: answer length L must be >= 1");
    if (vocab < 2) throw ConfigError("difficulty: vocabulary size V must be >= 2");
  }
  bool operator==(const Difficulty&) const = default;
};

/// Number of policy table rows needed for tasks of this difficulty.
inline std::size_t table_rows(const Difficulty& d) {
  return kBucketCount * d.length * d.vocab;
}

inline std::size_t row_index(const Difficulty& d, Bucket b, std::size_t position, Token cue) {
  return (static_cast<std::size_t>(b) * d.length + position) * d.vocab + cue;
}

struct HintSpec {
  HintMode mode = HintMode::none;
  std::size_t prefix_len = 0;  // answer_prefix only
  double narrowing_factor = 0.25;

  void validate(std::size_t length) const {
    if (!(narrowing_factor > 0.0 && narrowing_factor <= 1.0)) {
      throw ConfigError("hint: narrowing_factor must lie in (0, 1]");
    }
    if (mode == HintMode::answer_prefix && prefix_len >= length) {
      throw ConfigError("hint: prefix_len must be smaller than the answer length");
    }
  }
};

struct Task {
  std::uint64_t task_id = 0;
  TokenSeq question;                   // cue symbols, one per position
  TokenSeq answer;
  std::vector<TokenSeq> candidates;    // heuristic hint, sorted per position
  Difficulty difficulty;
  Split split = Split::train;

  std::size_t length() const { return answer.size(); }

  /// Size of the unhinted answer space, V^L (saturates at double range).
  double answer_space() const {
    return std::pow(static_cast<double>(difficulty.vocab), static_cast<double>(length()));
  }
  /// Size of the answer space under the heuristic hint.
  double hinted_space() const {
    double s = 1.0;
    for (const auto& c : candidates) s *= static_cast<double>(c.size());
    return s;
  }
};

/// What the policy conditions on at each response position.
struct Context {
  std::vector<std::size_t> rows;          // policy table row per position
  std::vector<TokenSeq> candidates;       // empty: whole vocabulary
  TokenSeq forced_prefix;                 // emitted verbatim by the sampler

  std::size_t length() const { return rows.size(); }
  bool masked() const { return !candidates.empty(); }
  bool hinted() const { return masked() || !forced_prefix.empty(); }
  bool operator==(const Context&) const = default;
};

/// Number of candidates a heuristic hint keeps per position.
inline std::size_t candidate_count(std::size_t vocab, double narrowing_factor) {
  const auto n = static_cast<std::size_t>(std::llround(narrowing_factor * static_cast<double>(vocab)));
  return std::clamp<std::size_t>(n, 2, vocab);
}

/// Hint-free context of a task. Evaluation goes through this function only.
inline Context plain_context(const Task& task) {
  Context ctx;
  ctx.rows.reserve(task.length());
  for (std::size_t p = 0; p < task.length(); ++p) {
    ctx.rows.push_back(row_index(task.difficulty, Bucket::plain, p, task.question[p]));
  }
  return ctx;
}

inline Context render_context(const Task& task, const HintSpec& hint, bool decoupled, Phase phase) {
  if (hint.mode == HintMode::none || (phase == Phase::policy && decoupled)) {
    return plain_context(task);
  }
  Context ctx = plain_context(task);
  if (hint.mode == HintMode::heuristic) {
    for (std::size_t p = 0; p < task.length(); ++p) {
      ctx.rows[p] = row_index(task.difficulty, Bucket::heuristic, p, task.question[p]);
    }
    ctx.candidates = task.candidates;
  } else {
    for (std::size_t p = 0; p < task.length(); ++p) {
      ctx.rows[p] = row_index(task.difficulty, Bucket::answer_prefix, p, task.question[p]);
    }
    const std::size_t k = std::min(hint.prefix_len, task.length());
    ctx.forced_prefix.assign(task.answer.begin(), task.answer.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return ctx;
}

/// Binary verifier: +1 iff the output reproduces the answer exactly.
inline double verify(const Task& task, std::span<const Token> output) {
  return std::equal(output.begin(), output.end(), task.answer.begin(), task.answer.end()) ? 1.0 : 0.0;
}

inline void check_task(const Task& t) {
  const auto& d = t.difficulty;
  d.validate();
  if (t.answer.size() != d.length || t.question.size() != d.length || t.candidates.size() != d.length) {
    throw InputError("task " + std::to_string(t.task_id) + ": field lengths disagree with L");
  }
  for (std::size_t p = 0; p < d.length; ++p) {
    const auto& c = t.candidates[p];
    if (t.answer[p] >= d.vocab || t.question[p] >= d.vocab) {
      throw InputError("task " + std::to_string(t.task_id) + ": token out of vocabulary");
    }
    if (c.size() < 2 || !std::is_sorted(c.begin(), c.end()) ||
        std::adjacent_find(c.begin(), c.end()) != c.end() || c.back() >= d.vocab) {
      throw InputError("task " + std::to_string(t.task_id) + ": malformed candidate set");
    }
    if (!std::binary_search(c.begin(), c.end(), t.answer[p])) {
      throw InputError("task " + std::to_string(t.task_id) + ": hint excludes the answer");
    }
  }
}

/// Deterministic task set of `count` tasks whose last `test_count` tasks
/// form the test split; question strings are unique across the whole set.
inline std::vector<Task> generate_task_split(std::uint64_t seed, std::size_t count, std::size_t test_count,
                                             Difficulty difficulty, double narrowing_factor) {
  difficulty.validate();
  if (count == 0) throw ConfigError("task set: count must be >= 1");
  if (test_count > count) throw ConfigError("task set: test_count exceeds count");
  if (!(narrowing_factor > 0.0 && narrowing_factor <= 1.0)) {
    throw ConfigError("task set: narrowing_factor must lie in (0, 1]");
  }
  const std::size_t L = difficulty.length;
  const std::size_t V = difficulty.vocab;
  const double space = std::pow(static_cast<double>(V), static_cast<double>(L));
  if (static_cast<double>(count) > space) {
    throw ConfigError("task set: more tasks requested than distinct questions exist");
  }

  Rng rng(derive_seed(seed, 0x7a5c));
  std::vector<TokenSeq> cipher(L, TokenSeq(V));
  for (auto& perm : cipher) {
    for (Token v = 0; v < V; ++v) perm[v] = v;
    rng.shuffle(perm);
  }

  std::vector<TokenSeq> questions;
  questions.reserve(count);
  if (space <= 4.0 * static_cast<double>(count)) {
    // Dense regime: enumerate the whole question space and shuffle.
    const auto total = static_cast<std::size_t>(space);
    std::vector<std::size_t> codes(total);
    for (std::size_t i = 0; i < total; ++i) codes[i] = i;
    rng.shuffle(codes);
    for (std::size_t i = 0; i < count; ++i) {
      TokenSeq q(L);
      std::size_t c = codes[i];
      for (std::size_t p = 0; p < L; ++p) {
        q[p] = static_cast<Token>(c % V);
        c /= V;
      }
      questions.push_back(std::move(q));
    }
  } else {
    std::set<TokenSeq> seen;
    while (questions.size() < count) {
      TokenSeq q(L);
      for (auto& t : q) t = static_cast<Token>(rng.below(V));
      if (seen.insert(q).second) questions.push_back(std::move(q));
    }
  }

  const std::size_t keep = candidate_count(V, narrowing_factor);
  std::vector<Task> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Task t;
    t.task_id = i;
    t.difficulty = difficulty;
    t.question = std::move(questions[i]);
    t.answer.resize(L);
    t.candidates.resize(L);
    for (std::size_t p = 0; p < L; ++p) {
      t.answer[p] = cipher[p][t.question[p]];
      TokenSeq others;
      for (Token v = 0; v < V; ++v) {
        if (v != t.answer[p]) others.push_back(v);
      }
      rng.shuffle(others);
      TokenSeq cand{t.answer[p]};
      cand.insert(cand.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep - 1));
      std::sort(cand.begin(), cand.end());
      t.candidates[p] = std::move(cand);
    }
    t.split = i + test_count >= count ? Split::test : Split::train;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

/// As generate_task_split with the last floor(count * test_fraction) tasks
/// held out.
inline std::vector<Task> generate_task_set(std::uint64_t seed, std::size_t count, Difficulty difficulty,
                                           double narrowing_factor, double test_fraction = 0.2) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("task set: test_fraction must lie in [0, 1)");
  }
  const auto test_count = static_cast<std::size_t>(std::floor(static_cast<double>(count) * test_fraction));
  return generate_task_split(seed, count, test_count, difficulty, narrowing_factor);
}

inline std::vector<Task> select_split(const std::vector<Task>& tasks, Split split) {
  std::vector<Task> out;
  for (const auto& t : tasks) {
    if (t.split == split) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited task files. One JSON object per line:
//   {"id":3,"split":"train","length":4,"vocab":8,
//    "question":[..],"answer":[..],"candidates":[[..],..]}

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw InputError("unknown split '" + std::string(s) + "'");
}

inline nlohmann::json task_to_json(const Task& t) {
  return nlohmann::json{{"id", t.task_id},
                        {"split", to_string(t.split)},
                        {"length", t.difficulty.length},
                        {"vocab", t.difficulty.vocab},
                        {"question", t.question},
                        {"answer", t.answer},
                        {"candidates", t.candidates}};
}

inline Task task_from_json(const nlohmann::json& j) {
  Task t;
  try {
    t.task_id = j.at("id").get<std::uint64_t>();
    t.split = parse_split(j.at("split").get<std::string>());
    t.difficulty = {j.at("length").get<std::size_t>(), j.at("vocab").get<std::size_t>()};
    t.question = j.at("question").get<TokenSeq>();
    t.answer = j.at("answer").get<TokenSeq>();
    t.candidates = j.at("candidates").get<std::vector<TokenSeq>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("task record: ") + e.what());
  }
  try {
    check_task(t);
  } catch (const ConfigError& e) {
    throw InputError(e.what());
  }
  return t;
}

inline void write_tasks(const std::string& path, const std::vector<Task>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& t : tasks) out << task_to_json(t).dump() << '\n';
}

inline std::vector<Task> read_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  std::vector<Task> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
    tasks.push_back(task_from_json(j));
  }
  return tasks;
}

}  // namespace hintrl
