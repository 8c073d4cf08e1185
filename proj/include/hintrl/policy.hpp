#pragma once

// Tabular softmax policy over (row, token). A context selects one row per
// response position and optionally restricts the support to a candidate
// set; the policy does not condition on earlier response tokens, so the
// factorization over positions is exact.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hintrl/core.hpp"
#include "hintrl/tasks.hpp"

namespace hintrl {

/// Dense rows x vocab table of reals. Shared storage for parameters and
/// gradients.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t vocab) : rows_(rows), vocab_(vocab), data_(rows * vocab, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t vocab() const { return vocab_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * vocab_, vocab_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * vocab_, vocab_}; }
  double& at(std::size_t r, std::size_t v) { return data_[r * vocab_ + v]; }
  double at(std::size_t r, std::size_t v) const { return data_[r * vocab_ + v]; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  bool same_shape(const Table& o) const { return rows_ == o.rows_ && vocab_ == o.vocab_; }
  bool operator==(const Table&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t vocab_ = 0;
  std::vector<double> data_;
};

/// Policy logits. All-zero (uniform) at construction.
struct PolicyParams {
  Table logits;

  PolicyParams() = default;
  PolicyParams(std::size_t rows, std::size_t vocab) : logits(rows, vocab) {}
  explicit PolicyParams(const Difficulty& d) : logits(table_rows(d), d.vocab) {}

  std::size_t rows() const { return logits.rows(); }
  std::size_t vocab() const { return logits.vocab(); }
  bool operator==(const PolicyParams&) const = default;
};

/// d(objective)/d(logits), same shape as the parameters.
struct Gradient {
  Table values;

  Gradient() = default;
  explicit Gradient(const PolicyParams& like) : values(like.rows(), like.vocab()) {}
};

/// How the tokens of a trajectory came to be.
enum class Origin : std::uint8_t {
  policy,    // sampled (or forced) under a policy context
  injected,  // supplied from outside, e.g. a ground-truth answer
};

struct Trajectory {
  TokenSeq tokens;
  std::vector<double> old_logprobs;  // behaviour log-probs, one per token (0 when forced)
  Context sampling_context;
  double reward = 0.0;
  bool hinted = false;
  Origin origin = Origin::policy;
};

namespace detail {

inline void check_position(const PolicyParams& params, const Context& ctx, std::size_t p) {
  if (p >= ctx.length()) throw InputError("position beyond context length");
  if (ctx.rows[p] >= params.rows()) throw InputError("context row outside the parameter table");
  if (ctx.masked() && ctx.candidates.size() != ctx.length()) {
    throw InputError("candidate sets do not cover every position");
  }
}

/// Support of the context distribution at position p.
inline void support(const PolicyParams& params, const Context& ctx, std::size_t p, TokenSeq& out) {
  out.clear();
  if (ctx.masked()) {
    out = ctx.candidates[p];
  } else {
    out.resize(params.vocab());
    for (Token v = 0; v < params.vocab(); ++v) out[v] = v;
  }
}

/// Untempered probabilities over the full vocabulary (zero off-support).
inline std::vector<double> probabilities(const PolicyParams& params, const Context& ctx, std::size_t p,
                                         double inv_temperature = 1.0) {
  check_position(params, ctx, p);
  const auto z = params.logits.row(ctx.rows[p]);
  TokenSeq sup;
  support(params, ctx, p, sup);
  double m = -std::numeric_limits<double>::infinity();
  for (Token v : sup) m = std::max(m, z[v] * inv_temperature);
  std::vector<double> prob(params.vocab(), 0.0);
  double s = 0.0;
  for (Token v : sup) {
    prob[v] = std::exp(z[v] * inv_temperature - m);
    s += prob[v];
  }
  for (Token v : sup) prob[v] /= s;
  return prob;
}

/// log pi(token) at position p; the forced prefix is ignored (forced tokens
/// are scored by the policy as if it had produced them).
inline double token_logprob(const PolicyParams& params, const Context& ctx, std::size_t p, Token token) {
  check_position(params, ctx, p);
  if (token >= params.vocab()) throw InputError("token out of vocabulary");
  if (ctx.masked() && !std::binary_search(ctx.candidates[p].begin(), ctx.candidates[p].end(), token)) {
    throw InputError("token outside the context support");
  }
  const auto z = params.logits.row(ctx.rows[p]);
  double lse;
  if (ctx.masked()) {
    std::vector<double> sub;
    sub.reserve(ctx.candidates[p].size());
    for (Token v : ctx.candidates[p]) sub.push_back(z[v]);
    lse = log_sum_exp(sub);
  } else {
    lse = log_sum_exp(z);
  }
  return z[token] - lse;
}

}  // namespace detail

/// Exact per-token log-probabilities of `tokens` under `ctx`.
inline std::vector<double> logprob(const PolicyParams& params, std::span<const Token> tokens, const Context& ctx) {
  if (tokens.size() > ctx.length()) throw InputError("more tokens than context positions");
  std::vector<double> out(tokens.size());
  for (std::size_t p = 0; p < tokens.size(); ++p) out[p] = detail::token_logprob(params, ctx, p, tokens[p]);
  return out;
}

/// Samples one response. Temperature shapes the draw only; recorded
/// log-probs are untempered. `max_response` truncates (0 = full length).
inline Trajectory sample(const PolicyParams& params, const Context& ctx, double temperature, Rng& rng,
                         std::size_t max_response = 0) {
  if (!(temperature > 0.0)) throw ConfigError("sampling temperature must be > 0");
  const std::size_t n = max_response == 0 ? ctx.length() : std::min(max_response, ctx.length());
  Trajectory traj;
  traj.sampling_context = ctx;
  traj.hinted = ctx.hinted();
  traj.tokens.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    Token tok;
    if (p < ctx.forced_prefix.size()) {
      tok = ctx.forced_prefix[p];
    } else {
      const auto prob = detail::probabilities(params, ctx, p, 1.0 / temperature);
      const double u = rng.uniform();
      double acc = 0.0;
      tok = 0;
      Token last_supported = 0;
      bool chosen = false;
      for (Token v = 0; v < prob.size(); ++v) {
        if (prob[v] <= 0.0) continue;
        last_supported = v;
        acc += prob[v];
        if (u < acc) {
          tok = v;
          chosen = true;
          break;
        }
      }
      if (!chosen) tok = last_supported;  // u landed in the rounding gap
    }
    traj.tokens.push_back(tok);
  }
  traj.old_logprobs = logprob(params, traj.tokens, ctx);
  // The sampler emits forced tokens with certainty: behaviour log-prob 0.
  for (std::size_t p = 0; p < std::min(n, ctx.forced_prefix.size()); ++p) traj.old_logprobs[p] = 0.0;
  return traj;
}

/// Shannon entropy (nats) of the context distribution at `position`.
inline double entropy(const PolicyParams& params, const Context& ctx, std::size_t position) {
  const auto prob = detail::probabilities(params, ctx, position);
  double h = 0.0;
  for (double q : prob) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return std::max(h, 0.0);
}

namespace detail {

inline double row_kl(const PolicyParams& a, const PolicyParams& b, const Context& ctx, std::size_t p) {
  const auto pa = probabilities(a, ctx, p);
  const auto pb = probabilities(b, ctx, p);
  double kl = 0.0;
  for (std::size_t v = 0; v < pa.size(); ++v) {
    if (pa[v] > 0.0) kl += pa[v] * (std::log(pa[v]) - std::log(pb[v]));
  }
  return std::max(kl, 0.0);
}

}  // namespace detail

/// KL(a || b) summed over the positions of `ctx`.
inline double kl(const PolicyParams& a, const PolicyParams& b, const Context& ctx) {
  if (!a.logits.same_shape(b.logits)) throw InputError("kl: parameter shapes differ");
  double total = 0.0;
  for (std::size_t p = 0; p < ctx.length(); ++p) total += detail::row_kl(a, b, ctx, p);
  return total;
}

/// grad += scale * d log pi(token | ctx, p) / d logits.
inline void add_grad_logprob(Gradient& grad, const PolicyParams& params, const Context& ctx, std::size_t p,
                             Token token, double scale) {
  const auto prob = detail::probabilities(params, ctx, p);
  auto g = grad.values.row(ctx.rows[p]);
  for (std::size_t v = 0; v < prob.size(); ++v) g[v] -= scale * prob[v];
  g[token] += scale;
}

/// grad += scale * d KL(params || ref)(row at p) / d logits.
inline void add_grad_kl(Gradient& grad, const PolicyParams& params, const PolicyParams& ref, const Context& ctx,
                        std::size_t p, double scale) {
  const auto pa = detail::probabilities(params, ctx, p);
  const auto pb = detail::probabilities(ref, ctx, p);
  double kl = 0.0;
  for (std::size_t v = 0; v < pa.size(); ++v) {
    if (pa[v] > 0.0) kl += pa[v] * (std::log(pa[v]) - std::log(pb[v]));
  }
  auto g = grad.values.row(ctx.rows[p]);
  for (std::size_t v = 0; v < pa.size(); ++v) {
    if (pa[v] > 0.0) g[v] += scale * pa[v] * ((std::log(pa[v]) - std::log(pb[v])) - kl);
  }
}

/// Gradient of sum_t log pi(tokens[t]) w.r.t. the logits. Rows the context
/// does not visit stay zero.
inline Gradient grad_logprob(const PolicyParams& params, std::span<const Token> tokens, const Context& ctx) {
  if (tokens.size() > ctx.length()) throw InputError("more tokens than context positions");
  Gradient g(params);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p] >= params.vocab()) throw InputError("token out of vocabulary");
    add_grad_logprob(g, params, ctx, p, tokens[p], 1.0);
  }
  return g;
}

/// Greedy decode: argmax per position, ties to the lowest token id.
inline TokenSeq greedy_decode(const PolicyParams& params, const Context& ctx) {
  TokenSeq out(ctx.length());
  for (std::size_t p = 0; p < ctx.length(); ++p) {
    const auto prob = detail::probabilities(params, ctx, p);
    out[p] = static_cast<Token>(std::max_element(prob.begin(), prob.end()) - prob.begin());
  }
  return out;
}

/// Largest |sum_v softmax - 1| over all rows.
inline double normalization_error(const PolicyParams& params) {
  double worst = 0.0;
  for (std::size_t r = 0; r < params.rows(); ++r) {
    const auto z = params.logits.row(r);
    const double lse = log_sum_exp(z);
    double s = 0.0;
    for (double x : z) s += std::exp(x - lse);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline bool all_finite(const Table& t) {
  for (double x : t.values()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints. Little-endian binary layout:
//   "HINTCKPT" | u32 version=1 | u64 step | u64 length | u64 vocab |
//   u64 rows | rows*vocab IEEE-754 doubles (bit patterns as u64)

struct Checkpoint {
  PolicyParams params;
  Difficulty difficulty;
  std::uint64_t step = 0;
};

inline constexpr char kCheckpointMagic[8] = {'H', 'I', 'N', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw InputError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, ck.step);
  detail::put_le<std::uint64_t>(out, ck.difficulty.length);
  detail::put_le<std::uint64_t>(out, ck.difficulty.vocab);
  detail::put_le<std::uint64_t>(out, ck.params.rows());
  for (double x : ck.params.logits.values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw InputError(path + ": not a checkpoint");
  }
  if (detail::get_le<std::uint32_t>(in) != kCheckpointVersion) throw InputError(path + ": unsupported version");
  Checkpoint ck;
  ck.step = detail::get_le<std::uint64_t>(in);
  ck.difficulty.length = detail::get_le<std::uint64_t>(in);
  ck.difficulty.vocab = detail::get_le<std::uint64_t>(in);
  const auto rows = detail::get_le<std::uint64_t>(in);
  ck.difficulty.validate();
  if (rows != table_rows(ck.difficulty)) throw InputError(path + ": shape header inconsistent");
  ck.params = PolicyParams(rows, ck.difficulty.vocab);
  for (double& x : ck.params.logits.values()) x = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  return ck;
}

}  // namespace hintrl
