#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hintrl/metrics.hpp"

using namespace hintrl;

namespace {

using Samples = std::vector<WeightedLogRatio>;

// Straight transcription of the definitions, kept separate from the library.
struct Oracle {
  double eur, uc, aff;
};

Oracle oracle(const Samples& s, double delta) {
  long double in = 0, tot = 0;
  for (const auto& x : s) {
    tot += x.weight;
    if (std::fabs(x.ell) <= delta) in += x.weight;
  }
  const double eur = tot > 0 ? static_cast<double>(in / tot) : 1.0;
  long double w = 0, m = 0;
  for (const auto& x : s) {
    if (std::fabs(x.ell) <= delta && x.weight > 0) {
      w += x.weight;
      m += x.weight * x.ell;
    }
  }
  double uc = 0.0;
  if (w > 0) {
    m /= w;
    long double v = 0;
    for (const auto& x : s) {
      if (std::fabs(x.ell) <= delta && x.weight > 0) v += x.weight * (x.ell - m) * (x.ell - m);
    }
    uc = static_cast<double>(std::sqrt(v / w));
  }
  return {eur, uc, eur * std::exp(-uc / (delta / 2))};
}

Samples random_samples(std::mt19937_64& g, std::size_t n, double spread) {
  std::uniform_real_distribution<double> ell(-spread, spread);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  std::bernoulli_distribution zero(0.1);
  Samples s(n);
  for (auto& x : s) x = {ell(g), zero(g) ? 0.0 : w(g)};
  return s;
}

}  // namespace

TEST(Metrics, HandExampleMixedRegion) {
  const Samples s{{0.1, 1.0}, {0.5, 3.0}};
  EXPECT_NEAR(eur(s, 0.2), 0.25, 1e-12);
  EXPECT_NEAR(uc(s, 0.2), 0.0, 1e-12);
  EXPECT_NEAR(affinity(0.25, 0.0, 0.2), 0.25, 1e-12);
}

TEST(Metrics, HandExampleSymmetricPair) {
  const Samples s{{0.1, 1.0}, {-0.1, 1.0}};
  EXPECT_NEAR(eur(s, 0.2), 1.0, 1e-12);
  EXPECT_NEAR(uc(s, 0.2), 0.1, 1e-12);
  EXPECT_NEAR(affinity(1.0, 0.1, 0.2), std::exp(-1.0), 1e-12);
  // EUR 0.25 with UC 0.1 at delta 0.2
  EXPECT_NEAR(affinity(0.25, 0.1, 0.2), 0.25 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(affinity(0.25, 0.1, 0.2), 0.0919698602928606, 1e-12);
}

TEST(Metrics, AllInRegionIdenticalRatios) {
  const Samples s{{0.05, 2.0}, {0.05, 1.0}, {0.05, 0.5}};
  EXPECT_DOUBLE_EQ(eur(s, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(uc(s, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(affinity(eur(s, 0.2), uc(s, 0.2), 0.2), 1.0);
}

TEST(Metrics, BoundaryIsInsideRegion) {
  const Samples s{{0.2, 1.0}, {-0.2, 1.0}};
  EXPECT_DOUBLE_EQ(eur(s, 0.2), 1.0);
  EXPECT_NEAR(uc(s, 0.2), 0.2, 1e-15);
}

TEST(Metrics, DegenerateInputsUseSentinel) {
  EXPECT_DOUBLE_EQ(eur({}, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(uc({}, 0.2), 0.0);
  const Samples zero_w{{0.1, 0.0}, {5.0, 0.0}};
  EXPECT_DOUBLE_EQ(eur(zero_w, 0.2), 1.0);
  EXPECT_TRUE(is_degenerate(zero_w, 0.2));
  const Samples all_out{{1.0, 1.0}, {-2.0, 2.0}};
  EXPECT_DOUBLE_EQ(eur(all_out, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(uc(all_out, 0.2), 0.0);
  EXPECT_TRUE(is_degenerate(all_out, 0.2));
  EXPECT_FALSE(is_degenerate(Samples{{0.0, 1.0}}, 0.2));
}

TEST(Metrics, NonPositiveDeltaIsAConfigError) {
  EXPECT_THROW(eur(Samples{{0.0, 1.0}}, 0.0), ConfigError);
  EXPECT_THROW(uc(Samples{{0.0, 1.0}}, -1.0), ConfigError);
  EXPECT_THROW(affinity(1.0, 0.0, 0.0), ConfigError);
}

TEST(MetricsProperty, MatchesOracleAndInvariants) {
  std::mt19937_64 g(20240611);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_real_distribution<double> dgen(0.01, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const double delta = dgen(g);
    const auto s = random_samples(g, len(g), 3.0 * delta);
    const double e = eur(s, delta);
    const double u = uc(s, delta);
    const double a = affinity(e, u, delta);
    const auto o = oracle(s, delta);
    ASSERT_NEAR(e, o.eur, 1e-12);
    ASSERT_NEAR(u, o.uc, 1e-12);
    ASSERT_NEAR(a, o.aff, 1e-12);
    ASSERT_GE(e, 0.0);
    ASSERT_LE(e, 1.0);
    ASSERT_GE(u, 0.0);
    ASSERT_LE(a, e + 1e-15);

    // weight rescaling
    const double c = scale(g);
    Samples sw = s;
    for (auto& x : sw) x.weight *= c;
    ASSERT_NEAR(eur(sw, delta), e, 1e-12);
    ASSERT_NEAR(uc(sw, delta), u, 1e-12);

    // joint rescaling of ell and delta; power-of-two factors keep the
    // region test exact
    const double k = std::ldexp(1.0, static_cast<int>(trial % 7) - 3);
    Samples sk = s;
    for (auto& x : sk) x.ell *= k;
    ASSERT_NEAR(eur(sk, delta * k), e, 1e-12);
    ASSERT_NEAR(uc(sk, delta * k), u * k, 1e-12 * std::max(1.0, k));
    ASSERT_NEAR(affinity(eur(sk, delta * k), uc(sk, delta * k), delta * k), a, 1e-12);

    // pushing one positively weighted in-region sample across the boundary
    // never raises EUR
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i].weight > 0 && std::fabs(s[i].ell) <= delta) {
        Samples sb = s;
        sb[i].ell = (s[i].ell >= 0 ? 1.0 : -1.0) * delta * 1.5;
        ASSERT_LT(eur(sb, delta), e + 1e-15);
        break;
      }
    }
  }
}

TEST(MetricsProperty, WeightedStdIsTranslationInvariantInsideRegion) {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> ell(-0.05, 0.05);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Samples s(10), t(10);
    for (std::size_t i = 0; i < 10; ++i) {
      s[i] = {ell(g), w(g)};
      t[i] = {s[i].ell + 0.1, s[i].weight};
    }
    ASSERT_NEAR(uc(s, 1.0), uc(t, 1.0), 1e-12);
  }
}

TEST(Entropy, PartitionsByHintUsage) {
  const std::vector<StateEntropy> st{{1.0, true}, {3.0, true}, {0.5, false}};
  const auto r = summarize_entropy(st);
  EXPECT_DOUBLE_EQ(*r.mean_all, 1.5);
  EXPECT_DOUBLE_EQ(*r.mean_hinted, 2.0);
  EXPECT_DOUBLE_EQ(*r.mean_unhinted, 0.5);
  const auto none = summarize_entropy(std::vector<StateEntropy>{{0.5, false}});
  EXPECT_FALSE(none.mean_hinted.has_value());
  EXPECT_FALSE(summarize_entropy({}).mean_all.has_value());
}

TEST(Aggregate, SlidingWindowMeans) {
  const std::vector<double> xs{1, 2, 3, 4, 5};
  EXPECT_EQ(aggregate(xs, 2), (std::vector<double>{1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(aggregate(xs, 5), (std::vector<double>{3.0}));
  EXPECT_TRUE(aggregate(xs, 6).empty());
  EXPECT_THROW(aggregate(xs, 0), ConfigError);
}

namespace {

StepTrace synthetic_trace(std::uint64_t step, std::mt19937_64& g) {
  StepTrace tr;
  tr.step = step;
  tr.delta = std::log1p(0.2);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  std::bernoulli_distribution coin(0.3);
  for (std::uint64_t k = 0; k < 3; ++k) {
    GroupTrace gt{k, coin(g), false, {}, {}};
    for (int i = 0; i < 4; ++i) {
      gt.rewards.push_back(coin(g) ? 1.0 : 0.0);
      gt.stage1_rewards.push_back(0.0);
    }
    tr.groups.push_back(gt);
  }
  for (int i = 0; i < 24; ++i) tr.samples.push_back({u(g) / 3.0, std::abs(u(g)) * 7.0});
  for (int i = 0; i < 12; ++i) tr.entropies.push_back({std::abs(u(g)) * 5.0, coin(g)});
  tr.clip_fraction = std::abs(u(g));
  return tr;
}

}  // namespace

TEST(MetricsRecord, ComputedFields) {
  StepTrace tr;
  tr.delta = 0.2;
  tr.groups = {{0, true, false, {1, 0, 0, 0}, {0, 0, 0, 0}}, {1, false, false, {0, 0, 0, 0}, {0, 0, 0, 0}}};
  tr.samples = {{0.1, 1.0}, {0.5, 3.0}};
  tr.entropies = {{1.0, true}, {2.0, false}};
  const auto m = compute_record(tr, 0.2);
  EXPECT_NEAR(m.eur, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(m.valid_fraction, 0.5);
  EXPECT_DOUBLE_EQ(m.hint_fraction, 0.5);
  EXPECT_DOUBLE_EQ(m.mean_reward, 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(*m.mean_entropy, 1.5);
  EXPECT_FALSE(m.degenerate);
}

TEST(MetricsRecord, JsonRoundTripIsBitExact) {
  std::mt19937_64 g(3);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto m = compute_record(synthetic_trace(s, g), std::log1p(0.2));
    const auto back = record_from_json(nlohmann::json::parse(record_to_json(m).dump()));
    EXPECT_EQ(back, m);
  }
  auto j = record_to_json(MetricsRecord{});
  j["schema"] = "other/1";
  EXPECT_THROW(record_from_json(j), InputError);
}

TEST(Trace, OfflineRecomputeReproducesOnlineRecords) {
  std::mt19937_64 g(99);
  const auto dir = std::filesystem::temp_directory_path();
  const auto trace_path = (dir / "hintrl_trace_test.jsonl").string();
  std::vector<MetricsRecord> online;
  {
    std::ofstream out(trace_path);
    for (std::uint64_t s = 0; s < 30; ++s) {
      const auto tr = synthetic_trace(s, g);
      online.push_back(compute_record(tr, tr.delta));
      for (const auto& line : trace_to_json(tr)) out << line.dump() << '\n';
    }
  }
  const auto offline = recompute_from_trace(trace_path);
  ASSERT_EQ(offline.size(), online.size());
  for (std::size_t i = 0; i < online.size(); ++i) {
    EXPECT_EQ(record_to_json(offline[i]).dump(), record_to_json(online[i]).dump());
  }
  // a different delta changes the region test
  const auto wide = recompute_from_trace(trace_path, 10.0);
  for (const auto& r : wide) EXPECT_DOUBLE_EQ(r.eur, 1.0);
}

TEST(Trace, MalformedFilesAreInputErrors) {
  const auto path = (std::filesystem::temp_directory_path() / "hintrl_bad_trace.jsonl").string();
  {
    std::ofstream(path) << "{\"schema\":\"hintrl.trace/1\",\"type\":\"rollout\",\"step\":0,\"task_id\":1,"
                           "\"used_hint\":false,\"injected\":false,\"rewards\":[0],\"stage1_rewards\":[0]}\n";
  }
  EXPECT_THROW(recompute_from_trace(path), InputError);
  { std::ofstream(path) << "not json\n"; }
  EXPECT_THROW(recompute_from_trace(path), InputError);
  EXPECT_THROW(recompute_from_trace("/nonexistent/trace.jsonl"), InputError);
}

TEST(MetricsProperty, OutOfRegionSamplesDoNotMoveUc) {
  std::mt19937_64 g(41);
  std::uniform_real_distribution<double> far(0.3, 5.0);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    auto s = random_samples(g, 12, 0.25);
    const double before = uc(s, 0.2);
    for (int k = 0; k < 5; ++k) s.push_back({(k % 2 ? -1.0 : 1.0) * far(g), w(g)});
    ASSERT_EQ(uc(s, 0.2), before);
  }
}

TEST(MetricsProperty, AffinityStrictlyDecreasingInUc) {
  for (double e : {0.1, 0.5, 1.0}) {
    double prev = affinity(e, 0.0, 0.2);
    EXPECT_DOUBLE_EQ(prev, e);
    EXPECT_NEAR(affinity(e, 0.1, 0.2), e / std::exp(1.0), 1e-15);
    for (double u = 0.01; u < 0.5; u += 0.01) {
      const double a = affinity(e, u, 0.2);
      EXPECT_LT(a, prev);
      prev = a;
    }
  }
}

TEST(Aggregate, IdentityAndConstantWindows) {
  const std::vector<double> xs{0.3, 0.1, 0.7};
  EXPECT_EQ(aggregate(xs, 1), xs);
  const std::vector<double> c(10, 0.42);
  for (double x : aggregate(c, 4)) EXPECT_DOUBLE_EQ(x, 0.42);
}

TEST(Entropy, UniformPolicyGivesLogV) {
  const PolicyParams p(table_rows({3, 5}), 5);
  RolloutGroup g;
  const auto t = generate_task_set(2, 2, {3, 5}, 0.5)[0];
  g.rollout_context = plain_context(t);
  g.used_hint = false;
  RolloutGroup h = g;
  h.rollout_context = render_context(t, HintSpec{HintMode::answer_prefix, 1, 0.5}, false, Phase::rollout);
  h.used_hint = true;
  const std::vector<RolloutGroup> groups{g, h};
  const auto r = entropy_report(p, groups);
  EXPECT_NEAR(*r.mean_all, std::log(5.0), 1e-15);
  EXPECT_NEAR(*r.mean_hinted, std::log(5.0), 1e-15);
  EXPECT_NEAR(*r.mean_unhinted, std::log(5.0), 1e-15);
  // forced positions are not generated and are not counted
  EXPECT_EQ(visited_state_entropies(p, groups).size(), 3u + 2u);
}
