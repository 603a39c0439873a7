#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace grusm;
using namespace grusm::testing;

namespace {

Curve constant(double v, std::size_t n = 200) { return Curve(n, v); }

RunSummary summary(std::string game, std::string env, Condition c, std::string source, std::uint64_t seed,
                   Curve curve) {
  RunSummary s;
  s.game = std::move(game);
  s.env = std::move(env);
  s.condition = c;
  s.source_game = std::move(source);
  s.seed = seed;
  s.max_score = curve.back();
  s.curve = std::move(curve);
  return s;
}

Curve ramp(double start, double slope, std::size_t n) {
  Curve c(n);
  for (std::size_t g = 0; g < n; ++g) c[g] = start + slope * static_cast<double>(g);
  return c;
}

}  // namespace

TEST(Sampling, ReferenceAndScaled) {
  EXPECT_EQ(sample_generations(200), (std::vector<std::size_t>{1, 10, 50, 100, 200}));
  EXPECT_EQ(sample_generations(30), (std::vector<std::size_t>{1, 2, 8, 15, 30}));
  EXPECT_EQ(sample_generations(1), (std::vector<std::size_t>{1, 1, 1, 1, 1}));
}

TEST(Success, SumsMeanCurveAtSamples) {
  const auto s = sample_generations(200);
  EXPECT_DOUBLE_EQ(success({constant(100)}, s), 500.0);
  EXPECT_DOUBLE_EQ(success({constant(100), constant(200)}, s), 750.0);
  EXPECT_DOUBLE_EQ(success({ramp(1, 1, 200)}, s), 1 + 10 + 50 + 100 + 200);
  EXPECT_THROW(success({constant(1, 150)}, s), ConfigError);
  EXPECT_THROW(success({}, s), ConfigError);
}

TEST(TransferEffectiveness, Examples) {
  const auto s = sample_generations(200);
  EXPECT_DOUBLE_EQ(transfer_effectiveness({constant(7)}, {constant(7)}, 3.0, s), 0.0);
  EXPECT_DOUBLE_EQ(transfer_effectiveness({constant(20)}, {constant(10)}, 200.0, s), 0.25);
  EXPECT_DOUBLE_EQ(max_score_range({10, 30, 50}), 40.0);
  EXPECT_DOUBLE_EQ(transfer_effectiveness({constant(12)}, {constant(10)}, max_score_range({10, 30, 50}), s), 0.25);
  EXPECT_THROW(transfer_effectiveness({constant(1)}, {constant(1)}, 0.0, s), ConfigError);
}

TEST(TransferEffectiveness, AntisymmetricAndScaleFree) {
  Rng rng(5);
  const auto s = sample_generations(50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Curve> a, b;
    for (int k = 0; k < 3; ++k) {
      a.push_back(ramp(std::abs(grusm::testing::uni(rng, 5)), std::abs(grusm::testing::uni(rng)), 50));
      b.push_back(ramp(std::abs(grusm::testing::uni(rng, 5)), std::abs(grusm::testing::uni(rng)), 50));
    }
    const double range = 1.0 + std::abs(grusm::testing::uni(rng, 10));
    const double te = transfer_effectiveness(a, b, range, s);
    EXPECT_NEAR(te, -transfer_effectiveness(b, a, range, s), 1e-12);
    const double k = 0.5 + std::abs(grusm::testing::uni(rng, 3));
    auto scale = [k](std::vector<Curve> v) {
      for (auto& c : v)
        for (auto& x : c) x *= k;
      return v;
    };
    EXPECT_NEAR(transfer_effectiveness(scale(a), scale(b), k * range, s), te, 1e-12);
  }
}

TEST(TrainingComplexity, ThreeRunFixture) {
  const auto tc = training_complexity({{1, 5, 10}, {10, 15, 20}, {5, 12, 30}});
  EXPECT_EQ(tc.threshold, 10.0);
  EXPECT_EQ(tc.mean_generations, 2.0);
}

TEST(TrainingComplexity, FirstCrossingOfWeakestMax) {
  const auto tc = training_complexity({{1, 3, 5, 5}, {2, 4, 4, 4}, {0, 1, 2, 6}});
  EXPECT_DOUBLE_EQ(tc.threshold, 4.0);
  EXPECT_DOUBLE_EQ(tc.mean_generations, (3.0 + 2.0 + 4.0) / 3.0);
  const auto two = training_complexity({{0, 5, 9}, {1, 9, 9}});
  EXPECT_DOUBLE_EQ(two.threshold, 9.0);
  EXPECT_DOUBLE_EQ(two.mean_generations, 2.5);
  EXPECT_DOUBLE_EQ(training_complexity({{3, 3}, {1, 3}}).mean_generations, 1.5);
  EXPECT_THROW(training_complexity({}), ConfigError);
}

TEST(Indicators, Example) {
  const auto hs = GameFeatures::parse_letters("hs");
  const auto hv = GameFeatures::parse_letters("hv");
  const auto x = indicators(hs, hv, 12.5, 30.0);
  EXPECT_EQ(x.feature_similarity, 1);
  EXPECT_EQ(x.source_feature_complexity, 2);
  EXPECT_EQ(x.target_feature_complexity, 2);
  EXPECT_EQ(x.values(), (std::array<double, 5>{1, 2, 2, 12.5, 30.0}));
  EXPECT_EQ(indicators(hs, hs, 1, 1).feature_similarity, 2);
  EXPECT_EQ(indicators(GameFeatures{}, hs, 1, 1).feature_similarity, 0);
}

TEST(Pearson, AgainstOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(12), b(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = grusm::testing::uni(rng);
      b[i] = 0.5 * a[i] + grusm::testing::uni(rng);
    }
    const auto c = pearson(a, b);
    ASSERT_TRUE(c.defined);
    const double r = pearson_oracle(a, b);
    EXPECT_NEAR(c.r, r, 1e-12);
    const double t = r * std::sqrt(10.0 / (1.0 - r * r));
    EXPECT_NEAR(c.p, t_pvalue(t, 10.0), 1e-8);
  }
  EXPECT_FALSE(pearson({1, 1, 1, 1}, {1, 2, 3, 4}).defined);
  EXPECT_FALSE(pearson({1, 2}, {1, 2}).defined);
  const auto perfect = pearson({1, 2, 3, 4}, {-2, -4, -6, -8});
  EXPECT_TRUE(perfect.defined);
  EXPECT_DOUBLE_EQ(perfect.r, -1.0);
  EXPECT_EQ(perfect.p, 0.0);
}

TEST(LeaveOneOut, MatchesNormalEquationsOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pairs = random_pairs(seed, 10, 5);
    const auto res = loo_predict(pairs);
    EXPECT_FALSE(res.rank_deficient);
    std::vector<double> expected;
    for (const auto& held : pairs) {
      std::vector<std::array<double, 6>> x;
      std::vector<double> y;
      for (const auto& p : pairs)
        if (p.target != held.target) {
          x.push_back(row(p.x));
          y.push_back(p.te);
        }
      const auto beta = normal_equations(x, y);
      const auto h = row(held.x);
      double pred = 0.0;
      for (int k = 0; k < 6; ++k) pred += beta[k] * h[k];
      expected.push_back(pred);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_NEAR(res.predictions[i], expected[i], 1e-8) << seed;
    std::vector<double> actual;
    for (const auto& p : pairs) actual.push_back(p.te);
    EXPECT_NEAR(res.r, pearson_oracle(expected, actual), 1e-8);
    ASSERT_EQ(res.coefficients.size(), 6u);
  }
}

TEST(LeaveOneOut, PerfectlyLinearDataGivesUnitCorrelation) {
  auto pairs = random_pairs(21, 12, 4);
  for (auto& p : pairs) {
    const auto v = p.x.values();
    p.te = 0.3 - 0.2 * v[0] + 0.1 * v[1] + 0.05 * v[2] - 0.01 * v[3] + 0.02 * v[4];
  }
  const auto res = loo_predict(pairs);
  EXPECT_TRUE(res.r_defined);
  EXPECT_NEAR(res.r, 1.0, 1e-12);
  EXPECT_NEAR(res.coefficients[0], 0.3, 1e-9);
  EXPECT_NEAR(res.coefficients[1], -0.2, 1e-9);
  EXPECT_NEAR(res.coefficients[5], 0.02, 1e-9);
}

TEST(LeaveOneOut, ConstantTeLeavesCorrelationUndefined) {
  auto pairs = random_pairs(3, 10, 3);
  for (auto& p : pairs) p.te = 0.25;
  const auto res = loo_predict(pairs);
  EXPECT_FALSE(res.r_defined);
}

TEST(LeaveOneOut, HeldOutTargetDoesNotLeakIntoItsFold) {
  const auto pairs = random_pairs(9, 12, 3);
  const auto base = loo_predict(pairs);
  auto changed = pairs;
  for (auto& p : changed)
    if (p.target == "g1") p.te += 100.0;
  const auto res = loo_predict(changed);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pairs[i].target == "g1") EXPECT_NEAR(res.predictions[i], base.predictions[i], 1e-9);
    else EXPECT_GT(std::abs(res.predictions[i] - base.predictions[i]), 1e-6);
}

TEST(LeaveOneOut, SingularDesignIsFlagged) {
  auto pairs = random_pairs(4, 10, 3);
  for (auto& p : pairs) p.x.source_feature_complexity = 2;  // collinear with the intercept
  EXPECT_TRUE(loo_predict(pairs).rank_deficient);
}

TEST(LeaveOneOut, RejectsTooFewPairsOrTargets) {
  EXPECT_THROW(loo_predict(random_pairs(1, 7, 3)), ConfigError);
  EXPECT_THROW(loo_predict(random_pairs(1, 9, 1)), ConfigError);
}

TEST(TeGraph, Examples) {
  const std::vector<std::string> games{"a", "b", "c"};
  EXPECT_EQ(te_graph({}, games, "g"), "digraph g {\n  \"a\";\n  \"b\";\n  \"c\";\n}\n");
  const auto one = te_graph({{{"a", "b"}, 0.12345}, {{"b", "a"}, -0.5}, {{"c", "a"}, 0.0}}, games, "g");
  EXPECT_NE(one.find("\"a\" -> \"b\" [label=\"0.123\"];"), std::string::npos);
  EXPECT_EQ(one.find("\"b\" -> \"a\""), std::string::npos);
  EXPECT_EQ(one.find("\"c\" -> \"a\""), std::string::npos);
}

TEST(Features, ParsesBothFormsAndRejectsUnknowns) {
  const auto f = parse_features(Json::parse(R"({"x": [true, false, true, false, false],
      "y": {"horizontal": false, "vertical": true, "shooting": false, "delayed_rewards": true,
            "long_term_planning": false}, "_note": "ignored"})"));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.at("x").letters(), "hs");
  EXPECT_EQ(f.at("y").letters(), "vd");
  EXPECT_THROW(parse_features(Json::parse(R"({"x": [true, null, true, false, false]})")), ParseError);
  EXPECT_THROW(parse_features(Json::parse(R"({"x": [true, true]})")), ParseError);
  EXPECT_THROW(parse_features(Json::array()), ParseError);
}

TEST(Features, ShippedFiles) {
  std::ifstream mini(std::string(GRUSM_DATA_DIR) + "/miniarcade_features.json");
  const auto f = parse_features(Json::parse(mini));
  EXPECT_EQ(f.size(), 8u);
  EXPECT_EQ(f.at("arcade").letters(), "hvsdl");
  EXPECT_EQ(f.at("catch").letters(), "h");
  std::ifstream atari(std::string(GRUSM_DATA_DIR) + "/atari_features.json");
  EXPECT_THROW(parse_features(Json::parse(atari)), ParseError);
}

TEST(Features, ResolvedFromEnvSpecs) {
  std::vector<RunSummary> runs{summary("a", "miniarcade:hs", Condition::Scratch, "", 1, constant(1, 4))};
  EXPECT_EQ(resolve_features(runs, {}).at("a").letters(), "hs");
  EXPECT_EQ(resolve_features(runs, {{"a", GameFeatures::parse_letters("v")}}).at("a").letters(), "v");
  runs.push_back(summary("b", "external:./x", Condition::Scratch, "", 1, constant(1, 4)));
  EXPECT_THROW(resolve_features(runs, {}), ConfigError);
}

TEST(Analyze, EndToEndOnSyntheticRuns) {
  const std::map<std::string, std::string> games{
      {"a", "miniarcade:h"}, {"b", "miniarcade:hv"}, {"c", "miniarcade:hs"}, {"d", "miniarcade:hvs"}};
  std::vector<RunSummary> runs;
  const std::size_t G = 20;
  int offset = 0;
  for (const auto& [g, env] : games) {
    ++offset;
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      runs.push_back(summary(g, env, Condition::Scratch, "", seed, ramp(seed, 1.0, G)));
      runs.push_back(summary(g, env, Condition::Random, "", seed, ramp(seed, 0.5, G)));
      for (const auto& [src, unused] : games)
        if (src != g) runs.push_back(summary(g, env, Condition::Transfer, src, seed, ramp(seed + src[0] - 'a', 1.0 + 0.1 * offset, G)));
    }
  }
  const auto out = analyze(runs, resolve_features(runs, {}));
  const Json& rep = out.report;
  EXPECT_EQ(rep["format"], "grusm-te-report/1");
  EXPECT_EQ(rep["pairs"].size(), 12u);
  EXPECT_EQ(rep["regression"]["vs_scratch"]["pairs"], 12);
  EXPECT_FALSE(rep["regression"]["vs_scratch"].contains("skipped"));
  EXPECT_EQ(rep["games"]["b"]["samples"], sample_generations(G));

  // Recompute one pair by hand.
  const auto s = sample_generations(G);
  std::vector<Curve> setup, scratch, random;
  std::vector<double> maxes;
  for (const auto& r : runs) {
    if (r.game != "b") continue;
    maxes.push_back(r.max_score);
    if (r.condition == Condition::Transfer && r.source_game == "c") setup.push_back(r.curve);
    if (r.condition == Condition::Scratch) scratch.push_back(r.curve);
    if (r.condition == Condition::Random) random.push_back(r.curve);
  }
  const double range = max_score_range(maxes);
  for (const auto& p : rep["pairs"]) {
    if (p["source"] != "c" || p["target"] != "b") continue;
    EXPECT_NEAR(p["te_vs_scratch"].get<double>(), transfer_effectiveness(setup, scratch, range, s), 1e-12);
    EXPECT_NEAR(p["te_vs_random"].get<double>(), transfer_effectiveness(setup, random, range, s), 1e-12);
    EXPECT_EQ(p["indicators"]["feature_similarity"], 1);
    EXPECT_DOUBLE_EQ(p["indicators"]["target_training_complexity"].get<double>(),
                     training_complexity(scratch).mean_generations);
  }
  EXPECT_EQ(out.dot_scratch, te_graph_from_report(rep, true));
  EXPECT_EQ(out.dot_random, te_graph_from_report(rep, false));
  EXPECT_EQ(out.learning_curves_csv.substr(0, out.learning_curves_csv.find('\n')),
            "game,condition,source,generation,mean,stderr");
  // 4 games x (scratch + random + 3 transfer) setups x G generations
  EXPECT_EQ(std::count(out.learning_curves_csv.begin(), out.learning_curves_csv.end(), '\n'), 1 + 4 * 5 * 20);
  EXPECT_TRUE(rep["directional"]["vs_scratch"].contains("mean_te_by_target_feature_complexity"));
}

TEST(Analyze, FewPairsSkipRegressionAndFlatGamesWarn) {
  std::vector<RunSummary> runs{
      summary("a", "miniarcade:h", Condition::Scratch, "", 1, constant(2, 10)),
      summary("a", "miniarcade:h", Condition::Transfer, "b", 1, constant(2, 10)),
      summary("b", "miniarcade:v", Condition::Scratch, "", 1, ramp(0, 1, 10)),
      summary("b", "miniarcade:v", Condition::Transfer, "a", 1, ramp(1, 1, 10)),
  };
  const auto out = analyze(runs, resolve_features(runs, {}));
  EXPECT_TRUE(out.report["regression"]["vs_scratch"].contains("skipped"));
  EXPECT_FALSE(out.report["warnings"].empty());
  for (const auto& p : out.report["pairs"])
    if (p["target"] == "a") EXPECT_TRUE(p["te_vs_scratch"].is_null());
  EXPECT_THROW(analyze({}, {}), Error);
  EXPECT_THROW(analyze(runs, {{"a", GameFeatures{}}}), ConfigError);
}
