#include <gtest/gtest.h>

#include <numeric>

#include "test_util.hpp"

using namespace grusm;

namespace {

std::shared_ptr<const SourceModule> source_with_hidden(std::size_t h, std::vector<Substrate> s = {{6, 8}}) {
  Rng rng(h + 100);
  return make_source(grusm::testing::random_module(rng, std::move(s), h), "src");
}

}  // namespace

TEST(MakeLayout, OneSubstrateEightByTen) {
  const std::vector<Substrate> t{{8, 10}};
  const auto layout = make_layout(t, *source_with_hidden(4));
  EXPECT_EQ(layout.n_target_inputs, 80u);
  EXPECT_EQ(layout.genome_length(), 80u * 4 + 10 * 10);
  EXPECT_EQ(layout.genome_length(), 420u);
}

TEST(MakeLayout, ThreeSubstrates) {
  const std::vector<Substrate> t{{8, 10}, {8, 10}, {8, 10}};
  const auto layout = make_layout(t, *source_with_hidden(6));
  EXPECT_EQ(layout.in_block(), 1440u);
}

TEST(MakeLayout, HiddenlessSourceCoversOnlyOutputs) {
  const std::vector<Substrate> t{{6, 8}};
  const auto layout = make_layout(t, *make_source(TargetModule::zeros({{6, 8}}, 0), "empty"));
  EXPECT_EQ(layout.in_block(), 0u);
  EXPECT_EQ(layout.genome_length(), 100u);
}

TEST(InstantiateTransfer, FlattenInvertsInstantiate) {
  const std::vector<Substrate> t{{2, 3}};
  const auto layout = make_layout(t, *source_with_hidden(3, {{2, 2}}));
  std::vector<double> g(layout.genome_length());
  std::iota(g.begin(), g.end(), 0.0);
  const auto links = instantiate_transfer(g, layout);
  EXPECT_EQ(links.in_to_hidden(0, 0), 0.0);
  EXPECT_EQ(links.in_to_hidden(0, 2), 2.0);
  EXPECT_EQ(links.in_to_hidden(1, 0), 3.0);
  EXPECT_EQ(links.out_to_out(0, 0), 18.0);
  EXPECT_EQ(links.out_to_out(1, 0), 28.0);
  EXPECT_EQ(flatten_transfer(links), g);
}

TEST(InstantiateTransfer, LengthMismatchIsError) {
  const std::vector<Substrate> t{{2, 3}};
  const auto layout = make_layout(t, *source_with_hidden(3, {{2, 2}}));
  std::vector<double> g(layout.genome_length() - 1);
  EXPECT_THROW(instantiate_transfer(g, layout), ConfigError);
  g.resize(layout.genome_length() + 1);
  EXPECT_THROW(instantiate_transfer(g, layout), ConfigError);
}

TEST(Transfer, ZeroOutgoingWeightsMakeSourceInert) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto net = grusm::testing::random_network(rng, true);
    for (auto& v : net.source->links.out_to_out.flat()) v = 0.0;
    const GrusmNetwork bare{net.target, std::nullopt};
    auto sa = NetworkState::fresh(net), sb = NetworkState::fresh(bare);
    for (const auto& x : grusm::testing::random_inputs(rng, net.target.input_count(), 10))
      ASSERT_EQ(step_activate(net, sa, x), step_activate(bare, sb, x));
  }
}

TEST(SourcePool, EachSourceRecruitedOnceAndOnlyOneAttached) {
  SourcePool pool({source_with_hidden(2), source_with_hidden(3)});
  EXPECT_EQ(pool.take_unused(), std::optional<std::size_t>{0});
  EXPECT_TRUE(pool.used(0));
  EXPECT_EQ(pool.take_unused(), std::nullopt);
  EXPECT_FALSE(pool.used(1));
}

TEST(SourcePool, TwoSourceRecruitsInOneNetworkAreRejected) {
  auto src = source_with_hidden(2, {{1, 2}});
  SourcePool pool({src, src});
  Rng rng(1);
  const std::vector<Substrate> t{{1, 2}};
  const auto len = make_layout(t, *src).genome_length();
  std::vector<Subpopulation> sps{make_subpopulation(SourceNet{0}, len, 2, rng, 0.5),
                                 make_subpopulation(SourceNet{1}, len, 2, rng, 0.5)};
  EXPECT_THROW(build_network(sps, std::vector<std::size_t>{0, 0}, t, pool), ConfigError);
}

TEST(Freezing, EvolutionNeverRewritesTheSource) {
  auto src = source_with_hidden(3, {{1, 2}});
  const std::string before = serialize(GrusmNetwork{src->net, std::nullopt});
  const std::string digest = src->digest;
  EspConfig cfg;
  cfg.n_sub = 8;
  cfg.assemblies_per_gen = 10;
  cfg.threshold_b = 2;
  Evolver ev(cfg, {{1, 2}}, SourcePool({src}), 1);
  FitnessFn f = [](const GrusmNetwork& net, std::uint64_t) { return grusm::testing::xor_fitness(net); };
  for (int g = 0; g < 12; ++g) ev.run_generation(f);
  EXPECT_EQ(serialize(GrusmNetwork{src->net, std::nullopt}), before);
  EXPECT_EQ(module_digest(src->net), digest);
  ASSERT_TRUE(ev.best_network()->source);
  EXPECT_EQ(ev.best_network()->source->module->digest, digest);
}

TEST(RandomSource, MeanMatchingFourHiddenGivesFourHidden) {
  const std::vector<Substrate> s{{6, 8}, {6, 8}};
  ScratchStats stats;
  stats.by_shape[shape_key(s)] = {static_cast<double>(parameter_count(96, 4)), 0.0, 3};
  Rng rng(5);
  const auto src = make_random_source(stats, s, rng);
  EXPECT_EQ(src->net.hidden.size(), 4u);
  EXPECT_EQ(src->label, "random");
  EXPECT_EQ(src->digest, module_digest(src->net));
}

TEST(RandomSource, TiesRoundDown) {
  const double per_node = 48 + 12;
  EXPECT_EQ(hidden_for_params(10 + 2.5 * per_node, 48), 2u);
  EXPECT_EQ(hidden_for_params(10 + 2.5 * per_node + 1e-9, 48), 3u);
  EXPECT_EQ(hidden_for_params(0.0, 48), 1u);
}

TEST(RandomSource, MeanParameterCountWithinFivePercent) {
  const std::vector<Substrate> s{{6, 8}};
  const double mu = 900.0;
  ScratchStats stats;
  stats.by_shape[shape_key(s)] = {mu, 150.0, 10};
  Rng rng(6);
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) total += static_cast<double>(parameter_count(make_random_source(stats, s, rng)->net));
  EXPECT_NEAR(total / 1000.0, mu, 0.05 * mu);
}

TEST(RandomSource, MissingStatisticsIsError) {
  Rng rng(7);
  ScratchStats stats;
  stats.by_shape["6x8x1"] = {500.0, 0.0, 1};
  try {
    make_random_source(stats, {{6, 8}, {6, 8}}, rng);
    FAIL() << "missing shape accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("scratch"), std::string::npos);
  }
}

TEST(ScratchStats, JsonRoundTrip) {
  ScratchStats s;
  s.by_shape["6x8x2"] = {812.5, 40.25, 3};
  const auto back = ScratchStats::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_THROW(ScratchStats::from_json(Json{{"shape", 1}}), ParseError);
}

TEST(ShapeKey, UniformAndMixed) {
  EXPECT_EQ(shape_key(std::vector<Substrate>{{6, 8}, {6, 8}, {6, 8}}), "6x8x3");
  EXPECT_EQ(shape_key(std::vector<Substrate>{{6, 8}, {2, 2}}), "6x8,2x2");
}
