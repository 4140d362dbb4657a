#include "mcs/fixtures.hpp"
#include "mcs/graph.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mcs;
namespace fx = mcs::fixtures;

namespace {

TimedValue tv(std::optional<Payload> v, Timestamp t) {
  return {v ? Value{*v} : Value::tombstone(), t};
}

}  // namespace

TEST(ContentsInReach, ListScenarioRoot) {
  const auto g = fx::list4().graph;
  const NodeContents want{{fx::k1, tv(std::nullopt, 6)},
                          {fx::k2, tv(fx::d, 7)},
                          {fx::k3, tv(fx::c, 4)}};
  EXPECT_EQ(contents_in_reach(g, 0), want);
  EXPECT_EQ(contents_in_reach(g, 3), g.node(3).contents);
  EXPECT_FALSE(contents_in_reach(g, 0, fx::k4));
}

TEST(ContentsInReach, AgreesWithRecursionOnRandomGraphs) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    auto rg = oracle::random_graph(rng, 10, 8, false);
    for (const auto& [id, n] : rg.g.nodes)
      for (Key k = 0; k < rg.g.keyspace; ++k)
        EXPECT_EQ(contents_in_reach(rg.g, id, k), oracle::cir(rg.g, id, k));
  }
}

TEST(ContentsInReach, CycleIsReported) {
  MulticopyGraph g(2, 0);
  g.set_edge(0, 1, KeySet::full(2));
  g.set_edge(1, 0, KeySet::full(2));
  EXPECT_THROW((void)contents_in_reach(g, 0, 0), structural_error);
  EXPECT_FALSE(is_acyclic(g));
  EXPECT_THROW((void)topological_order(g), structural_error);
}

TEST(SuccessorFor, OverlapIsStructuralError) {
  MulticopyGraph g(3, 0);
  g.set_edge(0, 1, KeySet::of(3, {0, 1}));
  g.set_edge(0, 2, KeySet::of(3, {1, 2}));
  EXPECT_EQ(successor_for(g, 0, 0), NodeId{1});
  EXPECT_THROW((void)successor_for(g, 0, 1), structural_error);
}

TEST(Insets, MatchPathEnumeration) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto rg = oracle::random_graph(rng, 12, 16, i % 2 == 0);
    const auto got = insets(rg.g);
    const auto want = oracle::path_insets(rg.g);
    for (const auto& [id, n] : rg.g.nodes) {
      const auto keys = got.at(id).keys();
      EXPECT_EQ(std::set<Key>(keys.begin(), keys.end()), want.at(id));
    }
  }
}

TEST(Flows, InsetFlowMatchesJacobiAndPathCounts) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    const auto rg = oracle::random_graph(rng, 12, 16, false);
    const auto fl = compute_flow(rg.g, inset_flow_domain());
    const auto jac = oracle::jacobi_inset_flow(rg.g);
    const auto paths = oracle::path_counts(rg.g);
    for (const auto& [id, n] : rg.g.nodes) {
      std::map<Key, std::size_t> got(fl.at(id).begin(), fl.at(id).end());
      EXPECT_EQ(got, jac.at(id));
      EXPECT_EQ(got, paths.at(id));
    }
    EXPECT_TRUE(flow_residual(rg.g, inset_flow_domain(), fl).empty());
  }
}

TEST(Flows, CirFlowMatchesJacobi) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 300; ++i) {
    auto rg = oracle::random_graph(rng, 12, 16, false);
    oracle::fill_q(rg.g);
    const auto fl = compute_flow(rg.g, cir_flow_domain());
    const auto jac = oracle::jacobi_cir_flow(rg.g);
    for (const auto& [id, n] : rg.g.nodes) {
      oracle::CirBag got;
      for (const auto& [item, c] : fl.at(id))
        for (std::size_t j = 0; j < c; ++j)
          got.insert({item.key, item.copy.ts, item.copy.value.raw()});
      EXPECT_EQ(got, jac.at(id));
    }
    EXPECT_TRUE(flow_residual(rg.g, cir_flow_domain(), fl).empty());
  }
}

TEST(Flows, ResidualFlagsPerturbedFlow) {
  const auto g = fx::list4().graph;
  auto fl = compute_flow(g, inset_flow_domain());
  fl[2][0] += 1;
  // The successor's right-hand side moves with it.
  EXPECT_EQ(flow_residual(g, inset_flow_domain(), fl), (std::vector<NodeId>{2, 3}));
  fl = compute_flow(g, inset_flow_domain());
  fl[3][1] += 1;
  EXPECT_EQ(flow_residual(g, inset_flow_domain(), fl), std::vector<NodeId>{3});
}

TEST(BHat, EqualsContentsInReachWhenQConsistent) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 300; ++i) {
    auto rg = oracle::random_graph(rng, 12, 16, false);
    derive_q(rg.g);
    for (const auto& [id, n] : rg.g.nodes)
      for (Key k = 0; k < rg.g.keyspace; ++k)
        EXPECT_EQ(b_hat(rg.g, id, k), oracle::cir(rg.g, id, k));
  }
}
