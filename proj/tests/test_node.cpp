#include "mcs/node.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <memory>
#include <random>

using namespace mcs;

namespace {

using ANode = Node<ArrayStorage>;

std::unique_ptr<ANode> table(NodeId id, std::size_t cap,
                             const NodeContents& c = {}) {
  auto n = std::make_unique<ANode>(id, ArrayStorage::make_table(cap));
  std::vector<Record> recs;
  for (const auto& [k, tv] : c) recs.push_back({k, tv});
  n->store.absorb(recs);
  return n;
}

TimedValue at(Payload v, Timestamp t) { return {Value{v}, t}; }

}  // namespace

TEST(RootBuffer, NewestCopyWinsAndCapacityCountsLiveKeys) {
  RootBuffer r(2);
  EXPECT_TRUE(r.add(1, Value{10}, 1));
  EXPECT_TRUE(r.add(1, Value{11}, 2));
  EXPECT_EQ(r.live_count(), 1u);
  EXPECT_EQ(r.find(1), at(11, 2));
  EXPECT_TRUE(r.add(2, Value{20}, 3));
  EXPECT_FALSE(r.add(3, Value{30}, 4));
  // Overwriting a live key succeeds even when full; dead slots are squeezed.
  EXPECT_TRUE(r.add(2, Value::tombstone(), 5));
  EXPECT_LE(r.slot_count(), 2u);
  EXPECT_EQ(r.find(2), (TimedValue{Value::tombstone(), 5}));
  EXPECT_EQ(r.live_keys(), (std::vector<Key>{1, 2}));
}

TEST(RootBuffer, ExtractRemovesAndReturnsInKeyOrder) {
  RootBuffer r(4);
  r.add(3, Value{3}, 1);
  r.add(1, Value{1}, 2);
  r.add(2, Value{2}, 3);
  const std::vector<Key> keys{1, 3};
  const auto out = r.extract(keys);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].key, 1u);
  EXPECT_EQ(out[1].key, 3u);
  EXPECT_EQ(r.live_keys(), std::vector<Key>{2});
}

TEST(SortedTable, AbsorbOverwritesAndStaysSorted) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 200; ++round) {
    SortedTable t(unbounded_capacity);
    NodeContents model;
    Timestamp ts = 0;
    for (int step = 0; step < 6; ++step) {
      std::map<Key, TimedValue> batch;
      for (int i = 0; i < 5; ++i)
        batch[static_cast<Key>(rng() % 12)] = at(static_cast<Payload>(rng() % 50), ++ts);
      std::vector<Record> recs;
      for (const auto& [k, v] : batch) recs.push_back({k, v});
      t.absorb(recs);
      for (const auto& [k, v] : batch) model[k] = v;
      EXPECT_EQ(t.contents(), model);
      const auto rs = t.records();
      for (std::size_t i = 1; i < rs.size(); ++i) EXPECT_LT(rs[i - 1].key, rs[i].key);
    }
  }
}

TEST(ArrayStorage, RolesAreEnforced) {
  auto root = ArrayStorage::make_root(2);
  auto tab = ArrayStorage::make_table(2);
  EXPECT_TRUE(root.is_root());
  EXPECT_FALSE(tab.is_root());
  EXPECT_THROW(tab.add(0, Value{1}, 1), contract_error);
  EXPECT_THROW(root.absorb({{0, at(1, 1)}}), contract_error);
  EXPECT_THROW(ArrayStorage::make_table(0), contract_error);
}

TEST(FindNext, AgreesWithLinearScan) {
  std::mt19937_64 rng(19);
  for (int round = 0; round < 200; ++round) {
    const std::size_t ks = 1 + rng() % 10;
    auto n = table(0, 4);
    std::vector<std::unique_ptr<ANode>> kids;
    std::vector<KeySet> sets;
    const std::size_t count = rng() % 4;
    for (std::size_t i = 0; i < count; ++i) {
      kids.push_back(table(static_cast<NodeId>(i + 1), 4));
      sets.emplace_back(ks);
    }
    for (Key k = 0; k < ks && count > 0; ++k)
      if (rng() % 3) sets[rng() % count].insert(k);
    for (std::size_t i = 0; i < count; ++i) n->succ.push_back({kids[i].get(), sets[i]});
    for (Key k = 0; k < ks; ++k) {
      ANode* want = nullptr;
      for (std::size_t i = 0; i < count; ++i)
        if (sets[i].contains(k)) want = kids[i].get();
      EXPECT_EQ(find_next(*n, k), want);
    }
  }
}

TEST(FindNext, OverlapThrows) {
  auto n = table(0, 4), a = table(1, 4), b = table(2, 4);
  n->succ.push_back({a.get(), KeySet::of(3, {0, 1})});
  n->succ.push_back({b.get(), KeySet::of(3, {1})});
  EXPECT_THROW((void)find_next(*n, 1), structural_error);
}

TEST(ChooseNext, MatchesPolicyOracle) {
  std::mt19937_64 rng(23);
  for (int round = 0; round < 500; ++round) {
    const std::size_t ks = 1 + rng() % 8;
    NodeContents c;
    for (Key k = 0; k < ks; ++k)
      if (rng() % 2) c[k] = at(1, k + 1);
    auto n = table(0, 16, c);
    const std::size_t count = rng() % 4;
    std::vector<std::unique_ptr<ANode>> kids;
    std::map<NodeId, KeySet> sets;
    for (std::size_t i = 0; i < count; ++i) {
      // Ids deliberately not in insertion order.
      const NodeId id = static_cast<NodeId>(10 - i);
      kids.push_back(table(id, 4));
      sets.emplace(id, KeySet(ks));
    }
    for (Key k = 0; k < ks && count > 0; ++k)
      if (rng() % 4) sets.at(static_cast<NodeId>(10 - rng() % count)).insert(k);
    for (std::size_t i = 0; i < count; ++i)
      n->succ.push_back({kids[i].get(), sets.at(kids[i]->id)});

    const auto want = oracle::choose_next(n->store.live_keys(), sets);
    ANode* got = choose_next(*n);
    if (!want) {
      EXPECT_EQ(got, nullptr);
    } else {
      ASSERT_NE(got, nullptr);
      EXPECT_EQ(got->id, *want);
    }
  }
}

TEST(ChooseNext, NoSuccessorNeedsNewNode) {
  auto n = table(0, 2, {{0, at(1, 1)}});
  EXPECT_EQ(choose_next(*n), nullptr);
  EXPECT_EQ(uncovered_keys(*n, 4), KeySet::full(4));
}

TEST(InsertNode, RejectsBadTargets) {
  auto n = table(0, 2), m = table(1, 2), o = table(2, 2, {{0, at(1, 1)}});
  EXPECT_THROW(insert_node(*n, *m, KeySet(3)), structural_error);
  EXPECT_THROW(insert_node(*n, *o, KeySet::of(3, {0})), structural_error);
  insert_node(*n, *m, KeySet::of(3, {0, 1}));
  auto p = table(3, 2);
  EXPECT_THROW(insert_node(*n, *p, KeySet::of(3, {1, 2})), structural_error);
  insert_node(*n, *p, uncovered_keys(*n, 3));
  EXPECT_EQ(n->succ.back().keys, KeySet::of(3, {2}));
}

TEST(MergeContents, MatchesGreedyOracle) {
  std::mt19937_64 rng(29);
  for (int round = 0; round < 1000; ++round) {
    const std::size_t ks = 1 + rng() % 8;
    Timestamp ts = 0;
    NodeContents cm, cn;
    for (Key k = 0; k < ks; ++k)
      if (rng() % 2) cm[k] = at(static_cast<Payload>(rng() % 9), ++ts);
    for (Key k = 0; k < ks; ++k)
      if (rng() % 2) cn[k] = at(static_cast<Payload>(rng() % 9), ++ts);
    const std::size_t cap = cm.size() + rng() % 4;
    if (cap == 0) continue;
    KeySet es(ks);
    for (Key k = 0; k < ks; ++k)
      if (rng() % 4) es.insert(k);
    if (es.empty()) es.insert(0);

    auto n = table(0, 16, cn);
    auto m = table(1, cap, cm);
    n->succ.push_back({m.get(), es});
    const auto want = oracle::merge(cn, cm, es, cap);
    const auto moved = merge_contents(*n, *m);

    EXPECT_EQ(n->store.contents(), want.n_after);
    EXPECT_EQ(m->store.contents(), want.m_after);
    std::vector<Key> moved_keys;
    for (const auto& r : moved) {
      moved_keys.push_back(r.key);
      // Moved copies are exactly the pre-merge copies from n.
      EXPECT_EQ(r.copy, cn.at(r.key));
    }
    EXPECT_EQ(moved_keys, want.moved);
    EXPECT_LE(m->store.live_count(), cap);
  }
}

TEST(MergeContents, RequiresEdge) {
  auto n = table(0, 2, {{0, at(1, 1)}}), m = table(1, 2);
  EXPECT_THROW(merge_contents(*n, *m), structural_error);
}
