#include "mcs/checker.hpp"
#include "mcs/harness.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace mcs;

TEST(Maintenance, Parse) {
  EXPECT_EQ(parse_maintenance("on-fail").mode, Maintenance::Mode::on_fail);
  EXPECT_EQ(parse_maintenance("off").mode, Maintenance::Mode::off);
  EXPECT_EQ(parse_maintenance("periodic"), (Maintenance{Maintenance::Mode::periodic, 1}));
  EXPECT_EQ(parse_maintenance("periodic:5"), (Maintenance{Maintenance::Mode::periodic, 5}));
  EXPECT_EQ(parse_maintenance("periodic(7)"), (Maintenance{Maintenance::Mode::periodic, 7}));
  for (const char* bad : {"", "sometimes", "periodic:", "periodic:0", "periodic:x", "periodic(3"})
    EXPECT_THROW(parse_maintenance(bad), std::invalid_argument) << bad;
  EXPECT_EQ(to_string(parse_maintenance("periodic:3")), "periodic:3");
}

TEST(WorkloadConfig, Validation) {
  WorkloadConfig c;
  EXPECT_NO_THROW(c.validate());
  c.mix = {50, 40, 5};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.threads = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(GenerateOps, DeterministicPerSeedAndThread) {
  WorkloadConfig c;
  c.ops_per_thread = 5000;
  c.seed = 99;
  EXPECT_EQ(generate_ops(c, 0), generate_ops(c, 0));
  EXPECT_NE(generate_ops(c, 0), generate_ops(c, 1));
  auto d = c;
  d.seed = 100;
  EXPECT_NE(generate_ops(c, 0), generate_ops(d, 0));

  std::map<int, std::size_t> kinds;
  for (const auto& op : generate_ops(c, 2)) {
    EXPECT_LT(op.key, c.keyspace_size);
    kinds[op.kind == OpKind::search ? 0 : op.value.is_tombstone() ? 2 : 1]++;
  }
  // 70/25/5 within a generous margin.
  EXPECT_NEAR(kinds[0] / 5000.0, 0.70, 0.03);
  EXPECT_NEAR(kinds[1] / 5000.0, 0.25, 0.03);
  EXPECT_NEAR(kinds[2] / 5000.0, 0.05, 0.02);
}

TEST(Stress, SingleThreadLinearizesInTraceOrder) {
  WorkloadConfig c;
  c.threads = 1;
  c.ops_per_thread = 3000;
  c.checkpoint_every = 500;
  const auto rep = run_stress(c, true);
  EXPECT_TRUE(rep.ok()) << to_text(rep);
  ASSERT_TRUE(rep.linearization && rep.linearization->ok());
  std::vector<std::size_t> expect(rep.trace.size());
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = i;
  EXPECT_EQ(rep.linearization->witness->order, expect);
  // Sequential replay against a plain map.
  std::map<Key, Value> model;
  for (const auto& e : rep.trace) {
    if (e.op == OpKind::upsert) {
      model[e.key] = e.value;
    } else {
      const Value want = model.contains(e.key) ? model[e.key] : Value::tombstone();
      EXPECT_EQ(e.value, want);
    }
  }
  EXPECT_EQ(rep.checkpoints, 6u);
}

TEST(Stress, AllMaintenanceModesAndStructures) {
  for (auto kind : {StructureKind::lsm, StructureKind::df})
    for (const char* m : {"on-fail", "periodic:1", "off"}) {
      WorkloadConfig c;
      c.structure = kind;
      c.threads = 4;
      c.ops_per_thread = 2000;
      c.checkpoint_every = 400;
      c.maintenance = parse_maintenance(m);
      const auto rep = run_stress(c);
      EXPECT_TRUE(rep.ok()) << m << "\n" << to_text(rep);
      EXPECT_EQ(rep.searches + rep.upserts + rep.deletes, 8000u);
      ASSERT_TRUE(rep.final_snapshot);
      EXPECT_TRUE(check_invariants(*rep.final_snapshot).ok());
    }
}

TEST(Stress, MaintenanceOffStallsOnTinyRoot) {
  WorkloadConfig c;
  c.threads = 2;
  c.ops_per_thread = 1000;
  c.root_capacity = 1;
  c.mix = {0, 100, 0};
  c.maintenance = parse_maintenance("off");
  c.checkpoint_every = 0;
  const auto rep = run_stress(c);
  EXPECT_GT(rep.stalled, 0u);
  EXPECT_TRUE(rep.ok()) << to_text(rep);
  // Without any flush at most one distinct key is ever stored.
  EXPECT_EQ(rep.nodes, 1u);
}

TEST(Stress, JsonReportShape) {
  WorkloadConfig c;
  c.threads = 2;
  c.ops_per_thread = 500;
  const auto j = to_json(run_stress(c));
  EXPECT_TRUE(j["ok"].get<bool>());
  EXPECT_EQ(j["config"]["threads"], 2);
  EXPECT_EQ(j["recency_violations"]["count"], 0);
  EXPECT_TRUE(j["linearization"]["ok"].get<bool>());
  EXPECT_LE(j["locks"]["search_max"].get<int>(), 1);
}

TEST(Bench, RunsWithoutChecking) {
  WorkloadConfig c;
  c.threads = 2;
  c.ops_per_thread = 2000;
  const auto rep = run_bench(c);
  EXPECT_GT(rep.ops_per_second, 0.0);
  EXPECT_FALSE(rep.linearization);
  EXPECT_EQ(rep.checkpoints, 0u);
}
