#pragma once

/// \file
/// Small hand-built scenarios: the four-node list with timestamps 1..7, its
/// flush and compaction transitions, a DAG compaction that breaks the
/// time-ordering invariant, and a compaction that splits keys onto a new
/// node. Keys k1..k4 are 0..3 and values a, b, c, d are 1..4.

#include "mcs/checker.hpp"
#include "mcs/core.hpp"
#include "mcs/graph.hpp"
#include "mcs/lsm.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcs::fixtures {

inline constexpr Key k1 = 0, k2 = 1, k3 = 2, k4 = 3;
inline constexpr Payload a = 1, b = 2, c = 3, d = 4;

/// Initial state of a scenario.
struct Scenario {
  StructureOptions opts;
  MulticopyGraph graph;
  std::vector<UpsertRecord> history;
  std::map<NodeId, std::size_t> capacities;

  [[nodiscard]] Timestamp clock() const { return history.size() + 1; }

  [[nodiscard]] std::unique_ptr<LsmStructure<>> build() const {
    return LsmStructure<>::from_graph(opts, graph, history, capacities);
  }
};

namespace detail {

inline void put(GraphNode& n, Key k, std::optional<Payload> v, Timestamp t) {
  n.contents[k] = {v ? Value{*v} : Value::tombstone(), t};
}

/// History whose timestamps follow the contents of `g` (one record per
/// stored copy). Ghost state Q is derived from the graph.
inline std::vector<UpsertRecord> history_of(const MulticopyGraph& g) {
  std::map<Timestamp, UpsertRecord> by_ts;
  for (const auto& [id, n] : g.nodes)
    for (const auto& [k, tv] : n.contents) by_ts[tv.ts] = {k, tv.value, tv.ts};
  std::vector<UpsertRecord> out;
  for (const auto& [t, r] : by_ts) out.push_back(r);
  return out;
}

}  // namespace detail

/// r -> n1 -> n2 -> n3, every edge labelled with the whole keyspace.
/// Ids: r=0, n1=1, n2=2, n3=3.
inline Scenario list4() {
  Scenario s;
  s.opts.keyspace = 4;
  s.opts.root_capacity = 4;
  MulticopyGraph g(4, 0);
  const auto ks = KeySet::full(4);
  g.set_edge(0, 1, ks);
  g.set_edge(1, 2, ks);
  g.set_edge(2, 3, ks);
  detail::put(g.nodes[0], k2, d, 7);
  detail::put(g.nodes[1], k1, std::nullopt, 6);
  detail::put(g.nodes[1], k2, b, 5);
  detail::put(g.nodes[2], k2, a, 3);
  detail::put(g.nodes[2], k3, c, 4);
  detail::put(g.nodes[3], k1, c, 2);
  detail::put(g.nodes[3], k3, b, 1);
  derive_q(g);
  s.history = detail::history_of(g);
  s.graph = std::move(g);
  return s;
}

/// list4 with a root of capacity 1 and n1 of capacity 4: flushing the root
/// moves (k2, d) into n1.
inline Scenario list4_flush() {
  Scenario s = list4();
  s.opts.root_capacity = 1;
  s.capacities = {{1, 4}, {2, 4}, {3, 4}};
  return s;
}

/// list4 with n1 full at capacity 2 and room in n2: compacting n1 moves both
/// its copies down, overwriting (k2, a).
inline Scenario list4_compact() {
  Scenario s = list4();
  s.capacities = {{1, 2}, {2, 4}, {3, 4}};
  return s;
}

/// DAG with n=0, m=1, p=2 and edges n->p {k1}, n->m {k2}, p->m {k1, k2}.
/// Values equal their timestamps.
inline Scenario dag_misorder() {
  Scenario s;
  s.opts.keyspace = 2;
  s.opts.root_capacity = 2;
  s.capacities = {{1, 4}, {2, 2}};
  MulticopyGraph g(2, 0);
  g.add_node(1);
  g.add_node(2);
  g.set_edge(0, 2, KeySet::of(2, {k1}));
  g.set_edge(0, 1, KeySet::of(2, {k2}));
  g.set_edge(2, 1, KeySet::of(2, {k1, k2}));
  detail::put(g.nodes[0], k1, 5, 5);
  detail::put(g.nodes[0], k2, 6, 6);
  detail::put(g.nodes[2], k1, 3, 3);
  detail::put(g.nodes[2], k2, 4, 4);
  detail::put(g.nodes[1], k1, 2, 2);
  detail::put(g.nodes[1], k2, 1, 1);
  derive_q(g);
  s.history = detail::history_of(g);
  s.graph = std::move(g);
  return s;
}

/// n=0 -> n1=1 (whole keyspace) -> n2=2 ({k1, k2}); capacities 4, new nodes
/// get 8. Values equal their timestamps.
inline Scenario split_compact() {
  Scenario s;
  s.opts.keyspace = 4;
  s.opts.root_capacity = 4;
  s.opts.growth_factor = 2;
  s.capacities = {{1, 4}, {2, 4}};
  MulticopyGraph g(4, 0);
  g.set_edge(0, 1, KeySet::full(4));
  g.set_edge(1, 2, KeySet::of(4, {k1, k2}));
  detail::put(g.nodes[0], k1, 7, 7);
  detail::put(g.nodes[0], k2, 5, 5);
  detail::put(g.nodes[0], k3, 6, 6);
  detail::put(g.nodes[0], k4, 8, 8);
  detail::put(g.nodes[1], k1, 3, 3);
  detail::put(g.nodes[1], k4, 4, 4);
  detail::put(g.nodes[2], k1, 2, 2);
  detail::put(g.nodes[2], k2, 1, 1);
  derive_q(g);
  s.history = detail::history_of(g);
  s.graph = std::move(g);
  return s;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayStep {
  std::string label;
  MulticopyGraph graph;
  InvariantReport report;
};

/// Outcome of one documented expectation.
struct Expectation {
  std::string description;
  bool passed{false};
  std::string detail;
};

struct ReplayResult {
  std::string fixture;
  std::vector<ReplayStep> steps;
  /// Inv2 between consecutive steps, then between the first and last.
  std::vector<CheckResult> monotonicity;
  std::vector<Expectation> expectations;

  [[nodiscard]] bool ok() const {
    for (const auto& e : expectations)
      if (!e.passed) return false;
    return true;
  }
};

namespace detail {

using Action = std::function<void(LsmStructure<>&)>;

inline ReplayResult run(std::string name, const Scenario& s,
                        const std::vector<std::pair<std::string, Action>>&
                            actions) {
  ReplayResult out;
  out.fixture = std::move(name);
  auto st = s.build();
  const auto hist = st->history().records();
  auto record = [&](std::string label) {
    auto g = st->snapshot();
    auto rep = check_invariants(g, hist, st->clock());
    out.steps.push_back({std::move(label), std::move(g), std::move(rep)});
  };
  record("initial");
  for (const auto& [label, act] : actions) {
    act(*st);
    record(label);
  }
  for (std::size_t i = 1; i < out.steps.size(); ++i)
    out.monotonicity.push_back(
        check_inv2_monotone(out.steps[i - 1].graph, out.steps[i].graph));
  if (out.steps.size() > 2)
    out.monotonicity.push_back(
        check_inv2_monotone(out.steps.front().graph, out.steps.back().graph));
  return out;
}

inline void expect(ReplayResult& r, std::string what, bool ok,
                   std::string detail = {}) {
  r.expectations.push_back({std::move(what), ok, std::move(detail)});
}

inline bool contents_are(const MulticopyGraph& g, NodeId n,
                         const NodeContents& want) {
  return g.node(n).contents == want;
}

inline TimedValue tv(std::optional<Payload> v, Timestamp t) {
  return {v ? Value{*v} : Value::tombstone(), t};
}

inline bool has_finding(const CheckResult& c, std::vector<NodeId> nodes,
                        Key k) {
  for (const auto& f : c.findings)
    if (f.nodes == nodes && f.key == k) return true;
  return false;
}

}  // namespace detail

inline ReplayResult replay_list() {
  using detail::tv;
  const auto s = list4();
  auto r = detail::run("fig3", s, {});
  const auto& g = r.steps[0].graph;
  detail::expect(r, "all invariants hold", r.steps[0].report.ok(),
                 to_text(r.steps[0].report));
  const NodeContents want{{k1, tv(std::nullopt, 6)}, {k2, tv(d, 7)},
                          {k3, tv(c, 4)}};
  detail::expect(r, "root contents-in-reach is {k1:(tomb,6), k2:(d,7), "
                    "k3:(c,4)}",
                 contents_in_reach(g, g.root) == want);
  auto st = s.build();
  const std::vector<std::pair<Key, Value>> searches{{k1, Value::tombstone()},
                                                    {k2, Value{d}},
                                                    {k3, Value{c}},
                                                    {k4, Value::tombstone()}};
  for (const auto& [k, v] : searches) {
    const Value got = st->search(k);
    detail::expect(r,
                   "search k" + std::to_string(k + 1) + " returns " +
                       to_string(v),
                   got == v, "got " + to_string(got));
  }
  return r;
}

inline ReplayResult replay_flush_and_compact() {
  using detail::tv;
  ReplayResult r;
  r.fixture = "fig1";

  auto flush = detail::run("fig1", list4_flush(),
                           {{"flush r", [](auto& st) { st.compact(0); }}});
  const auto& fg = flush.steps.back().graph;
  detail::expect(r, "flush empties r", fg.node(0).contents.empty());
  detail::expect(r, "flush leaves n1 = {k1:(tomb,6), k2:(d,7)}",
                 detail::contents_are(
                     fg, 1, {{k1, tv(std::nullopt, 6)}, {k2, tv(d, 7)}}));

  auto comp = detail::run("fig1", list4_compact(),
                          {{"compact n1", [](auto& st) { st.compact(1); }}});
  const auto& cg = comp.steps.back().graph;
  detail::expect(r, "compaction empties n1", cg.node(1).contents.empty());
  detail::expect(r, "compaction leaves r = {k2:(d,7)}",
                 detail::contents_are(cg, 0, {{k2, tv(d, 7)}}));
  detail::expect(
      r, "compaction leaves n2 = {k1:(tomb,6), k2:(b,5), k3:(c,4)}",
      detail::contents_are(cg, 2,
                           {{k1, tv(std::nullopt, 6)},
                            {k2, tv(b, 5)},
                            {k3, tv(c, 4)}}));
  bool discarded = true;
  for (const auto& [id, n] : cg.nodes)
    for (const auto& [k, t] : n.contents)
      if (k == k2 && t == tv(a, 3)) discarded = false;
  detail::expect(r, "(k2, a) discarded", discarded);

  for (auto* part : {&flush, &comp}) {
    for (auto& st : part->steps) {
      detail::expect(r, st.label + ": invariants hold", st.report.ok(),
                     to_text(st.report));
      r.steps.push_back(std::move(st));
    }
    for (auto& m : part->monotonicity) {
      detail::expect(r, "contents-in-reach only increases", m.passed);
      r.monotonicity.push_back(std::move(m));
    }
  }
  return r;
}

inline ReplayResult replay_dag_misorder() {
  constexpr NodeId n = 0, m = 1, p = 2;
  auto r = detail::run(
      "fig6", dag_misorder(),
      {{"(2) compact n into m", [](auto& st) { st.compact_once(0, true); }},
       {"(3) compact n into p", [](auto& st) { st.compact_once(0, true); }},
       {"(4) compact p into m", [](auto& st) { st.compact_once(2); }}});
  r.steps[0].label = "(1) initial";

  detail::expect(r, "step (1): Inv7 at (p, k2)",
                 detail::has_finding(r.steps[0].report.get("inv7"), {p}, k2),
                 to_text(r.steps[0].report));
  detail::expect(
      r, "step (2): Inv6 at (p, m, k2)",
      detail::has_finding(r.steps[1].report.get("inv6"), {p, m}, k2),
      to_text(r.steps[1].report));
  const auto& overall = r.monotonicity.back();
  bool dropped = false;
  for (const auto& f : overall.findings)
    if (f.nodes == std::vector<NodeId>{n} && f.key == k2 &&
        f.expected == ">= ts 6" && f.actual == describe(detail::tv(4, 4)))
      dropped = true;
  detail::expect(r, "steps (1)->(4): Inv2 at (n, k2), 6 -> 4", dropped,
                 overall.findings.empty() ? "no findings"
                                          : to_text(overall.findings[0]));
  return r;
}

inline ReplayResult replay_split() {
  auto r = detail::run("fig7", split_compact(),
                       {{"compact n", [](auto& st) { st.compact_once(0); }},
                        {"compact n1", [](auto& st) { st.compact_once(1); }}});
  using detail::tv;
  const auto& g0 = r.steps[0].graph;
  const auto root0 = contents_in_reach(g0, g0.root);
  for (const auto& st : r.steps) {
    detail::expect(r, st.label + ": root contents-in-reach unchanged",
                   contents_in_reach(st.graph, st.graph.root) == root0);
    detail::expect(r, st.label + ": invariants hold", st.report.ok(),
                   to_text(st.report));
  }
  const auto& g2 = r.steps[1].graph;
  detail::expect(r, "after step 2 n is empty", g2.node(0).contents.empty());
  detail::expect(r, "after step 2 n1 = {k1:7, k2:5, k3:6, k4:8}",
                 detail::contents_are(g2, 1,
                                      {{k1, tv(7, 7)},
                                       {k2, tv(5, 5)},
                                       {k3, tv(6, 6)},
                                       {k4, tv(8, 8)}}));
  const auto& g3 = r.steps[2].graph;
  detail::expect(r, "after step 3 a new node holds {k3:6, k4:8}",
                 g3.contains(3) &&
                     detail::contents_are(g3, 3, {{k3, tv(6, 6)},
                                                  {k4, tv(8, 8)}}) &&
                     g3.edgeset(1, 3) == KeySet::of(4, {k3, k4}));
  detail::expect(r, "after step 3 n1 = {k1:7, k2:5}",
                 detail::contents_are(g3, 1, {{k1, tv(7, 7)}, {k2, tv(5, 5)}}));
  for (const auto& m : r.monotonicity)
    detail::expect(r, "contents-in-reach only increases", m.passed);
  return r;
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> all{"fig1", "fig3", "fig6", "fig7"};
  return all;
}

inline ReplayResult replay(const std::string& name) {
  if (name == "fig1") return replay_flush_and_compact();
  if (name == "fig3") return replay_list();
  if (name == "fig6") return replay_dag_misorder();
  if (name == "fig7") return replay_split();
  throw std::invalid_argument("unknown fixture '" + name + "'");
}

}  // namespace mcs::fixtures
