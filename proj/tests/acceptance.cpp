// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include "mcs/checker.hpp"
#include "mcs/fixtures.hpp"
#include "mcs/harness.hpp"
#include "mcs/lsm.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mcs;
namespace fx = mcs::fixtures;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass{true};
  std::ostringstream why;

  void fail(const std::string& s) {
    if (!pass) why << "; ";
    else why.str("");
    pass = false;
    why << s;
  }
};

// Histories observed during the run, for the history-predicate criterion.
struct HistoryCheck {
  std::string what;
  HistoryPredicates result;
};
std::vector<HistoryCheck> g_histories;

template <class S>
void sequential_run(S& st, std::uint64_t seed, std::size_t ops, Outcome& o,
                    const char* label) {
  std::mt19937_64 rng(seed);
  std::map<Key, Value> model;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < ops; ++i) {
    const Key k = static_cast<Key>(rng() % st.keyspace());
    const unsigned r = rng() % 100;
    if (r < 50) {
      const Value want = model.contains(k) ? model[k] : Value::tombstone();
      if (st.search(k) != want) ++mismatches;
    } else if (r < 90) {
      const Value v{static_cast<Payload>(rng() % 1'000'000)};
      st.upsert(k, v);
      model[k] = v;
    } else {
      st.remove(k);
      model[k] = Value::tombstone();
    }
  }
  if (mismatches)
    o.fail(std::string(label) + ": " + std::to_string(mismatches) +
           " searches differ from the map");
  const auto recs = st.history().records();
  g_histories.push_back({label, check_history_predicates(recs, st.keyspace(),
                                                         st.clock())});
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  LsmStructure<> lsm({64, 4, 2, FullRootPolicy::flush});
  sequential_run(lsm, 20240601, 10000, o, "lsm");
  DfStructure<> df({64, 4, 2, FullRootPolicy::flush});
  sequential_run(df, 20240602, 10000, o, "df");
  const double s = since(t0);
  if (s >= 5.0) o.fail("took " + std::to_string(s) + " s");
  if (o.pass)
    o.why << "10000 ops each on lsm and df match the map in " << s << " s";
  return o;
}

Outcome replay_expectations(const std::vector<std::string>& figs) {
  Outcome o;
  std::size_t n = 0;
  for (const auto& f : figs) {
    const auto r = fx::replay(f);
    for (const auto& e : r.expectations) {
      ++n;
      if (!e.passed) o.fail(f + ": " + e.description);
    }
  }
  if (o.pass) o.why << n << " expectations hold";
  return o;
}

Outcome criterion2() {
  Outcome o = replay_expectations({"fig1", "fig3", "fig7"});
  // Independent restatement of the list scenario's headline values.
  auto st = fx::list4().build();
  const auto g = st->snapshot();
  const NodeContents want{{fx::k1, {Value::tombstone(), 6}},
                          {fx::k2, {Value{fx::d}, 7}},
                          {fx::k3, {Value{fx::c}, 4}}};
  NodeContents got;
  for (Key k = 0; k < 4; ++k)
    if (auto c = oracle::cir(g, 0, k)) got[k] = *c;
  if (got != want) o.fail("root contents-in-reach differs");
  if (!st->search(fx::k1).is_tombstone() || st->search(fx::k2) != Value{fx::d} ||
      st->search(fx::k3) != Value{fx::c} || !st->search(fx::k4).is_tombstone())
    o.fail("list searches differ");
  const auto s = fx::list4();
  g_histories.push_back(
      {"list", check_history_predicates(s.history, 4, s.clock())});
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto r = fx::replay("fig6");
  auto find = [](const CheckResult& c, std::vector<NodeId> nodes, Key k)
      -> const Finding* {
    for (const auto& f : c.findings)
      if (f.nodes == nodes && f.key == k) return &f;
    return nullptr;
  };
  const NodeId n = 0, m = 1, p = 2;
  if (!find(r.steps[0].report.get("inv7"), {p}, fx::k2))
    o.fail("Inv7 at (p,k2) not reported in step (1)");
  if (!find(r.steps[1].report.get("inv6"), {p, m}, fx::k2))
    o.fail("Inv6 at (p,m,k2) not reported in step (2)");
  const auto* f = find(r.monotonicity.back(), {n}, fx::k2);
  if (!f)
    o.fail("Inv2 at (n,k2) not reported across (1)->(4)");
  else if (f->expected != ">= ts 6" || f->actual != "(4,4)")
    o.fail("Inv2 witness is " + f->expected + " / " + f->actual);
  if (o.pass)
    o.why << "Inv7 (p,k2) at (1); Inv6 (p,m,k2) at (2); Inv2 (n,k2) "
          << f->expected << " but " << f->actual << " at (4)";
  return o;
}

Outcome criterion4() {
  Outcome o;
  std::mt19937_64 rng(4004);
  std::size_t graphs = 0, checks = 0;
  for (int i = 0; i < 1000; ++i) {
    auto rg = oracle::random_graph(rng, 12, 16, i % 2 == 0);
    oracle::fill_q(rg.g);
    const auto& g = rg.g;
    ++graphs;
    for (const auto& [id, node] : g.nodes)
      for (Key k = 0; k < g.keyspace; ++k) {
        ++checks;
        const auto rec = oracle::cir(g, id, k);
        if (b_hat(g, id, k) != rec || contents_in_reach(g, id, k) != rec) {
          o.fail("graph " + std::to_string(i) + " node " + std::to_string(id) +
                 " key " + std::to_string(k) + ": B-hat differs from recursion");
          return o;
        }
      }
    const auto cir_fl = compute_flow(g, cir_flow_domain());
    const auto in_fl = compute_flow(g, inset_flow_domain());
    if (!flow_residual(g, cir_flow_domain(), cir_fl).empty() ||
        !flow_residual(g, inset_flow_domain(), in_fl).empty()) {
      o.fail("graph " + std::to_string(i) + ": nonzero residual");
      return o;
    }
    if (in_fl != oracle::jacobi_inset_flow(g)) {
      o.fail("graph " + std::to_string(i) + ": inset flow differs from iteration");
      return o;
    }
    const auto jac = oracle::jacobi_cir_flow(g);
    for (const auto& [id, bag] : cir_fl) {
      oracle::CirBag got;
      for (const auto& [item, c] : bag)
        for (std::size_t j = 0; j < c; ++j)
          got.insert({item.key, item.copy.ts, item.copy.value.raw()});
      if (got != jac.at(id)) {
        o.fail("graph " + std::to_string(i) + ": cir flow differs from iteration");
        return o;
      }
    }
    const auto paths = oracle::path_counts(g);
    for (const auto& [id, node] : g.nodes) {
      const std::map<Key, std::size_t> got(in_fl.at(id).begin(),
                                           in_fl.at(id).end());
      if (got != paths.at(id)) {
        o.fail("graph " + std::to_string(i) + " node " + std::to_string(id) +
               ": inset multiplicities differ from path enumeration");
        return o;
      }
    }
  }
  o.why << graphs << " graphs, " << checks << " node/key pairs agree";
  return o;
}

std::vector<StressReport> g_stress;

Outcome criterion5() {
  Outcome o;
  std::ostringstream summary;
  for (unsigned threads : {2U, 4U, 8U}) {
    WorkloadConfig c;
    c.threads = threads;
    c.ops_per_thread = 10000;
    c.maintenance = parse_maintenance("periodic:1");
    c.checkpoint_every = 1000;
    c.seed = 5000 + threads;
    auto rep = run_stress(c, true);
    const std::string tag = std::to_string(threads) + " threads";
    if (rep.recency_violation_count)
      o.fail(tag + ": " + std::to_string(rep.recency_violation_count) +
             " recency violations");
    if (!rep.checkpoint_failures.empty())
      o.fail(tag + ": " + rep.checkpoint_failures.front());
    if (rep.seconds >= 60.0) o.fail(tag + ": took " + std::to_string(rep.seconds) + " s");
    if (rep.locks.search > 1 || rep.locks.compact > 2)
      o.fail(tag + ": lock discipline exceeded");
    summary << (summary.tellp() ? ", " : "") << threads << "t " << rep.checkpoints
            << " checkpoints " << rep.seconds << " s";
    g_histories.push_back({"stress " + tag, rep.history});
    g_stress.push_back(std::move(rep));
  }
  if (o.pass) o.why << "zero violations (" << summary.str() << ")";
  return o;
}

// Replays a witness order against a plain map.
bool replay_matches(const Trace& tr, const std::vector<std::size_t>& order) {
  std::map<Key, Value> m;
  for (std::size_t i : order) {
    const auto& e = tr[i];
    if (e.op == OpKind::upsert) {
      m[e.key] = e.value;
    } else {
      const Value want = m.contains(e.key) ? m[e.key] : Value::tombstone();
      if (want != e.value) return false;
    }
  }
  return order.size() == tr.size();
}

Outcome criterion6() {
  Outcome o;
  if (g_stress.empty()) {
    o.fail("no stress traces");
    return o;
  }
  std::size_t events = 0;
  for (const auto& rep : g_stress) {
    const auto tag = std::to_string(rep.config.threads) + " threads";
    if (!rep.linearization || !rep.linearization->ok()) {
      o.fail(tag + ": linearization failed" +
             (rep.linearization && rep.linearization->failure
                  ? ": " + rep.linearization->failure->reason
                  : std::string{}));
      continue;
    }
    if (!replay_matches(rep.trace, rep.linearization->witness->order))
      o.fail(tag + ": witness replay differs from map semantics");
    events += rep.trace.size();
  }

  // Fault injection on the largest trace.
  const Trace& base = g_stress.back().trace;
  std::map<Timestamp, const TraceEvent*> ups;
  for (const auto& e : base)
    if (e.op == OpKind::upsert) ups[e.ts] = &e;

  // Stale value: a search returns an older copy of its key than its t0.
  bool stale_done = false;
  for (std::size_t i = 0; i < base.size() && !stale_done; ++i) {
    const auto& e = base[i];
    if (e.op != OpKind::search || e.t0 == 0) continue;
    const Value current = ups.at(e.t0)->value;
    for (Timestamp t = e.t0 - 1; t >= 1; --t) {
      const auto* u = ups.at(t);
      if (u->key != e.key || u->value == current) continue;
      Trace bad = base;
      bad[i].value = u->value;
      bad[i].tp = t;
      const auto r = linearize(bad);
      if (r.ok())
        o.fail("stale value accepted");
      else if (r.failure->event != i)
        o.fail("stale value witness points at event " +
               std::to_string(r.failure->event) + " not " + std::to_string(i));
      stale_done = true;
      break;
    }
  }
  if (!stale_done) o.fail("no search suitable for stale-value injection");

  // Reordered timestamps: swap two upserts that do not overlap in real time.
  bool swap_done = false;
  for (Timestamp t = 1; t + 1 <= ups.size() && !swap_done; ++t) {
    const auto* a = ups.at(t);
    for (Timestamp u = t + 1; u <= ups.size(); ++u) {
      const auto* b = ups.at(u);
      if (a->resp >= b->inv) continue;
      Trace bad = base;
      for (auto& e : bad)
        if (e.op == OpKind::upsert && e.ts == t) e.ts = u;
        else if (e.op == OpKind::upsert && e.ts == u) e.ts = t;
      if (linearize(bad).ok()) o.fail("reordered timestamps accepted");
      swap_done = true;
      break;
    }
  }
  if (!swap_done) o.fail("no upsert pair suitable for reordering");

  if (o.pass)
    o.why << g_stress.size() << " traces (" << events
          << " events) linearized; stale-value and reordered-timestamp "
             "mutants rejected";
  return o;
}

Outcome criterion7() {
  Outcome o;
  for (const auto& h : g_histories)
    if (!h.result.ok()) o.fail(h.what + ": " + h.result.detail);
  if (g_histories.empty()) o.fail("no histories recorded");
  if (o.pass) o.why << g_histories.size() << " histories satisfy Init, HUnique, HClock";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"sequential oracle equivalence", criterion1},
      {"scenario replays", criterion2},
      {"negative DAG suite", criterion3},
      {"flow/recursion agreement", criterion4},
      {"concurrent search recency", criterion5},
      {"linearizability", criterion6},
      {"history predicates", criterion7},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o.fail(std::string("exception: ") + ex.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " ("
              << criteria[i].first << "): " << o.why.str() << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
