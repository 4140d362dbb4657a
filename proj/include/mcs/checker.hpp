#pragma once

/// \file
/// Offline verification of multicopy structures.
///
/// check_invariants evaluates the structural invariants of a quiescent
/// snapshot, check_inv2_monotone compares two snapshots of the same structure,
/// and linearize builds an explicit linearization of a completed trace:
/// upserts in timestamp order, each search either right after its invocation
/// snapshot (when it returned the logical value it started with) or right
/// after the upsert whose copy it returned.

#include "mcs/core.hpp"
#include "mcs/graph.hpp"
#include "mcs/history.hpp"
#include "mcs/serialize.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace mcs {

/// One offending location.
struct Finding {
  std::vector<NodeId> nodes;
  std::optional<Key> key;
  std::string expected;
  std::string actual;
};

struct CheckResult {
  std::string name;
  std::string description;
  bool passed{true};
  std::vector<Finding> findings;
};

/// Every checked invariant exactly once, in a fixed order.
class InvariantReport {
 public:
  void add(CheckResult r) { checks_.push_back(std::move(r)); }

  [[nodiscard]] bool ok() const {
    return std::ranges::all_of(checks_, &CheckResult::passed);
  }
  [[nodiscard]] const std::vector<CheckResult>& checks() const noexcept {
    return checks_;
  }
  [[nodiscard]] const CheckResult& get(std::string_view name) const {
    for (const auto& c : checks_)
      if (c.name == name) return c;
    throw std::out_of_range("no check named " + std::string(name));
  }
  [[nodiscard]] std::vector<std::string> failed() const {
    std::vector<std::string> out;
    for (const auto& c : checks_)
      if (!c.passed) out.push_back(c.name);
    return out;
  }

 private:
  std::vector<CheckResult> checks_;
};

inline std::string describe(const std::optional<TimedValue>& tv) {
  if (!tv) return "absent";
  std::ostringstream os;
  os << *tv;
  return os.str();
}

inline std::string to_text(const Finding& f) {
  std::ostringstream os;
  os << "nodes=(";
  for (std::size_t i = 0; i < f.nodes.size(); ++i)
    os << (i ? "," : "") << f.nodes[i];
  os << ')';
  if (f.key) os << " key=" << *f.key;
  if (!f.expected.empty()) os << " expected " << f.expected;
  if (!f.actual.empty()) os << " actual " << f.actual;
  return os.str();
}

inline std::string to_text(const InvariantReport& r) {
  std::ostringstream os;
  for (const auto& c : r.checks()) {
    os << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.description
       << '\n';
    for (const auto& f : c.findings) os << "    " << to_text(f) << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const Finding& f) {
  nlohmann::json j;
  j["nodes"] = f.nodes;
  j["key"] = f.key ? nlohmann::json(*f.key) : nlohmann::json(nullptr);
  j["expected"] = f.expected;
  j["actual"] = f.actual;
  return j;
}

inline nlohmann::json to_json(const InvariantReport& r) {
  auto arr = nlohmann::json::array();
  for (const auto& c : r.checks()) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["description"] = c.description;
    jc["passed"] = c.passed;
    jc["findings"] = nlohmann::json::array();
    for (const auto& f : c.findings) jc["findings"].push_back(to_json(f));
    arr.push_back(std::move(jc));
  }
  return {{"ok", r.ok()}, {"checks", std::move(arr)}};
}

namespace detail {

/// Runs `body` and turns a thrown error into a failed check.
inline CheckResult run_check(std::string name, std::string description,
                             const std::function<void(CheckResult&)>& body) {
  CheckResult r{std::move(name), std::move(description), true, {}};
  try {
    body(r);
  } catch (const std::exception& ex) {
    r.findings.push_back({{}, std::nullopt, "evaluable structure", ex.what()});
  }
  r.passed = r.findings.empty();
  return r;
}

inline constexpr std::size_t kMaxFindings = 64;

inline void note(CheckResult& r, Finding f) {
  if (r.findings.size() < kMaxFindings) r.findings.push_back(std::move(f));
}

inline std::string ts_text(Timestamp t) { return "ts " + std::to_string(t); }

}  // namespace detail

/// Evaluates every single-snapshot invariant on a quiescent structure.
[[nodiscard]] inline InvariantReport check_invariants(
    const MulticopyGraph& g, std::span<const UpsertRecord> history,
    Timestamp clock) {
  using detail::note;
  using detail::run_check;
  InvariantReport report;

  report.add(run_check("wellformed", "root and edge targets are nodes",
                       [&](CheckResult& r) {
                         if (!g.contains(g.root))
                           note(r, {{g.root}, std::nullopt, "root in nodes",
                                    "missing"});
                         for (const auto& [id, n] : g.nodes)
                           for (const auto& [to, es] : n.out)
                             if (!g.contains(to))
                               note(r, {{id, to}, std::nullopt, "declared node",
                                        "missing"});
                       }));

  const bool acyclic = is_acyclic(g);
  report.add(run_check("acyclic", "edge relation is acyclic",
                       [&](CheckResult& r) {
                         if (!acyclic)
                           note(r, {{}, std::nullopt, "acyclic", "cycle"});
                       }));

  bool disjoint = true;
  report.add(run_check(
      "edgeset_disjoint", "outgoing edgesets are pairwise disjoint",
      [&](CheckResult& r) {
        for (const auto& [id, n] : g.nodes)
          for (auto a = n.out.begin(); a != n.out.end(); ++a)
            for (auto b = std::next(a); b != n.out.end(); ++b)
              for (Key k : (a->second & b->second).keys()) {
                disjoint = false;
                note(r, {{id, a->first, b->first}, k, "one successor",
                         "two successors"});
              }
      }));

  std::map<Timestamp, UpsertRecord> by_ts;
  for (const auto& rec : history) by_ts.emplace(rec.ts, rec);
  auto latest = [&](Key k) {
    TimedValue best{Value::tombstone(), 0};
    for (const auto& rec : history)
      if (rec.key == k && rec.ts > best.ts) best = {rec.value, rec.ts};
    return best;
  };

  // Every remaining check needs contents-in-reach or a flow.
  const std::string unusable =
      !acyclic ? "graph has a cycle"
               : (!disjoint ? "edgesets overlap" : std::string{});
  auto guarded = [&](std::string name, std::string desc,
                     const std::function<void(CheckResult&)>& body) {
    report.add(run_check(std::move(name), std::move(desc), [&](CheckResult& r) {
      if (!unusable.empty()) {
        note(r, {{}, std::nullopt, "evaluable structure", unusable});
        return;
      }
      body(r);
    }));
  };

  std::vector<UpsertRecord> hist_vec(history.begin(), history.end());
  const auto preds = check_history_predicates(hist_vec, g.keyspace, clock);
  report.add(run_check("history", "Init, HUnique and HClock hold",
                       [&](CheckResult& r) {
                         if (!preds.ok())
                           note(r, {{}, std::nullopt, "well-formed history",
                                    preds.detail});
                       }));

  guarded("inv1", "logical contents equal the root's contents-in-reach",
          [&](CheckResult& r) {
            for (Key k = 0; k < g.keyspace; ++k) {
              const TimedValue expect = latest(k);
              const auto got = contents_in_reach(g, g.root, k);
              const TimedValue have =
                  got.value_or(TimedValue{Value::tombstone(), 0});
              if (!(have == expect))
                note(r, {{g.root}, k, describe(expect), describe(got)});
            }
          });

  guarded("inv1_bhat",
          "logical contents equal the root's contents-in-reach via Q",
          [&](CheckResult& r) {
            for (Key k = 0; k < g.keyspace; ++k) {
              const TimedValue expect = latest(k);
              const auto got = b_hat(g, g.root, k);
              const TimedValue have =
                  got.value_or(TimedValue{Value::tombstone(), 0});
              if (!(have == expect))
                note(r, {{g.root}, k, describe(expect), describe(got)});
            }
          });

  report.add(run_check(
      "inv3", "every stored copy was upserted", [&](CheckResult& r) {
        for (const auto& [id, n] : g.nodes)
          for (const auto& [k, tv] : n.contents) {
            if (tv.ts == 0 && tv.value.is_tombstone()) continue;
            auto it = by_ts.find(tv.ts);
            if (it == by_ts.end() || it->second.key != k ||
                !(it->second.value == tv.value))
              note(r, {{id}, k, "copy in history", describe(tv)});
          }
      }));

  report.add(run_check(
      "inv4", "all timestamps are below the clock", [&](CheckResult& r) {
        for (const auto& rec : history)
          if (rec.ts >= clock)
            note(r, {{}, rec.key, "< " + std::to_string(clock),
                     detail::ts_text(rec.ts)});
        for (const auto& [id, n] : g.nodes)
          for (const auto& [k, tv] : n.contents)
            if (tv.ts >= clock)
              note(r, {{id}, k, "< " + std::to_string(clock),
                       detail::ts_text(tv.ts)});
      }));

  guarded("inv6", "a node's copies are at least as new as its successor's",
          [&](CheckResult& r) {
            for (const auto& [id, n] : g.nodes)
              for (const auto& [to, es] : n.out)
                for (const auto& [k, tv] : n.contents) {
                  if (!es.contains(k)) continue;
                  const auto below = contents_in_reach(g, to, k);
                  if (ts_of(below) > tv.ts)
                    note(r, {{id, to}, k, "<= " + detail::ts_text(tv.ts),
                             describe(below)});
                }
          });

  std::map<NodeId, KeySet> path_insets;
  if (unusable.empty()) path_insets = insets(g);

  guarded("inv7", "contents-in-reach keys lie in the node's inset",
          [&](CheckResult& r) {
            for (const auto& [id, n] : g.nodes) {
              const auto& in = path_insets.at(id);
              for (Key k = 0; k < g.keyspace; ++k)
                if (!in.contains(k) && contents_in_reach(g, id, k))
                  note(r, {{id}, k, "key in inset", "key outside inset"});
            }
          });

  FlowAssignment<Key> inset_fl;
  FlowAssignment<CirItem> cir_fl;
  if (unusable.empty()) {
    inset_fl = compute_flow(g, inset_flow_domain());
    cir_fl = compute_flow(g, cir_flow_domain());
  }
  auto inset_count = [&](NodeId n, Key k) -> std::size_t {
    const auto& m = inset_fl.at(n);
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  };

  guarded("inv8", "predecessors have disjoint insets (inset multiplicity <= 1)",
          [&](CheckResult& r) {
            for (const auto& [id, m] : inset_fl)
              for (const auto& [k, c] : m)
                if (c > 1)
                  note(r, {{id}, k, "multiplicity <= 1",
                           "multiplicity " + std::to_string(c)});
          });

  guarded("phi1", "recorded successor copies have an edge",
          [&](CheckResult& r) {
            for (const auto& [id, n] : g.nodes)
              for (const auto& [k, tv] : n.q)
                if (!successor_for(g, id, k))
                  note(r, {{id}, k, "edge for key", "no outgoing edge"});
          });

  guarded("phi2", "incoming flow agrees with the node's effective copies",
          [&](CheckResult& r) {
            for (const auto& [id, m] : cir_fl)
              for (const auto& [item, c] : m) {
                const auto here = b_hat(g, id, item.key);
                if (!here || !(*here == item.copy))
                  note(r, {{id}, item.key, describe(item.copy),
                           describe(here)});
              }
          });

  guarded("phi3", "recorded successor copies are no newer than the node's",
          [&](CheckResult& r) {
            for (const auto& [id, n] : g.nodes)
              for (const auto& [k, tv] : n.q) {
                const auto here = b_hat(g, id, k);
                if (tv.ts > ts_of(here))
                  note(r, {{id}, k, "<= " + detail::ts_text(ts_of(here)),
                           describe(tv)});
              }
          });

  guarded("phi4", "effective keys have positive inset flow",
          [&](CheckResult& r) {
            for (const auto& [id, n] : g.nodes)
              for (Key k = 0; k < g.keyspace; ++k)
                if (b_hat(g, id, k) && inset_count(id, k) == 0)
                  note(r, {{id}, k, "inset flow > 0", "inset flow 0"});
          });

  guarded("floweqn_cir", "contents-in-reach flow satisfies the flow equation",
          [&](CheckResult& r) {
            for (NodeId n : flow_residual(g, cir_flow_domain(), cir_fl))
              note(r, {{n}, std::nullopt, "zero residual", "nonzero"});
          });

  guarded("floweqn_inset", "inset flow satisfies the flow equation",
          [&](CheckResult& r) {
            for (NodeId n : flow_residual(g, inset_flow_domain(), inset_fl))
              note(r, {{n}, std::nullopt, "zero residual", "nonzero"});
          });

  return report;
}

[[nodiscard]] inline InvariantReport check_invariants(
    const StructureSnapshot& s) {
  return check_invariants(s.graph, s.history, s.clock);
}

/// Contents-in-reach timestamps never decrease between two snapshots of the
/// same structure, for every node present in both.
[[nodiscard]] inline CheckResult check_inv2_monotone(
    const MulticopyGraph& prev, const MulticopyGraph& next) {
  return detail::run_check(
      "inv2", "contents-in-reach only increases", [&](CheckResult& r) {
        for (const auto& [id, n] : prev.nodes) {
          if (!next.contains(id)) continue;
          for (Key k = 0; k < std::min(prev.keyspace, next.keyspace); ++k) {
            const auto before = contents_in_reach(prev, id, k);
            const auto after = contents_in_reach(next, id, k);
            if (ts_of(after) < ts_of(before))
              detail::note(r, {{id}, k, ">= " + detail::ts_text(ts_of(before)),
                               describe(after)});
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Linearization

enum class Placement {
  /// Search placed right after its invocation snapshot.
  at_invocation,
  /// Search placed right after the upsert whose copy it returned.
  after_upsert,
};

struct SearchPlacement {
  std::size_t event{0};
  Placement rule{Placement::at_invocation};
  /// Number of upserts that precede the search in the linearization.
  Timestamp position{0};
};

struct LinearizationWitness {
  /// Trace indices in linearization order.
  std::vector<std::size_t> order;
  std::vector<SearchPlacement> searches;
};

struct LinearizationFailure {
  /// Offending trace index.
  std::size_t event{0};
  std::optional<std::size_t> conflicting;
  std::string reason;
};

struct LinearizeResult {
  std::optional<LinearizationWitness> witness;
  std::optional<LinearizationFailure> failure;

  [[nodiscard]] bool ok() const noexcept { return witness.has_value(); }
};

/// Builds and validates the linearization of a completed trace.
///
/// Searches that recorded their invocation snapshot are placed at it; without
/// one the earliest position consistent with the key's t0 and with every
/// upsert that completed before the search was invoked is used.
[[nodiscard]] inline LinearizeResult linearize(const Trace& tr) {
  auto fail = [](std::size_t e, std::string why,
                 std::optional<std::size_t> other = std::nullopt) {
    return LinearizeResult{std::nullopt,
                           LinearizationFailure{e, other, std::move(why)}};
  };

  // Well-formedness.
  std::unordered_set<std::uint64_t> seqs;
  std::vector<std::size_t> upserts;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& e = tr[i];
    if (e.inv >= e.resp) return fail(i, "invocation not before response");
    if (!seqs.insert(e.inv).second || !seqs.insert(e.resp).second)
      return fail(i, "duplicate sequence number");
    if (e.op == OpKind::upsert) upserts.push_back(i);
  }
  std::ranges::sort(upserts, {}, [&](std::size_t i) { return tr[i].ts; });
  for (std::size_t j = 0; j < upserts.size(); ++j)
    if (tr[upserts[j]].ts != j + 1)
      return fail(upserts[j], "upsert timestamps are not 1..n without gaps");
  const Timestamp n_upserts = upserts.size();

  // Placement.
  std::vector<SearchPlacement> placed;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& e = tr[i];
    if (e.op != OpKind::search) continue;
    if (e.tp > n_upserts)
      return fail(i, "returned timestamp " + std::to_string(e.tp) +
                         " was never upserted");
    SearchPlacement p{i, Placement::at_invocation, 0};
    if (e.tp > e.t0) {
      p.rule = Placement::after_upsert;
      p.position = e.tp;
    } else if (e.snap) {
      if (*e.snap > n_upserts || *e.snap < e.t0)
        return fail(i, "invocation snapshot inconsistent with t0");
      p.position = *e.snap;
    } else {
      Timestamp pos = e.t0;
      for (std::size_t u : upserts)
        if (tr[u].resp < e.inv) pos = std::max(pos, tr[u].ts);
      p.position = pos;
    }
    placed.push_back(p);
  }
  std::ranges::sort(placed, [&](const auto& a, const auto& b) {
    return std::tie(a.position, tr[a.event].inv) <
           std::tie(b.position, tr[b.event].inv);
  });

  LinearizationWitness w;
  w.order.reserve(tr.size());
  {
    auto s = placed.begin();
    for (Timestamp pos = 0; pos <= n_upserts; ++pos) {
      if (pos > 0) w.order.push_back(upserts[pos - 1]);
      for (; s != placed.end() && s->position == pos; ++s)
        w.order.push_back(s->event);
    }
  }

  // Real time: no event may be placed after one invoked after it responded.
  // Sequential replay: every search reads the latest preceding upsert.
  std::map<Key, Value> state;
  std::uint64_t max_inv = 0;
  std::optional<std::size_t> max_inv_event;
  for (std::size_t idx : w.order) {
    const auto& e = tr[idx];
    if (max_inv_event && e.resp < max_inv)
      return fail(idx, "placed after an operation invoked after it responded",
                  max_inv_event);
    if (e.inv > max_inv || !max_inv_event) {
      max_inv = e.inv;
      max_inv_event = idx;
    }
    if (e.op == OpKind::upsert) {
      state[e.key] = e.value;
    } else {
      auto it = state.find(e.key);
      const Value expect = it == state.end() ? Value::tombstone() : it->second;
      if (!(expect == e.value))
        return fail(idx, "search returned " + to_string(e.value) +
                             " but the linearized map holds " +
                             to_string(expect));
    }
  }
  w.searches = std::move(placed);
  return LinearizeResult{std::move(w), std::nullopt};
}

}  // namespace mcs
