#pragma once

/// \file
/// Whole-graph view of a multicopy structure and the mathematics defined on
/// it: contents-in-reach, insets, and the two flows that encode them.

#include "mcs/core.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace mcs {

/// Per-node state captured in a graph snapshot.
struct GraphNode {
  NodeContents contents;
  /// Recorded successor contents-in-reach (ghost state).
  NodeContents q;
  /// Outgoing edges labelled with their edgesets.
  std::map<NodeId, KeySet> out;
};

/// Immutable snapshot of a multicopy structure: a rooted graph whose nodes
/// carry contents and whose edges carry key sets.
struct MulticopyGraph {
  std::size_t keyspace{0};
  NodeId root{0};
  std::map<NodeId, GraphNode> nodes;

  MulticopyGraph() = default;
  MulticopyGraph(std::size_t ks, NodeId r) : keyspace{ks}, root{r} {
    nodes[r];
  }

  GraphNode& add_node(NodeId id) { return nodes[id]; }

  void set_edge(NodeId from, NodeId to, KeySet keys) {
    nodes[to];
    nodes[from].out[to] = std::move(keys);
  }

  [[nodiscard]] bool contains(NodeId n) const { return nodes.contains(n); }

  [[nodiscard]] const GraphNode& node(NodeId n) const {
    auto it = nodes.find(n);
    if (it == nodes.end())
      throw structural_error("unknown node " + std::to_string(n));
    return it->second;
  }

  /// es(from, to); empty when there is no such edge.
  [[nodiscard]] KeySet edgeset(NodeId from, NodeId to) const {
    const auto& out = node(from).out;
    if (auto it = out.find(to); it != out.end()) return it->second;
    return KeySet(keyspace);
  }

  friend bool operator==(const MulticopyGraph& a, const MulticopyGraph& b) {
    if (a.keyspace != b.keyspace || a.root != b.root ||
        a.nodes.size() != b.nodes.size())
      return false;
    for (auto ia = a.nodes.begin(), ib = b.nodes.begin(); ia != a.nodes.end();
         ++ia, ++ib) {
      if (ia->first != ib->first || ia->second.contents != ib->second.contents ||
          ia->second.q != ib->second.q || ia->second.out != ib->second.out)
        return false;
    }
    return true;
  }
};

/// Unique successor of n whose edgeset contains k, if any.
[[nodiscard]] inline std::optional<NodeId> successor_for(
    const MulticopyGraph& g, NodeId n, Key k) {
  std::optional<NodeId> found;
  for (const auto& [to, es] : g.node(n).out) {
    if (!es.contains(k)) continue;
    if (found)
      throw structural_error("edgesets of node " + std::to_string(n) +
                             " overlap on key " + std::to_string(k));
    found = to;
  }
  return found;
}

/// Kahn order over the edges with a nonempty edgeset. Throws on a cycle.
[[nodiscard]] inline std::vector<NodeId> topological_order(
    const MulticopyGraph& g) {
  std::map<NodeId, std::size_t> indegree;
  for (const auto& [id, node] : g.nodes) indegree.try_emplace(id, 0);
  for (const auto& [id, node] : g.nodes)
    for (const auto& [to, es] : node.out)
      if (!es.empty()) ++indegree[to];

  std::deque<NodeId> ready;
  for (const auto& [id, d] : indegree)
    if (d == 0) ready.push_back(id);

  std::vector<NodeId> order;
  order.reserve(indegree.size());
  while (!ready.empty()) {
    NodeId n = ready.front();
    ready.pop_front();
    order.push_back(n);
    auto it = g.nodes.find(n);
    if (it == g.nodes.end()) continue;
    for (const auto& [to, es] : it->second.out)
      if (!es.empty() && --indegree[to] == 0) ready.push_back(to);
  }
  if (order.size() != indegree.size())
    throw structural_error("graph contains a cycle");
  return order;
}

[[nodiscard]] inline bool is_acyclic(const MulticopyGraph& g) {
  try {
    (void)topological_order(g);
    return true;
  } catch (const structural_error&) {
    return false;
  }
}

/// The copy of k a search starting at n would find, following the recursive
/// definition: n's own copy, else the contents-in-reach of the successor whose
/// edgeset holds k, else absent.
[[nodiscard]] inline std::optional<TimedValue> contents_in_reach(
    const MulticopyGraph& g, NodeId n, Key k) {
  NodeId cur = n;
  for (std::size_t steps = 0; steps <= g.nodes.size(); ++steps) {
    const auto& node = g.node(cur);
    if (auto tv = lookup(node.contents, k)) return tv;
    auto next = successor_for(g, cur, k);
    if (!next) return std::nullopt;
    cur = *next;
  }
  throw structural_error("cycle reached while following key " +
                         std::to_string(k));
}

[[nodiscard]] inline NodeContents contents_in_reach(const MulticopyGraph& g,
                                                    NodeId n) {
  NodeContents out;
  for (Key k = 0; k < g.keyspace; ++k)
    if (auto tv = contents_in_reach(g, n, k)) out.emplace(k, *tv);
  return out;
}

/// Node contents if present, otherwise the recorded successor copy.
[[nodiscard]] inline std::optional<TimedValue> b_hat(const MulticopyGraph& g,
                                                     NodeId n, Key k) {
  const auto& node = g.node(n);
  if (auto tv = lookup(node.contents, k)) return tv;
  return lookup(node.q, k);
}

/// Sets every Q map to the contents-in-reach of the matching successor.
inline void derive_q(MulticopyGraph& g) {
  for (auto& [id, node] : g.nodes) {
    node.q.clear();
    for (const auto& [to, es] : node.out)
      for (Key k : es.keys())
        if (auto tv = contents_in_reach(g, to, k)) node.q.emplace(k, *tv);
  }
}

/// Keys that have a root-to-n path whose every edgeset contains them.
/// Propagated along a topological order; the root's inset is the keyspace.
[[nodiscard]] inline std::map<NodeId, KeySet> insets(const MulticopyGraph& g) {
  std::map<NodeId, KeySet> in;
  for (const auto& [id, node] : g.nodes) in.emplace(id, KeySet(g.keyspace));
  in[g.root] = KeySet::full(g.keyspace);
  for (NodeId n : topological_order(g))
    for (const auto& [to, es] : g.node(n).out) in[to] |= in[n] & es;
  return in;
}

[[nodiscard]] inline KeySet inset(const MulticopyGraph& g, NodeId n) {
  if (!g.contains(n)) return KeySet(g.keyspace);
  return insets(g).at(n);
}

// ---------------------------------------------------------------------------
// Flows

/// Multiset as element -> multiplicity; zero counts are never stored.
template <class Elem>
using Multiset = std::map<Elem, std::size_t>;

template <class Elem>
void multiset_add(Multiset<Elem>& into, const Multiset<Elem>& from) {
  for (const auto& [e, c] : from) into[e] += c;
}

template <class Elem>
using FlowAssignment = std::map<NodeId, Multiset<Elem>>;

/// Element of the contents-in-reach flow domain: one key/copy pair. Ordered
/// lexicographically over all components so distinct copies stay distinct.
struct CirItem {
  Key key{0};
  TimedValue copy;

  friend bool operator==(const CirItem&, const CirItem&) = default;
  friend bool operator<(const CirItem& a, const CirItem& b) {
    return std::tie(a.key, a.copy.ts, a.copy.value) <
           std::tie(b.key, b.copy.ts, b.copy.value);
  }
};

/// Inflow and edge function defining one flow over a graph.
template <class Elem>
struct FlowDomain {
  std::function<Multiset<Elem>(const MulticopyGraph&, NodeId)> inflow;
  std::function<Multiset<Elem>(const MulticopyGraph&, NodeId from, NodeId to,
                               const Multiset<Elem>& flow_at_from)>
      edge;
};

/// Flow encoding contents-in-reach: each edge carries the recorded copies
/// Q_from(k) for the keys of its edgeset; there is no inflow.
[[nodiscard]] inline FlowDomain<CirItem> cir_flow_domain() {
  return {
      [](const MulticopyGraph&, NodeId) { return Multiset<CirItem>{}; },
      [](const MulticopyGraph& g, NodeId from, NodeId to,
         const Multiset<CirItem>&) {
        Multiset<CirItem> out;
        const auto& src = g.node(from);
        const auto& es = src.out.at(to);
        for (const auto& [k, tv] : src.q)
          if (es.contains(k)) out[CirItem{k, tv}] += 1;
        return out;
      }};
}

/// Flow encoding insets: the root receives every key once and each edge
/// filters the flow by its edgeset.
[[nodiscard]] inline FlowDomain<Key> inset_flow_domain() {
  return {[](const MulticopyGraph& g, NodeId n) {
            Multiset<Key> m;
            if (n == g.root)
              for (Key k = 0; k < g.keyspace; ++k) m[k] = 1;
            return m;
          },
          [](const MulticopyGraph& g, NodeId from, NodeId to,
             const Multiset<Key>& fl) {
            Multiset<Key> out;
            const auto& es = g.node(from).out.at(to);
            for (const auto& [k, c] : fl)
              if (es.contains(k)) out[k] = c;
            return out;
          }};
}

/// Unique solution of fl(n) = in(n) + sum over predecessors p of
/// e(p, n)(fl(p)), computed in one pass along a topological order.
template <class Elem>
[[nodiscard]] FlowAssignment<Elem> compute_flow(const MulticopyGraph& g,
                                                const FlowDomain<Elem>& dom) {
  FlowAssignment<Elem> fl;
  for (const auto& [id, node] : g.nodes) fl[id] = dom.inflow(g, id);
  for (NodeId n : topological_order(g)) {
    for (const auto& [to, es] : g.node(n).out) {
      if (es.empty()) continue;
      multiset_add(fl[to], dom.edge(g, n, to, fl[n]));
    }
  }
  return fl;
}

/// Nodes at which a candidate flow does not satisfy the flow equation.
template <class Elem>
[[nodiscard]] std::vector<NodeId> flow_residual(const MulticopyGraph& g,
                                                const FlowDomain<Elem>& dom,
                                                const FlowAssignment<Elem>& fl) {
  FlowAssignment<Elem> rhs;
  for (const auto& [id, node] : g.nodes) rhs[id] = dom.inflow(g, id);
  for (const auto& [id, node] : g.nodes) {
    auto fit = fl.find(id);
    const Multiset<Elem> empty;
    const auto& flow_here = fit == fl.end() ? empty : fit->second;
    for (const auto& [to, es] : node.out)
      if (!es.empty()) multiset_add(rhs[to], dom.edge(g, id, to, flow_here));
  }
  std::vector<NodeId> bad;
  for (const auto& [id, expect] : rhs) {
    auto fit = fl.find(id);
    const bool match = fit == fl.end() ? expect.empty() : fit->second == expect;
    if (!match) bad.push_back(id);
  }
  return bad;
}

}  // namespace mcs
