#pragma once

/// \file
/// JSON form of a quiescent structure snapshot: the graph, its ghost state,
/// the explicit upsert history and the clock.
///
///   {
///     "keyspace": 4, "root": 0, "clock": 8,
///     "nodes": [
///       {"id": 0, "contents": [[key, value, ts], ...],
///        "q": [[key, value, ts], ...],
///        "edges": [{"to": 1, "keys": [0, 1, 2, 3]}]}
///     ],
///     "history": [[key, value, ts], ...]
///   }
///
/// A null value is the tombstone. The implicit timestamp-0 history entries are
/// not written.

#include "mcs/core.hpp"
#include "mcs/graph.hpp"

#include <nlohmann/json.hpp>

#include <istream>
#include <ostream>
#include <vector>

namespace mcs {

struct StructureSnapshot {
  MulticopyGraph graph;
  std::vector<UpsertRecord> history;
  Timestamp clock{1};
};

namespace detail {

inline nlohmann::json value_json(const Value& v) {
  return v.is_tombstone() ? nlohmann::json(nullptr)
                          : nlohmann::json(v.payload());
}

inline Value value_from(const nlohmann::json& j) {
  return j.is_null() ? Value::tombstone() : Value{j.get<Payload>()};
}

inline nlohmann::json contents_json(const NodeContents& c) {
  auto arr = nlohmann::json::array();
  for (const auto& [k, tv] : c)
    arr.push_back({k, value_json(tv.value), tv.ts});
  return arr;
}

inline NodeContents contents_from(const nlohmann::json& j,
                                  std::size_t keyspace) {
  NodeContents c;
  for (const auto& row : j) {
    const Key k = row.at(0).get<Key>();
    if (k >= keyspace)
      throw std::invalid_argument("key " + std::to_string(k) +
                                  " outside keyspace");
    if (!c.emplace(k, TimedValue{value_from(row.at(1)),
                                 row.at(2).get<Timestamp>()})
             .second)
      throw std::invalid_argument("duplicate key " + std::to_string(k) +
                                  " in node contents");
  }
  return c;
}

}  // namespace detail

inline nlohmann::json to_json(const StructureSnapshot& s) {
  nlohmann::json j;
  j["keyspace"] = s.graph.keyspace;
  j["root"] = s.graph.root;
  j["clock"] = s.clock;
  auto nodes = nlohmann::json::array();
  for (const auto& [id, n] : s.graph.nodes) {
    nlohmann::json jn;
    jn["id"] = id;
    jn["contents"] = detail::contents_json(n.contents);
    jn["q"] = detail::contents_json(n.q);
    auto edges = nlohmann::json::array();
    for (const auto& [to, es] : n.out)
      edges.push_back({{"to", to}, {"keys", es.keys()}});
    jn["edges"] = std::move(edges);
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  auto hist = nlohmann::json::array();
  for (const auto& r : s.history)
    hist.push_back({r.key, detail::value_json(r.value), r.ts});
  j["history"] = std::move(hist);
  return j;
}

inline StructureSnapshot snapshot_from_json(const nlohmann::json& j) {
  StructureSnapshot s;
  const auto ks = j.at("keyspace").get<std::size_t>();
  s.graph = MulticopyGraph(ks, j.at("root").get<NodeId>());
  s.clock = j.at("clock").get<Timestamp>();
  for (const auto& jn : j.at("nodes")) {
    auto& n = s.graph.add_node(jn.at("id").get<NodeId>());
    n.contents = detail::contents_from(jn.at("contents"), ks);
    if (jn.contains("q")) n.q = detail::contents_from(jn.at("q"), ks);
    for (const auto& je : jn.value("edges", nlohmann::json::array())) {
      KeySet es(ks);
      for (const auto& k : je.at("keys")) {
        const Key key = k.get<Key>();
        if (key >= ks)
          throw std::invalid_argument("edge key " + std::to_string(key) +
                                      " outside keyspace");
        es.insert(key);
      }
      n.out[je.at("to").get<NodeId>()] = std::move(es);
    }
  }
  // Edge targets must be declared nodes.
  for (const auto& [id, n] : s.graph.nodes)
    for (const auto& [to, es] : n.out)
      if (!s.graph.nodes.contains(to))
        throw std::invalid_argument("edge to undeclared node " +
                                    std::to_string(to));
  for (const auto& row : j.value("history", nlohmann::json::array()))
    s.history.push_back({row.at(0).get<Key>(), detail::value_from(row.at(1)),
                         row.at(2).get<Timestamp>()});
  return s;
}

inline void write_snapshot(std::ostream& os, const StructureSnapshot& s) {
  os << to_json(s).dump(2) << '\n';
}

inline StructureSnapshot read_snapshot(std::istream& is) {
  return snapshot_from_json(nlohmann::json::parse(is));
}

}  // namespace mcs
