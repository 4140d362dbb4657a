#pragma once

/// \file
/// Materialized ghost state: the upsert history log, invocation snapshots,
/// the online search-recency check, and the operation trace consumed by the
/// linearizability checker.

#include "mcs/core.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <cstddef>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mcs {

/// Search response that fails search recency.
struct RecencyViolation {
  Key key{0};
  Value value;
  Timestamp tp{0};
  Timestamp t0{0};
  std::size_t snapshot{0};
  std::string reason;
};

/// Append-only, timestamp-ordered log of upserts.
///
/// Timestamps are dense: the i-th record (0-based) carries timestamp i + 1, so
/// a snapshot is just the published length and H0 is the prefix of that
/// length. The implicit (k, (tombstone, 0)) entries are never stored.
///
/// record_upsert must be serialized by the caller (the root lock). Readers may
/// run concurrently with an append and only see published records.
class UpsertHistory {
 public:
  explicit UpsertHistory(std::size_t keyspace)
      : state_{std::make_unique<State>(keyspace)} {}

  [[nodiscard]] std::size_t keyspace() const noexcept {
    return state_->keyspace;
  }

  /// Number of published records; identifies the prefix H0.
  [[nodiscard]] std::size_t snapshot() const noexcept {
    return state_->published.load(std::memory_order_acquire);
  }
  [[nodiscard]] std::size_t size() const noexcept { return snapshot(); }

  /// Appends (k, (v, t)). t must be exactly one past the last logged
  /// timestamp.
  void record_upsert(Key k, Value v, Timestamp t) {
    auto& s = *state_;
    if (k >= s.keyspace)
      throw history_corruption("upsert of key " + std::to_string(k) +
                               " outside keyspace");
    const std::size_t len = s.published.load(std::memory_order_relaxed);
    if (t <= len)
      throw history_corruption("non-monotone timestamp " + std::to_string(t) +
                               " after " + std::to_string(len));
    if (t != len + 1)
      throw history_corruption("timestamp gap: " + std::to_string(t) +
                               " after " + std::to_string(len));
    const std::size_t chunk = len / kChunkSize;
    if (chunk >= kMaxChunks) throw std::length_error("upsert history full");
    Chunk* c = s.chunks[chunk].load(std::memory_order_relaxed);
    if (c == nullptr) {
      s.owned.push_back(std::make_unique<Chunk>());
      c = s.owned.back().get();
      s.chunks[chunk].store(c, std::memory_order_release);
    }
    (*c)[len % kChunkSize] =
        Entry{UpsertRecord{k, v, t},
              s.latest[k].load(std::memory_order_relaxed)};
    s.latest[k].store(t, std::memory_order_release);
    s.published.store(len + 1, std::memory_order_release);
  }

  /// Published record with timestamp t (1-based).
  [[nodiscard]] std::optional<UpsertRecord> at(Timestamp t) const {
    if (t == 0 || t > snapshot()) return std::nullopt;
    return entry(t).rec;
  }

  /// Latest copy of k among the first `prefix` records.
  [[nodiscard]] TimedValue max_ts(std::size_t prefix, Key k) const {
    if (k >= keyspace())
      throw history_corruption("max_ts of key " + std::to_string(k) +
                               " outside keyspace");
    Timestamp t = state_->latest[k].load(std::memory_order_acquire);
    while (t > prefix) t = entry(t).prev_same_key;
    if (t == 0) return {Value::tombstone(), 0};
    return {entry(t).rec.value, t};
  }
  [[nodiscard]] TimedValue max_ts(Key k) const {
    return max_ts(snapshot(), k);
  }

  /// Copy of the published log.
  [[nodiscard]] std::vector<UpsertRecord> records() const {
    const std::size_t len = snapshot();
    std::vector<UpsertRecord> out;
    out.reserve(len);
    for (std::size_t t = 1; t <= len; ++t) out.push_back(entry(t).rec);
    return out;
  }

  [[nodiscard]] LogicalMap logical_contents() const {
    LogicalMap m(keyspace());
    for (Key k = 0; k < keyspace(); ++k) m.set(k, max_ts(k).value);
    return m;
  }

  /// ok iff (k, (v, tp)) is in the current history and tp is at least the
  /// timestamp of k's latest copy in the prefix `snap`.
  [[nodiscard]] std::optional<RecencyViolation> check_search_recency(
      Key k, Value v, Timestamp tp, std::size_t snap) const {
    RecencyViolation bad{k, v, tp, 0, snap, {}};
    if (k >= keyspace()) {
      bad.reason = "key outside keyspace";
      return bad;
    }
    if (snap > snapshot()) {
      bad.reason = "snapshot beyond published history";
      return bad;
    }
    bad.t0 = max_ts(snap, k).ts;
    if (tp == 0) {
      if (!v.is_tombstone()) {
        bad.reason = "non-tombstone value at timestamp 0";
        return bad;
      }
    } else {
      auto rec = at(tp);
      if (!rec || rec->key != k || !(rec->value == v)) {
        bad.reason = "returned copy is not in the upsert history";
        return bad;
      }
    }
    if (tp < bad.t0) {
      bad.reason = "returned copy is older than the logical value at "
                   "invocation";
      return bad;
    }
    return std::nullopt;
  }

 private:
  static constexpr std::size_t kChunkSize = 4096;
  static constexpr std::size_t kMaxChunks = 1U << 16;

  struct Entry {
    UpsertRecord rec;
    Timestamp prev_same_key{0};
  };
  using Chunk = std::array<Entry, kChunkSize>;

  struct State {
    explicit State(std::size_t ks)
        : keyspace{ks},
          latest{std::make_unique<std::atomic<Timestamp>[]>(ks)},
          chunks{std::make_unique<std::atomic<Chunk*>[]>(kMaxChunks)} {
      for (std::size_t i = 0; i < ks; ++i) latest[i].store(0);
      for (std::size_t i = 0; i < kMaxChunks; ++i) chunks[i].store(nullptr);
    }

    std::size_t keyspace;
    std::atomic<std::size_t> published{0};
    std::unique_ptr<std::atomic<Timestamp>[]> latest;
    std::unique_ptr<std::atomic<Chunk*>[]> chunks;
    std::vector<std::unique_ptr<Chunk>> owned;
  };

  [[nodiscard]] const Entry& entry(Timestamp t) const {
    const std::size_t i = t - 1;
    return (*state_->chunks[i / kChunkSize].load(std::memory_order_acquire))
        [i % kChunkSize];
  }

  std::unique_ptr<State> state_;
};

/// Result of checking Init, HUnique and HClock on a history.
struct HistoryPredicates {
  bool init{true};
  bool unique{true};
  bool clock{true};
  std::string detail;

  [[nodiscard]] bool ok() const noexcept { return init && unique && clock; }
};

/// Checks the history predicates on explicit records against clock value
/// `clock`. Init holds when no explicit record claims timestamp 0 for a
/// non-tombstone value (the implicit entries are always present).
[[nodiscard]] inline HistoryPredicates check_history_predicates(
    std::span<const UpsertRecord> records, std::size_t keyspace,
    Timestamp clock) {
  HistoryPredicates out;
  std::map<Timestamp, const UpsertRecord*> by_ts;
  for (const auto& r : records) {
    if (r.key >= keyspace) {
      out.init = false;
      out.detail += "key " + std::to_string(r.key) + " outside keyspace; ";
    }
    if (r.ts == 0 && !r.value.is_tombstone()) {
      out.init = false;
      out.detail += "data value at timestamp 0; ";
    }
    if (r.ts >= clock) {
      out.clock = false;
      out.detail += "timestamp " + std::to_string(r.ts) + " >= clock " +
                    std::to_string(clock) + "; ";
    }
    // Timestamps are globally unique, which implies per-key uniqueness.
    if (auto [it, fresh] = by_ts.emplace(r.ts, &r); !fresh) {
      out.unique = false;
      out.detail += "timestamp " + std::to_string(r.ts) +
                    " logged twice; ";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace

enum class OpKind { search, upsert };

/// One completed operation. inv and resp are drawn from a single global
/// counter, so they order all invocations and responses in real time.
struct TraceEvent {
  OpKind op{OpKind::search};
  std::uint32_t thread{0};
  Key key{0};
  Value value;
  /// Searches: logical timestamp of key at the invocation snapshot.
  Timestamp t0{0};
  /// Searches: timestamp of the returned copy.
  Timestamp tp{0};
  /// Upserts: timestamp assigned at commit.
  Timestamp ts{0};
  /// Searches: history length at invocation, when recorded.
  std::optional<std::size_t> snap;
  std::uint64_t inv{0};
  std::uint64_t resp{0};

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

inline nlohmann::json to_json(const TraceEvent& e) {
  nlohmann::json j;
  j["op"] = e.op == OpKind::search ? "search" : "upsert";
  j["thread"] = e.thread;
  j["key"] = e.key;
  j["value"] = e.value.is_tombstone() ? nlohmann::json(nullptr)
                                      : nlohmann::json(e.value.payload());
  if (e.op == OpKind::search) {
    j["t0"] = e.t0;
    j["tp"] = e.tp;
    if (e.snap) j["snap"] = *e.snap;
  } else {
    j["ts"] = e.ts;
  }
  j["inv"] = e.inv;
  j["resp"] = e.resp;
  return j;
}

inline TraceEvent trace_event_from_json(const nlohmann::json& j) {
  TraceEvent e;
  const auto op = j.at("op").get<std::string>();
  if (op == "search") {
    e.op = OpKind::search;
  } else if (op == "upsert" || op == "delete") {
    e.op = OpKind::upsert;
  } else {
    throw std::invalid_argument("unknown trace op '" + op + "'");
  }
  e.thread = j.value("thread", 0U);
  e.key = j.at("key").get<Key>();
  if (const auto& v = j.at("value"); !v.is_null())
    e.value = Value{v.get<Payload>()};
  if (e.op == OpKind::search) {
    e.t0 = j.value("t0", Timestamp{0});
    e.tp = j.at("tp").get<Timestamp>();
    if (j.contains("snap")) e.snap = j.at("snap").get<std::size_t>();
  } else {
    e.ts = j.at("ts").get<Timestamp>();
  }
  e.inv = j.at("inv").get<std::uint64_t>();
  e.resp = j.at("resp").get<std::uint64_t>();
  return e;
}

/// JSON lines, one event per line.
inline void write_trace(std::ostream& os, const Trace& tr) {
  for (const auto& e : tr) os << to_json(e).dump() << '\n';
}

inline Trace read_trace(std::istream& is) {
  Trace tr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      tr.push_back(trace_event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) +
                                  ": " + ex.what());
    }
  }
  return tr;
}

}  // namespace mcs
