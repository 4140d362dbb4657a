#pragma once

/// \file
/// Domain types shared by every multicopy module: keys, values with a
/// tombstone, timestamps, per-node contents and the logical map.

#include <boost/dynamic_bitset.hpp>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcs {

using Key = std::uint32_t;
using Timestamp = std::uint64_t;
using NodeId = std::uint32_t;

/// Integer carrier for non-tombstone values.
using Payload = std::int64_t;

class structural_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class contract_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class history_corruption : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value is either the tombstone or a data payload.
class Value {
 public:
  constexpr Value() noexcept = default;
  constexpr explicit Value(Payload p) noexcept : data_{p} {}

  [[nodiscard]] static constexpr Value tombstone() noexcept { return {}; }

  [[nodiscard]] constexpr bool is_tombstone() const noexcept {
    return !data_.has_value();
  }
  [[nodiscard]] constexpr Payload payload() const { return data_.value(); }
  [[nodiscard]] constexpr const std::optional<Payload>& raw() const noexcept {
    return data_;
  }

  friend constexpr bool operator==(const Value&, const Value&) = default;
  // Tombstone sorts before every payload.
  friend constexpr std::strong_ordering operator<=>(const Value& a,
                                                    const Value& b) {
    if (a.data_.has_value() != b.data_.has_value())
      return a.data_.has_value() ? std::strong_ordering::greater
                                 : std::strong_ordering::less;
    if (!a.data_) return std::strong_ordering::equal;
    return *a.data_ <=> *b.data_;
  }

 private:
  std::optional<Payload> data_;
};

inline std::ostream& operator<<(std::ostream& os, const Value& v) {
  if (v.is_tombstone()) return os << "tombstone";
  return os << v.payload();
}

inline std::string to_string(const Value& v) {
  return v.is_tombstone() ? std::string{"tombstone"}
                          : std::to_string(v.payload());
}

/// A value paired with the logical time it was upserted.
///
/// Copies are compared by timestamp only; equality still compares both
/// components. Within one upsert history timestamps are unique, so the two
/// notions agree on every pair that can actually occur.
struct TimedValue {
  Value value;
  Timestamp ts{0};

  friend constexpr bool operator==(const TimedValue&,
                                   const TimedValue&) = default;
  friend constexpr std::weak_ordering operator<=>(const TimedValue& a,
                                                  const TimedValue& b) {
    return a.ts <=> b.ts;
  }
};

inline std::ostream& operator<<(std::ostream& os, const TimedValue& tv) {
  return os << '(' << tv.value << ',' << tv.ts << ')';
}

/// ts of an optional copy; an absent copy reads as timestamp 0.
[[nodiscard]] constexpr Timestamp ts_of(
    const std::optional<TimedValue>& tv) noexcept {
  return tv ? tv->ts : 0;
}

/// Partial map key -> (value, timestamp) held by one node.
using NodeContents = std::map<Key, TimedValue>;

/// Contents with the timestamps stripped.
using ValueMap = std::map<Key, Value>;

[[nodiscard]] inline ValueMap val_projection(const NodeContents& c) {
  ValueMap out;
  for (const auto& [k, tv] : c) out.emplace_hint(out.end(), k, tv.value);
  return out;
}

[[nodiscard]] inline std::optional<TimedValue> lookup(const NodeContents& c,
                                                      Key k) {
  if (auto it = c.find(k); it != c.end()) return it->second;
  return std::nullopt;
}

/// Total map over a bounded keyspace; keys never written read as tombstone.
class LogicalMap {
 public:
  explicit LogicalMap(std::size_t keyspace) : values_(keyspace) {}

  [[nodiscard]] std::size_t keyspace() const noexcept { return values_.size(); }
  [[nodiscard]] const Value& operator[](Key k) const { return values_.at(k); }
  void set(Key k, Value v) { values_.at(k) = v; }

  friend bool operator==(const LogicalMap&, const LogicalMap&) = default;

 private:
  std::vector<Value> values_;
};

/// One explicit upsert: key k received value v at time ts.
struct UpsertRecord {
  Key key{0};
  Value value;
  Timestamp ts{0};

  friend constexpr bool operator==(const UpsertRecord&,
                                   const UpsertRecord&) = default;
};

/// Latest copy of k in a history given as explicit records. The implicit
/// (k, (tombstone, 0)) entry is always part of the history, so the result is
/// total.
[[nodiscard]] inline TimedValue max_ts(std::span<const UpsertRecord> history,
                                       Key k) {
  TimedValue best{Value::tombstone(), 0};
  for (const auto& r : history) {
    if (r.key != k) continue;
    if (r.ts == 0)
      throw history_corruption("explicit record at reserved timestamp 0");
    if (r.ts > best.ts) best = {r.value, r.ts};
  }
  return best;
}

[[nodiscard]] inline LogicalMap logical_contents(
    std::span<const UpsertRecord> history, std::size_t keyspace) {
  std::vector<TimedValue> best(keyspace, TimedValue{Value::tombstone(), 0});
  for (const auto& r : history) {
    if (r.key >= keyspace)
      throw history_corruption("key " + std::to_string(r.key) +
                               " outside keyspace");
    if (r.ts == 0)
      throw history_corruption("explicit record at reserved timestamp 0");
    if (r.ts > best[r.key].ts) best[r.key] = {r.value, r.ts};
  }
  LogicalMap m(keyspace);
  for (Key k = 0; k < keyspace; ++k) m.set(k, best[k].value);
  return m;
}

/// Set of keys drawn from [0, keyspace).
class KeySet {
 public:
  KeySet() = default;
  explicit KeySet(std::size_t keyspace) : bits_(keyspace) {}

  [[nodiscard]] static KeySet full(std::size_t keyspace) {
    KeySet s(keyspace);
    s.bits_.set();
    return s;
  }
  [[nodiscard]] static KeySet of(std::size_t keyspace,
                                 std::initializer_list<Key> keys) {
    KeySet s(keyspace);
    for (Key k : keys) s.insert(k);
    return s;
  }

  [[nodiscard]] std::size_t keyspace() const noexcept { return bits_.size(); }
  [[nodiscard]] bool contains(Key k) const noexcept {
    return k < bits_.size() && bits_.test(k);
  }
  void insert(Key k) { bits_.set(k); }
  void erase(Key k) { bits_.reset(k); }
  [[nodiscard]] std::size_t size() const noexcept { return bits_.count(); }
  [[nodiscard]] bool empty() const noexcept { return bits_.none(); }

  [[nodiscard]] bool intersects(const KeySet& o) const {
    return bits_.intersects(o.bits_);
  }
  KeySet& operator&=(const KeySet& o) {
    bits_ &= o.bits_;
    return *this;
  }
  KeySet& operator|=(const KeySet& o) {
    bits_ |= o.bits_;
    return *this;
  }
  KeySet& operator-=(const KeySet& o) {
    bits_ -= o.bits_;
    return *this;
  }
  friend KeySet operator&(KeySet a, const KeySet& b) { return a &= b; }
  friend KeySet operator|(KeySet a, const KeySet& b) { return a |= b; }
  friend KeySet operator-(KeySet a, const KeySet& b) { return a -= b; }
  friend bool operator==(const KeySet&, const KeySet&) = default;

  [[nodiscard]] std::vector<Key> keys() const {
    std::vector<Key> out;
    out.reserve(size());
    for (auto i = bits_.find_first(); i != boost::dynamic_bitset<>::npos;
         i = bits_.find_next(i))
      out.push_back(static_cast<Key>(i));
    return out;
  }

 private:
  boost::dynamic_bitset<> bits_;
};

}  // namespace mcs
