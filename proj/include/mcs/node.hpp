#pragma once

/// \file
/// Node storage backends and the helper functions the multicopy templates are
/// written against.
///
/// A node is framework-owned (id, lock, outgoing edges, recorded successor
/// copies) and wraps a storage backend that holds the node's contents. Two
/// backends are provided: an unsorted append buffer used for the in-memory
/// root and a sorted table used for every other node. ArrayStorage demuxes
/// between them by node kind.
///
/// None of the helpers acquire locks. Callers hold the lock of every node they
/// pass in.

#include "mcs/core.hpp"

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace mcs {

/// One stored copy.
struct Record {
  Key key{0};
  TimedValue copy;

  friend bool operator==(const Record&, const Record&) = default;
};

inline constexpr std::size_t unbounded_capacity =
    std::numeric_limits<std::size_t>::max();

/// Storage contract required by the templates.
template <class S>
concept NodeStorage = requires(S s, const S cs, Key k, Value v, Timestamp t,
                               std::span<const Key> keys,
                               std::vector<Record> recs, std::size_t cap) {
  { S::make_root(cap) } -> std::same_as<S>;
  { S::make_table(cap) } -> std::same_as<S>;
  { cs.is_root() } -> std::convertible_to<bool>;
  { cs.find(k) } -> std::same_as<std::optional<TimedValue>>;
  { s.add(k, v, t) } -> std::same_as<bool>;
  { cs.live_count() } -> std::same_as<std::size_t>;
  { cs.capacity() } -> std::same_as<std::size_t>;
  { cs.live_keys() } -> std::same_as<std::vector<Key>>;
  { cs.contents() } -> std::same_as<NodeContents>;
  { s.extract(keys) } -> std::same_as<std::vector<Record>>;
  { s.absorb(std::move(recs)) };
};

/// Unsorted append-only array of records. Overwrites append a fresh record
/// and kill the older one; dead slots are squeezed out when the array runs
/// out of room. Capacity bounds the number of live keys.
class RootBuffer {
 public:
  explicit RootBuffer(std::size_t capacity) : capacity_{capacity} {
    if (capacity == 0) throw contract_error("node capacity must be positive");
    slots_.reserve(capacity);
  }

  [[nodiscard]] std::optional<TimedValue> find(Key k) const {
    if (auto i = live_index(k)) return slots_[*i].rec.copy;
    return std::nullopt;
  }

  bool add(Key k, Value v, Timestamp t) {
    auto old = live_index(k);
    if (!old && live_ >= capacity_) return false;
    if (old) {
      slots_[*old].live = false;
      --live_;
    }
    if (slots_.size() == capacity_) squeeze();
    slots_.push_back({Record{k, TimedValue{v, t}}, true});
    ++live_;
    return true;
  }

  [[nodiscard]] std::size_t live_count() const noexcept { return live_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t slot_count() const noexcept {
    return slots_.size();
  }

  [[nodiscard]] std::vector<Key> live_keys() const {
    std::vector<Key> out;
    out.reserve(live_);
    for (const auto& s : slots_)
      if (s.live) out.push_back(s.rec.key);
    std::ranges::sort(out);
    return out;
  }

  [[nodiscard]] NodeContents contents() const {
    NodeContents c;
    for (const auto& s : slots_)
      if (s.live) c.emplace(s.rec.key, s.rec.copy);
    return c;
  }

  /// Removes the live records for `keys` and returns them in key order.
  std::vector<Record> extract(std::span<const Key> keys) {
    std::vector<Record> out;
    out.reserve(keys.size());
    for (Key k : keys) {
      if (auto i = live_index(k)) {
        slots_[*i].live = false;
        --live_;
        out.push_back(slots_[*i].rec);
      }
    }
    squeeze();
    return out;
  }

 private:
  struct Slot {
    Record rec;
    bool live;
  };

  [[nodiscard]] std::optional<std::size_t> live_index(Key k) const {
    for (std::size_t i = slots_.size(); i-- > 0;)
      if (slots_[i].live && slots_[i].rec.key == k) return i;
    return std::nullopt;
  }

  void squeeze() {
    std::erase_if(slots_, [](const Slot& s) { return !s.live; });
  }

  std::size_t capacity_;
  std::size_t live_{0};
  std::vector<Slot> slots_;
};

/// Records strictly sorted by key. Read-only except through merges.
class SortedTable {
 public:
  explicit SortedTable(std::size_t capacity) : capacity_{capacity} {
    if (capacity == 0) throw contract_error("node capacity must be positive");
  }

  [[nodiscard]] std::optional<TimedValue> find(Key k) const {
    auto it = lower(k);
    if (it != records_.end() && it->key == k) return it->copy;
    return std::nullopt;
  }

  [[nodiscard]] std::size_t live_count() const noexcept {
    return records_.size();
  }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }

  [[nodiscard]] std::vector<Key> live_keys() const {
    std::vector<Key> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.key);
    return out;
  }

  [[nodiscard]] NodeContents contents() const {
    NodeContents c;
    for (const auto& r : records_) c.emplace_hint(c.end(), r.key, r.copy);
    return c;
  }

  [[nodiscard]] std::span<const Record> records() const noexcept {
    return records_;
  }

  std::vector<Record> extract(std::span<const Key> keys) {
    std::vector<Record> out;
    out.reserve(keys.size());
    for (Key k : keys) {
      auto it = lower(k);
      if (it != records_.end() && it->key == k) out.push_back(*it);
    }
    std::erase_if(records_, [&](const Record& r) {
      return std::ranges::binary_search(keys, r.key);
    });
    return out;
  }

  /// Overwrites or inserts `incoming` (sorted by key, unique keys).
  void absorb(std::vector<Record> incoming) {
    std::vector<Record> merged;
    merged.reserve(records_.size() + incoming.size());
    auto a = records_.begin();
    auto b = incoming.begin();
    while (a != records_.end() || b != incoming.end()) {
      if (b == incoming.end() || (a != records_.end() && a->key < b->key)) {
        merged.push_back(*a++);
      } else {
        if (a != records_.end() && a->key == b->key) ++a;
        merged.push_back(*b++);
      }
    }
    records_ = std::move(merged);
  }

 private:
  [[nodiscard]] std::vector<Record>::const_iterator lower(Key k) const {
    return std::ranges::lower_bound(records_, k, {}, &Record::key);
  }

  std::size_t capacity_;
  std::vector<Record> records_;
};

enum class NodeKind { root_buffer, sorted_table };

/// Array-backed storage: RootBuffer for the root, SortedTable elsewhere.
class ArrayStorage {
 public:
  [[nodiscard]] static ArrayStorage make_root(std::size_t capacity) {
    return ArrayStorage{RootBuffer{capacity}};
  }
  [[nodiscard]] static ArrayStorage make_table(std::size_t capacity) {
    return ArrayStorage{SortedTable{capacity}};
  }

  [[nodiscard]] NodeKind kind() const noexcept {
    return std::holds_alternative<RootBuffer>(impl_) ? NodeKind::root_buffer
                                                     : NodeKind::sorted_table;
  }
  [[nodiscard]] bool is_root() const noexcept {
    return kind() == NodeKind::root_buffer;
  }

  [[nodiscard]] std::optional<TimedValue> find(Key k) const {
    return std::visit([k](const auto& s) { return s.find(k); }, impl_);
  }

  bool add(Key k, Value v, Timestamp t) {
    auto* root = std::get_if<RootBuffer>(&impl_);
    if (root == nullptr)
      throw contract_error("add_contents called on a sorted table");
    return root->add(k, v, t);
  }

  [[nodiscard]] std::size_t live_count() const {
    return std::visit([](const auto& s) { return s.live_count(); }, impl_);
  }
  [[nodiscard]] std::size_t capacity() const {
    return std::visit([](const auto& s) { return s.capacity(); }, impl_);
  }
  [[nodiscard]] std::vector<Key> live_keys() const {
    return std::visit([](const auto& s) { return s.live_keys(); }, impl_);
  }
  [[nodiscard]] NodeContents contents() const {
    return std::visit([](const auto& s) { return s.contents(); }, impl_);
  }
  std::vector<Record> extract(std::span<const Key> keys) {
    return std::visit([keys](auto& s) { return s.extract(keys); }, impl_);
  }
  void absorb(std::vector<Record> recs) {
    auto* table = std::get_if<SortedTable>(&impl_);
    if (table == nullptr)
      throw contract_error("the root buffer cannot be a merge target");
    table->absorb(std::move(recs));
  }

  [[nodiscard]] const RootBuffer* root_buffer() const noexcept {
    return std::get_if<RootBuffer>(&impl_);
  }
  [[nodiscard]] const SortedTable* sorted_table() const noexcept {
    return std::get_if<SortedTable>(&impl_);
  }

 private:
  explicit ArrayStorage(std::variant<RootBuffer, SortedTable> impl)
      : impl_{std::move(impl)} {}

  std::variant<RootBuffer, SortedTable> impl_;
};

static_assert(NodeStorage<ArrayStorage>);

/// A node of a multicopy structure.
template <NodeStorage Storage>
struct Node {
  struct Edge {
    Node* to;
    KeySet keys;
  };

  Node(NodeId node_id, Storage s) : id{node_id}, store{std::move(s)} {}
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const NodeId id;
  Storage store;
  std::vector<Edge> succ;
  /// Recorded contents-in-reach of successors, updated only by merges.
  NodeContents q;
  std::mutex mu;
};

// ---------------------------------------------------------------------------
// Helper functions. The caller holds the lock of every node argument.

template <class Storage>
[[nodiscard]] std::optional<TimedValue> in_contents(const Node<Storage>& n,
                                                    Key k) {
  return n.store.find(k);
}

/// Unique successor whose edgeset contains k.
template <class Storage>
[[nodiscard]] Node<Storage>* find_next(const Node<Storage>& n, Key k) {
  Node<Storage>* found = nullptr;
  for (const auto& e : n.succ) {
    if (!e.keys.contains(k)) continue;
    if (found != nullptr)
      throw structural_error("edgesets of node " + std::to_string(n.id) +
                             " overlap on key " + std::to_string(k));
    found = e.to;
  }
  return found;
}

template <class Storage>
bool add_contents(Node<Storage>& r, Key k, Value v, Timestamp t) {
  return r.store.add(k, v, t);
}

template <class Storage>
[[nodiscard]] bool at_capacity(const Node<Storage>& n) {
  return n.store.live_count() >= n.store.capacity();
}

/// Successor that should receive n's keys, or nullptr when n needs a new
/// node. A new node is needed when some live key of n is not covered by any
/// outgoing edgeset; otherwise the successor covering the most live keys
/// wins, ties going to the smaller id.
template <class Storage>
[[nodiscard]] Node<Storage>* choose_next(const Node<Storage>& n) {
  const auto live = n.store.live_keys();
  Node<Storage>* best = nullptr;
  std::size_t best_cover = 0;
  std::size_t covered = 0;
  for (const auto& e : n.succ) {
    if (e.keys.empty()) continue;
    std::size_t cover = 0;
    for (Key k : live)
      if (e.keys.contains(k)) ++cover;
    covered += cover;
    if (best == nullptr || cover > best_cover ||
        (cover == best_cover && e.to->id < best->id)) {
      best = e.to;
      best_cover = cover;
    }
  }
  if (covered < live.size()) return nullptr;
  return best;
}

/// Keys not covered by any outgoing edgeset of n: the edgeset a freshly
/// inserted successor receives.
template <class Storage>
[[nodiscard]] KeySet uncovered_keys(const Node<Storage>& n,
                                    std::size_t keyspace) {
  KeySet ks = KeySet::full(keyspace);
  for (const auto& e : n.succ) ks -= e.keys;
  return ks;
}

/// Links a fresh node m below n with edgeset ks.
template <class Storage>
void insert_node(Node<Storage>& n, Node<Storage>& m, KeySet ks) {
  if (ks.empty()) throw structural_error("insert_node with an empty edgeset");
  if (!m.succ.empty() || m.store.live_count() != 0)
    throw structural_error("insert_node target is not fresh");
  for (const auto& e : n.succ)
    if (e.keys.intersects(ks))
      throw structural_error("new edgeset overlaps an existing edge of node " +
                             std::to_string(n.id));
  n.succ.push_back({&m, std::move(ks)});
}

/// Moves copies of keys in es(n, m) from n to m, overwriting m's older
/// copies. Keys are taken in key order while m has room; a key m already
/// holds costs no slot. Returns the moved records (the merged key set K').
template <class Storage>
std::vector<Record> merge_contents(Node<Storage>& n, Node<Storage>& m) {
  const KeySet* es = nullptr;
  for (const auto& e : n.succ)
    if (e.to == &m) es = &e.keys;
  if (es == nullptr || es->empty())
    throw structural_error("merge_contents target is not a successor");

  std::vector<Key> chosen;
  std::size_t room = m.store.capacity() > m.store.live_count()
                         ? m.store.capacity() - m.store.live_count()
                         : 0;
  for (Key k : n.store.live_keys()) {
    if (!es->contains(k)) continue;
    if (m.store.find(k)) {
      chosen.push_back(k);
    } else if (room > 0) {
      --room;
      chosen.push_back(k);
    }
  }
  auto moved = n.store.extract(chosen);
  m.store.absorb(moved);
  return moved;
}

}  // namespace mcs
