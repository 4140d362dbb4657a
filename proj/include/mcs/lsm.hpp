#pragma once

/// \file
/// Concurrent multicopy templates: search, upsert and compact over a DAG of
/// nodes with hand-over-hand per-node locking, generic over the node storage
/// backend.
///
/// Every upsert publishes its history record while still holding the root
/// lock, so releasing the root lock after a successful add is the single
/// atomic step that advances the clock and extends the history.

#include "mcs/core.hpp"
#include "mcs/graph.hpp"
#include "mcs/history.hpp"
#include "mcs/node.hpp"

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace mcs {

/// What upsert does when the root is full.
enum class FullRootPolicy {
  /// Flush the root from the upserting thread, then retry.
  flush,
  /// Yield and retry; another thread is expected to flush.
  wait,
};

struct StructureOptions {
  std::size_t keyspace{16};
  std::size_t root_capacity{2};
  std::size_t growth_factor{2};
  FullRootPolicy on_full{FullRootPolicy::flush};
};

/// Instrumented search result.
struct SearchResult {
  Value value;
  /// Timestamp of the returned copy; 0 when no copy was found.
  Timestamp tp{0};
  /// History length at invocation.
  std::size_t snapshot{0};
  /// Logical timestamp of the key in that prefix.
  Timestamp t0{0};
};

/// Highest number of node locks one thread held at once, per operation kind.
struct LockStats {
  std::size_t search{0};
  std::size_t upsert{0};
  std::size_t compact{0};
  /// Compaction acquired a lock on a node that was not a successor of the
  /// node it already held.
  std::size_t order_violations{0};
};

namespace detail {

enum class OpClass { search, upsert, compact };

inline thread_local std::size_t held_locks = 0;

}  // namespace detail

/// State and operations shared by every multicopy template: node registry,
/// root, clock, history and the core search/upsert/merge steps.
template <NodeStorage Storage = ArrayStorage>
class MulticopyStructure {
 public:
  using NodeType = Node<Storage>;

  MulticopyStructure(const MulticopyStructure&) = delete;
  MulticopyStructure& operator=(const MulticopyStructure&) = delete;
  virtual ~MulticopyStructure() = default;

  [[nodiscard]] std::size_t keyspace() const noexcept { return opts_.keyspace; }
  [[nodiscard]] const StructureOptions& options() const noexcept {
    return opts_;
  }
  [[nodiscard]] NodeId root_id() const noexcept { return root_->id; }
  [[nodiscard]] const UpsertHistory& history() const noexcept {
    return history_;
  }

  /// Current clock. Exact only at quiescence.
  [[nodiscard]] Timestamp clock() const noexcept {
    return history_.snapshot() + 1;
  }

  [[nodiscard]] Value search(Key k) { return search_instrumented(k).value; }

  /// Traverses from the root holding at most one lock at a time.
  SearchResult search_instrumented(Key k) {
    check_key(k);
    SearchResult out;
    out.snapshot = history_.snapshot();
    out.t0 = history_.max_ts(out.snapshot, k).ts;

    NodeType* n = root_;
    while (true) {
      Guard g(*this, *n, detail::OpClass::search);
      if (auto found = in_contents(*n, k)) {
        out.value = found->value;
        out.tp = found->ts;
        return out;
      }
      NodeType* next = find_next(*n, k);
      if (next == nullptr) {
        out.value = Value::tombstone();
        out.tp = 0;
        return out;
      }
      n = next;
    }
  }

  /// Single attempt: adds (k, v) at the root if it has room. Returns the
  /// assigned timestamp on success.
  std::optional<Timestamp> try_upsert(Key k, Value v) {
    check_key(k);
    Guard g(*this, *root_, detail::OpClass::upsert);
    const Timestamp t = history_.snapshot() + 1;
    if (!add_contents(*root_, k, v, t)) return std::nullopt;
    history_.record_upsert(k, v, t);
    return t;
  }

  /// Retries until the root accepts the copy. Returns its timestamp.
  Timestamp upsert(Key k, Value v) {
    while (true) {
      if (auto t = try_upsert(k, v)) return *t;
      if (opts_.on_full == FullRootPolicy::flush)
        flush_root();
      else
        std::this_thread::yield();
    }
  }

  Timestamp remove(Key k) { return upsert(k, Value::tombstone()); }

  /// Moves the root's copies downward.
  virtual void flush_root() = 0;

  /// Copies the whole structure. Only consistent at quiescence.
  [[nodiscard]] MulticopyGraph snapshot() const {
    MulticopyGraph g(opts_.keyspace, root_->id);
    std::vector<NodeType*> all;
    {
      std::lock_guard reg(registry_mu_);
      for (const auto& node : nodes_) all.push_back(node.get());
    }
    for (NodeType* node : all) {
      std::lock_guard lk(node->mu);
      auto& gn = g.add_node(node->id);
      gn.contents = node->store.contents();
      gn.q = node->q;
      for (const auto& e : node->succ) gn.out[e.to->id] = e.keys;
    }
    return g;
  }

  [[nodiscard]] std::size_t node_count() const {
    std::lock_guard reg(registry_mu_);
    return nodes_.size();
  }

  [[nodiscard]] LockStats lock_stats() const noexcept {
    return {max_held_[0].load(), max_held_[1].load(), max_held_[2].load(),
            order_violations_.load()};
  }

 protected:
  explicit MulticopyStructure(StructureOptions opts)
      : opts_{opts}, history_{opts.keyspace} {
    if (opts.keyspace == 0) throw contract_error("keyspace must be nonempty");
    root_ = register_node(Storage::make_root(opts.root_capacity));
  }

  /// RAII node lock that tracks how many locks the thread holds.
  class Guard {
   public:
    Guard(const MulticopyStructure& s, NodeType& n, detail::OpClass c)
        : s_{s}, lk_{n.mu} {
      const std::size_t held = ++detail::held_locks;
      auto& slot = s_.max_held_[static_cast<int>(c)];
      std::size_t prev = slot.load(std::memory_order_relaxed);
      while (prev < held &&
             !slot.compare_exchange_weak(prev, held, std::memory_order_relaxed))
        ;
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    ~Guard() { --detail::held_locks; }

   private:
    const MulticopyStructure& s_;
    std::unique_lock<std::mutex> lk_;
  };

  /// Replaces the initial single-root state with a prepared graph and
  /// history. Graph node ids must be 0..N-1 with the root at 0; capacities
  /// default to unbounded for nodes missing from `capacities`.
  void load(const MulticopyGraph& g, std::span<const UpsertRecord> records,
            const std::map<NodeId, std::size_t>& capacities) {
    if (g.root != 0 || g.nodes.empty() || g.nodes.rbegin()->first + 1 !=
                                              g.nodes.size())
      throw contract_error("graph ids must be dense with the root at 0");
    if (g.keyspace != opts_.keyspace)
      throw contract_error("graph keyspace differs from structure keyspace");
    if (history_.size() != 0)
      throw contract_error("load requires a fresh structure");
    for (const auto& r : records) history_.record_upsert(r.key, r.value, r.ts);

    auto cap = [&](NodeId id) {
      auto it = capacities.find(id);
      return it == capacities.end() ? unbounded_capacity : it->second;
    };
    // Nodes that already exist keep their storage but lose their edges.
    const std::size_t existing = node_count();
    for (const auto& [id, gn] : g.nodes)
      if (id >= existing) alloc_node(cap(id));
    for (const auto& [id, gn] : g.nodes) node_ptr(id)->succ.clear();
    for (const auto& [id, gn] : g.nodes) {
      NodeType& n = *node_ptr(id);
      if (id == 0) {
        for (const auto& [k, tv] : gn.contents)
          if (!n.store.add(k, tv.value, tv.ts))
            throw contract_error("root capacity too small for fixture");
      } else {
        std::vector<Record> recs;
        for (const auto& [k, tv] : gn.contents) recs.push_back({k, tv});
        n.store.absorb(std::move(recs));
      }
      n.q = gn.q;
      for (const auto& [to, es] : gn.out) n.succ.push_back({node_ptr(to), es});
    }
  }

  NodeType* register_node(Storage s) {
    std::lock_guard reg(registry_mu_);
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::make_unique<NodeType>(id, std::move(s)));
    return nodes_.back().get();
  }

  [[nodiscard]] NodeType* node_ptr(NodeId id) const {
    std::lock_guard reg(registry_mu_);
    if (id >= nodes_.size())
      throw structural_error("unknown node " + std::to_string(id));
    return nodes_[id].get();
  }

  /// Fresh unlinked sorted-table node.
  NodeType* alloc_node(std::size_t capacity) {
    return register_node(Storage::make_table(capacity));
  }

  /// Merges n into m (both locked) and records the moved copies as n's
  /// successor contents-in-reach.
  static std::vector<Record> merge_and_record(NodeType& n, NodeType& m) {
    auto moved = merge_contents(n, m);
    for (const auto& r : moved) n.q.insert_or_assign(r.key, r.copy);
    return moved;
  }

  void note_order(const NodeType& parent, const NodeType& child) {
    const bool linked = std::ranges::any_of(
        parent.succ, [&](const auto& e) { return e.to == &child; });
    if (!linked) order_violations_.fetch_add(1, std::memory_order_relaxed);
  }

  void check_key(Key k) const {
    if (k >= opts_.keyspace)
      throw contract_error("key " + std::to_string(k) + " outside keyspace");
  }

  StructureOptions opts_;
  UpsertHistory history_;
  NodeType* root_{nullptr};

 private:
  mutable std::mutex registry_mu_;
  std::deque<std::unique_ptr<NodeType>> nodes_;
  mutable std::atomic<std::size_t> max_held_[3]{};
  std::atomic<std::size_t> order_violations_{0};
};

/// LSM DAG template: the root buffer above a DAG of sorted tables that grows
/// by compaction. New nodes get growth_factor times the capacity of their
/// parent.
template <NodeStorage Storage = ArrayStorage>
class LsmStructure : public MulticopyStructure<Storage> {
  using Base = MulticopyStructure<Storage>;
  using typename Base::Guard;
  using typename Base::NodeType;

 public:
  explicit LsmStructure(StructureOptions opts) : Base{opts} {
    if (opts.root_capacity == 0 || opts.growth_factor == 0)
      throw contract_error("capacities must be positive");
  }

  /// One iteration of compact: if n is at capacity, merge part of it into a
  /// chosen (possibly new) successor m and return m so the caller continues
  /// there. Holds at most n and m, locked parent first. `force` merges even
  /// when n has room.
  std::optional<NodeId> compact_once(NodeId id, bool force = false) {
    NodeType* n = this->node_ptr(id);
    Guard gn(*this, *n, detail::OpClass::compact);
    if (!at_capacity(*n) && !(force && n->store.live_count() > 0))
      return std::nullopt;

    NodeType* m = choose_next(*n);
    if (m != nullptr) {
      this->note_order(*n, *m);
      Guard gm(*this, *m, detail::OpClass::compact);
      Base::merge_and_record(*n, *m);
      return m->id;
    }
    const std::size_t cap = grown_capacity(n->store.capacity());
    m = this->alloc_node(cap);
    Guard gm(*this, *m, detail::OpClass::compact);
    insert_node(*n, *m, uncovered_keys(*n, this->keyspace()));
    Base::merge_and_record(*n, *m);
    return m->id;
  }

  /// Collects the chain of full nodes below n along the chosen successors,
  /// then compacts it deepest first so each merge lands in a node that was
  /// just drained. One lock at a time while walking.
  void compact(NodeId id) {
    std::vector<NodeId> path;
    NodeType* n = this->node_ptr(id);
    while (n != nullptr && path.size() <= this->node_count()) {
      Guard g(*this, *n, detail::OpClass::compact);
      if (!at_capacity(*n)) break;
      path.push_back(n->id);
      n = choose_next(*n);
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it)
      (void)compact_once(*it);
  }

  void flush_root() override { compact(this->root_id()); }

  /// Structure holding a prepared graph and history.
  static std::unique_ptr<LsmStructure> from_graph(
      StructureOptions opts, const MulticopyGraph& g,
      std::span<const UpsertRecord> records,
      const std::map<NodeId, std::size_t>& capacities) {
    auto s = std::make_unique<LsmStructure>(opts);
    s->load(g, records, capacities);
    return s;
  }

 private:
  [[nodiscard]] std::size_t grown_capacity(std::size_t cap) const {
    const std::size_t g = this->opts_.growth_factor;
    if (cap > unbounded_capacity / g) return unbounded_capacity;
    return cap * g;
  }
};

/// Two-node differential file: the root buffer over a single unbounded sorted
/// table, linked by an edge labelled with the whole keyspace.
template <NodeStorage Storage = ArrayStorage>
class DfStructure : public MulticopyStructure<Storage> {
  using Base = MulticopyStructure<Storage>;
  using typename Base::Guard;
  using typename Base::NodeType;

 public:
  explicit DfStructure(StructureOptions opts) : Base{opts} {
    disk_ = this->alloc_node(unbounded_capacity);
    std::lock_guard a(this->root_->mu);
    std::lock_guard b(disk_->mu);
    insert_node(*this->root_, *disk_, KeySet::full(opts.keyspace));
  }

  [[nodiscard]] NodeId disk_id() const noexcept { return disk_->id; }

  /// Structure with prepared root and disk contents (ids 0 and 1).
  static std::unique_ptr<DfStructure> from_graph(
      StructureOptions opts, const MulticopyGraph& g,
      std::span<const UpsertRecord> records) {
    if (g.nodes.size() != 2)
      throw contract_error("a differential file has exactly two nodes");
    auto s = std::make_unique<DfStructure>(opts);
    s->load(g, records, {});
    return s;
  }

  /// Moves every live root copy into the disk node.
  void flush_root() override {
    Guard gr(*this, *this->root_, detail::OpClass::compact);
    if (this->root_->store.live_count() == 0) return;
    Guard gd(*this, *disk_, detail::OpClass::compact);
    Base::merge_and_record(*this->root_, *disk_);
  }

 private:
  NodeType* disk_{nullptr};
};

}  // namespace mcs
