#pragma once

/// \file
/// Workload generation and concurrent stress execution with online search
/// recency checks, quiescent invariant checkpoints and trace linearization.

#include "mcs/checker.hpp"
#include "mcs/core.hpp"
#include "mcs/history.hpp"
#include "mcs/lsm.hpp"
#include "mcs/serialize.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <barrier>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mcs {

enum class StructureKind { lsm, df };

struct Maintenance {
  enum class Mode { on_fail, periodic, off };
  Mode mode{Mode::periodic};
  unsigned period_ms{1};

  friend bool operator==(const Maintenance&, const Maintenance&) = default;
};

/// Parses "on-fail", "off", "periodic", "periodic:<ms>" or "periodic(<ms>)".
inline Maintenance parse_maintenance(const std::string& s) {
  if (s == "on-fail") return {Maintenance::Mode::on_fail, 0};
  if (s == "off") return {Maintenance::Mode::off, 0};
  if (s == "periodic") return {Maintenance::Mode::periodic, 1};
  const std::string p = "periodic";
  if (s.starts_with(p) && s.size() > p.size() + 1) {
    std::string ms = s.substr(p.size() + 1);
    if (s[p.size()] == '(' && ms.ends_with(')')) ms.pop_back();
    else if (s[p.size()] != ':') ms.clear();
    std::size_t used = 0;
    try {
      const unsigned long v = std::stoul(ms, &used);
      if (used == ms.size() && v > 0)
        return {Maintenance::Mode::periodic, static_cast<unsigned>(v)};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("bad maintenance mode '" + s + "'");
}

inline std::string to_string(const Maintenance& m) {
  switch (m.mode) {
    case Maintenance::Mode::on_fail: return "on-fail";
    case Maintenance::Mode::off: return "off";
    case Maintenance::Mode::periodic:
      return "periodic:" + std::to_string(m.period_ms);
  }
  return "?";
}

/// Percentages of searches, upserts and deletes.
struct OpMix {
  unsigned search{70};
  unsigned upsert{25};
  unsigned del{5};

  friend bool operator==(const OpMix&, const OpMix&) = default;
};

struct WorkloadConfig {
  std::size_t keyspace_size{16};
  unsigned threads{4};
  std::size_t ops_per_thread{10000};
  OpMix mix;
  StructureKind structure{StructureKind::lsm};
  std::size_t root_capacity{2};
  std::size_t growth_factor{2};
  Maintenance maintenance;
  std::uint64_t seed{1};
  /// Quiescent checkpoint after this many ops per thread; 0 disables.
  std::size_t checkpoint_every{2000};

  void validate() const {
    if (mix.search + mix.upsert + mix.del != 100)
      throw std::invalid_argument("operation mix must sum to 100");
    if (threads == 0) throw std::invalid_argument("threads must be positive");
    if (keyspace_size == 0)
      throw std::invalid_argument("keyspace must be nonempty");
    if (root_capacity == 0 || growth_factor == 0)
      throw std::invalid_argument("capacities must be positive");
  }
};

struct GeneratedOp {
  OpKind kind{OpKind::search};
  Key key{0};
  Value value;

  friend bool operator==(const GeneratedOp&, const GeneratedOp&) = default;
};

/// Operation stream of one worker; a function of the seed, the thread index
/// and the config only.
inline std::vector<GeneratedOp> generate_ops(const WorkloadConfig& cfg,
                                             unsigned thread) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32), thread};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<unsigned> pct(0, 99);
  std::uniform_int_distribution<Key> key(
      0, static_cast<Key>(cfg.keyspace_size - 1));
  std::uniform_int_distribution<Payload> val(1, 1'000'000);
  std::vector<GeneratedOp> ops;
  ops.reserve(cfg.ops_per_thread);
  for (std::size_t i = 0; i < cfg.ops_per_thread; ++i) {
    const unsigned r = pct(rng);
    GeneratedOp op;
    op.key = key(rng);
    if (r < cfg.mix.search) {
      op.kind = OpKind::search;
    } else if (r < cfg.mix.search + cfg.mix.upsert) {
      op.kind = OpKind::upsert;
      op.value = Value{val(rng)};
    } else {
      op.kind = OpKind::upsert;
    }
    ops.push_back(op);
  }
  return ops;
}

inline std::unique_ptr<MulticopyStructure<>> make_structure(
    const WorkloadConfig& cfg) {
  StructureOptions o;
  o.keyspace = cfg.keyspace_size;
  o.root_capacity = cfg.root_capacity;
  o.growth_factor = cfg.growth_factor;
  o.on_full = FullRootPolicy::flush;
  if (cfg.structure == StructureKind::df)
    return std::make_unique<DfStructure<>>(o);
  return std::make_unique<LsmStructure<>>(o);
}

struct StressReport {
  WorkloadConfig config;
  std::size_t searches{0};
  std::size_t upserts{0};
  std::size_t deletes{0};
  /// Upserts abandoned because the root was full and maintenance is off.
  std::size_t stalled{0};
  std::vector<RecencyViolation> recency_violations;
  std::size_t recency_violation_count{0};
  std::size_t checkpoints{0};
  /// One line per failed checkpoint check.
  std::vector<std::string> checkpoint_failures;
  HistoryPredicates history;
  std::optional<LinearizeResult> linearization;
  LockStats locks;
  std::size_t nodes{0};
  double seconds{0};
  double ops_per_second{0};
  Trace trace;
  std::optional<StructureSnapshot> final_snapshot;

  [[nodiscard]] bool ok() const {
    return recency_violation_count == 0 && checkpoint_failures.empty() &&
           history.ok() && (!linearization || linearization->ok()) &&
           locks.search <= 1 && locks.compact <= 2 &&
           locks.order_violations == 0;
  }
};

namespace detail {

inline constexpr std::size_t kMaxReportedViolations = 32;

struct Checkpointer {
  MulticopyStructure<>& st;
  StressReport& rep;
  std::mutex& maintenance_mu;
  bool manual_flush{false};
  std::optional<MulticopyGraph> prev{};

  void run(const char* label) noexcept {
    try {
      std::lock_guard lk(maintenance_mu);
      if (manual_flush) st.flush_root();
      auto g = st.snapshot();
      const auto recs = st.history().records();
      const auto inv = check_invariants(g, recs, st.clock());
      for (const auto& c : inv.checks())
        if (!c.passed)
          rep.checkpoint_failures.push_back(
              std::string(label) + " " + std::to_string(rep.checkpoints) +
              ": " + c.name +
              (c.findings.empty() ? "" : " " + to_text(c.findings[0])));
      if (prev) {
        const auto m = check_inv2_monotone(*prev, g);
        if (!m.passed)
          rep.checkpoint_failures.push_back(
              std::string(label) + " " + std::to_string(rep.checkpoints) +
              ": inv2 " + to_text(m.findings[0]));
      }
      prev = std::move(g);
      ++rep.checkpoints;
    } catch (const std::exception& ex) {
      rep.checkpoint_failures.push_back(std::string(label) + ": " + ex.what());
    }
  }
};

}  // namespace detail

/// Runs the workload. With `checking` off no trace, online check or
/// checkpoint is made (throughput measurement).
inline StressReport run_workload(const WorkloadConfig& cfg, bool checking,
                                 bool keep_trace = false) {
  cfg.validate();
  StressReport rep;
  rep.config = cfg;
  auto st = make_structure(cfg);
  const bool off = cfg.maintenance.mode == Maintenance::Mode::off;

  std::vector<std::vector<GeneratedOp>> streams;
  for (unsigned t = 0; t < cfg.threads; ++t)
    streams.push_back(generate_ops(cfg, t));

  std::atomic<std::uint64_t> seq{1};
  std::vector<Trace> traces(cfg.threads);
  std::vector<std::vector<RecencyViolation>> violations(cfg.threads);
  std::vector<std::size_t> violation_counts(cfg.threads, 0);
  std::vector<std::size_t> stalls(cfg.threads, 0);

  std::mutex maintenance_mu;
  detail::Checkpointer cp{*st, rep, maintenance_mu, off};
  auto on_barrier = [&cp]() noexcept { cp.run("checkpoint"); };
  std::barrier sync(static_cast<std::ptrdiff_t>(cfg.threads), on_barrier);
  const bool use_checkpoints = checking && cfg.checkpoint_every > 0;

  std::atomic<bool> done{false};
  std::thread maintainer;
  if (cfg.maintenance.mode == Maintenance::Mode::periodic) {
    maintainer = std::thread([&] {
      const auto period = std::chrono::milliseconds(cfg.maintenance.period_ms);
      while (!done.load(std::memory_order_acquire)) {
        {
          std::lock_guard lk(maintenance_mu);
          st->flush_root();
        }
        std::this_thread::sleep_for(period);
      }
    });
  }

  auto worker = [&](unsigned t) {
    auto& tr = traces[t];
    if (checking) tr.reserve(cfg.ops_per_thread);
    const auto& ops = streams[t];
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const auto& op = ops[i];
      const std::uint64_t inv = checking ? seq.fetch_add(1) : 0;
      if (op.kind == OpKind::search) {
        const auto res = st->search_instrumented(op.key);
        if (checking) {
          const std::uint64_t resp = seq.fetch_add(1);
          if (auto bad = st->history().check_search_recency(
                  op.key, res.value, res.tp, res.snapshot)) {
            if (violations[t].size() < detail::kMaxReportedViolations)
              violations[t].push_back(*bad);
            ++violation_counts[t];
          }
          TraceEvent e;
          e.op = OpKind::search;
          e.thread = t;
          e.key = op.key;
          e.value = res.value;
          e.t0 = res.t0;
          e.tp = res.tp;
          e.snap = res.snapshot;
          e.inv = inv;
          e.resp = resp;
          tr.push_back(e);
        }
      } else {
        std::optional<Timestamp> ts;
        if (off)
          ts = st->try_upsert(op.key, op.value);
        else
          ts = st->upsert(op.key, op.value);
        if (!ts) {
          ++stalls[t];
        } else if (checking) {
          TraceEvent e;
          e.op = OpKind::upsert;
          e.thread = t;
          e.key = op.key;
          e.value = op.value;
          e.ts = *ts;
          e.inv = inv;
          e.resp = seq.fetch_add(1);
          tr.push_back(e);
        }
      }
      if (use_checkpoints && (i + 1) % cfg.checkpoint_every == 0 &&
          i + 1 < ops.size())
        sync.arrive_and_wait();
    }
  };

  const auto start = std::chrono::steady_clock::now();
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < cfg.threads; ++t) workers.emplace_back(worker, t);
  }
  done.store(true, std::memory_order_release);
  if (maintainer.joinable()) maintainer.join();
  rep.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - start)
                    .count();

  for (unsigned t = 0; t < cfg.threads; ++t) {
    for (const auto& op : streams[t]) {
      if (op.kind == OpKind::search) ++rep.searches;
      else if (op.value.is_tombstone()) ++rep.deletes;
      else ++rep.upserts;
    }
    rep.stalled += stalls[t];
    rep.recency_violation_count += violation_counts[t];
    for (auto& v : violations[t])
      if (rep.recency_violations.size() < detail::kMaxReportedViolations)
        rep.recency_violations.push_back(std::move(v));
  }
  const double total =
      static_cast<double>(cfg.threads) * static_cast<double>(cfg.ops_per_thread);
  rep.ops_per_second = rep.seconds > 0 ? total / rep.seconds : 0;
  rep.locks = st->lock_stats();
  rep.nodes = st->node_count();

  if (checking) {
    cp.manual_flush = false;
    cp.run("final");
    const auto recs = st->history().records();
    rep.history =
        check_history_predicates(recs, cfg.keyspace_size, st->clock());
    Trace all;
    for (auto& tr : traces) all.insert(all.end(), tr.begin(), tr.end());
    std::ranges::sort(all, {}, &TraceEvent::inv);
    rep.linearization = linearize(all);
    rep.final_snapshot =
        StructureSnapshot{st->snapshot(), recs, st->clock()};
    if (keep_trace) rep.trace = std::move(all);
  }
  return rep;
}

inline StressReport run_stress(const WorkloadConfig& cfg,
                               bool keep_trace = false) {
  return run_workload(cfg, true, keep_trace);
}

inline StressReport run_bench(const WorkloadConfig& cfg) {
  return run_workload(cfg, false);
}

inline nlohmann::json to_json(const WorkloadConfig& c) {
  return {{"keyspace_size", c.keyspace_size},
          {"threads", c.threads},
          {"ops_per_thread", c.ops_per_thread},
          {"mix",
           {{"search", c.mix.search},
            {"upsert", c.mix.upsert},
            {"delete", c.mix.del}}},
          {"structure", c.structure == StructureKind::lsm ? "lsm" : "df"},
          {"root_capacity", c.root_capacity},
          {"growth_factor", c.growth_factor},
          {"maintenance", to_string(c.maintenance)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

inline nlohmann::json to_json(const StressReport& r) {
  nlohmann::json j;
  j["ok"] = r.ok();
  j["config"] = to_json(r.config);
  j["ops"] = {{"search", r.searches},
              {"upsert", r.upserts},
              {"delete", r.deletes},
              {"stalled", r.stalled}};
  auto viol = nlohmann::json::array();
  for (const auto& v : r.recency_violations)
    viol.push_back({{"key", v.key},
                    {"value", detail::value_json(v.value)},
                    {"tp", v.tp},
                    {"t0", v.t0},
                    {"snapshot", v.snapshot},
                    {"reason", v.reason}});
  j["recency_violations"] = {{"count", r.recency_violation_count},
                             {"examples", std::move(viol)}};
  j["checkpoints"] = {{"count", r.checkpoints},
                      {"failures", r.checkpoint_failures}};
  j["history"] = {{"init", r.history.init},
                  {"unique", r.history.unique},
                  {"clock", r.history.clock},
                  {"detail", r.history.detail}};
  if (r.linearization) {
    nlohmann::json l;
    l["ok"] = r.linearization->ok();
    if (r.linearization->failure) {
      const auto& f = *r.linearization->failure;
      l["event"] = f.event;
      l["reason"] = f.reason;
    }
    j["linearization"] = std::move(l);
  }
  j["locks"] = {{"search_max", r.locks.search},
                {"upsert_max", r.locks.upsert},
                {"compact_max", r.locks.compact},
                {"order_violations", r.locks.order_violations}};
  j["nodes"] = r.nodes;
  j["seconds"] = r.seconds;
  j["ops_per_second"] = r.ops_per_second;
  return j;
}

inline std::string to_text(const StressReport& r) {
  std::ostringstream os;
  os << (r.ok() ? "PASS" : "FAIL") << " stress threads=" << r.config.threads
     << " ops/thread=" << r.config.ops_per_thread << " structure="
     << (r.config.structure == StructureKind::lsm ? "lsm" : "df")
     << " maintenance=" << to_string(r.config.maintenance) << '\n';
  os << "  ops: " << r.searches << " search, " << r.upserts << " upsert, "
     << r.deletes << " delete, " << r.stalled << " stalled\n";
  os << "  recency violations: " << r.recency_violation_count << '\n';
  for (const auto& v : r.recency_violations)
    os << "    key=" << v.key << " value=" << v.value << " tp=" << v.tp
       << " t0=" << v.t0 << ": " << v.reason << '\n';
  os << "  checkpoints: " << r.checkpoints << ", failures "
     << r.checkpoint_failures.size() << '\n';
  for (const auto& f : r.checkpoint_failures) os << "    " << f << '\n';
  os << "  history predicates: " << (r.history.ok() ? "ok" : r.history.detail)
     << '\n';
  if (r.linearization) {
    os << "  linearization: ";
    if (r.linearization->ok())
      os << "ok\n";
    else
      os << "failed at event " << r.linearization->failure->event << ": "
         << r.linearization->failure->reason << '\n';
  }
  os << "  max locks held: search " << r.locks.search << ", upsert "
     << r.locks.upsert << ", compact " << r.locks.compact << '\n';
  os << "  nodes: " << r.nodes << ", " << r.seconds << " s, "
     << static_cast<std::uint64_t>(r.ops_per_second) << " ops/s\n";
  return os.str();
}

}  // namespace mcs
