// Command-line front end: stress, replay, check and bench.

#include "mcs/checker.hpp"
#include "mcs/fixtures.hpp"
#include "mcs/harness.hpp"
#include "mcs/history.hpp"
#include "mcs/serialize.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

namespace {

mcs::OpMix parse_mix(const std::string& s) {
  mcs::OpMix m;
  char sep1 = 0, sep2 = 0;
  std::istringstream is(s);
  if (!(is >> m.search >> sep1 >> m.upsert >> sep2 >> m.del) || sep1 != '/' ||
      sep2 != '/' || !is.eof())
    throw CLI::ValidationError("--mix", "expected search/upsert/delete, e.g. 70/25/5");
  if (m.search + m.upsert + m.del != 100)
    throw CLI::ValidationError("--mix", "percentages must sum to 100");
  return m;
}

struct WorkloadFlags {
  mcs::WorkloadConfig cfg;
  std::string mix{"70/25/5"};
  std::string structure{"lsm"};
  std::string maintenance{"periodic:1"};

  void attach(CLI::App& app) {
    app.add_option("--keyspace-size", cfg.keyspace_size, "Number of keys")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--threads", cfg.threads, "Worker threads")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--ops-per-thread", cfg.ops_per_thread,
                   "Operations per worker")
        ->capture_default_str();
    app.add_option("--mix", mix, "search/upsert/delete percentages")
        ->capture_default_str();
    app.add_option("--structure", structure, "lsm or df")
        ->capture_default_str()
        ->check(CLI::IsMember({"lsm", "df"}));
    app.add_option("--root-capacity", cfg.root_capacity,
                   "Live keys the root holds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--growth-factor", cfg.growth_factor,
                   "Capacity multiplier for new nodes")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--maintenance", maintenance,
                   "on-fail, off, periodic or periodic:<ms>")
        ->capture_default_str();
    app.add_option("--seed", cfg.seed, "Workload seed")
        ->envname("MCS_SEED")
        ->capture_default_str();
    app.add_option("--checkpoint-every", cfg.checkpoint_every,
                   "Quiescent checkpoint interval in ops per thread (0: off)")
        ->capture_default_str();
  }

  mcs::WorkloadConfig resolve() {
    cfg.mix = parse_mix(mix);
    cfg.structure =
        structure == "df" ? mcs::StructureKind::df : mcs::StructureKind::lsm;
    try {
      cfg.maintenance = mcs::parse_maintenance(maintenance);
    } catch (const std::invalid_argument& ex) {
      throw CLI::ValidationError("--maintenance", ex.what());
    }
    cfg.validate();
    return cfg;
  }
};

template <class F>
void with_output(const std::string& path, F&& write) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write(os);
}

int cmd_stress(mcs::WorkloadConfig cfg, bool json, const std::string& trace_out,
               const std::string& snapshot_out) {
  auto rep = mcs::run_stress(cfg, !trace_out.empty());
  if (!trace_out.empty())
    with_output(trace_out,
                [&](std::ostream& os) { mcs::write_trace(os, rep.trace); });
  if (!snapshot_out.empty() && rep.final_snapshot)
    with_output(snapshot_out, [&](std::ostream& os) {
      mcs::write_snapshot(os, *rep.final_snapshot);
    });
  if (json)
    std::cout << mcs::to_json(rep).dump(2) << '\n';
  else
    std::cout << mcs::to_text(rep);
  return rep.ok() ? 0 : 1;
}

int cmd_bench(mcs::WorkloadConfig cfg, bool json) {
  const auto rep = mcs::run_bench(cfg);
  if (json) {
    std::cout << nlohmann::json{{"config", mcs::to_json(cfg)},
                                {"seconds", rep.seconds},
                                {"ops_per_second", rep.ops_per_second},
                                {"stalled", rep.stalled},
                                {"nodes", rep.nodes}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "bench threads=" << cfg.threads
              << " ops/thread=" << cfg.ops_per_thread << " structure="
              << (cfg.structure == mcs::StructureKind::lsm ? "lsm" : "df")
              << ": " << rep.seconds << " s, "
              << static_cast<std::uint64_t>(rep.ops_per_second) << " ops/s, "
              << rep.nodes << " nodes\n";
  }
  return 0;
}

int cmd_replay(const std::string& name, bool json) {
  const auto r = mcs::fixtures::replay(name);
  if (json) {
    nlohmann::json j;
    j["fixture"] = r.fixture;
    j["ok"] = r.ok();
    auto ex = nlohmann::json::array();
    for (const auto& e : r.expectations)
      ex.push_back({{"description", e.description},
                    {"passed", e.passed},
                    {"detail", e.passed ? "" : e.detail}});
    j["expectations"] = std::move(ex);
    auto steps = nlohmann::json::array();
    for (const auto& s : r.steps)
      steps.push_back({{"label", s.label},
                       {"snapshot", mcs::to_json(mcs::StructureSnapshot{
                                        s.graph, {}, 0})["nodes"]},
                       {"invariants", mcs::to_json(s.report)}});
    j["steps"] = std::move(steps);
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "fixture " << r.fixture << '\n';
    for (const auto& s : r.steps) {
      const auto failed = s.report.failed();
      std::cout << "  step " << s.label << ": ";
      if (failed.empty()) {
        std::cout << "all invariants hold\n";
      } else {
        std::cout << "violated";
        for (const auto& f : failed) std::cout << ' ' << f;
        std::cout << '\n';
      }
    }
    for (const auto& e : r.expectations) {
      std::cout << (e.passed ? "  PASS " : "  FAIL ") << e.description << '\n';
      if (!e.passed && !e.detail.empty()) std::cout << e.detail << '\n';
    }
  }
  return r.ok() ? 0 : 1;
}

int cmd_check(const std::string& snapshot_path, const std::string& trace_path,
              bool json) {
  std::ifstream sis(snapshot_path);
  if (!sis) throw std::runtime_error("cannot read " + snapshot_path);
  const auto snap = mcs::read_snapshot(sis);
  std::ifstream tis(trace_path);
  if (!tis) throw std::runtime_error("cannot read " + trace_path);
  const auto trace = mcs::read_trace(tis);

  auto report = mcs::check_invariants(snap);

  // Upserts in the trace must be in the snapshot's history.
  mcs::CheckResult agree{"trace_history",
                         "traced upserts appear in the history", true, {}};
  std::map<mcs::Timestamp, mcs::UpsertRecord> by_ts;
  for (const auto& r : snap.history) by_ts.emplace(r.ts, r);
  for (const auto& e : trace) {
    if (e.op != mcs::OpKind::upsert) continue;
    auto it = by_ts.find(e.ts);
    if (it == by_ts.end() || it->second.key != e.key ||
        !(it->second.value == e.value))
      agree.findings.push_back({{}, e.key, "record at ts " + std::to_string(e.ts),
                                "missing or different"});
  }
  agree.passed = agree.findings.empty();
  report.add(agree);

  const auto lin = mcs::linearize(trace);
  const bool ok = report.ok() && lin.ok();
  if (json) {
    auto j = mcs::to_json(report);
    j["ok"] = ok;
    j["linearization"] = {{"ok", lin.ok()}, {"events", trace.size()}};
    if (lin.failure) {
      j["linearization"]["event"] = lin.failure->event;
      j["linearization"]["reason"] = lin.failure->reason;
      if (lin.failure->conflicting)
        j["linearization"]["conflicting"] = *lin.failure->conflicting;
    }
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << mcs::to_text(report);
    if (lin.ok()) {
      std::cout << "PASS linearization (" << trace.size() << " events)\n";
    } else {
      std::cout << "FAIL linearization at event " << lin.failure->event << ": "
                << lin.failure->reason;
      if (lin.failure->conflicting)
        std::cout << " (conflicts with event " << *lin.failure->conflicting
                  << ')';
      std::cout << '\n';
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concurrent multicopy structure harness"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "Machine-readable output");

  auto* stress = app.add_subcommand("stress", "Concurrent stress run with checking");
  WorkloadFlags stress_flags;
  stress_flags.attach(*stress);
  std::string trace_out, snapshot_out;
  stress->add_option("--trace-out", trace_out, "Write the trace (JSON lines)");
  stress->add_option("--snapshot-out", snapshot_out,
                     "Write the final snapshot (JSON)");

  auto* bench = app.add_subcommand("bench", "Throughput without checking");
  WorkloadFlags bench_flags;
  bench_flags.attach(*bench);

  auto* replay = app.add_subcommand("replay", "Replay a named scenario");
  std::string fixture;
  replay->add_option("fixture", fixture, "fig1, fig3, fig6 or fig7")
      ->required()
      ->check(CLI::IsMember(mcs::fixtures::names()));

  auto* check = app.add_subcommand("check", "Check a snapshot and a trace");
  std::string snapshot_path, trace_path;
  check->add_option("snapshot", snapshot_path, "Snapshot JSON file")
      ->required();
  check->add_option("trace", trace_path, "Trace file (JSON lines)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (stress->parsed())
      return cmd_stress(stress_flags.resolve(), json, trace_out, snapshot_out);
    if (bench->parsed()) return cmd_bench(bench_flags.resolve(), json);
    if (replay->parsed()) return cmd_replay(fixture, json);
    if (check->parsed()) return cmd_check(snapshot_path, trace_path, json);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
