#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <string>
#include <vector>

#include <zlib.h>

#include "dqsb/baselines.hpp"
#include "dqsb/config.hpp"
#include "dqsb/metrics.hpp"
#include "dqsb/protocol.hpp"
#include "dqsb/sha256.hpp"

namespace dqsb {

struct SingleRun {
  Trace trace;
  std::string trace_hash;
  std::vector<RoundMetrics> rounds;
  int node_count = 0;
};

inline Deployment build_deployment(const ExperimentConfig& cfg) {
  if (!cfg.topology_file.empty())
    return read_topology(cfg.topology_file, cfg.field_w, cfg.field_h, cfg.comm_radius);
  return generate_deployment(cfg.nodes, cfg.field_w, cfg.field_h, cfg.comm_radius,
                             cfg.topology_seed);
}

inline std::vector<SleepSchedule> build_schedules(const ExperimentConfig& cfg, int node_count) {
  if (!cfg.schedule_file.empty()) {
    auto offsets = read_wake_offsets(cfg.schedule_file);
    std::vector<SleepSchedule> out;
    out.reserve(offsets.size());
    for (Time off : offsets)
      out.push_back(SleepSchedule::periodic(off, cfg.active(), Time{cfg.cycle_us}));
    return out;
  }
  return generate_sleep_schedules(node_count, cfg.duty, Time{cfg.cycle_us}, cfg.seed);
}

inline WorldConfig world_config(const ExperimentConfig& cfg) {
  WorldConfig w;
  w.channel.comm_radius = cfg.comm_radius;
  w.channel.loss_rate = cfg.loss;
  w.channel.bitrate_bps = cfg.bitrate;
  w.channel.collisions = cfg.collisions;
  w.t0 = Time{cfg.t0_us};
  w.beacon_dur = Time{cfg.beacon_us};
  w.ucast_dur = Time{cfg.ucast_us};
  w.seed = cfg.seed;
  return w;
}

inline ProtocolConfig protocol_config(const ExperimentConfig& cfg) {
  ProtocolConfig p;
  p.cycle = Time{cfg.cycle_us};
  p.active = cfg.active();
  p.t0 = Time{cfg.t0_us};
  p.ttl = cfg.ttl();
  p.prolong_cap = cfg.prolong_cap();
  p.bcast_interval = Time{cfg.bcast_interval_us};
  p.bcast_payload = cfg.bcast_payload;
  p.quasi_sync = cfg.quasi_sync;
  p.unicast = cfg.unicast;
  p.uni_lo = Time{cfg.uni_lo_us};
  p.uni_hi = Time{cfg.uni_hi_us};
  p.uni_payload = cfg.uni_payload;
  p.source = cfg.source;
  return p;
}

inline SingleRun run_single(const ExperimentConfig& cfg) {
  cfg.validate();
  Deployment dep = build_deployment(cfg);
  const int n = dep.size();
  SingleRun out;
  out.node_count = n;

  if (cfg.protocol == "lpl") {
    auto scheds = build_schedules(cfg, n);
    LplConfig lc;
    lc.cycle = Time{cfg.cycle_us};
    lc.active = cfg.active();
    lc.frame = Time{cfg.ucast_us};
    lc.uni_lo = Time{cfg.uni_lo_us};
    lc.uni_hi = Time{cfg.uni_hi_us};
    lc.loss_rate = cfg.loss;
    lc.source = cfg.source;
    out.trace = lpl_run(dep, scheds, lc, cfg.horizon(), cfg.seed);
  } else {
    WorldConfig wc = world_config(cfg);
    // Configured slots must cover the payload airtime.
    frame_duration(cfg.bcast_payload, wc.channel, FrameKind::BroadcastData, wc.t0, wc.beacon_dur,
                   wc.ucast_dur);
    frame_duration(cfg.uni_payload, wc.channel, FrameKind::UnicastData, wc.t0, wc.beacon_dur,
                   wc.ucast_dur);
    World w(wc, dep);
    w.set_trace(&out.trace);
    if (cfg.protocol == "flood") {
      FloodConfig fc;
      fc.cycle = Time{cfg.cycle_us};
      fc.active = cfg.active();
      fc.t0 = Time{cfg.t0_us};
      fc.bcast_interval = Time{cfg.bcast_interval_us};
      fc.bcast_payload = cfg.bcast_payload;
      fc.source = cfg.source;
      for (int i = 0; i < n; ++i) w.add_agent(std::make_unique<FloodNode>(i, fc, cfg.seed));
    } else {
      auto scheds = build_schedules(cfg, n);
      ProtocolConfig pc = protocol_config(cfg);
      pc.validate();
      for (int i = 0; i < n; ++i)
        w.add_agent(std::make_unique<DqsbNode>(i, pc, scheds[i].wake_time, cfg.seed));
    }
    w.run(cfg.horizon());
  }

  out.trace_hash = Sha256::of(serialize_trace(out.trace));
  for (std::int64_t id : round_ids(out.trace))
    out.rounds.push_back(compute_round_metrics(out.trace, id, n));
  return out;
}

// ---- trace files ----

inline void write_trace_file(const std::string& path, const Trace& tr, bool gzip_out) {
  std::string bytes = serialize_trace(tr);
  if (gzip_out) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!bytes.empty())
      gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

// ---- CSV outputs ----

inline std::string fmt_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string metrics_csv_header() {
  return "protocol,nodes,duty,loss,seed,round,fwd_count,max_latency_us,success_ratio\n";
}

inline std::string metrics_csv_row(const ExperimentConfig& cfg, const RoundMetrics& m) {
  std::string s;
  s += cfg.protocol;
  s += ',';
  s += std::to_string(cfg.nodes);
  s += ',';
  s += fmt_double(cfg.duty, 3);
  s += ',';
  s += fmt_double(cfg.loss, 3);
  s += ',';
  s += std::to_string(cfg.seed);
  s += ',';
  s += std::to_string(m.round_id);
  s += ',';
  s += std::to_string(m.forwarding_count);
  s += ',';
  s += std::to_string(m.max_latency.us);
  s += ',';
  s += fmt_double(m.success_ratio, 6);
  s += '\n';
  return s;
}

// ---- run manifests and replay ----

inline nlohmann::ordered_json run_manifest(const ExperimentConfig& cfg, const SingleRun& run,
                                           const std::string& trace_path) {
  nlohmann::ordered_json j;
  j["config"] = cfg.to_json();
  j["trace_path"] = trace_path;
  j["trace_sha256"] = run.trace_hash;
  j["node_count"] = run.node_count;
  return j;
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
}

struct ReplayResult {
  bool ok = false;
  std::string expected, actual;
};

inline ReplayResult replay_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot read " + manifest_path);
  nlohmann::json j = nlohmann::json::parse(f);
  ExperimentConfig cfg = ExperimentConfig::from_json(j.at("config"));
  SingleRun run = run_single(cfg);
  ReplayResult r;
  r.expected = j.at("trace_sha256").get<std::string>();
  r.actual = run.trace_hash;
  r.ok = r.expected == r.actual;
  return r;
}

// ---- studies ----

struct StudyResult {
  std::string metrics_csv;
  nlohmann::ordered_json manifest;
};

inline StudyResult run_study(const std::string& preset, const ExperimentConfig& base,
                             int topologies, int runs_per_topology, int parallelism) {
  auto configs = expand_study(preset, base, topologies, runs_per_topology);
  struct Row {
    std::string csv;
    nlohmann::ordered_json entry;
  };
  std::vector<Row> rows(configs.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= configs.size()) return;
        i = next++;
      }
      const auto& cfg = configs[i];
      nlohmann::ordered_json entry;
      entry["config"] = cfg.to_json();
      std::string csv;
      try {
        SingleRun run = run_single(cfg);
        for (const auto& m : run.rounds) csv += metrics_csv_row(cfg, m);
        entry["trace_sha256"] = run.trace_hash;
        entry["status"] = "ok";
      } catch (const std::exception& e) {
        entry["status"] = std::string("failed: ") + e.what();
      }
      rows[i] = Row{std::move(csv), std::move(entry)};
    }
  };
  std::vector<std::future<void>> pool;
  int threads = std::max(1, parallelism);
  for (int t = 0; t < threads; ++t) pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();

  StudyResult out;
  out.metrics_csv = metrics_csv_header();
  out.manifest["preset"] = preset;
  out.manifest["runs"] = nlohmann::ordered_json::array();
  for (auto& r : rows) {
    out.metrics_csv += r.csv;
    out.manifest["runs"].push_back(std::move(r.entry));
  }
  return out;
}

// ---- connectivity sweep ----

struct SweepPoint {
  int nodes = 0;
  std::int64_t ta_us = 0;
  double lambda = 0;
  double mean_p = 0;
  bool all_runs_full = false;
};

struct LeastAlphaRow {
  int nodes = 0;
  std::int64_t ta_us = 0;
  double lambda = 0;
  double alpha = 0;
  bool found = false;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  std::vector<LeastAlphaRow> least_alpha;
};

struct SweepConfig {
  std::vector<int> sizes{200, 400, 600};
  std::vector<std::int64_t> ta_us{100000, 200000};
  std::vector<double> lambdas;  // default 5..80 step 5
  int runs_per_point = 10;
  double field_w = 100.0, field_h = 100.0;
  double comm_radius = 15.0;
  int cycles_horizon = 5;  // horizon in cycle lengths
  std::int64_t cycle_us = 1000000;
  std::int64_t t0_us = 50000;
  std::uint64_t seed = 1;
  // Per-node wake rate is lambda / reference_neighbors, so the aggregate
  // neighborhood wake rate scales with deployment density.
  double reference_neighbors = 14.137166941154069;  // pi * 15^2 * 0.02

  SweepConfig() {
    for (int l = 5; l <= 80; l += 5) lambdas.push_back(static_cast<double>(l));
  }
};

// One connectivity probe: a single round from node 0 over Poisson wake-up
// schedules; returns the fraction of other nodes reached by the horizon.
inline double sweep_probe(const SweepConfig& sc, int size, std::int64_t ta_us, double lambda,
                          std::uint64_t run_ix) {
  std::uint64_t topo_seed = hash_mix(sc.seed, 0x70 + run_ix);
  std::uint64_t run_seed = hash_mix(sc.seed, 0x1000 + run_ix);
  Deployment dep = generate_deployment(size, sc.field_w, sc.field_h, sc.comm_radius, topo_seed);
  Time horizon = Time{sc.cycle_us * sc.cycles_horizon};
  double rate = lambda / sc.reference_neighbors;
  auto wakes = generate_poisson_wakeups(size, rate, horizon, run_seed);

  WorldConfig wc;
  wc.channel.comm_radius = sc.comm_radius;
  wc.channel.loss_rate = 0.0;
  // The sweep measures schedule-level reachability. At high wake rates the
  // destructive-overlap model would jam itself with coincident wake-up
  // transmissions, which is MAC contention, not connectivity.
  wc.channel.collisions = false;
  wc.t0 = Time{sc.t0_us};
  wc.seed = run_seed;

  ProtocolConfig pc;
  pc.cycle = Time{sc.cycle_us};
  pc.active = Time{ta_us};
  pc.t0 = Time{sc.t0_us};
  pc.ttl = horizon + Time{sc.cycle_us};
  pc.prolong_cap = Time{2 * sc.cycle_us};
  pc.bcast_interval = horizon + Time{sc.cycle_us};  // exactly one round
  pc.source = 0;

  World w(wc, dep);
  Trace tr;
  w.set_trace(&tr);
  for (int i = 0; i < size; ++i) {
    auto node = std::make_unique<DqsbNode>(i, pc, Time::zero(), run_seed);
    node->set_wake_list(wakes[i]);
    w.add_agent(std::move(node));
  }
  w.run(horizon);

  std::set<int> reached;
  for (const auto& r : tr)
    if (r.kind == RecKind::Deliver && r.frame_kind == "bcast" && r.outcome == Outcome::Ok &&
        r.mid == 0 && r.from != 0)
      reached.insert(r.from);
  return static_cast<double>(reached.size()) / (size - 1);
}

inline SweepResult success_ratio_sweep(const SweepConfig& sc, int parallelism = 1) {
  if (sc.lambdas.empty()) throw std::invalid_argument("empty sweep grid");
  struct Task {
    int size;
    std::int64_t ta;
    double lambda;
  };
  std::vector<Task> tasks;
  for (int size : sc.sizes)
    for (std::int64_t ta : sc.ta_us)
      for (double l : sc.lambdas) tasks.push_back({size, ta, l});
  std::vector<SweepPoint> points(tasks.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        i = next++;
      }
      const Task& t = tasks[i];
      double sum = 0;
      bool all_full = true;
      for (int r = 0; r < sc.runs_per_point; ++r) {
        double p = sweep_probe(sc, t.size, t.ta, t.lambda, static_cast<std::uint64_t>(r));
        sum += p;
        if (p < 1.0) all_full = false;
      }
      points[i] = SweepPoint{t.size, t.ta, t.lambda, sum / sc.runs_per_point, all_full};
    }
  };
  std::vector<std::future<void>> pool;
  for (int t = 0; t < std::max(1, parallelism); ++t)
    pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();

  SweepResult out;
  out.grid = points;
  for (int size : sc.sizes) {
    for (std::int64_t ta : sc.ta_us) {
      LeastAlphaRow row;
      row.nodes = size;
      row.ta_us = ta;
      double density = size / (sc.field_w * sc.field_h);
      double n_r = std::numbers::pi * sc.comm_radius * sc.comm_radius * density;
      double lambda0 = n_r / (static_cast<double>(ta) * 1e-6);
      for (const auto& p : out.grid) {
        if (p.nodes != size || p.ta_us != ta || !p.all_runs_full) continue;
        if (!row.found || p.lambda < row.lambda) {
          row.found = true;
          row.lambda = p.lambda;
          row.alpha = p.lambda / lambda0;
        }
      }
      out.least_alpha.push_back(row);
    }
  }
  return out;
}

inline std::string sweep_csv(const SweepResult& r) {
  std::string s = "nodes,Ta_us,lambda,mean_Plambda\n";
  for (const auto& p : r.grid) {
    s += std::to_string(p.nodes);
    s += ',';
    s += std::to_string(p.ta_us);
    s += ',';
    s += fmt_double(p.lambda, 1);
    s += ',';
    s += fmt_double(p.mean_p, 6);
    s += '\n';
  }
  return s;
}

inline std::string least_alpha_csv(const SweepResult& r) {
  std::string s = "nodes,Ta_us,lambda,least_alpha\n";
  for (const auto& row : r.least_alpha) {
    s += std::to_string(row.nodes);
    s += ',';
    s += std::to_string(row.ta_us);
    s += ',';
    if (row.found) {
      s += fmt_double(row.lambda, 1);
      s += ',';
      s += fmt_double(row.alpha, 4);
    } else {
      s += "absent,absent";
    }
    s += '\n';
  }
  return s;
}

// ---- trace verification ----

struct VerifyReport {
  std::vector<Violation> conformance, property1, property2, condition1, abort_safety;
  std::size_t total() const {
    return conformance.size() + property1.size() + property2.size() + condition1.size() +
           abort_safety.size();
  }
};

inline int trace_node_count(const Trace& tr) {
  int n = 0;
  for (const auto& r : tr) n = std::max(n, r.from + 1);
  return n;
}

inline VerifyReport verify_trace(const Trace& tr, Time ttl, Time cycle, Time t0,
                                 std::int64_t cond1_min_round = 1) {
  int n = trace_node_count(tr);
  VerifyReport rep;
  rep.conformance = verify_conformance(tr, n, ttl);
  rep.property1 = verify_property1(tr, n, cycle);
  rep.property2 = verify_property2(tr, n, cycle);
  rep.condition1 = verify_condition1(tr, n, t0, cond1_min_round);
  rep.abort_safety = verify_abort_safety(tr);
  return rep;
}

}  // namespace dqsb
