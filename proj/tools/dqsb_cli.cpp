// Command-line front end: single runs, the named experiment studies, trace
// verification, and byte-exact replay from run manifests.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "dqsb/dqsb.hpp"

namespace fs = std::filesystem;
using namespace dqsb;

namespace {

struct CommonOpts {
  ExperimentConfig cfg;
  std::string config_file;
  std::string out_dir = ".";
};

void add_config_flags(CLI::App* app, CommonOpts& o) {
  app->add_option("--config", o.config_file, "flat key = value config file");
  app->add_option("--protocol", o.cfg.protocol, "dqsb | flood | lpl");
  app->add_option("--nodes", o.cfg.nodes);
  app->add_option("--duty", o.cfg.duty);
  app->add_option("--loss", o.cfg.loss);
  app->add_option("--seed", o.cfg.seed);
  app->add_option("--topology-seed", o.cfg.topology_seed);
  app->add_option("--radius", o.cfg.comm_radius);
  app->add_option("--field-w", o.cfg.field_w);
  app->add_option("--field-h", o.cfg.field_h);
  app->add_option("--cycle-us", o.cfg.cycle_us);
  app->add_option("--t0-us", o.cfg.t0_us);
  app->add_option("--interval-us", o.cfg.bcast_interval_us);
  app->add_option("--horizon-us", o.cfg.horizon_us);
  app->add_option("--source", o.cfg.source);
  app->add_flag("--unicast", o.cfg.unicast, "generate reverse unicast traffic");
  app->add_option("--topology", o.cfg.topology_file, "node_id,x,y file");
  app->add_option("--schedules", o.cfg.schedule_file, "node_id,wake_offset_us file");
  app->add_option("--out", o.out_dir, "output directory");
}

// Flags win over the config file: re-parse flags after loading it.
ExperimentConfig resolve_config(const CommonOpts& o, CLI::App* sub) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  ExperimentConfig flagged = o.cfg;
  ExperimentConfig defaults;
  auto keep = [&](auto member) {
    if (flagged.*member != defaults.*member) cfg.*member = flagged.*member;
  };
  (void)sub;
  keep(&ExperimentConfig::protocol);
  keep(&ExperimentConfig::nodes);
  keep(&ExperimentConfig::duty);
  keep(&ExperimentConfig::loss);
  keep(&ExperimentConfig::seed);
  keep(&ExperimentConfig::topology_seed);
  keep(&ExperimentConfig::comm_radius);
  keep(&ExperimentConfig::field_w);
  keep(&ExperimentConfig::field_h);
  keep(&ExperimentConfig::cycle_us);
  keep(&ExperimentConfig::t0_us);
  keep(&ExperimentConfig::bcast_interval_us);
  keep(&ExperimentConfig::horizon_us);
  keep(&ExperimentConfig::source);
  keep(&ExperimentConfig::unicast);
  keep(&ExperimentConfig::topology_file);
  keep(&ExperimentConfig::schedule_file);
  return cfg;
}

int cmd_run(const CommonOpts& o, CLI::App* sub, bool gzip_out) {
  ExperimentConfig cfg = resolve_config(o, sub);
  cfg.validate();
  fs::create_directories(o.out_dir);
  SingleRun run = run_single(cfg);

  std::string trace_path = o.out_dir + "/trace.jsonl" + (gzip_out ? ".gz" : "");
  write_trace_file(trace_path, run.trace, gzip_out);

  std::string csv = metrics_csv_header();
  for (const auto& m : run.rounds) csv += metrics_csv_row(cfg, m);
  write_text(o.out_dir + "/metrics.csv", csv);

  auto manifest = run_manifest(cfg, run, trace_path);
  manifest["metrics_sha256"] = Sha256::of(csv);
  write_text(o.out_dir + "/manifest.json", manifest.dump(2) + "\n");

  VerifyReport rep = verify_trace(run.trace, cfg.ttl(), Time{cfg.cycle_us}, Time{cfg.t0_us});
  std::cout << "trace: " << trace_path << "\n"
            << "rounds: " << run.rounds.size() << ", trace sha256: " << run.trace_hash << "\n"
            << "invariant violations: " << rep.total() << "\n";
  return rep.total() == 0 ? 0 : 2;
}

int cmd_study(const CommonOpts& o, CLI::App* sub, const std::string& preset, int topologies,
              int runs, int parallelism) {
  ExperimentConfig base = resolve_config(o, sub);
  fs::create_directories(o.out_dir);
  if (preset == "lambda-sweep") {
    SweepConfig sc;
    sc.seed = base.seed;
    SweepResult res = success_ratio_sweep(sc, parallelism);
    write_text(o.out_dir + "/sweep.csv", sweep_csv(res));
    write_text(o.out_dir + "/least_alpha.csv", least_alpha_csv(res));
    std::cout << "wrote sweep.csv and least_alpha.csv to " << o.out_dir << "\n";
    return 0;
  }
  StudyResult res = run_study(preset, base, topologies, runs, parallelism);
  write_text(o.out_dir + "/metrics.csv", res.metrics_csv);
  auto manifest = res.manifest;
  manifest["metrics_sha256"] = Sha256::of(res.metrics_csv);
  write_text(o.out_dir + "/study_manifest.json", manifest.dump(2) + "\n");
  std::size_t failed = 0;
  for (const auto& r : manifest["runs"])
    if (r.at("status").get<std::string>() != "ok") ++failed;
  std::cout << "study " << preset << ": " << manifest["runs"].size() << " runs, " << failed
            << " failed\n";
  return failed == 0 ? 0 : 2;
}

int cmd_verify(const std::string& trace_path, std::int64_t ttl_us, std::int64_t cycle_us,
               std::int64_t t0_us) {
  Trace tr = read_trace_file(trace_path);
  VerifyReport rep = verify_trace(tr, Time{ttl_us}, Time{cycle_us}, Time{t0_us});
  auto show = [](const char* name, const std::vector<Violation>& v) {
    std::cout << name << ": " << v.size() << " violation(s)\n";
    for (std::size_t i = 0; i < v.size() && i < 10; ++i)
      std::cout << "  node " << v[i].node << " @" << v[i].at.us << "us: " << v[i].what << "\n";
  };
  show("conformance", rep.conformance);
  show("property-1", rep.property1);
  show("property-2", rep.property2);
  show("condition-1", rep.condition1);
  show("abort-safety", rep.abort_safety);
  return rep.total() == 0 ? 0 : 2;
}

int cmd_replay(const std::string& manifest_path) {
  ReplayResult r = replay_manifest(manifest_path);
  std::cout << "expected " << r.expected << "\nactual   " << r.actual << "\n"
            << (r.ok ? "replay OK" : "replay MISMATCH") << "\n";
  return r.ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DQSB duty-cycled broadcast simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  bool gzip_out = false;
  auto* run = app.add_subcommand("run", "run one simulation");
  add_config_flags(run, run_opts);
  run->add_flag("--gzip", gzip_out, "gzip the trace output");

  CommonOpts study_opts;
  std::string preset = "duty-cycle";
  int topologies = 10, runs = 10, parallelism = 4;
  auto* study = app.add_subcommand("study", "run a named experiment matrix");
  add_config_flags(study, study_opts);
  study->add_option("--preset", preset, "duty-cycle | size | loss | routing | lambda-sweep")
      ->required();
  study->add_option("--topologies", topologies);
  study->add_option("--runs", runs);
  study->add_option("--parallel", parallelism);

  std::string trace_path;
  std::int64_t v_ttl = 10000000, v_cycle = 1000000, v_t0 = 50000;
  auto* verify = app.add_subcommand("verify", "check invariants on a trace file");
  verify->add_option("--trace", trace_path)->required();
  verify->add_option("--ttl-us", v_ttl);
  verify->add_option("--cycle-us", v_cycle);
  verify->add_option("--t0-us", v_t0);

  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "re-run from a manifest and compare hashes");
  replay->add_option("--manifest", manifest_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opts, run, gzip_out);
    if (study->parsed()) return cmd_study(study_opts, study, preset, topologies, runs, parallelism);
    if (verify->parsed()) return cmd_verify(trace_path, v_ttl, v_cycle, v_t0);
    if (replay->parsed()) return cmd_replay(manifest_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
