#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqsb/time.hpp"

namespace dqsb {

// Full description of one simulation run. Flat key = value text files and
// CLI flags both map onto these fields; flags win.
struct ExperimentConfig {
  std::string protocol = "dqsb";  // dqsb | flood | lpl
  int nodes = 200;
  double field_w = 100.0, field_h = 100.0;
  double comm_radius = 15.0;
  double bitrate = 250000.0;
  double loss = 0.1;
  double duty = 0.2;
  std::int64_t cycle_us = 1000000;
  std::int64_t t0_us = 50000;
  std::int64_t beacon_us = 1000;
  std::int64_t ucast_us = 10000;
  std::int64_t ttl_us = 0;          // 0: one broadcast interval
  std::int64_t prolong_cap_us = 0;  // 0: two cycles
  std::int64_t bcast_interval_us = 20000000;
  std::int64_t horizon_us = 0;      // 0: twenty broadcast rounds
  std::int64_t bcast_payload = 512;
  std::int64_t uni_payload = 256;
  std::int64_t uni_lo_us = 25000000, uni_hi_us = 35000000;
  bool unicast = false;
  bool quasi_sync = true;
  bool collisions = true;
  int source = 0;
  std::uint64_t seed = 1;           // schedules, backoffs, loss draws
  std::uint64_t topology_seed = 1;  // node placement
  std::string topology_file, schedule_file;

  Time ttl() const { return Time{ttl_us > 0 ? ttl_us : bcast_interval_us}; }
  Time prolong_cap() const { return Time{prolong_cap_us > 0 ? prolong_cap_us : 2 * cycle_us}; }
  Time horizon() const { return Time{horizon_us > 0 ? horizon_us : 20 * bcast_interval_us}; }
  Time active() const {
    return Time{static_cast<std::int64_t>(std::llround(duty * static_cast<double>(cycle_us)))};
  }

  void validate() const {
    if (protocol != "dqsb" && protocol != "flood" && protocol != "lpl")
      throw std::invalid_argument("unknown protocol: " + protocol);
    if (nodes < 2) throw std::invalid_argument("node count must be >= 2");
    if (duty <= 0.0 || duty > 1.0) throw std::invalid_argument("duty cycle must be in (0, 1]");
    if (loss < 0.0 || loss >= 1.0) throw std::invalid_argument("loss rate must be in [0, 1)");
    if (field_w <= 0 || field_h <= 0) throw std::invalid_argument("field must have positive area");
    if (comm_radius <= 0 || bitrate <= 0 || cycle_us <= 0 || t0_us <= 0 ||
        bcast_interval_us <= 0)
      throw std::invalid_argument("all timing and channel parameters must be positive");
    if (Time{t0_us} >= active())
      throw std::invalid_argument("T0 must be smaller than the active period");
    if (source < 0 || source >= nodes) throw std::invalid_argument("source id out of range");
  }

  void apply(const std::string& key, const std::string& value) {
    auto as_i = [&value] { return std::stoll(value); };
    auto as_u = [&value] { return std::stoull(value); };
    auto as_d = [&value] { return std::stod(value); };
    auto as_b = [&value] { return value == "1" || value == "true" || value == "yes"; };
    if (key == "protocol") protocol = value;
    else if (key == "nodes") nodes = static_cast<int>(as_i());
    else if (key == "field_w") field_w = as_d();
    else if (key == "field_h") field_h = as_d();
    else if (key == "comm_radius") comm_radius = as_d();
    else if (key == "bitrate") bitrate = as_d();
    else if (key == "loss") loss = as_d();
    else if (key == "duty") duty = as_d();
    else if (key == "cycle_us") cycle_us = as_i();
    else if (key == "t0_us") t0_us = as_i();
    else if (key == "beacon_us") beacon_us = as_i();
    else if (key == "ucast_us") ucast_us = as_i();
    else if (key == "ttl_us") ttl_us = as_i();
    else if (key == "prolong_cap_us") prolong_cap_us = as_i();
    else if (key == "bcast_interval_us") bcast_interval_us = as_i();
    else if (key == "horizon_us") horizon_us = as_i();
    else if (key == "bcast_payload") bcast_payload = as_i();
    else if (key == "uni_payload") uni_payload = as_i();
    else if (key == "uni_lo_us") uni_lo_us = as_i();
    else if (key == "uni_hi_us") uni_hi_us = as_i();
    else if (key == "unicast") unicast = as_b();
    else if (key == "quasi_sync") quasi_sync = as_b();
    else if (key == "collisions") collisions = as_b();
    else if (key == "source") source = static_cast<int>(as_i());
    else if (key == "seed") seed = as_u();
    else if (key == "topology_seed") topology_seed = as_u();
    else if (key == "topology_file") topology_file = value;
    else if (key == "schedule_file") schedule_file = value;
    else throw std::invalid_argument("unknown config key: " + key);
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config " + path);
    std::string line;
    while (std::getline(f, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (!key.empty()) apply(key, value);
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["nodes"] = nodes;
    j["field_w"] = field_w;
    j["field_h"] = field_h;
    j["comm_radius"] = comm_radius;
    j["bitrate"] = bitrate;
    j["loss"] = loss;
    j["duty"] = duty;
    j["cycle_us"] = cycle_us;
    j["t0_us"] = t0_us;
    j["beacon_us"] = beacon_us;
    j["ucast_us"] = ucast_us;
    j["ttl_us"] = ttl_us;
    j["prolong_cap_us"] = prolong_cap_us;
    j["bcast_interval_us"] = bcast_interval_us;
    j["horizon_us"] = horizon_us;
    j["bcast_payload"] = bcast_payload;
    j["uni_payload"] = uni_payload;
    j["uni_lo_us"] = uni_lo_us;
    j["uni_hi_us"] = uni_hi_us;
    j["unicast"] = unicast;
    j["quasi_sync"] = quasi_sync;
    j["collisions"] = collisions;
    j["source"] = source;
    j["seed"] = seed;
    j["topology_seed"] = topology_seed;
    j["topology_file"] = topology_file;
    j["schedule_file"] = schedule_file;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.protocol = j.at("protocol").get<std::string>();
    c.nodes = j.at("nodes").get<int>();
    c.field_w = j.at("field_w").get<double>();
    c.field_h = j.at("field_h").get<double>();
    c.comm_radius = j.at("comm_radius").get<double>();
    c.bitrate = j.at("bitrate").get<double>();
    c.loss = j.at("loss").get<double>();
    c.duty = j.at("duty").get<double>();
    c.cycle_us = j.at("cycle_us").get<std::int64_t>();
    c.t0_us = j.at("t0_us").get<std::int64_t>();
    c.beacon_us = j.at("beacon_us").get<std::int64_t>();
    c.ucast_us = j.at("ucast_us").get<std::int64_t>();
    c.ttl_us = j.at("ttl_us").get<std::int64_t>();
    c.prolong_cap_us = j.at("prolong_cap_us").get<std::int64_t>();
    c.bcast_interval_us = j.at("bcast_interval_us").get<std::int64_t>();
    c.horizon_us = j.at("horizon_us").get<std::int64_t>();
    c.bcast_payload = j.at("bcast_payload").get<std::int64_t>();
    c.uni_payload = j.at("uni_payload").get<std::int64_t>();
    c.uni_lo_us = j.at("uni_lo_us").get<std::int64_t>();
    c.uni_hi_us = j.at("uni_hi_us").get<std::int64_t>();
    c.unicast = j.at("unicast").get<bool>();
    c.quasi_sync = j.at("quasi_sync").get<bool>();
    c.collisions = j.at("collisions").get<bool>();
    c.source = j.at("source").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.topology_seed = j.at("topology_seed").get<std::uint64_t>();
    c.topology_file = j.at("topology_file").get<std::string>();
    c.schedule_file = j.at("schedule_file").get<std::string>();
    return c;
  }
};

// The named experiment matrices. Each preset expands a base configuration
// into the runs of one study.
inline std::vector<ExperimentConfig> expand_study(const std::string& preset,
                                                  const ExperimentConfig& base, int topologies,
                                                  int runs_per_topology) {
  std::vector<ExperimentConfig> out;
  auto push_matrix = [&](const std::vector<ExperimentConfig>& variants) {
    for (const auto& v : variants)
      for (int t = 0; t < topologies; ++t)
        for (int r = 0; r < runs_per_topology; ++r) {
          ExperimentConfig c = v;
          c.topology_seed = base.topology_seed + static_cast<std::uint64_t>(t);
          c.seed = base.seed + static_cast<std::uint64_t>(r);
          out.push_back(c);
        }
  };
  if (preset == "duty-cycle") {
    std::vector<ExperimentConfig> v;
    for (double d : {0.1, 0.2, 0.3, 0.4, 0.5}) {
      ExperimentConfig c = base;
      c.duty = d;
      v.push_back(c);
    }
    push_matrix(v);
  } else if (preset == "size") {
    std::vector<ExperimentConfig> v;
    for (int n : {200, 400, 600, 800, 1000, 1200}) {
      ExperimentConfig c = base;
      c.nodes = n;
      c.duty = 0.2;
      v.push_back(c);
    }
    push_matrix(v);
  } else if (preset == "loss") {
    std::vector<ExperimentConfig> v;
    for (double l : {0.1, 0.2, 0.3}) {
      ExperimentConfig c = base;
      c.loss = l;
      // A longer generation interval leaves room for lossy-round recovery
      // before the next round supersedes the buffered data.
      c.bcast_interval_us = 45000000;
      v.push_back(c);
    }
    push_matrix(v);
  } else if (preset == "routing") {
    std::vector<ExperimentConfig> v;
    for (double d : {0.1, 0.2, 0.3, 0.4, 0.5}) {
      for (const char* proto : {"dqsb", "lpl"}) {
        ExperimentConfig c = base;
        c.duty = d;
        c.protocol = proto;
        c.unicast = true;
        v.push_back(c);
      }
    }
    push_matrix(v);
  } else {
    throw std::invalid_argument("unknown study preset: " + preset);
  }
  return out;
}

}  // namespace dqsb
