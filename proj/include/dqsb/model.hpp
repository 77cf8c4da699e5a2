#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqsb/rng.hpp"
#include "dqsb/time.hpp"

namespace dqsb {

// One node's periodic wake/sleep timing. wake_time/sleep_time are the
// boundaries of the current cycle; the pattern repeats every cycle_len.
// Awake intervals are half-open [wake_time, sleep_time). A quasi-sync
// adjustment may move sleep_time away from wake_time + active_len within
// the current cycle only; afterwards the pattern re-anchors at the actual
// sleep boundary and the standard durations apply again.
struct SleepSchedule {
  Time wake_time;    // t_a within the current cycle
  Time sleep_time;   // t_s
  Time active_len;   // T_a
  Time sleep_len;    // T_s
  Time cycle_len;    // T = T_a + T_s

  static SleepSchedule periodic(Time wake_offset, Time active, Time cycle) {
    if (active.us <= 0 || active > cycle)
      throw std::invalid_argument("active length must satisfy 0 < T_a <= T");
    SleepSchedule s;
    s.wake_time = wake_offset;
    s.active_len = active;
    s.cycle_len = cycle;
    s.sleep_len = cycle - active;
    s.sleep_time = wake_offset + active;
    return s;
  }
};

// Intermittent link between two nodes: the intersection of their awake
// intervals in the current cycle. Symmetric in its endpoints.
struct Link {
  int a = 0, b = 0;
  Time start;
  Time duration;
};

inline std::optional<Link> overlap_link(const SleepSchedule& si, const SleepSchedule& sj,
                                        int i = 0, int j = 0) {
  if (si.cycle_len != sj.cycle_len)
    throw std::invalid_argument("overlap_link requires a shared cycle length");
  Time start = max_time(si.wake_time, sj.wake_time);
  Time end = min_time(si.sleep_time, sj.sleep_time);
  if (end <= start) return std::nullopt;
  return Link{i, j, start, end - start};
}

struct Deployment {
  struct Pos { double x = 0, y = 0; };
  std::vector<Pos> positions;
  double field_w = 0, field_h = 0;
  double comm_radius = 0;

  int size() const { return static_cast<int>(positions.size()); }
  double density() const { return positions.empty() ? 0.0 : positions.size() / (field_w * field_h); }

  bool in_range(int i, int j) const {
    double dx = positions[i].x - positions[j].x;
    double dy = positions[i].y - positions[j].y;
    return dx * dx + dy * dy <= comm_radius * comm_radius;
  }

  // Neighbor lists via grid binning; sorted ids for deterministic iteration.
  std::vector<std::vector<int>> neighbor_lists() const {
    const int n = size();
    std::vector<std::vector<int>> out(n);
    if (n == 0 || comm_radius <= 0) return out;
    double cell = comm_radius;
    int gw = std::max(1, static_cast<int>(field_w / cell) + 1);
    int gh = std::max(1, static_cast<int>(field_h / cell) + 1);
    std::vector<std::vector<int>> grid(static_cast<std::size_t>(gw) * gh);
    auto cell_of = [&](double x, double y) {
      int cx = std::min(gw - 1, std::max(0, static_cast<int>(x / cell)));
      int cy = std::min(gh - 1, std::max(0, static_cast<int>(y / cell)));
      return cy * gw + cx;
    };
    for (int i = 0; i < n; ++i) grid[cell_of(positions[i].x, positions[i].y)].push_back(i);
    for (int i = 0; i < n; ++i) {
      int cx = std::min(gw - 1, std::max(0, static_cast<int>(positions[i].x / cell)));
      int cy = std::min(gh - 1, std::max(0, static_cast<int>(positions[i].y / cell)));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= gw || ny >= gh) continue;
          for (int j : grid[static_cast<std::size_t>(ny) * gw + nx])
            if (j != i && in_range(i, j)) out[i].push_back(j);
        }
      std::sort(out[i].begin(), out[i].end());
    }
    return out;
  }
};

// Uniform i.i.d. node placement; pure function of the seed.
inline Deployment generate_deployment(int node_count, double field_w, double field_h,
                                      double comm_radius, std::uint64_t seed) {
  if (node_count < 2) throw std::invalid_argument("node_count must be >= 2");
  if (field_w <= 0 || field_h <= 0) throw std::invalid_argument("field dimensions must be positive");
  Deployment d;
  d.field_w = field_w;
  d.field_h = field_h;
  d.comm_radius = comm_radius;
  Rng rng(hash_mix(seed, hash_str("deployment")));
  d.positions.reserve(node_count);
  for (int i = 0; i < node_count; ++i) {
    double x = rng.uniform() * field_w;
    double y = rng.uniform() * field_h;
    d.positions.push_back({x, y});
  }
  return d;
}

// Uniform i.i.d. wake offsets in [0, T); T_a = duty_cycle * T.
inline std::vector<SleepSchedule> generate_sleep_schedules(int node_count, double duty_cycle,
                                                           Time cycle_len, std::uint64_t seed) {
  if (duty_cycle <= 0.0 || duty_cycle > 1.0)
    throw std::invalid_argument("duty_cycle must be in (0, 1]");
  Time active{static_cast<std::int64_t>(std::llround(duty_cycle * cycle_len.us))};
  Rng rng(hash_mix(seed, hash_str("schedules")));
  std::vector<SleepSchedule> out;
  out.reserve(node_count);
  for (int i = 0; i < node_count; ++i) {
    Time offset{static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cycle_len.us)))};
    out.push_back(SleepSchedule::periodic(offset, active, cycle_len));
  }
  return out;
}

// Wake events drawn as a Poisson process of the given per-node rate (events
// per second) over [0, horizon); each event opens an active window of
// active_len. Used by the connectivity sweep, where the aggregate
// neighborhood wake rate is the swept parameter.
inline std::vector<std::vector<Time>> generate_poisson_wakeups(int node_count, double rate_per_node,
                                                               Time horizon, std::uint64_t seed) {
  if (rate_per_node < 0) throw std::invalid_argument("rate must be non-negative");
  std::vector<std::vector<Time>> out(node_count);
  for (int i = 0; i < node_count; ++i) {
    Rng rng(stream_seed(seed, "poisson-wake", i));
    if (rate_per_node == 0.0) continue;
    double t = 0;
    for (;;) {
      t += -std::log(1.0 - rng.uniform()) / rate_per_node;
      Time at = Time::from_seconds(t);
      if (at >= horizon) break;
      out[i].push_back(at);
    }
  }
  return out;
}

// Probability that more than one wake-up event occurs within a window of
// length t when neighborhood wake-ups form a Poisson process of rate
// N_R / T_a:   P_t = 1 - (1 + x) e^{-x},  x = (N_R/T_a) t.
inline double wakeup_overlap_prob(double n_r, double t_a_sec, double t_sec) {
  if (n_r <= 0 || t_a_sec <= 0) throw std::invalid_argument("N_R and T_a must be positive");
  if (t_sec < 0) throw std::domain_error("window length must be non-negative");
  double x = (n_r / t_a_sec) * t_sec;
  double p = -std::expm1(-x) - x * std::exp(-x);
  return std::min(1.0, std::max(0.0, p));
}

// Poisson connectivity parameters of a deployment.
struct ConnectivityParams {
  double n_r = 0;      // expected neighbors in the communication disc
  double lambda0 = 0;  // N_R / T_a (1/s)
  double alpha = 0;
  double lambda = 0;   // alpha * lambda0
};

inline ConnectivityParams connectivity_params(const Deployment& d, Time t_a, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("alpha must be positive");
  ConnectivityParams p;
  p.n_r = std::numbers::pi * d.comm_radius * d.comm_radius * d.density();
  p.lambda0 = p.n_r / t_a.sec();
  p.alpha = alpha;
  p.lambda = alpha * p.lambda0;
  return p;
}

// Topology file: one `node_id,x_meters,y_meters` line per node.
inline void write_topology(const Deployment& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  for (int i = 0; i < d.size(); ++i)
    f << i << ',' << d.positions[i].x << ',' << d.positions[i].y << '\n';
}

inline Deployment read_topology(const std::string& path, double field_w, double field_h,
                                double comm_radius) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Deployment d;
  d.field_w = field_w;
  d.field_h = field_h;
  d.comm_radius = comm_radius;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    std::getline(is, tok, ',');
    std::size_t id = std::stoul(tok);
    std::getline(is, tok, ',');
    double x = std::stod(tok);
    std::getline(is, tok, ',');
    double y = std::stod(tok);
    if (d.positions.size() <= id) d.positions.resize(id + 1);
    d.positions[id] = {x, y};
  }
  return d;
}

// Schedule file: `node_id,wake_offset_us` lines.
inline void write_wake_offsets(const std::vector<SleepSchedule>& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < s.size(); ++i) f << i << ',' << s[i].wake_time.us << '\n';
}

inline std::vector<Time> read_wake_offsets(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<Time> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    std::getline(is, tok, ',');
    std::size_t id = std::stoul(tok);
    std::getline(is, tok, ',');
    if (out.size() <= id) out.resize(id + 1);
    out[id] = Time{std::stoll(tok)};
  }
  return out;
}

}  // namespace dqsb
