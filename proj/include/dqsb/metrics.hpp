#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqsb/state.hpp"
#include "dqsb/trace.hpp"

namespace dqsb {

// ---- per-round aggregates ----

struct RoundMetrics {
  std::int64_t round_id = 0;
  int forwarding_count = 0;                       // DATA transmissions of this round
  Time max_latency;                               // max over delivered nodes
  std::map<int, std::int64_t> per_node_latency_us;  // first delivery per node
  double success_ratio = 0.0;                     // delivered / (N - 1)
};

inline RoundMetrics compute_round_metrics(const Trace& tr, std::int64_t round_id, int node_count) {
  bool generated = false;
  Time created;
  int origin = 0;
  for (const auto& r : tr) {
    if (r.kind == RecKind::GenMsg && r.mid == round_id) {
      generated = true;
      created = r.created;
      origin = r.from;
      break;
    }
  }
  if (!generated) throw std::out_of_range("round id not present in trace");
  RoundMetrics m;
  m.round_id = round_id;
  for (const auto& r : tr) {
    if (r.kind == RecKind::Bcast && r.mid == round_id) ++m.forwarding_count;
    if (r.kind == RecKind::Deliver && r.frame_kind == "bcast" && r.mid == round_id &&
        r.outcome == Outcome::Ok && r.from != origin) {
      auto it = m.per_node_latency_us.find(r.from);
      std::int64_t lat = (r.t - created).us;
      if (it == m.per_node_latency_us.end()) m.per_node_latency_us[r.from] = lat;
    }
  }
  for (const auto& [node, lat] : m.per_node_latency_us)
    m.max_latency = max_time(m.max_latency, Time{lat});
  m.success_ratio = node_count > 1
                        ? static_cast<double>(m.per_node_latency_us.size()) / (node_count - 1)
                        : 0.0;
  return m;
}

inline std::vector<std::int64_t> round_ids(const Trace& tr) {
  std::vector<std::int64_t> ids;
  for (const auto& r : tr)
    if (r.kind == RecKind::GenMsg) ids.push_back(r.mid);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// ---- awake-interval reconstruction ----

struct AwakeIntervals {
  // Closed [wake, sleep) windows per node plus an open tail when the trace
  // ends while the node is awake.
  std::vector<std::vector<std::pair<Time, Time>>> windows;
  std::vector<std::optional<Time>> open_since;

  // Wake time of the window containing t (a window is considered to contain
  // its start and everything up to the next wake).
  std::optional<Time> wake_of_window_at(int node, Time t) const {
    std::optional<Time> best;
    for (const auto& [w, s] : windows[node])
      if (w <= t && (!best || w > *best)) best = w;
    if (open_since[node] && *open_since[node] <= t && (!best || *open_since[node] > *best))
      best = *open_since[node];
    return best;
  }

  std::optional<std::pair<Time, Time>> first_window_after(int node, Time t) const {
    std::optional<std::pair<Time, Time>> best;
    for (const auto& win : windows[node])
      if (win.first > t && (!best || win.first < best->first)) best = win;
    return best;
  }

  // Longest overlap of [a, b) with any of the node's windows.
  Time max_overlap(int node, Time a, Time b) const {
    Time best;
    for (const auto& [w, s] : windows[node]) {
      Time lo = max_time(w, a), hi = min_time(s, b);
      if (hi > lo) best = max_time(best, hi - lo);
    }
    if (open_since[node]) {
      Time lo = max_time(*open_since[node], a);
      if (b > lo) best = max_time(best, b - lo);
    }
    return best;
  }
};

inline AwakeIntervals awake_intervals(const Trace& tr, int node_count) {
  AwakeIntervals out;
  out.windows.resize(node_count);
  out.open_since.resize(node_count);
  for (const auto& r : tr) {
    if (r.kind != RecKind::State) continue;
    if (r.cond == 1) {
      out.open_since[r.from] = r.t;
    } else if (r.cond == 15 && out.open_since[r.from]) {
      out.windows[r.from].push_back({*out.open_since[r.from], r.t});
      out.open_since[r.from] = std::nullopt;
    }
  }
  return out;
}

// ---- invariant checks ----

struct Violation {
  std::string what;
  int node = 0;
  Time at;
};

// Per-round source-relative delivery times: origin delivery = creation.
inline std::map<std::pair<std::int64_t, int>, Time> delivery_times(const Trace& tr) {
  std::map<std::pair<std::int64_t, int>, Time> d;
  for (const auto& r : tr) {
    if (r.kind == RecKind::GenMsg) {
      d.insert({{r.mid, r.from}, r.created});
    } else if (r.kind == RecKind::Deliver && r.frame_kind == "bcast" && r.outcome == Outcome::Ok) {
      d.insert({{r.mid, r.from}, r.t});  // insert keeps the first delivery
    }
  }
  return d;
}

// Validity/reliability bound: for every delivery edge i -> j,
//   dT(j) <= dT(i) + t_i^s - t_j^a + T
// with t_i^s the sender's sleep boundary in the delivery cycle (the frame
// ends exactly there) and t_j^a the receiver's wake-up of the window in
// which the delivery completed.
inline std::vector<Violation> verify_property1(const Trace& tr, int node_count, Time cycle) {
  auto deliv = delivery_times(tr);
  auto awake = awake_intervals(tr, node_count);
  std::vector<Violation> out;
  std::set<std::pair<std::int64_t, int>> seen;
  for (const auto& r : tr) {
    if (r.kind != RecKind::Deliver || r.frame_kind != "bcast" || r.outcome != Outcome::Ok)
      continue;
    if (!seen.insert({r.mid, r.from}).second) continue;  // first delivery only
    auto it = deliv.find({r.mid, r.src});
    if (it == deliv.end()) continue;  // forwarder delivery untraced (stale buffer)
    Time dt_j = r.t - r.created;
    Time dt_i = it->second - r.created;
    auto wake_j = awake.wake_of_window_at(r.from, r.tx_start);
    if (!wake_j) continue;
    Time bound = dt_i + (r.tx_end - *wake_j) + cycle;
    if (dt_j > bound) {
      out.push_back({"property1: dT(j)=" + std::to_string(dt_j.us) +
                         " exceeds bound=" + std::to_string(bound.us) + " (mid " +
                         std::to_string(r.mid) + " from " + std::to_string(r.src) + ")",
                     r.from, r.t});
    }
  }
  return out;
}

// Robustness bound for recovery/join deliveries (Task-5 solicitations):
//   dT(j), measured from the wake-up that started the prolonged window,
//   <= dT(i) + T.
inline std::vector<Violation> verify_property2(const Trace& tr, int node_count, Time cycle) {
  auto deliv = delivery_times(tr);
  auto awake = awake_intervals(tr, node_count);
  std::vector<Violation> out;
  for (const auto& r : tr) {
    if (r.kind != RecKind::Deliver || r.frame_kind != "bcast" || r.outcome != Outcome::Ok ||
        !r.isolated_path)
      continue;
    auto it = deliv.find({r.mid, r.src});
    if (it == deliv.end()) continue;
    auto wake_j = awake.wake_of_window_at(r.from, r.tx_start);
    if (!wake_j) continue;
    Time waited = r.t - *wake_j;
    Time dt_i = it->second - r.created;
    Time bound = dt_i + cycle;
    if (waited > bound) {
      out.push_back({"property2: wait=" + std::to_string(waited.us) +
                         " exceeds bound=" + std::to_string(bound.us) + " (mid " +
                         std::to_string(r.mid) + " from " + std::to_string(r.src) + ")",
                     r.from, r.t});
    }
  }
  return out;
}

// After a broadcast round, every realized parent-child edge must share an
// awake overlap of at least T0 in the child's next window.
inline std::vector<Violation> verify_condition1(const Trace& tr, int node_count, Time t0,
                                                std::int64_t min_round = 0) {
  auto awake = awake_intervals(tr, node_count);
  std::vector<Violation> out;
  std::set<std::pair<std::int64_t, int>> seen;
  for (const auto& r : tr) {
    if (r.kind != RecKind::Deliver || r.frame_kind != "bcast" || r.outcome != Outcome::Ok)
      continue;
    if (r.mid < min_round) continue;
    if (!seen.insert({r.mid, r.from}).second) continue;
    auto next = awake.first_window_after(r.from, r.t);
    if (!next) continue;  // horizon reached before the next window
    Time ov = awake.max_overlap(r.src, next->first, next->second);
    if (ov < t0) {
      out.push_back({"condition1: overlap=" + std::to_string(ov.us) + " < T0 (mid " +
                         std::to_string(r.mid) + ", parent " + std::to_string(r.src) + ")",
                     r.from, r.t});
    }
  }
  return out;
}

// ---- protocol conformance (trace-level replay) ----

inline std::vector<Violation> verify_conformance(const Trace& tr, int node_count, Time ttl) {
  std::vector<Violation> out;
  struct NodeRe {
    NodeState st = NodeState::Sleep;
    std::map<std::int64_t, Time> buf;  // mid -> created
    bool awake = false;
    Time awake_since;
    int window = 0;
    std::set<std::pair<int, std::int64_t>> forwarded;  // (window, mid)
  };
  std::vector<NodeRe> nodes(node_count);
  std::set<std::pair<int, std::int64_t>> tx_starts;  // (sender, start time)

  for (const auto& r : tr) {
    if (r.from < 0 || r.from >= node_count) continue;
    NodeRe& n = nodes[r.from];
    switch (r.kind) {
      case RecKind::State: {
        if (r.fs != n.st)
          out.push_back({"state record does not chain from previous state", r.from, r.t});
        auto next = state_transition(r.fs, r.cond);
        if (!next || *next != r.ts)
          out.push_back({"illegal transition cond " + std::to_string(r.cond), r.from, r.t});
        n.st = r.ts;
        if (r.cond == 1) {
          n.awake = true;
          n.awake_since = r.t;
        }
        if (r.cond == 15) n.awake = false;
        break;
      }
      case RecKind::GenMsg:
        n.buf[r.mid] = r.created;
        break;
      case RecKind::Beacon: {
        if (!r.rtx) {
          // Window start: expired entries are dropped before beaconing.
          ++n.window;
          for (auto it = n.buf.begin(); it != n.buf.end();)
            it = (r.t - it->second > ttl) ? n.buf.erase(it) : std::next(it);
        }
        std::int64_t expect = n.buf.empty() ? kNoId : n.buf.rbegin()->first;
        if (r.bid != expect)
          out.push_back({"beacon id " + std::to_string(r.bid) + " != buffer max " +
                             std::to_string(expect),
                         r.from, r.t});
        break;
      }
      case RecKind::Bcast: {
        tx_starts.insert({r.from, r.t.us});
        if (!n.forwarded.insert({n.window, r.mid}).second)
          out.push_back({"message forwarded twice in one window", r.from, r.t});
        break;
      }
      case RecKind::Ucast:
        tx_starts.insert({r.from, r.t.us});
        break;
      case RecKind::Deliver: {
        if (r.outcome == Outcome::Ok || r.outcome == Outcome::Dup) {
          if (!(n.awake && n.awake_since <= r.tx_start))
            out.push_back({"decode without full-span wakefulness", r.from, r.t});
          if (r.tx_end != r.t || r.tx_start >= r.tx_end)
            out.push_back({"delivery precedes its transmission", r.from, r.t});
          if (!tx_starts.count({r.src, r.tx_start.us}))
            out.push_back({"delivery without a matching transmission", r.from, r.t});
        }
        if (r.frame_kind == "bcast" && r.outcome == Outcome::Ok) n.buf[r.mid] = r.created;
        break;
      }
      default:
        break;
    }
  }
  return out;
}

// Aborted forwarders must still see their pending receivers served (loss 0).
inline std::vector<Violation> verify_abort_safety(const Trace& tr) {
  std::set<std::pair<std::int64_t, int>> delivered;
  for (const auto& r : tr)
    if (r.kind == RecKind::Deliver && r.frame_kind == "bcast" && r.outcome == Outcome::Ok)
      delivered.insert({r.mid, r.from});
  std::vector<Violation> out;
  for (const auto& r : tr) {
    if (r.kind != RecKind::Abort) continue;
    for (int recv : r.receivers) {
      if (!delivered.count({r.mid, recv}))
        out.push_back({"aborted send left receiver " + std::to_string(recv) + " unserved (mid " +
                           std::to_string(r.mid) + ")",
                       r.from, r.t});
    }
  }
  return out;
}

// ---- reverse-routing latency ----

struct HopLatency {
  double mean_relay_sec = 0.0;  // relayed hops only (receive -> handoff complete)
  double mean_all_sec = 0.0;    // including the origin's first hop
  int relay_samples = 0;
  int all_samples = 0;
};

inline std::optional<HopLatency> per_hop_latency(const Trace& tr) {
  // Match a hop transmission to its completed delivery via (uid, sender,
  // frame start).
  std::map<std::tuple<std::int64_t, int, std::int64_t>, const TraceRecord*> hops;
  for (const auto& r : tr)
    if (r.kind == RecKind::Ucast) hops[{r.uid, r.from, r.t.us}] = &r;
  double relay_sum = 0, all_sum = 0;
  int relay_n = 0, all_n = 0;
  for (const auto& r : tr) {
    if (r.kind != RecKind::Deliver || r.frame_kind != "ucast" || r.outcome != Outcome::Ok)
      continue;
    auto it = hops.find({r.uid, r.src, r.tx_start.us});
    if (it == hops.end()) continue;
    double sample = (r.t - it->second->ready).sec();
    all_sum += sample;
    ++all_n;
    if (it->second->ready > it->second->created) {
      relay_sum += sample;
      ++relay_n;
    }
  }
  if (all_n == 0) return std::nullopt;
  HopLatency h;
  h.relay_samples = relay_n;
  h.all_samples = all_n;
  h.mean_all_sec = all_sum / all_n;
  h.mean_relay_sec = relay_n > 0 ? relay_sum / relay_n : 0.0;
  return h;
}

// Broadcast success ratio of one round: delivered non-source nodes / (N-1).
inline double success_ratio(const Trace& tr, std::int64_t round_id, int node_count) {
  return compute_round_metrics(tr, round_id, node_count).success_ratio;
}

}  // namespace dqsb
