#pragma once

#include <queue>
#include <set>

#include "dqsb/engine.hpp"
#include "dqsb/model.hpp"

namespace dqsb {

// Full-preamble flooding: every node rebroadcasts each new message exactly
// once, with a preamble spanning a whole sleep period so receivers catch it
// regardless of their own schedules.
struct FloodConfig {
  Time cycle = Time::seconds(1);
  Time active = Time::msec(200);
  Time t0 = Time::msec(50);
  Time bcast_interval = Time::seconds(10);
  std::int64_t bcast_payload = 512;
  int source = 0;
};

class FloodNode : public Agent {
 public:
  FloodNode(int id, const FloodConfig& cfg, std::uint64_t run_seed)
      : id_(id), cfg_(cfg), jitter_rng_(stream_seed(run_seed, "flood-jitter", id)) {}

  void start(World& w) override {
    if (id_ == cfg_.source && cfg_.bcast_interval.us > 0)
      w.schedule(Time::zero(), EvKind::BcastGen, id_, 0);
  }

  void on_timer(World& w, const SimEvent& ev) override {
    if (ev.kind == EvKind::BcastGen) {
      std::int64_t mid = next_id_++;
      created_[mid] = w.now();
      seen_.insert(mid);
      TraceRecord r;
      r.kind = RecKind::GenMsg;
      r.from = id_;
      r.mid = mid;
      r.created = w.now();
      w.trace(r);
      schedule_rebroadcast(w, mid);
      w.schedule(w.now() + cfg_.bcast_interval, EvKind::BcastGen, id_, 0);
    } else if (ev.kind == EvKind::SendDue) {
      std::int64_t mid = static_cast<std::int64_t>(ev.token);
      if (sent_.count(mid)) return;
      sent_.insert(mid);
      Time preamble = (cfg_.cycle - cfg_.active) + cfg_.t0;
      w.transmit_preamble(id_, mid, origin_[mid], cfg_.bcast_payload, created_[mid], preamble);
    }
  }

  void on_decode(World& w, const Transmission& tx) override {
    if (tx.kind != FrameKind::PreambleData) return;
    bool fresh = !seen_.count(tx.mid);
    TraceRecord d;
    d.kind = RecKind::Deliver;
    d.from = id_;
    d.frame_kind = "bcast";
    d.tx_seq = tx.seq;
    d.src = tx.sender;
    d.outcome = fresh ? Outcome::Ok : Outcome::Dup;
    d.mid = tx.mid;
    d.created = tx.created;
    d.tx_start = tx.start;
    d.tx_end = tx.end;
    w.trace(d);
    if (!fresh) return;
    seen_.insert(tx.mid);
    created_[tx.mid] = tx.created;
    origin_[tx.mid] = tx.origin;
    schedule_rebroadcast(w, tx.mid);
  }

 private:
  void schedule_rebroadcast(World& w, std::int64_t mid) {
    // Seeded jitter in (0, T0] decorrelates otherwise synchronized repeats.
    Time jitter = Time::from_seconds(jitter_rng_.uniform() * cfg_.t0.sec());
    if (jitter.us <= 0) jitter = Time{1};
    if (id_ == cfg_.source) origin_[mid] = id_;
    w.schedule(w.now() + jitter, EvKind::SendDue, id_, static_cast<std::uint64_t>(mid));
  }

  int id_;
  FloodConfig cfg_;
  Rng jitter_rng_;
  std::set<std::int64_t> seen_, sent_;
  std::map<std::int64_t, Time> created_;
  std::map<std::int64_t, int> origin_;
  std::int64_t next_id_ = 0;
};

// Low-power-listening unicast baseline: data travels hop by hop along an
// oracle shortest-path tree toward the sink; each hop's long preamble
// bridges the receiver's sleep, so the hop completes at the receiver's next
// wake-up plus the frame time.
struct LplConfig {
  Time cycle = Time::seconds(1);
  Time active = Time::msec(200);
  Time frame = Time::msec(10);
  Time uni_lo = Time::seconds(25), uni_hi = Time::seconds(35);
  double loss_rate = 0.0;
  int source = 0;
};

// Breadth-first parents toward the sink; unreachable nodes get -1.
inline std::vector<int> bfs_parents(const Deployment& dep, int sink) {
  auto nb = dep.neighbor_lists();
  std::vector<int> parent(dep.size(), -1);
  std::vector<bool> visited(dep.size(), false);
  std::queue<int> q;
  visited[sink] = true;
  q.push(sink);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : nb[u]) {
      if (visited[v]) continue;
      visited[v] = true;
      parent[v] = u;
      q.push(v);
    }
  }
  return parent;
}

inline Time next_wake_at_or_after(const SleepSchedule& s, Time t) {
  if (t <= s.wake_time) return s.wake_time;
  std::int64_t k = (t - s.wake_time).us / s.cycle_len.us;
  Time wake = s.wake_time + Time{k * s.cycle_len.us};
  if (wake < t) wake += s.cycle_len;
  return wake;
}

inline bool lpl_awake_at(const SleepSchedule& s, Time t) {
  if (t < s.wake_time) return false;
  std::int64_t phase = (t - s.wake_time).us % s.cycle_len.us;
  return phase < s.active_len.us;
}

inline Trace lpl_run(const Deployment& dep, const std::vector<SleepSchedule>& scheds,
                     const LplConfig& cfg, Time horizon, std::uint64_t seed) {
  Trace out;
  auto parent = bfs_parents(dep, cfg.source);
  for (int n = 0; n < dep.size(); ++n) {
    if (n == cfg.source || parent[n] < 0) continue;
    Rng gen(stream_seed(seed, "lpl-gen", n));
    std::int64_t counter = 0;
    Time t = Time::from_seconds(gen.uniform(cfg.uni_lo.sec(), cfg.uni_hi.sec()));
    while (t < horizon) {
      std::int64_t uid = (static_cast<std::int64_t>(n) << 24) + counter++;
      TraceRecord g;
      g.t = t;
      g.kind = RecKind::GenUni;
      g.from = n;
      g.uid = uid;
      out.push_back(g);
      Time ready = t;
      int hop = n;
      int hop_ix = 0;
      while (hop != cfg.source) {
        int to = parent[hop];
        TraceRecord u;
        u.t = ready;
        u.kind = RecKind::Ucast;
        u.from = hop;
        u.uid = uid;
        u.origin = n;
        u.dst = to;
        u.ready = ready;
        u.created = t;
        out.push_back(u);
        if (!loss_draw_pass(seed, static_cast<std::uint64_t>(uid * 131 + hop_ix), to,
                            cfg.loss_rate))
          break;  // hop lost; no acknowledgment layer is modeled
        Time arrival = lpl_awake_at(scheds[to], ready)
                           ? ready + cfg.frame
                           : next_wake_at_or_after(scheds[to], ready) + cfg.frame;
        if (arrival >= horizon) break;
        TraceRecord d;
        d.t = arrival;
        d.kind = RecKind::Deliver;
        d.from = to;
        d.frame_kind = "ucast";
        d.tx_seq = 0;
        d.src = hop;
        d.outcome = Outcome::Ok;
        d.mid = kNoId;
        d.uid = uid;
        d.created = t;
        d.tx_start = ready;
        d.tx_end = arrival;
        out.push_back(d);
        ready = arrival;
        hop = to;
        ++hop_ix;
      }
      t += Time::from_seconds(gen.uniform(cfg.uni_lo.sec(), cfg.uni_hi.sec()));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TraceRecord& a, const TraceRecord& b) { return a.t < b.t; });
  return out;
}

}  // namespace dqsb
