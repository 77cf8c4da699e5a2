#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "dqsb/channel.hpp"
#include "dqsb/model.hpp"
#include "dqsb/rng.hpp"
#include "dqsb/trace.hpp"

namespace dqsb {

enum class EvKind {
  Wake, SleepDue, IsoCheck, IsoScan, IsoGiveup, EarlyEval, BeaconDue, BeaconRetx, SendDue,
  UniTry, UniGen, BcastGen, TxEnd
};

// Timestamped event; (fire_at, seq) is a total order, so identical inputs
// replay identically.
struct SimEvent {
  Time at;
  std::uint64_t seq = 0;
  EvKind kind = EvKind::Wake;
  int node = -1;
  std::uint64_t token = 0;
};

struct WorldConfig {
  ChannelModel channel;
  Time t0 = Time::msec(50);
  Time beacon_dur = Time::msec(1);
  Time ucast_dur = Time::msec(10);
  std::uint64_t seed = 1;
};

class World;

class Agent {
 public:
  virtual ~Agent() = default;
  virtual void start(World&) {}
  virtual void on_timer(World&, const SimEvent&) {}
  // Frame begins on air; receiver is awake, idle and passed the loss draw.
  // header_ok is true when no other in-range frame overlaps the start, so
  // header fields (the footer of a DATA frame) are readable immediately.
  virtual void on_frame_start(World&, const Transmission&, bool /*header_ok*/) {}
  virtual void on_decode(World&, const Transmission&) {}
  // Woke up in the middle of the frame: energy heard, payload undecodable.
  virtual void on_partial(World&, const Transmission&) {}
  virtual void on_collided(World&, const Transmission&) {}
  virtual void on_tx_end(World&, const Transmission&) {}
};

// Deterministic single-threaded event loop over a unit-disc channel.
class World {
 public:
  World(WorldConfig cfg, Deployment dep)
      : cfg_(cfg), dep_(std::move(dep)), neighbors_(dep_.neighbor_lists()) {
    cfg_.channel.validate();
    radio_.resize(dep_.size());
  }

  void set_trace(Trace* sink) { trace_ = sink; }
  bool tracing() const { return trace_ != nullptr; }

  void add_agent(std::unique_ptr<Agent> a) { agents_.push_back(std::move(a)); }
  Agent& agent(int id) { return *agents_.at(id); }
  int node_count() const { return dep_.size(); }
  const Deployment& deployment() const { return dep_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  const WorldConfig& cfg() const { return cfg_; }
  Time now() const { return now_; }

  void schedule(Time at, EvKind kind, int node, std::uint64_t token) {
    if (at < now_) throw std::logic_error("event scheduled in the past");
    queue_.push(SimEvent{at, next_seq_++, kind, node, token});
  }

  void run(Time horizon) {
    if (horizon.us <= 0) throw std::invalid_argument("horizon must be positive");
    for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i]->start(*this);
    while (!queue_.empty()) {
      SimEvent ev = queue_.top();
      if (ev.at >= horizon) break;
      queue_.pop();
      now_ = ev.at;
      if (ev.kind == EvKind::TxEnd) {
        resolve_tx_end(all_tx_[ev.token]);
      } else {
        agents_[ev.node]->on_timer(*this, ev);
      }
    }
    now_ = horizon;
  }

  // ---- radio bookkeeping (driven by agents) ----

  void radio_wake(int node) {
    auto& r = radio_[node];
    assert(!r.awake);
    r.awake = true;
    r.awake_since = now_;
  }

  void radio_sleep(int node) {
    auto& r = radio_[node];
    assert(r.awake);
    r.awake = false;
    r.last_wake = r.awake_since;
    r.last_sleep = now_;
  }

  bool is_awake(int node) const { return radio_[node].awake; }

  // Latest end time of any frame currently on air that this node can hear
  // (including its own transmission), or nullopt when the channel is idle.
  std::optional<Time> channel_busy_until(int node) const {
    std::optional<Time> until;
    for (const auto& tx : live_) {
      if (tx.start > now_ || tx.end <= now_) continue;
      if (tx.sender == node || dep_.in_range(tx.sender, node)) {
        if (!until || tx.end > *until) until = tx.end;
      }
    }
    return until;
  }

  // ---- transmissions ----

  std::uint64_t transmit_beacon(int node, const Beacon& b) {
    Transmission tx;
    tx.sender = node;
    tx.kind = FrameKind::BeaconFrame;
    tx.beacon = b;
    begin_tx(tx, cfg_.beacon_dur);
    if (trace_) {
      TraceRecord r;
      r.t = now_;
      r.kind = RecKind::Beacon;
      r.from = node;
      r.bid = b.id;
      r.wake = b.wakeup_time;
      r.rtx = b.retransmission;
      trace_->push_back(r);
    }
    finish_begin_tx();
    return tx_seq_ - 1;
  }

  std::uint64_t transmit_bcast(int node, std::int64_t mid, int origin, std::int64_t len,
                               Time created, const Footer& f) {
    Transmission tx;
    tx.sender = node;
    tx.kind = FrameKind::BroadcastData;
    tx.mid = mid;
    tx.origin = origin;
    tx.payload_len = len;
    tx.created = created;
    tx.footer = f;
    begin_tx(tx, cfg_.t0);
    if (trace_) {
      TraceRecord r;
      r.t = now_;
      r.kind = RecKind::Bcast;
      r.from = node;
      r.mid = mid;
      r.origin = origin;
      r.len = len;
      r.created = created;
      trace_->push_back(r);
      TraceRecord fr;
      fr.t = now_;
      fr.kind = RecKind::Footer;
      fr.from = node;
      fr.fwd = f.forwarder;
      fr.receivers.assign(f.receivers.begin(), f.receivers.end());
      fr.mid = f.message_id;
      fr.end_time = f.end_time;
      trace_->push_back(fr);
    }
    finish_begin_tx();
    return tx_seq_ - 1;
  }

  // Full-preamble frame (baseline flooding): duration spans a sleep period,
  // so delivery does not depend on the receiver's instantaneous schedule.
  std::uint64_t transmit_preamble(int node, std::int64_t mid, int origin, std::int64_t len,
                                  Time created, Time duration) {
    Transmission tx;
    tx.sender = node;
    tx.kind = FrameKind::PreambleData;
    tx.mid = mid;
    tx.origin = origin;
    tx.payload_len = len;
    tx.created = created;
    begin_tx(tx, duration);
    if (trace_) {
      TraceRecord r;
      r.t = now_;
      r.kind = RecKind::Bcast;
      r.from = node;
      r.mid = mid;
      r.origin = origin;
      r.len = len;
      r.created = created;
      trace_->push_back(r);
    }
    finish_begin_tx();
    return tx_seq_ - 1;
  }

  std::uint64_t transmit_ucast(int node, int dst, const UnicastData& u, std::int64_t len) {
    Transmission tx;
    tx.sender = node;
    tx.kind = FrameKind::UnicastData;
    tx.uni = u;
    tx.dst = dst;
    tx.payload_len = len;
    tx.created = u.created_at;
    begin_tx(tx, cfg_.ucast_dur);
    if (trace_) {
      TraceRecord r;
      r.t = now_;
      r.kind = RecKind::Ucast;
      r.from = node;
      r.uid = u.uid;
      r.origin = u.origin;
      r.dst = dst;
      r.ready = u.hop_ready;
      r.created = u.created_at;
      trace_->push_back(r);
    }
    finish_begin_tx();
    return tx_seq_ - 1;
  }

  void trace(TraceRecord r) {
    if (!trace_) return;
    r.t = now_;
    trace_->push_back(std::move(r));
  }

 private:
  struct RadioState {
    bool awake = false;
    Time awake_since;
    Time last_wake;   // previous closed interval
    Time last_sleep;
  };

  struct EvOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };

  void begin_tx(Transmission& tx, Time duration) {
    tx.seq = tx_seq_++;
    tx.start = now_;
    tx.end = now_ + duration;
    if (duration > max_dur_) max_dur_ = duration;
    all_tx_.push_back(tx);
    live_.push_back(tx);
    pending_start_ = all_tx_.size() - 1;
    schedule(tx.end, EvKind::TxEnd, tx.sender, all_tx_.size() - 1);
  }

  // Carrier sensing and header handout happen at frame start, after the
  // emission records are written.
  void finish_begin_tx() {
    const Transmission& tx = all_tx_[pending_start_];
    if (tx.kind == FrameKind::PreambleData) return;
    for (int r : neighbors_[tx.sender]) {
      const auto& rs = radio_[r];
      if (!rs.awake) continue;
      if (transmitting_during(r, now_, now_ + Time{1})) continue;
      if (!loss_draw_pass(cfg_.seed, tx.seq, r, cfg_.channel.loss_rate)) continue;
      bool header_ok = !overlaps_other(r, tx, now_, now_ + Time{1});
      agents_[r]->on_frame_start(*this, tx, header_ok);
    }
  }

  bool transmitting_during(int node, Time s, Time e) const {
    for (const auto& tx : live_)
      if (tx.sender == node && tx.start < e && tx.end > s) return true;
    return false;
  }

  bool overlaps_other(int r, const Transmission& tx, Time s, Time e) const {
    for (const auto& other : live_) {
      if (other.seq == tx.seq || other.sender == r) continue;
      if (other.start < e && other.end > s && dep_.in_range(other.sender, r)) return true;
    }
    return false;
  }

  bool covered(int r, Time s) const {
    const auto& rs = radio_[r];
    return rs.awake && rs.awake_since <= s;
  }

  bool reached_any(int r, Time s, Time e) const {
    const auto& rs = radio_[r];
    if (rs.awake && rs.awake_since < e) return true;
    if (!rs.awake && rs.last_sleep > s && rs.last_wake < e) return true;
    return false;
  }

  void resolve_tx_end(const Transmission& tx) {
    agents_[tx.sender]->on_tx_end(*this, tx);
    if (tx.kind == FrameKind::PreambleData) {
      for (int r : neighbors_[tx.sender]) {
        if (!loss_draw_pass(cfg_.seed, tx.seq, r, cfg_.channel.loss_rate)) continue;
        agents_[r]->on_decode(*this, tx);
      }
    } else {
      for (int r : neighbors_[tx.sender]) {
        if (!reached_any(r, tx.start, tx.end)) continue;
        bool pass = loss_draw_pass(cfg_.seed, tx.seq, r, cfg_.channel.loss_rate);
        bool data = tx.kind != FrameKind::BeaconFrame;
        if (!pass) {
          if (data) trace_outcome(r, tx, Outcome::Lost);
          continue;
        }
        // A receiver that transmitted anything inside the span (its own
        // wake-up beacon, say) cannot decode the frame, but it still hears
        // the channel.
        bool self_tx = transmitting_during(r, tx.start, tx.end);
        if (covered(r, tx.start)) {
          if (self_tx || (cfg_.channel.collisions && overlaps_other(r, tx, tx.start, tx.end))) {
            if (data) trace_outcome(r, tx, Outcome::Collided);
            agents_[r]->on_collided(*this, tx);
          } else {
            agents_[r]->on_decode(*this, tx);
          }
        } else if (radio_[r].awake && radio_[r].awake_since < tx.end) {
          if (data) trace_outcome(r, tx, Outcome::Partial);
          agents_[r]->on_partial(*this, tx);
        }
        // Slept partway through: nothing usable heard.
      }
    }
    prune_live();
  }

  void trace_outcome(int r, const Transmission& tx, Outcome oc) {
    if (!trace_) return;
    TraceRecord rec;
    rec.t = now_;
    rec.kind = RecKind::Deliver;
    rec.from = r;
    rec.frame_kind = tx.kind == FrameKind::UnicastData ? "ucast" : "bcast";
    rec.tx_seq = tx.seq;
    rec.src = tx.sender;
    rec.outcome = oc;
    rec.mid = tx.kind == FrameKind::UnicastData ? kNoId : tx.mid;
    rec.uid = tx.kind == FrameKind::UnicastData ? tx.uni.uid : 0;
    rec.created = tx.created;
    rec.tx_start = tx.start;
    rec.tx_end = tx.end;
    trace_->push_back(rec);
  }

  void prune_live() {
    Time cutoff = now_ - max_dur_;
    std::erase_if(live_, [cutoff](const Transmission& t) { return t.end <= cutoff; });
  }

  WorldConfig cfg_;
  Deployment dep_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::vector<RadioState> radio_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, EvOrder> queue_;
  std::vector<Transmission> all_tx_;
  std::vector<Transmission> live_;
  std::size_t pending_start_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t tx_seq_ = 0;
  Time now_;
  Time max_dur_;
  Trace* trace_ = nullptr;
};

}  // namespace dqsb
