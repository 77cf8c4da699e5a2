#pragma once

#include <deque>
#include <optional>
#include <set>

#include "dqsb/engine.hpp"
#include "dqsb/packets.hpp"
#include "dqsb/state.hpp"

namespace dqsb {

// Timing-inversion cases between a sender and one of its receivers.
enum class QuasiSyncCase { None, EarlySleepNear, EarlySleepFar, LateWakeup, Isolated };

// Classifies the relation of a (sender, receiver) schedule pair. The
// receiver derives the sender's window from the beacon's wake-up time plus
// the network-wide active length, so no schedule exchange is required.
// heard_anything reports whether the receiver heard any frame during
// [t_a, t_s - T0].
inline QuasiSyncCase classify_case(const SleepSchedule& sender, const SleepSchedule& receiver,
                                   bool heard_anything, Time t0) {
  if (!heard_anything) return QuasiSyncCase::Isolated;
  Time t_send = sender.sleep_time - t0;
  if (receiver.wake_time < sender.wake_time) {
    auto link = overlap_link(sender, receiver);
    if (!link) return QuasiSyncCase::Isolated;
    Time t_ij = link->duration;
    Time ta = sender.active_len;
    if (t_ij > ta - t0 && t_ij < ta) return QuasiSyncCase::EarlySleepNear;
    if (t_ij.us > 0 && t_ij <= ta - t0) return QuasiSyncCase::EarlySleepFar;
    return QuasiSyncCase::None;  // receiver outlives the sender's window
  }
  if (receiver.wake_time > t_send && receiver.wake_time < sender.sleep_time)
    return QuasiSyncCase::LateWakeup;
  return QuasiSyncCase::None;  // sender wakes first with a usable overlap
}

// Reverse-route entry learned from received broadcasts.
struct RouteEntry {
  int next_hop = -1;
  std::int64_t latency_us = 0;
  std::int64_t mid = kNoId;
  Time learned_at;
};

struct RouteTable {
  std::optional<RouteEntry> entry;

  // First delivery of a round wins; a later round replaces the route only
  // with strictly lower latency. A same-tick duplicate of the same round is
  // the one genuine tie: the lower forwarder id wins.
  bool learn(std::int64_t mid, int forwarder, std::int64_t latency_us, Time now) {
    if (!entry) {
      entry = RouteEntry{forwarder, latency_us, mid, now};
      return true;
    }
    if (mid == entry->mid) {
      if (now == entry->learned_at && latency_us == entry->latency_us &&
          forwarder < entry->next_hop) {
        entry->next_hop = forwarder;
        return true;
      }
      return false;
    }
    if (mid > entry->mid && latency_us < entry->latency_us) {
      entry = RouteEntry{forwarder, latency_us, mid, now};
      return true;
    }
    return false;
  }
};

struct ProtocolConfig {
  Time cycle = Time::seconds(1);        // T
  Time active = Time::msec(200);        // T_a
  Time t0 = Time::msec(50);             // broadcast slot, mirrors the channel config
  Time ttl = Time::seconds(10);         // message expiry
  Time prolong_cap = Time::seconds(2);  // extra awake time past t_s, then give up
  Time bcast_interval = Time::seconds(10);
  std::int64_t bcast_payload = 512;
  bool quasi_sync = true;
  bool unicast = false;
  Time uni_lo = Time::seconds(25), uni_hi = Time::seconds(35);
  std::int64_t uni_payload = 256;
  int source = 0;

  void validate() const {
    if (t0 >= active)
      throw std::invalid_argument("T0 must be smaller than the active period");
    if (active.us <= 0 || active > cycle)
      throw std::invalid_argument("active length must satisfy 0 < T_a <= T");
  }
};

// One node's protocol runtime, driven entirely by simulator events.
class DqsbNode : public Agent {
 public:
  DqsbNode(int id, const ProtocolConfig& cfg, Time wake_offset, std::uint64_t run_seed)
      : id_(id), cfg_(cfg), first_wake_(wake_offset),
        backoff_rng_(stream_seed(run_seed, "backoff", id)),
        gen_rng_(stream_seed(run_seed, "unigen", id)),
        buf_(cfg.ttl) {}

  // Poisson-schedule mode: wake events come from an explicit list instead of
  // the periodic pattern; cross-cycle re-anchoring does not apply.
  void set_wake_list(std::vector<Time> wakes) { wake_list_ = std::move(wakes); }

  const MessageBuffer& buffer() const { return buf_; }
  const RouteTable& route() const { return route_; }
  bool is_source() const { return id_ == cfg_.source; }

  void start(World& w) override {
    if (is_source() && cfg_.bcast_interval.us > 0)
      w.schedule(Time::zero(), EvKind::BcastGen, id_, 0);
    if (cfg_.unicast && !is_source())
      w.schedule(draw_interval(), EvKind::UniGen, id_, 0);
    if (!wake_list_.empty()) {
      w.schedule(wake_list_[0], EvKind::Wake, id_, 0);
      wake_ix_ = 1;
    } else {
      w.schedule(first_wake_, EvKind::Wake, id_, 0);
    }
  }

  void on_timer(World& w, const SimEvent& ev) override {
    switch (ev.kind) {
      case EvKind::Wake: handle_wake(w); break;
      case EvKind::SleepDue: handle_sleep_due(w, ev.token); break;
      case EvKind::IsoCheck: handle_iso_check(w, ev.token); break;
      case EvKind::IsoScan: handle_iso_scan(w, ev.token); break;
      case EvKind::IsoGiveup: handle_iso_giveup(w, ev.token); break;
      case EvKind::EarlyEval: handle_early_eval(w, ev.token); break;
      case EvKind::BeaconDue: handle_beacon_due(w, ev.token); break;
      case EvKind::BeaconRetx: handle_beacon_retx(w, ev.token); break;
      case EvKind::SendDue: handle_send_due(w, ev.token); break;
      case EvKind::UniTry: handle_uni_try(w, ev.token); break;
      case EvKind::UniGen: handle_uni_gen(w); break;
      case EvKind::BcastGen: handle_bcast_gen(w); break;
      default: break;
    }
  }

  void on_frame_start(World& w, const Transmission& tx, bool header_ok) override {
    if (!awake_) return;
    heard_any_ = true;
    if (tx.kind == FrameKind::BroadcastData && header_ok) process_footer(w, tx);
  }

  void on_decode(World& w, const Transmission& tx) override {
    if (!awake_) return;
    heard_any_ = true;
    switch (tx.kind) {
      case FrameKind::BeaconFrame: handle_beacon(w, tx.beacon); break;
      case FrameKind::BroadcastData: handle_broadcast(w, tx); break;
      case FrameKind::UnicastData: handle_unicast(w, tx); break;
      default: break;
    }
  }

  void on_partial(World& w, const Transmission& tx) override {
    if (!awake_) return;
    heard_any_ = true;
    if (tx.kind == FrameKind::BroadcastData) {
      // An undecodable data frame is still evidence that data is circulating
      // nearby; the wake-up adjustment, not prolongation, is the response.
      heard_qualifying_ = true;
      handle_late_wakeup(w, tx.end);
    }
  }

  void on_collided(World&, const Transmission&) override {
    if (awake_) heard_any_ = true;
  }

  void on_tx_end(World& w, const Transmission& tx) override {
    own_tx_end_ = Time{-1};
    if (tx.kind == FrameKind::BroadcastData) {
      transition(w, 9);  // transmission finished
      pending_.reset();
      forwarded_.insert(tx.mid);
    } else if (tx.kind == FrameKind::UnicastData) {
      transition(w, 14);
      uni_busy_ = false;
      if (!uniq_.empty()) uniq_.pop_front();
      attempt_unicast(w, false);
    }
  }

 private:
  struct PendingSend {
    std::int64_t mid = kNoId;
    Time at;
    std::set<int> receivers;
    std::uint64_t token = 0;
  };

  struct EarlyPlan {
    std::int64_t trigger_id = kNoId;
    int trigger_node = -1;
    Time sender_wake, sender_sleep, retx_at, backoff;
    bool near_case = false;
    bool committed = false;
    std::uint64_t token = 0;
  };

  struct IsoState {
    bool prolonged = false;   // sleep suspended, waiting to hear beacons
    bool soft_synced = false; // synced to a peer without the data; still upgradable
    bool awaiting = false;    // beacon retransmitted, waiting for the broadcast
    std::int64_t solicit_id = kNoId;
    std::optional<Time> heard_sender_sleep;  // boundary of the last plain beacon
    std::uint64_t giveup_token = 0;
    std::uint64_t scan_token = 0;
  };

  // ---- window lifecycle ----

  void handle_wake(World& w) {
    awake_ = true;
    w.radio_wake(id_);
    transition(w, 1);
    begin_window(w);
  }

  void begin_window(World& w) {
    ++window_no_;
    cur_wake_ = w.now();
    heard_any_ = false;
    heard_qualifying_ = false;
    contention_ = 0;
    pending_.reset();
    early_.reset();
    iso_ = IsoState{};
    retx_token_ = 0;
    beacon_due_token_ = 0;
    footers_seen_.clear();
    footer_tx_seen_.clear();

    int purged = buf_.purge_expired(w.now());
    if (purged > 0) {
      TraceRecord r;
      r.kind = RecKind::Purge;
      r.from = id_;
      r.count = purged;
      w.trace(r);
    }

    // The wake-up announcement carries a little processing jitter so that
    // two nodes with near-identical phases do not shadow each other's
    // beacons at a shared neighbor cycle after cycle. A node waking into a
    // busy channel additionally listens first and announces itself once the
    // ongoing frame ends; transmitting blindly would corrupt the very frame
    // it needs to overhear.
    Time jitter{static_cast<std::int64_t>(backoff_rng_.below(2001))};
    ++token_counter_;
    beacon_due_token_ = token_counter_;
    w.schedule(w.now() + jitter, EvKind::BeaconDue, id_, beacon_due_token_);
    arm_sleep(w, cur_wake_ + cfg_.active);
    if (cfg_.quasi_sync && !is_source())
      w.schedule(cur_sleep_ - cfg_.t0, EvKind::IsoCheck, id_, window_no_);
    if (!uniq_.empty()) schedule_uni_try(w, w.now() + w.cfg().beacon_dur);
  }

  void handle_sleep_due(World& w, std::uint64_t token) {
    if (token != sleep_token_ || !awake_) return;
    if (iso_.prolonged) return;  // suspended by Task 5
    if (own_tx_end_ >= w.now()) {
      // Finish the frame on air, then sleep.
      arm_sleep(w, max_time(own_tx_end_, w.now()));
      return;
    }
    go_to_sleep(w);
  }

  void go_to_sleep(World& w) {
    if (cfg_.cycle == cfg_.active && wake_list_.empty()) {
      // Always-on node: roll straight into the next window.
      begin_window(w);
      return;
    }
    transition(w, 15);
    awake_ = false;
    w.radio_sleep(id_);
    pending_.reset();
    early_.reset();
    iso_ = IsoState{};
    retx_token_ = 0;
    beacon_due_token_ = 0;
    // The pattern re-anchors at the actual sleep boundary: a standard sleep
    // length always follows, whatever adjustment moved the boundary.
    if (!wake_list_.empty()) {
      while (wake_ix_ < wake_list_.size() && wake_list_[wake_ix_] <= w.now()) ++wake_ix_;
      if (wake_ix_ < wake_list_.size()) {
        w.schedule(wake_list_[wake_ix_], EvKind::Wake, id_, 0);
        ++wake_ix_;
      }
    } else {
      w.schedule(w.now() + (cfg_.cycle - cfg_.active), EvKind::Wake, id_, 0);
    }
  }

  void arm_sleep(World& w, Time at) {
    ++token_counter_;
    sleep_token_ = token_counter_;
    cur_sleep_ = at;
    w.schedule(at, EvKind::SleepDue, id_, sleep_token_);
  }

  void adjust_sleep(World& w, Time at, const char* what) {
    TraceRecord r;
    r.kind = RecKind::Adjust;
    r.from = id_;
    r.what = what;
    r.old_t = cur_sleep_;
    r.new_t = at;
    w.trace(r);
    arm_sleep(w, at);
  }

  void send_beacon(World& w, bool retransmission) {
    Beacon b;
    b.id = buf_.max_id();
    b.node_id = id_;
    b.wakeup_time = cur_wake_;  // retransmissions announce the original wake-up
    b.retransmission = retransmission;
    w.transmit_beacon(id_, b);
    own_tx_end_ = w.now() + w.cfg().beacon_dur;
    transition(w, 2);
  }

  // ---- Task 1: forwarding decision ----

  void handle_beacon(World& w, const Beacon& b) {
    if (b.id > buf_.max_id()) heard_qualifying_ = true;
    if (iso_.prolonged || iso_.soft_synced) {
      iso_handle_beacon(w, b);
      return;
    }
    if (!buf_.empty() && buf_.max_id() > b.id) {
      if (w.now() > cur_sleep_ - cfg_.t0) return;  // decision window closed
      if (early_ && early_->committed) return;     // committed to receiving first
      if (iso_.awaiting) return;
      arm_or_extend(w, b.node_id);
      return;
    }
    if (cfg_.quasi_sync && !is_source() && b.id > buf_.max_id() && !early_ && !iso_.awaiting)
      plan_early_sleep(w, b);
  }

  void arm_or_extend(World& w, int receiver) {
    if (pending_) {
      pending_->receivers.insert(receiver);
      transition(w, 6);  // receiver set extended
      return;
    }
    PendingSend p;
    p.mid = buf_.max_id();
    p.at = cur_sleep_ - cfg_.t0;
    p.receivers.insert(receiver);
    // A re-trigger for a message this node already forwarded means the
    // earlier attempt did not get through; advancing the retry by a fresh
    // backoff breaks up repeating collision alignments the sender cannot
    // hear (both schedules are periodic, so a bad overlap would recur).
    if (forwarded_.count(p.mid)) {
      ++contention_;
      p.at = max_time(p.at - draw_backoff(), max_time(w.now() + Time{1}, cur_wake_ + Time{1}));
    }
    Time original = p.at;
    for (const auto& f : footers_seen_) {
      if (footer_covers(f, p.receivers, p.mid)) return;  // already served
      if (footer_forces_backoff(f, p.at, cfg_.t0)) {
        ++contention_;
        Time cand = f.end_time + draw_backoff();
        if (cand > p.at) p.at = cand;
      }
    }
    if (p.at + cfg_.t0 > cur_sleep_) return;  // cannot finish before sleeping
    ++token_counter_;
    p.token = token_counter_;
    transition(w, 5);
    transition(w, 6);
    if (p.at != original) {
      TraceRecord r;
      r.kind = RecKind::Resched;
      r.from = id_;
      r.mid = p.mid;
      r.old_t = original;
      r.new_t = p.at;
      w.trace(r);
    }
    pending_ = p;
    w.schedule(p.at, EvKind::SendDue, id_, p.token);
  }

  void handle_send_due(World& w, std::uint64_t token) {
    if (!pending_ || pending_->token != token || !awake_) return;
    if (own_tx_end_ >= w.now()) {
      ++token_counter_;
      pending_->token = token_counter_;
      pending_->at = max_time(own_tx_end_, w.now());
      w.schedule(pending_->at, EvKind::SendDue, id_, pending_->token);
      return;
    }
    const BroadcastMessage* m = buf_.find(pending_->mid);
    if (!m) {  // expired while armed
      trace_abort(w);
      transition(w, 8);
      pending_.reset();
      return;
    }
    if (auto busy = w.channel_busy_until(id_)) {
      // A frame heard in progress at the send time forces the same backoff
      // as an overheard footer announcing that window would.
      ++contention_;
      Time cand = *busy + draw_backoff();
      if (cand + cfg_.t0 <= cur_sleep_) {
        TraceRecord r;
        r.kind = RecKind::Resched;
        r.from = id_;
        r.mid = pending_->mid;
        r.old_t = pending_->at;
        r.new_t = cand;
        w.trace(r);
        pending_->at = cand;
        ++token_counter_;
        pending_->token = token_counter_;
        w.schedule(cand, EvKind::SendDue, id_, pending_->token);
        transition(w, 7);
      } else {
        trace_abort(w);
        transition(w, 8);
        pending_.reset();
      }
      return;
    }
    Footer f;
    f.forwarder = id_;
    f.receivers = pending_->receivers;
    f.message_id = pending_->mid;
    f.end_time = w.now() + cfg_.t0;
    transition(w, 7);  // send time reached, transmission begins
    w.transmit_bcast(id_, m->id, m->origin, m->payload_len, m->created_at, f);
    own_tx_end_ = w.now() + cfg_.t0;
  }

  // ---- Task 2: sending task abort ----

  void process_footer(World& w, const Transmission& tx) {
    for (std::uint64_t s : footer_tx_seen_)
      if (s == tx.seq) return;
    footer_tx_seen_.push_back(tx.seq);
    footers_seen_.push_back(tx.footer);
    if (!pending_ || w.now() >= pending_->at) return;
    const Footer& f = tx.footer;
    if (footer_covers(f, pending_->receivers, pending_->mid)) {
      trace_abort(w);
      transition(w, 8);
      pending_.reset();
      return;
    }
    if (footer_forces_backoff(f, pending_->at, cfg_.t0)) {
      ++contention_;
      Time cand = f.end_time + draw_backoff();
      if (cand + cfg_.t0 <= cur_sleep_) {
        TraceRecord r;
        r.kind = RecKind::Resched;
        r.from = id_;
        r.mid = pending_->mid;
        r.old_t = pending_->at;
        r.new_t = cand;
        w.trace(r);
        pending_->at = cand;
        ++token_counter_;
        pending_->token = token_counter_;
        w.schedule(cand, EvKind::SendDue, id_, pending_->token);
        transition(w, 7);  // rescheduled past the overheard transmission
      } else {
        trace_abort(w);
        transition(w, 8);
        pending_.reset();
      }
    }
  }

  // ---- Task 3: early sleep ----

  void plan_early_sleep(World& w, const Beacon& b) {
    if (b.wakeup_time <= cur_wake_) return;  // sender woke first: overlap suffices
    Time sender_sleep = b.wakeup_time + cfg_.active;
    Time t_ij = min_time(cur_sleep_, sender_sleep) - b.wakeup_time;
    if (t_ij >= cfg_.active) return;  // we outlast the sender's window anyway
    EarlyPlan p;
    p.trigger_id = b.id;
    p.trigger_node = b.node_id;
    p.sender_wake = b.wakeup_time;
    p.sender_sleep = sender_sleep;
    p.backoff = draw_backoff();
    // The retransmission must finish decoding at the sender before its send
    // time, so the frame starts one beacon airtime ahead of the slot.
    p.retx_at = sender_sleep - cfg_.t0 - p.backoff - w.cfg().beacon_dur;
    p.near_case = t_ij > cfg_.active - cfg_.t0;
    ++token_counter_;
    p.token = token_counter_;
    early_ = p;
    // Opportunistic listen window: until the retransmission slot (near case)
    // or until the scheduled sleep (far case).
    Time listen_until = p.near_case ? p.retx_at : cur_sleep_;
    if (listen_until < w.now()) listen_until = w.now();
    w.schedule(listen_until, EvKind::EarlyEval, id_, p.token);
    // Re-arm the sleep timer so a far-case evaluation at t_s runs first.
    if (!p.near_case) arm_sleep(w, cur_sleep_);
  }

  void handle_early_eval(World& w, std::uint64_t token) {
    if (!early_ || early_->token != token || !awake_ || early_->committed) return;
    if (buf_.max_id() >= early_->trigger_id) {
      early_.reset();  // caught up opportunistically: no retransmission
      return;
    }
    early_->committed = true;
    adjust_sleep(w, early_->sender_sleep + early_->backoff, "extend");
    ++token_counter_;
    retx_token_ = token_counter_;
    retx_guard_id_ = early_->trigger_id;
    w.schedule(max_time(w.now(), early_->retx_at), EvKind::BeaconRetx, id_, retx_token_);
  }

  void handle_beacon_due(World& w, std::uint64_t token) {
    if (token != beacon_due_token_ || !awake_) return;
    if (auto busy = w.channel_busy_until(id_)) {
      w.schedule(*busy, EvKind::BeaconDue, id_, beacon_due_token_);
      return;
    }
    send_beacon(w, false);
  }

  void handle_beacon_retx(World& w, std::uint64_t token) {
    if (token != retx_token_ || !awake_) return;
    if (buf_.max_id() >= retx_guard_id_) return;  // caught up meanwhile
    if (auto busy = w.channel_busy_until(id_)) {
      w.schedule(*busy, EvKind::BeaconRetx, id_, retx_token_);
      return;
    }
    send_beacon(w, true);
  }

  // ---- Task 4: late wake-up ----

  void handle_late_wakeup(World& w, Time frame_end) {
    if (!cfg_.quasi_sync || is_source() || late_adjusted_window_ == window_no_) return;
    // A node that received fresh data within the last couple of cycles is a
    // bystander of someone else's hop, not a receiver missing its own;
    // shifting it would only unsettle an already-aligned schedule.
    if (last_fresh_rx_.us >= 0 && w.now() - last_fresh_rx_ <= cfg_.cycle * 2) return;
    late_adjusted_window_ = window_no_;
    // The frame occupies a full T0 slot, so its start is known even though
    // the payload was missed. Advance at least past the overshoot so the
    // next wake-up precedes the sender's send time.
    Time overshoot = cur_wake_ - (frame_end - cfg_.t0);
    Time shift = max_time(draw_backoff(), overshoot + Time{1});
    Time floor_sleep = cur_wake_ + cfg_.t0;  // keep at least T0 of active time
    Time target = max_time(cur_sleep_ - shift, floor_sleep);
    if (pending_) target = max_time(target, pending_->at + cfg_.t0);
    target = max_time(target, w.now() + Time{1});
    if (target >= cur_sleep_) return;
    adjust_sleep(w, target, "advance");
  }

  // ---- Task 5: isolated node ----

  void handle_iso_check(World& w, std::uint64_t window) {
    if (!awake_ || window != window_no_ || is_source()) return;
    // Prolong when nothing was heard at all, and also when the node holds no
    // data and heard no hint that any exists: an empty-buffered node whose
    // window only ever meets other empty nodes is indistinguishable from one
    // that just joined, and this is the recovery path for exactly that case.
    bool cut_off = !heard_any_ || (buf_.empty() && !heard_qualifying_);
    if (!cut_off) return;
    iso_.prolonged = true;
    ++token_counter_;
    iso_.giveup_token = token_counter_;
    Time giveup = cur_sleep_ + cfg_.prolong_cap;
    TraceRecord r;
    r.kind = RecKind::Prolong;
    r.from = id_;
    r.at = giveup;
    w.trace(r);
    w.schedule(giveup, EvKind::IsoGiveup, id_, iso_.giveup_token);
    // Every neighbor's periodic beacon falls inside one cycle of listening;
    // settle for the best boundary heard once the scan completes.
    ++token_counter_;
    iso_.scan_token = token_counter_;
    w.schedule(w.now() + cfg_.cycle, EvKind::IsoScan, id_, iso_.scan_token);
  }

  void handle_iso_scan(World& w, std::uint64_t token) {
    if (!awake_ || !iso_.prolonged || token != iso_.scan_token) return;
    if (!iso_.heard_sender_sleep) return;  // nothing heard yet: wait for the cap
    Time backoff = draw_backoff();
    iso_.prolonged = false;
    iso_.soft_synced = true;  // a qualifying beacon can still upgrade this
    adjust_sleep(w, max_time(w.now() + Time{1}, *iso_.heard_sender_sleep + backoff), "iso_sync");
  }

  void handle_iso_giveup(World& w, std::uint64_t token) {
    if (!awake_ || !iso_.prolonged || token != iso_.giveup_token) return;
    TraceRecord r;
    r.kind = RecKind::Adjust;
    r.from = id_;
    r.what = "giveup";
    r.old_t = cur_sleep_;
    r.new_t = w.now();
    w.trace(r);
    iso_ = IsoState{};
    go_to_sleep(w);
  }

  void iso_handle_beacon(World& w, const Beacon& b) {
    bool qualifying = b.id > buf_.max_id();
    Time sender_sleep = b.wakeup_time + cfg_.active;
    if (qualifying && !iso_.awaiting) {
      Time backoff = draw_backoff();
      iso_.prolonged = false;
      iso_.soft_synced = false;
      iso_.awaiting = true;
      iso_.solicit_id = b.id;
      adjust_sleep(w, max_time(w.now() + Time{1}, sender_sleep + backoff), "iso_sync");
      ++token_counter_;
      retx_token_ = token_counter_;
      retx_guard_id_ = b.id;
      w.schedule(max_time(w.now(), b.wakeup_time + backoff), EvKind::BeaconRetx, id_, retx_token_);
    } else if (!qualifying && iso_.prolonged) {
      // Keep listening: the full-cycle scan decides which boundary to adopt.
      iso_.heard_sender_sleep = sender_sleep;
    }
  }

  // ---- reception ----

  void handle_broadcast(World& w, const Transmission& tx) {
    process_footer(w, tx);
    bool fresh = !buf_.contains(tx.mid);
    if (fresh) {
      heard_qualifying_ = true;
      last_fresh_rx_ = w.now();
    }
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
    d.isolated_path = fresh && iso_.awaiting;
    w.trace(d);
    std::int64_t lat = (w.now() - tx.created).us;
    if (!fresh) {
      trace_route_update(w, tx.mid, route_.learn(tx.mid, tx.sender, lat, w.now()));
      if (st_ == NodeState::Idle) {
        transition(w, 4);
        transition(w, 3);
      }
      return;
    }
    BroadcastMessage m;
    m.id = tx.mid;
    m.origin = tx.origin;
    m.payload_len = tx.payload_len;
    m.created_at = tx.created;
    m.forwarder = tx.sender;
    buf_.insert(m);
    bool routing_state = false;
    if (st_ == NodeState::Idle) {
      transition(w, 4);
      transition(w, 10);
      routing_state = true;
    }
    trace_route_update(w, tx.mid, route_.learn(tx.mid, tx.sender, lat, w.now()));
    if (early_ && early_->committed && buf_.max_id() >= early_->trigger_id) early_.reset();
    if (iso_.awaiting && buf_.max_id() >= iso_.solicit_id) iso_ = IsoState{};
    if (routing_state) {
      if (!uniq_.empty() && route_.entry && !uni_busy_) {
        transition(w, 13);
        attempt_unicast(w, true);
      } else {
        transition(w, 9);
      }
    }
  }

  void trace_route_update(World& w, std::int64_t mid, bool changed) {
    if (!changed || !route_.entry) return;
    TraceRecord r;
    r.kind = RecKind::Route;
    r.from = id_;
    r.mid = mid;
    r.next_hop = route_.entry->next_hop;
    r.latency_us = route_.entry->latency_us;
    w.trace(r);
  }

  void handle_unicast(World& w, const Transmission& tx) {
    if (tx.dst != id_) return;  // overheard someone else's hop
    TraceRecord d;
    d.kind = RecKind::Deliver;
    d.from = id_;
    d.frame_kind = "ucast";
    d.tx_seq = tx.seq;
    d.src = tx.sender;
    d.outcome = Outcome::Ok;
    d.mid = kNoId;
    d.uid = tx.uni.uid;
    d.created = tx.uni.created_at;
    d.tx_start = tx.start;
    d.tx_end = tx.end;
    w.trace(d);
    if (is_source()) return;  // collected at the sink
    UnicastData u = tx.uni;
    u.hop_ready = w.now();
    uniq_.push_back(u);
    if (st_ == NodeState::Idle) {
      transition(w, 4);
      transition(w, 11);
      if (route_.entry && !uni_busy_) {
        transition(w, 12);
        attempt_unicast(w, true);
      } else {
        transition(w, 9);  // no route: hold until the next broadcast round
      }
    }
  }

  // ---- unicast sending ----

  void handle_uni_gen(World& w) {
    w.schedule(w.now() + draw_interval(), EvKind::UniGen, id_, 0);
    if (is_source()) return;
    UnicastData u;
    u.uid = (static_cast<std::int64_t>(id_) << 24) + uni_counter_++;
    u.origin = id_;
    u.created_at = w.now();
    u.hop_ready = w.now();
    TraceRecord r;
    r.kind = RecKind::GenUni;
    r.from = id_;
    r.uid = u.uid;
    w.trace(r);
    uniq_.push_back(u);
    if (awake_ && st_ == NodeState::Idle && !uni_busy_) {
      transition(w, 11);
      if (route_.entry) {
        transition(w, 13);
        attempt_unicast(w, true);
      } else {
        transition(w, 9);
      }
    }
  }

  void handle_uni_try(World& w, std::uint64_t token) {
    if (token != uni_token_ || !awake_) return;
    attempt_unicast(w, false);
  }

  void schedule_uni_try(World& w, Time at) {
    ++token_counter_;
    uni_token_ = token_counter_;
    w.schedule(max_time(at, w.now()), EvKind::UniTry, id_, uni_token_);
  }

  // Transmit the queue head when a route is known and the channel is idle.
  // from_routing_state indicates the 11..13 chain was already recorded.
  void attempt_unicast(World& w, bool from_routing_state) {
    if (uniq_.empty() || !awake_ || uni_busy_ || !route_.entry) return;
    if (w.now() + w.cfg().ucast_dur > cur_sleep_ && !iso_.prolonged) return;  // next window
    if (pending_ && w.now() + w.cfg().ucast_dur > pending_->at) return;  // own slot first
    if (!from_routing_state && st_ == NodeState::Idle) {
      transition(w, 11);
      transition(w, 13);
    }
    auto busy = w.channel_busy_until(id_);
    if (busy) {
      schedule_uni_try(w, *busy);
      return;
    }
    const UnicastData& u = uniq_.front();
    w.transmit_ucast(id_, route_.entry->next_hop, u, cfg_.uni_payload);
    own_tx_end_ = w.now() + w.cfg().ucast_dur;
    uni_busy_ = true;
  }

  // ---- generation ----

  void handle_bcast_gen(World& w) {
    BroadcastMessage m;
    m.id = next_bcast_id_++;
    m.origin = id_;
    m.payload_len = cfg_.bcast_payload;
    m.created_at = w.now();
    m.forwarder = id_;
    buf_.insert(m);
    TraceRecord r;
    r.kind = RecKind::GenMsg;
    r.from = id_;
    r.mid = m.id;
    r.created = m.created_at;
    w.trace(r);
    w.schedule(w.now() + cfg_.bcast_interval, EvKind::BcastGen, id_, 0);
  }

  // ---- helpers ----

  void trace_abort(World& w) {
    TraceRecord r;
    r.kind = RecKind::Abort;
    r.from = id_;
    r.mid = pending_->mid;
    r.at = pending_->at;
    r.receivers.assign(pending_->receivers.begin(), pending_->receivers.end());
    w.trace(r);
  }

  Time draw_backoff() {
    double t0s = cfg_.t0.sec();
    double mean = std::min(t0s, t0s / 2.0 * static_cast<double>(std::int64_t{1} << std::min(contention_, 6)));
    double v = backoff_rng_.exponential_trunc(mean, 0.01 * t0s, t0s);
    return Time::from_seconds(v);
  }

  Time draw_interval() {
    return Time::from_seconds(gen_rng_.uniform(cfg_.uni_lo.sec(), cfg_.uni_hi.sec()));
  }

  // Emits a state record only for transitions legal from the current state;
  // behavior that the simplified diagram does not picture stays silent.
  bool transition(World& w, int cond) {
    auto next = state_transition(st_, cond);
    if (!next) return false;
    TraceRecord r;
    r.kind = RecKind::State;
    r.from = id_;
    r.fs = st_;
    r.ts = *next;
    r.cond = cond;
    w.trace(r);
    st_ = *next;
    return true;
  }

  int id_;
  ProtocolConfig cfg_;
  Time first_wake_;
  Rng backoff_rng_, gen_rng_;
  MessageBuffer buf_;
  RouteTable route_;

  std::vector<Time> wake_list_;
  std::size_t wake_ix_ = 0;

  NodeState st_ = NodeState::Sleep;
  bool awake_ = false;
  std::uint32_t window_no_ = 0;
  std::uint32_t late_adjusted_window_ = 0;
  Time cur_wake_, cur_sleep_;
  bool heard_any_ = false;
  bool heard_qualifying_ = false;
  int contention_ = 0;

  std::optional<PendingSend> pending_;
  std::optional<EarlyPlan> early_;
  IsoState iso_;
  std::set<std::int64_t> forwarded_;
  std::vector<Footer> footers_seen_;
  std::vector<std::uint64_t> footer_tx_seen_;

  std::deque<UnicastData> uniq_;
  bool uni_busy_ = false;
  std::int64_t uni_counter_ = 0;
  std::int64_t next_bcast_id_ = 0;

  std::uint64_t token_counter_ = 0;
  std::uint64_t sleep_token_ = 0;
  std::uint64_t retx_token_ = 0;
  std::uint64_t beacon_due_token_ = 0;
  std::uint64_t uni_token_ = 0;
  std::int64_t retx_guard_id_ = kNoId;
  Time own_tx_end_ = Time{-1};
  Time last_fresh_rx_ = Time{-1};
};

}  // namespace dqsb
