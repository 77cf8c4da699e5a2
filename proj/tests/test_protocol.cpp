#include <catch2/catch_amalgamated.hpp>

#include "dqsb/dqsb.hpp"

using namespace dqsb;

namespace {

ProtocolConfig cfg_default() {
  ProtocolConfig p;
  p.cycle = Time::seconds(1);
  p.active = Time::msec(200);
  p.t0 = Time::msec(50);
  p.ttl = Time::seconds(10);
  p.bcast_interval = Time::seconds(10);
  p.source = 0;
  return p;
}

WorldConfig wcfg() {
  WorldConfig w;
  w.channel.comm_radius = 15;
  w.channel.loss_rate = 0.0;
  w.seed = 21;
  return w;
}

Deployment cluster(std::vector<std::pair<double, double>> pts) {
  Deployment d;
  d.field_w = 200;
  d.field_h = 200;
  d.comm_radius = 15;
  for (auto [x, y] : pts) d.positions.push_back({x, y});
  return d;
}

// Transmits one beacon with a chosen id at a fixed time.
struct FakeBeaconer : Agent {
  int id;
  Time at;
  std::int64_t bid;
  Time wake_field;  // wake-up time announced in the beacon
  FakeBeaconer(int i, Time t, std::int64_t b, Time wf = Time{-1})
      : id(i), at(t), bid(b), wake_field(wf.us < 0 ? t : wf) {}
  void start(World& w) override { w.schedule(at, EvKind::BeaconRetx, id, 0); }
  void on_timer(World& w, const SimEvent& ev) override {
    if (ev.kind != EvKind::BeaconRetx) return;
    Beacon b;
    b.id = bid;
    b.node_id = id;
    b.wakeup_time = wake_field;
    w.transmit_beacon(id, b);
  }
};

// Transmits one DATA frame with footer at a fixed time.
struct FakeDataSender : Agent {
  int id;
  Time at;
  std::int64_t mid;
  Time created;
  std::set<int> recv;
  FakeDataSender(int i, Time t, std::int64_t m, Time c, std::set<int> r)
      : id(i), at(t), mid(m), created(c), recv(std::move(r)) {}
  void start(World& w) override { w.schedule(at, EvKind::SendDue, id, 0); }
  void on_timer(World& w, const SimEvent& ev) override {
    if (ev.kind != EvKind::SendDue) return;
    Footer f;
    f.forwarder = id;
    f.receivers = recv;
    f.message_id = mid;
    f.end_time = w.now() + w.cfg().t0;
    w.transmit_bcast(id, mid, 0, 512, created, f);
  }
};

std::vector<TraceRecord> records_of(const Trace& tr, RecKind k, int from = -1) {
  std::vector<TraceRecord> out;
  for (const auto& r : tr)
    if (r.kind == k && (from < 0 || r.from == from)) out.push_back(r);
  return out;
}

}  // namespace

// ---- classification ----

TEST_CASE("classify_case: the four timing relations") {
  Time t0 = Time::msec(50);
  Time cycle = Time::seconds(1);
  auto sched = [&](std::int64_t wake_ms) {
    return SleepSchedule::periodic(Time::msec(wake_ms), Time::msec(100), cycle);
  };
  // sender awake [100, 200), receiver [80, 180): overlap 80 ms in (50, 100)
  CHECK(classify_case(sched(100), sched(80), true, t0) == QuasiSyncCase::EarlySleepNear);
  // receiver [20, 120): overlap 20 ms in (0, 50]
  CHECK(classify_case(sched(100), sched(20), true, t0) == QuasiSyncCase::EarlySleepFar);
  // receiver wakes at 160, sender sends at 150, sleeps 200
  CHECK(classify_case(sched(100), sched(160), true, t0) == QuasiSyncCase::LateWakeup);
  // nothing heard at all
  CHECK(classify_case(sched(100), sched(80), false, t0) == QuasiSyncCase::Isolated);
  // sender wakes first, receiver inside the decision window: no case
  CHECK(classify_case(sched(100), sched(120), true, t0) == QuasiSyncCase::None);
}

TEST_CASE("state transition table") {
  using S = NodeState;
  CHECK(state_transition(S::Sleep, 1) == S::Idle);
  CHECK(state_transition(S::Transmitting, 9) == S::Idle);
  CHECK(state_transition(S::Idle, 15) == S::Sleep);
  CHECK(state_transition(S::Idle, 5) == S::ForwardDecision);
  CHECK(state_transition(S::ForwardDecision, 6) == S::Transmitting);
  CHECK(state_transition(S::Receiving, 10) == S::Routing);
  CHECK(state_transition(S::Routing, 13) == S::ForwardUnicast);
  CHECK(state_transition(S::ForwardUnicast, 14) == S::Idle);
  // Illegal pairs have no successor.
  CHECK(!state_transition(S::Sleep, 9));
  CHECK(!state_transition(S::Idle, 1));
  CHECK(!state_transition(S::Sleep, 15));
  CHECK(!state_transition(S::Receiving, 6));
  // Every awake state can go to sleep.
  for (S s : {S::Idle, S::ForwardDecision, S::Receiving, S::Routing, S::Transmitting,
              S::ForwardUnicast})
    CHECK(state_transition(s, 15) == S::Sleep);
}

TEST_CASE("route table: first arrival wins, later rounds need strictly lower latency") {
  RouteTable rt;
  CHECK(rt.learn(0, 5, 400000, Time::msec(400)));
  CHECK(rt.entry->next_hop == 5);
  // Duplicate of the same round later: no change.
  CHECK(!rt.learn(0, 3, 700000, Time::msec(700)));
  CHECK(rt.entry->next_hop == 5);
  // Same round, identical tick and latency: lower forwarder id wins.
  CHECK(rt.learn(0, 2, 400000, Time::msec(400)));
  CHECK(rt.entry->next_hop == 2);
  CHECK(!rt.learn(0, 4, 400000, Time::msec(400)));
  // Later round with equal latency: keep.
  CHECK(!rt.learn(1, 7, 400000, Time::msec(10400)));
  CHECK(rt.entry->next_hop == 2);
  // Later round, strictly lower latency: replace.
  CHECK(rt.learn(2, 7, 399999, Time::msec(20400)));
  CHECK(rt.entry->next_hop == 7);
}

// ---- Task 1: forwarding decision ----

TEST_CASE("a beacon advertising an older id triggers forwarding of the newest message") {
  // Source accumulates rounds 0..2 while everyone sleeps; a beacon with id 1
  // lands inside its window, so it forwards message 2 at t_s - T0.
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.bcast_interval = Time::msec(450);
  pc.ttl = Time::seconds(30);
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::seconds(1), 21));
  w.add_agent(std::make_unique<FakeBeaconer>(1, Time::msec(1050), 1));
  w.run(Time::msec(1400));

  auto bcasts = records_of(tr, RecKind::Bcast, 0);
  REQUIRE(bcasts.size() == 1);
  CHECK(bcasts[0].mid == 2);                 // newest buffered id
  CHECK(bcasts[0].t.us == 1150000);          // t_s - T0 = 1000+200-50 ms
  auto footers = records_of(tr, RecKind::Footer, 0);
  REQUIRE(footers.size() == 1);
  CHECK(footers[0].receivers == std::vector<int>{1});
}

TEST_CASE("a beacon with the maximal id triggers nothing") {
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(100), 21));
  w.add_agent(std::make_unique<FakeBeaconer>(1, Time::msec(150), 0));  // same id as buffer max
  w.run(Time::msec(500));
  CHECK(records_of(tr, RecKind::Bcast, 0).empty());
}

TEST_CASE("an empty buffer never arms a send") {
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.bcast_interval = Time::zero();  // no generator: buffer stays empty
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(100), 21));
  w.add_agent(std::make_unique<FakeBeaconer>(1, Time::msec(150), -1));
  w.run(Time::msec(500));
  CHECK(records_of(tr, RecKind::Bcast).empty());
}

TEST_CASE("beacons repeat the same id when the buffer is unchanged") {
  auto dep = cluster({{50, 50}, {80, 50}});  // 30 m apart: no link
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.bcast_interval = Time::seconds(30);
  pc.ttl = Time::seconds(30);
  pc.quasi_sync = false;
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(100), 21));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(700), 21));
  w.run(Time::seconds(3));
  auto b0 = records_of(tr, RecKind::Beacon, 0);
  REQUIRE(b0.size() >= 3);
  for (const auto& b : b0) CHECK(b.bid == 0);
  auto b1 = records_of(tr, RecKind::Beacon, 1);
  REQUIRE(b1.size() >= 2);
  for (const auto& b : b1) CHECK(b.bid == -1);  // never hears the source
}

// ---- Task 3: early sleep ----

TEST_CASE("early sleep: retransmission triggers the sender and sleep follows its boundary") {
  // Receiver 1 wakes at 160 ms, source wakes at 300 ms with message 0.
  // Overlap 60 ms (far case): node 1 listens to its own sleep boundary,
  // retransmits before the source's send time, stays awake for the frame,
  // and goes to sleep after the source's boundary.
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(300), 21));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(160), 21));
  w.run(Time::msec(900));

  auto rtx = records_of(tr, RecKind::Beacon, 1);
  REQUIRE(rtx.size() == 2);  // wake beacon + retransmission
  CHECK(rtx[0].rtx == false);
  CHECK(rtx[1].rtx == true);
  CHECK(rtx[1].t.us > 399000);      // at the send time minus the backoff
  CHECK(rtx[1].t.us < 450000);      // before the source's send time
  CHECK(rtx[1].wake.us == 160000);  // announces the original wake-up

  auto adj = records_of(tr, RecKind::Adjust, 1);
  REQUIRE(!adj.empty());
  CHECK(adj[0].what == "extend");
  CHECK(adj[0].new_t.us > 500000);  // past the source's sleep boundary

  auto deliv = records_of(tr, RecKind::Deliver, 1);
  bool got = false;
  for (const auto& d : deliv)
    if (d.outcome == Outcome::Ok && d.mid == 0) got = true;
  CHECK(got);

  // The node really slept at the adjusted boundary.
  bool slept_late = false;
  for (const auto& r : records_of(tr, RecKind::State, 1))
    if (r.cond == 15 && r.t == adj[0].new_t) slept_late = true;
  CHECK(slept_late);
}

TEST_CASE("early sleep: opportunistic reception cancels the retransmission") {
  // Node 2 would early-sleep against source 0, but a third neighbor relays
  // the message into its listen window first.
  auto dep = cluster({{50, 50}, {58, 50}, {54, 56}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(600), 21));
  w.add_agent(std::make_unique<FakeDataSender>(1, Time::msec(500), 0, Time::zero(), std::set<int>{2}));
  w.add_agent(std::make_unique<DqsbNode>(2, pc, Time::msec(450), 21));
  w.run(Time::msec(900));

  // Node 2 hears B_0 at 600 (id 0 > -1), plans the far case, but receives the
  // data from node 1 at 550 already -- wait, reception precedes the beacon, so
  // no plan forms at all: its buffer already holds id 0.
  auto rtx = records_of(tr, RecKind::Beacon, 2);
  for (const auto& b : rtx) CHECK(b.rtx == false);
  bool got = false;
  for (const auto& d : records_of(tr, RecKind::Deliver, 2))
    if (d.outcome == Outcome::Ok && d.mid == 0) got = true;
  CHECK(got);
}

// ---- Task 4: late wake-up ----

TEST_CASE("late wake-up advances the sleep boundary so the next wake precedes the send") {
  // A fake sender transmits [500, 550); node 1 wakes at 520 mid-frame.
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;  // node 1 is an ordinary node
  w.add_agent(std::make_unique<FakeDataSender>(0, Time::msec(500), 0, Time::zero(), std::set<int>{1}));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(520), 21));
  w.run(Time::seconds(2));

  auto adj = records_of(tr, RecKind::Adjust, 1);
  REQUIRE(!adj.empty());
  CHECK(adj[0].what == "advance");
  CHECK(adj[0].new_t < adj[0].old_t);
  // The shift clears the overshoot: old boundary 720, overshoot 20 ms, so the
  // new boundary is at most 700 ms and at least wake + T0.
  CHECK(adj[0].new_t.us <= 700000 - 1);
  CHECK(adj[0].new_t.us >= 520000 + 50000);
  // Next wake re-anchors a full sleep length after the advanced boundary.
  bool woke = false;
  for (const auto& r : records_of(tr, RecKind::State, 1))
    if (r.cond == 1 && r.t == adj[0].new_t + Time::msec(800)) woke = true;
  CHECK(woke);
}

TEST_CASE("late wake-up does not fire for fully decodable frames") {
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;
  w.add_agent(std::make_unique<FakeDataSender>(0, Time::msec(500), 0, Time::zero(), std::set<int>{1}));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(450), 21));
  w.run(Time::seconds(1));
  for (const auto& a : records_of(tr, RecKind::Adjust, 1)) CHECK(a.what != "advance");
}

// ---- Task 5: isolated nodes ----

TEST_CASE("an isolated node with no neighbors gives up at the cap and resumes") {
  auto dep = cluster({{10, 10}, {150, 150}});  // far apart: no link
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;
  pc.prolong_cap = Time::seconds(2);
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(100), 21));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(100), 21));
  w.run(Time::seconds(4));

  auto pro = records_of(tr, RecKind::Prolong, 0);
  REQUIRE(!pro.empty());
  CHECK(pro[0].t.us == 250000);   // decision at t_s - T0
  CHECK(pro[0].at.us == 2300000); // cap two cycles past the boundary
  auto adj = records_of(tr, RecKind::Adjust, 0);
  REQUIRE(!adj.empty());
  CHECK(adj[0].what == "giveup");
  CHECK(adj[0].t.us == 2300000);
  // Resumes: sleeps at the giveup instant, wakes a sleep length later.
  bool woke = false;
  for (const auto& r : records_of(tr, RecKind::State, 0))
    if (r.cond == 1 && r.t.us == 3100000) woke = true;
  CHECK(woke);
}

TEST_CASE("isolated node syncs to a qualifying beacon, retransmits, and receives") {
  // Node 1 wakes alone at 100 ms. Node 0 (informed source) wakes at 700 ms,
  // inside the prolongation. Node 1 retransmits and receives the broadcast
  // while still awake.
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(700), 21));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(100), 21));
  w.run(Time::msec(1200));

  REQUIRE(!records_of(tr, RecKind::Prolong, 1).empty());
  auto adj = records_of(tr, RecKind::Adjust, 1);
  REQUIRE(!adj.empty());
  CHECK(adj[0].what == "iso_sync");
  CHECK(adj[0].new_t.us > 900000);  // source sleeps at 900 ms, sync is later
  auto rtx = records_of(tr, RecKind::Beacon, 1);
  REQUIRE(rtx.size() == 2);
  CHECK(rtx[1].rtx == true);
  CHECK(rtx[1].t.us > 700000);
  bool got_iso = false;
  for (const auto& d : records_of(tr, RecKind::Deliver, 1))
    if (d.outcome == Outcome::Ok && d.mid == 0 && d.isolated_path) got_iso = true;
  CHECK(got_iso);
  // Forwarding was triggered by the retransmission.
  auto bc = records_of(tr, RecKind::Bcast, 0);
  REQUIRE(bc.size() == 1);
  CHECK(bc[0].t.us == 850000);  // 700 + 200 - 50 ms
}

TEST_CASE("isolated node hearing only a non-qualifying beacon syncs without retransmitting") {
  // Both nodes are empty-buffered. Node 1 prolongs, hears node 0's id -1
  // beacon, and simply aligns its sleep to node 0's boundary.
  auto dep = cluster({{50, 50}, {55, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.bcast_interval = Time::zero();  // no data anywhere
  pc.source = 99;
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(700), 21));
  w.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(100), 21));
  w.run(Time::msec(1500));

  REQUIRE(!records_of(tr, RecKind::Prolong, 1).empty());
  auto adj = records_of(tr, RecKind::Adjust, 1);
  REQUIRE(!adj.empty());
  CHECK(adj[0].what == "iso_sync");
  CHECK(adj[0].new_t.us > 900000);
  auto beacons = records_of(tr, RecKind::Beacon, 1);
  for (const auto& b : beacons) CHECK(b.rtx == false);  // never retransmitted
}

// ---- Task 2: abort ----

TEST_CASE("a covering footer aborts the redundant forwarder") {
  // Nodes 1 and 2 both hold message 0 and are both triggered by node 3's
  // beacon. Node 1 sends first; its footer covers node 2's receiver set, so
  // node 2 aborts.
  auto dep = cluster({{50, 50}, {56, 50}, {53, 55}});  // 0,1 forwarders; 2 requester
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;
  pc.bcast_interval = Time::zero();

  // Seed both forwarders with message 0 via a fake sender out of range of 2?
  // Simpler: deliver it on air to both while node 2 sleeps.
  Deployment dep4 = cluster({{50, 50}, {56, 50}, {53, 55}, {53, 45}});
  World w4(wcfg(), dep4);
  w4.set_trace(&tr);
  w4.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(300), 21));   // forwarder A
  w4.add_agent(std::make_unique<DqsbNode>(1, pc, Time::msec(340), 21));   // forwarder B
  w4.add_agent(std::make_unique<DqsbNode>(2, pc, Time::msec(410), 21));   // late requester
  w4.add_agent(std::make_unique<FakeDataSender>(3, Time::msec(350), 0, Time::zero(), std::set<int>{0, 1}));
  w4.run(Time::seconds(1));

  // Both 0 and 1 decode message 0 at 400 ms. Node 2 wakes at 410 with id -1
  // and its beacon triggers both; t_send(0)=450 < t_send(1)=490.
  auto bc0 = records_of(tr, RecKind::Bcast, 0);
  REQUIRE(bc0.size() == 1);
  CHECK(bc0[0].t.us == 450000);
  auto ab1 = records_of(tr, RecKind::Abort, 1);
  REQUIRE(ab1.size() == 1);
  CHECK(ab1[0].mid == 0);
  CHECK(ab1[0].receivers == std::vector<int>{2});
  CHECK(records_of(tr, RecKind::Bcast, 1).empty());
  // Abort safety: node 2 still got the data (from node 0's frame).
  bool got = false;
  for (const auto& d : records_of(tr, RecKind::Deliver, 2))
    if (d.outcome == Outcome::Ok && d.mid == 0) got = true;
  CHECK(got);
}

TEST_CASE("a footer for a different message leaves the task armed") {
  auto dep = cluster({{50, 50}, {56, 50}, {53, 55}, {53, 45}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;
  pc.bcast_interval = Time::zero();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(300), 21));
  w.add_agent(std::make_unique<FakeDataSender>(1, Time::msec(365), 7, Time::zero(), std::set<int>{0}));
  w.add_agent(std::make_unique<DqsbNode>(2, pc, Time::msec(417), 21));
  w.add_agent(std::make_unique<FakeDataSender>(3, Time::msec(310), 0, Time::zero(), std::set<int>{0}));
  w.run(Time::seconds(1));
  // Node 0 receives mid 0 at 360 and mid 7 at 415; node 2's id -1 beacon at
  // 417 arms mid 7. No covering footer for mid 7 ever appears: it transmits.
  auto bc = records_of(tr, RecKind::Bcast, 0);
  REQUIRE(bc.size() == 1);
  CHECK(bc[0].mid == 7);
  CHECK(records_of(tr, RecKind::Abort, 0).empty());
}

// ---- route learning on air ----

TEST_CASE("route learning: first delivery wins within a round") {
  auto dep = cluster({{50, 50}, {55, 50}, {45, 50}});
  World w(wcfg(), dep);
  Trace tr;
  w.set_trace(&tr);
  ProtocolConfig pc = cfg_default();
  pc.source = 99;
  pc.bcast_interval = Time::zero();
  w.add_agent(std::make_unique<DqsbNode>(0, pc, Time::msec(300), 21));
  w.add_agent(std::make_unique<FakeDataSender>(1, Time::msec(320), 0, Time::zero(), std::set<int>{0}));
  w.add_agent(std::make_unique<FakeDataSender>(2, Time::msec(430), 0, Time::zero(), std::set<int>{0}));
  w.run(Time::msec(600));
  auto routes = records_of(tr, RecKind::Route, 0);
  REQUIRE(routes.size() == 1);  // duplicate never replaces the first
  CHECK(routes[0].next_hop == 1);
  int dups = 0;
  for (const auto& d : records_of(tr, RecKind::Deliver, 0))
    if (d.outcome == Outcome::Dup) ++dups;
  CHECK(dups == 1);
}
