#include <catch2/catch_amalgamated.hpp>

#include "dqsb/packets.hpp"
#include "dqsb/rng.hpp"

using namespace dqsb;

namespace {

BroadcastMessage msg(std::int64_t id, Time created = Time::zero()) {
  BroadcastMessage m;
  m.id = id;
  m.origin = 0;
  m.payload_len = 512;
  m.created_at = created;
  return m;
}

}  // namespace

TEST_CASE("beacon advertises the buffer maximum or -1") {
  MessageBuffer buf(Time::seconds(10));
  CHECK(beacon_for(buf, 3, Time::msec(5)).id == -1);

  for (std::int64_t id : {0, 2, 5}) buf.insert(msg(id));
  Beacon b = beacon_for(buf, 3, Time::msec(7));
  CHECK(b.id == 5);
  CHECK(b.node_id == 3);
  CHECK(b.wakeup_time.us == 7000);

  MessageBuffer single(Time::seconds(10));
  single.insert(msg(0));
  CHECK(beacon_for(single, 1, Time::zero()).id == 0);
}

TEST_CASE("beacon_for is idempotent on an unchanged buffer") {
  MessageBuffer buf(Time::seconds(10));
  buf.insert(msg(4));
  auto a = beacon_for(buf, 1, Time::msec(1));
  auto b = beacon_for(buf, 1, Time::msec(1));
  CHECK(a.id == b.id);
  CHECK(a.wakeup_time == b.wakeup_time);
}

TEST_CASE("purge drops strictly expired entries, keeps the boundary") {
  Time ttl = Time::seconds(10);
  MessageBuffer buf(ttl);
  CHECK(buf.purge_expired(Time::seconds(100)) == 0);

  buf.insert(msg(0, Time::zero()));
  CHECK(buf.purge_expired(Time::zero() + ttl) == 0);  // aged exactly ttl: retained
  CHECK(buf.contains(0));
  CHECK(buf.purge_expired(Time::zero() + ttl + Time{1}) == 1);
  CHECK(!buf.contains(0));

  // Ages 0.5 ttl, 1.5 ttl, 2 ttl: the two older entries drop.
  MessageBuffer b2(ttl);
  Time now = Time::seconds(40);
  b2.insert(msg(1, now - Time::seconds(5)));
  b2.insert(msg(2, now - Time::seconds(15)));
  b2.insert(msg(3, now - Time::seconds(20)));
  CHECK(b2.purge_expired(now) == 2);
  CHECK(b2.size() == 1);
  CHECK(b2.contains(1));
}

TEST_CASE("max_id never increases across a purge") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    MessageBuffer buf(Time::seconds(10));
    for (int i = 0; i < 8; ++i)
      buf.insert(msg(static_cast<std::int64_t>(rng.below(20)),
                     Time{static_cast<std::int64_t>(rng.below(30000000))}));
    std::int64_t before = buf.max_id();
    buf.purge_expired(Time{static_cast<std::int64_t>(rng.below(40000000))});
    CHECK(buf.max_id() <= before);
  }
}

TEST_CASE("footer coverage: subset of receivers with matching id") {
  Footer f;
  f.forwarder = 1;
  f.receivers = {3, 6};
  f.message_id = 0;
  f.end_time = Time::msec(500);

  CHECK(footer_covers(f, {3}, 0));        // covered: abort
  CHECK(footer_covers(f, {3, 6}, 0));     // equal sets
  CHECK(!footer_covers(f, {3, 6, 7}, 0)); // not a subset: keep
  CHECK(!footer_covers(f, {3}, 1));       // different message id

  Footer narrow = f;
  narrow.receivers = {3};
  CHECK(!footer_covers(narrow, {3, 6}, 0));
}

TEST_CASE("footer coverage is monotone in the footer's receiver set") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Footer f;
    f.message_id = 0;
    std::set<int> mine;
    for (int i = 0; i < 6; ++i) {
      if (rng.below(2)) f.receivers.insert(i);
      if (rng.below(3) == 0) mine.insert(i);
    }
    bool before = footer_covers(f, mine, 0);
    Footer wider = f;
    wider.receivers.insert(static_cast<int>(rng.below(10)));
    bool after = footer_covers(wider, mine, 0);
    if (before) CHECK(after);  // enlarging the set never flips true -> false
  }
}

TEST_CASE("footer backoff window is half-open") {
  Time t0 = Time::msec(50);
  Footer f;
  f.end_time = Time::msec(500);  // transmission occupies [450, 500) ms

  CHECK(footer_forces_backoff(f, Time::msec(470), t0));   // inside
  CHECK(footer_forces_backoff(f, Time::msec(450), t0));   // at start
  CHECK(!footer_forces_backoff(f, Time::msec(500), t0));  // at end: free
  CHECK(!footer_forces_backoff(f, Time::msec(430), t0));  // before
  CHECK(!footer_forces_backoff(f, Time::msec(520), t0));  // after
}
