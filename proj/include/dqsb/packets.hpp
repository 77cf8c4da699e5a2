#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "dqsb/time.hpp"

namespace dqsb {

constexpr std::int64_t kNoId = -1;

// Short frame announcing a node's wake-up and the largest broadcast id it
// holds (-1 when its buffer is empty).
struct Beacon {
  std::int64_t id = kNoId;
  int node_id = 0;
  Time wakeup_time;
  bool retransmission = false;
};

// Descriptor piggybacked on a broadcast DATA frame: which node forwards,
// for whom, which message, and when the transmission ends.
struct Footer {
  int forwarder = 0;
  std::set<int> receivers;
  std::int64_t message_id = kNoId;
  Time end_time;
};

struct BroadcastMessage {
  std::int64_t id = kNoId;   // per-origin monotone sequence number, from 0
  int origin = 0;
  std::int64_t payload_len = 0;
  Time created_at;
  int forwarder = 0;         // hop that delivered this copy
};

struct UnicastData {
  std::int64_t uid = 0;
  int origin = 0;
  Time created_at;
  Time hop_ready;            // when this hop obtained the payload
};

// Per-node broadcast message store with age-based expiry.
class MessageBuffer {
 public:
  explicit MessageBuffer(Time ttl = Time::seconds(10)) : ttl_(ttl) {}

  Time ttl() const { return ttl_; }
  void set_ttl(Time t) { ttl_ = t; }

  bool contains(std::int64_t id) const { return entries_.count(id) > 0; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  std::int64_t max_id() const { return entries_.empty() ? kNoId : entries_.rbegin()->first; }

  const BroadcastMessage* find(std::int64_t id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void insert(const BroadcastMessage& m) { entries_[m.id] = m; }

  // Drops entries strictly older than ttl; an entry aged exactly ttl stays.
  int purge_expired(Time now) {
    int dropped = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (now - it->second.created_at > ttl_) {
        it = entries_.erase(it);
        ++dropped;
      } else {
        ++it;
      }
    }
    return dropped;
  }

 private:
  std::map<std::int64_t, BroadcastMessage> entries_;
  Time ttl_;
};

inline Beacon beacon_for(const MessageBuffer& buf, int node_id, Time now, bool retransmission = false) {
  return Beacon{buf.max_id(), node_id, now, retransmission};
}

// True when an overheard footer shows that this node's own forwarding task
// is redundant: same message, and every pending receiver already targeted.
inline bool footer_covers(const Footer& f, const std::set<int>& my_receivers,
                          std::int64_t my_message_id) {
  if (f.message_id != my_message_id) return false;
  for (int r : my_receivers)
    if (!f.receivers.count(r)) return false;
  return true;
}

// True when this node's send time falls inside the footer's transmission
// window [end_time - T0, end_time), so sending now would collide.
inline bool footer_forces_backoff(const Footer& f, Time my_send_time, Time t0) {
  return my_send_time >= f.end_time - t0 && my_send_time < f.end_time;
}

}  // namespace dqsb
