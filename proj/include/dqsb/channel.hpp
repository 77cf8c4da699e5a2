#pragma once

#include <stdexcept>

#include "dqsb/packets.hpp"
#include "dqsb/time.hpp"

namespace dqsb {

enum class FrameKind { BeaconFrame, BroadcastData, UnicastData, PreambleData };

// Unit-disc lossy channel parameters. Loss is one independent Bernoulli
// draw per (frame, receiver). When collisions are modeled, any temporal
// overlap of in-range frames destroys both at that receiver.
struct ChannelModel {
  double comm_radius = 15.0;
  double loss_rate = 0.0;
  double bitrate_bps = 250000.0;
  bool collisions = true;

  void validate() const {
    if (loss_rate < 0.0 || loss_rate >= 1.0)
      throw std::invalid_argument("loss_rate must be in [0, 1)");
    if (bitrate_bps <= 0) throw std::invalid_argument("bitrate must be positive");
  }
};

// Raw airtime of a payload at the channel bitrate.
inline Time raw_airtime(std::int64_t payload_bytes, const ChannelModel& ch) {
  if (payload_bytes < 0) throw std::invalid_argument("payload length must be >= 0");
  double sec = static_cast<double>(payload_bytes) * 8.0 / ch.bitrate_bps;
  return Time::from_seconds(sec);
}

// On-air duration of a frame. Broadcast DATA always occupies the configured
// T0 slot; beacons and unicast frames use their configured durations. The
// configured slot must cover the raw airtime of the payload.
inline Time frame_duration(std::int64_t payload_bytes, const ChannelModel& ch, FrameKind kind,
                           Time t0, Time beacon_dur, Time ucast_dur) {
  Time configured;
  switch (kind) {
    case FrameKind::BeaconFrame: configured = beacon_dur; break;
    case FrameKind::BroadcastData: configured = t0; break;
    case FrameKind::UnicastData: configured = ucast_dur; break;
    default: throw std::invalid_argument("no configured duration for this frame kind");
  }
  if (raw_airtime(payload_bytes, ch) > configured)
    throw std::invalid_argument("configured frame duration is shorter than the raw airtime");
  return configured;
}

// One on-air frame. A receiver decodes the payload only if it is awake for
// the whole [start, end) span; the footer piggybacked on a broadcast DATA
// frame is readable from the frame header at start.
struct Transmission {
  std::uint64_t seq = 0;
  int sender = 0;
  FrameKind kind = FrameKind::BeaconFrame;
  Time start, end;

  Beacon beacon;          // BeaconFrame
  // BroadcastData
  std::int64_t mid = kNoId;
  int origin = 0;
  std::int64_t payload_len = 0;
  Time created;
  Footer footer;
  // UnicastData
  UnicastData uni;
  int dst = -1;
};

}  // namespace dqsb
