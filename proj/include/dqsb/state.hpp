#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace dqsb {

// The seven per-node protocol states.
enum class NodeState { Sleep, Idle, ForwardDecision, Receiving, Routing, Transmitting, ForwardUnicast };

inline std::string_view state_name(NodeState s) {
  switch (s) {
    case NodeState::Sleep: return "sleep";
    case NodeState::Idle: return "idle";
    case NodeState::ForwardDecision: return "fwd_decision";
    case NodeState::Receiving: return "receiving";
    case NodeState::Routing: return "routing";
    case NodeState::Transmitting: return "transmitting";
    case NodeState::ForwardUnicast: return "fwd_unicast";
  }
  return "?";
}

inline std::optional<NodeState> state_from_name(std::string_view n) {
  using S = NodeState;
  if (n == "sleep") return S::Sleep;
  if (n == "idle") return S::Idle;
  if (n == "fwd_decision") return S::ForwardDecision;
  if (n == "receiving") return S::Receiving;
  if (n == "routing") return S::Routing;
  if (n == "transmitting") return S::Transmitting;
  if (n == "fwd_unicast") return S::ForwardUnicast;
  return std::nullopt;
}

// Numbered transition conditions:
//   1  wake-up time arrives
//   2  beacon transmitted at wake-up
//   3  frame handled, resume idle listening
//   4  data frame (broadcast or unicast) decoded
//   5  triggering beacon decoded
//   6  forwarding condition satisfied (send armed / receivers extended)
//   7  forwarding send time armed or rescheduled / transmission begins
//   8  forwarding aborted because an overheard footer covers it
//   9  transmission finished, or nothing to forward
//   10 next hop learned from a received broadcast
//   11 unicast payload pending (own sensed data or relayed)
//   12 route table looked up for a relayed unicast
//   13 next hop found for own unicast
//   14 unicast transmitted on an idle channel
//   15 sleep time arrives
//
// The unique successor for each legal (state, condition) pair; nullopt for
// anything else, which the conformance checker reports as a violation.
inline std::optional<NodeState> state_transition(NodeState s, int cond) {
  using S = NodeState;
  switch (cond) {
    case 1: if (s == S::Sleep) return S::Idle; break;
    case 2: if (s == S::Idle) return S::Idle; break;
    case 3: if (s == S::Receiving) return S::Idle; break;
    case 4: if (s == S::Idle) return S::Receiving; break;
    case 5: if (s == S::Idle) return S::ForwardDecision; break;
    case 6:
      if (s == S::ForwardDecision) return S::Transmitting;
      if (s == S::Transmitting) return S::Transmitting;
      break;
    case 7: if (s == S::Transmitting) return S::Transmitting; break;
    case 8: if (s == S::Transmitting) return S::Idle; break;
    case 9:
      if (s == S::Transmitting) return S::Idle;
      if (s == S::Routing) return S::Idle;
      break;
    case 10: if (s == S::Receiving) return S::Routing; break;
    case 11:
      if (s == S::Idle) return S::Routing;
      if (s == S::Receiving) return S::Routing;
      break;
    case 12: if (s == S::Routing) return S::ForwardUnicast; break;
    case 13: if (s == S::Routing) return S::ForwardUnicast; break;
    case 14: if (s == S::ForwardUnicast) return S::Idle; break;
    case 15: if (s != S::Sleep) return S::Sleep; break;
    default: break;
  }
  return std::nullopt;
}

}  // namespace dqsb
