#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqsb/state.hpp"
#include "dqsb/time.hpp"

namespace dqsb {

enum class RecKind {
  Beacon, Footer, Bcast, Ucast, State, Deliver, Adjust, Route,
  GenMsg, GenUni, Abort, Resched, Prolong, Purge
};

inline std::string_view rec_kind_name(RecKind k) {
  switch (k) {
    case RecKind::Beacon: return "beacon";
    case RecKind::Footer: return "footer";
    case RecKind::Bcast: return "bcast";
    case RecKind::Ucast: return "ucast";
    case RecKind::State: return "state";
    case RecKind::Deliver: return "deliver";
    case RecKind::Adjust: return "adjust";
    case RecKind::Route: return "route";
    case RecKind::GenMsg: return "genmsg";
    case RecKind::GenUni: return "genuni";
    case RecKind::Abort: return "abort";
    case RecKind::Resched: return "resched";
    case RecKind::Prolong: return "prolong";
    case RecKind::Purge: return "purge";
  }
  return "?";
}

enum class Outcome { Ok, Dup, Lost, Collided, Partial };

inline std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Ok: return "ok";
    case Outcome::Dup: return "dup";
    case Outcome::Lost: return "lost";
    case Outcome::Collided: return "collided";
    case Outcome::Partial: return "partial";
  }
  return "?";
}

// One audit-log line. A flat struct keyed by `kind`; unused fields are left
// at their defaults and never serialized.
struct TraceRecord {
  Time t;
  RecKind kind = RecKind::State;
  int from = 0;  // emitting node (for Deliver records: the receiver)

  // beacon
  std::int64_t bid = 0;
  Time wake;
  bool rtx = false;
  // footer
  int fwd = 0;
  std::vector<int> receivers;
  Time end_time;
  // bcast / ucast / genmsg / route / abort / resched
  std::int64_t mid = 0;
  int origin = 0;
  std::int64_t len = 0;
  Time created;
  std::int64_t uid = 0;
  int dst = 0;
  Time ready;
  // state
  NodeState fs = NodeState::Sleep, ts = NodeState::Sleep;
  int cond = 0;
  // deliver
  std::string frame_kind;
  std::uint64_t tx_seq = 0;
  int src = 0;
  Outcome outcome = Outcome::Ok;
  Time tx_start, tx_end;
  bool isolated_path = false;
  // adjust
  std::string what;
  Time old_t, new_t;
  // route
  int next_hop = 0;
  std::int64_t latency_us = 0;
  // purge
  int count = 0;
  // abort / resched
  Time at;
};

using Trace = std::vector<TraceRecord>;

// Serialization is hand-built with a fixed field order so that golden-trace
// comparisons and replay hashes are byte-exact.
inline void append_json_line(std::string& out, const TraceRecord& r) {
  auto num = [&out](std::int64_t v) { out += std::to_string(v); };
  out += "{\"t\":";
  num(r.t.us);
  out += ",\"kind\":\"";
  out += rec_kind_name(r.kind);
  out += "\",\"from\":";
  num(r.from);
  out += ",\"fields\":{";
  switch (r.kind) {
    case RecKind::Beacon:
      out += "\"id\":"; num(r.bid);
      out += ",\"wake\":"; num(r.wake.us);
      out += ",\"rtx\":"; num(r.rtx ? 1 : 0);
      break;
    case RecKind::Footer: {
      out += "\"fwd\":"; num(r.fwd);
      out += ",\"recv\":[";
      bool first = true;
      for (int v : r.receivers) {
        if (!first) out += ',';
        first = false;
        num(v);
      }
      out += "],\"mid\":"; num(r.mid);
      out += ",\"end\":"; num(r.end_time.us);
      break;
    }
    case RecKind::Bcast:
      out += "\"mid\":"; num(r.mid);
      out += ",\"origin\":"; num(r.origin);
      out += ",\"len\":"; num(r.len);
      out += ",\"created\":"; num(r.created.us);
      break;
    case RecKind::Ucast:
      out += "\"uid\":"; num(r.uid);
      out += ",\"origin\":"; num(r.origin);
      out += ",\"dst\":"; num(r.dst);
      out += ",\"ready\":"; num(r.ready.us);
      out += ",\"created\":"; num(r.created.us);
      break;
    case RecKind::State:
      out += "\"fs\":\""; out += state_name(r.fs);
      out += "\",\"ts\":\""; out += state_name(r.ts);
      out += "\",\"cond\":"; num(r.cond);
      break;
    case RecKind::Deliver:
      out += "\"fk\":\""; out += r.frame_kind;
      out += "\",\"tx\":"; num(static_cast<std::int64_t>(r.tx_seq));
      out += ",\"src\":"; num(r.src);
      out += ",\"outcome\":\""; out += outcome_name(r.outcome);
      out += "\",\"mid\":"; num(r.mid);
      out += ",\"uid\":"; num(r.uid);
      out += ",\"created\":"; num(r.created.us);
      out += ",\"s\":"; num(r.tx_start.us);
      out += ",\"e\":"; num(r.tx_end.us);
      out += ",\"iso\":"; num(r.isolated_path ? 1 : 0);
      break;
    case RecKind::Adjust:
      out += "\"what\":\""; out += r.what;
      out += "\",\"old\":"; num(r.old_t.us);
      out += ",\"new\":"; num(r.new_t.us);
      break;
    case RecKind::Route:
      out += "\"mid\":"; num(r.mid);
      out += ",\"next\":"; num(r.next_hop);
      out += ",\"lat\":"; num(r.latency_us);
      break;
    case RecKind::GenMsg:
      out += "\"mid\":"; num(r.mid);
      out += ",\"created\":"; num(r.created.us);
      break;
    case RecKind::GenUni:
      out += "\"uid\":"; num(r.uid);
      break;
    case RecKind::Abort: {
      out += "\"mid\":"; num(r.mid);
      out += ",\"at\":"; num(r.at.us);
      out += ",\"recv\":[";
      bool f1 = true;
      for (int v : r.receivers) {
        if (!f1) out += ',';
        f1 = false;
        num(v);
      }
      out += "]";
      break;
    }
    case RecKind::Resched:
      out += "\"mid\":"; num(r.mid);
      out += ",\"old\":"; num(r.old_t.us);
      out += ",\"new\":"; num(r.new_t.us);
      break;
    case RecKind::Prolong:
      out += "\"until\":"; num(r.at.us);
      break;
    case RecKind::Purge:
      out += "\"n\":"; num(r.count);
      break;
  }
  out += "}}\n";
}

inline std::string serialize_trace(const Trace& tr) {
  std::string out;
  out.reserve(tr.size() * 96);
  for (const auto& r : tr) append_json_line(out, r);
  return out;
}

inline TraceRecord parse_trace_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  TraceRecord r;
  r.t = Time{j.at("t").get<std::int64_t>()};
  r.from = j.at("from").get<int>();
  std::string kind = j.at("kind").get<std::string>();
  const auto& f = j.at("fields");
  auto get_i = [&f](const char* k) { return f.at(k).get<std::int64_t>(); };
  if (kind == "beacon") {
    r.kind = RecKind::Beacon;
    r.bid = get_i("id");
    r.wake = Time{get_i("wake")};
    r.rtx = get_i("rtx") != 0;
  } else if (kind == "footer") {
    r.kind = RecKind::Footer;
    r.fwd = static_cast<int>(get_i("fwd"));
    for (const auto& v : f.at("recv")) r.receivers.push_back(v.get<int>());
    r.mid = get_i("mid");
    r.end_time = Time{get_i("end")};
  } else if (kind == "bcast") {
    r.kind = RecKind::Bcast;
    r.mid = get_i("mid");
    r.origin = static_cast<int>(get_i("origin"));
    r.len = get_i("len");
    r.created = Time{get_i("created")};
  } else if (kind == "ucast") {
    r.kind = RecKind::Ucast;
    r.uid = get_i("uid");
    r.origin = static_cast<int>(get_i("origin"));
    r.dst = static_cast<int>(get_i("dst"));
    r.ready = Time{get_i("ready")};
    r.created = Time{get_i("created")};
  } else if (kind == "state") {
    r.kind = RecKind::State;
    r.fs = *state_from_name(f.at("fs").get<std::string>());
    r.ts = *state_from_name(f.at("ts").get<std::string>());
    r.cond = static_cast<int>(get_i("cond"));
  } else if (kind == "deliver") {
    r.kind = RecKind::Deliver;
    r.frame_kind = f.at("fk").get<std::string>();
    r.tx_seq = static_cast<std::uint64_t>(get_i("tx"));
    r.src = static_cast<int>(get_i("src"));
    std::string oc = f.at("outcome").get<std::string>();
    r.outcome = oc == "ok" ? Outcome::Ok : oc == "dup" ? Outcome::Dup
               : oc == "lost" ? Outcome::Lost : oc == "collided" ? Outcome::Collided
               : Outcome::Partial;
    r.mid = get_i("mid");
    r.uid = get_i("uid");
    r.created = Time{get_i("created")};
    r.tx_start = Time{get_i("s")};
    r.tx_end = Time{get_i("e")};
    r.isolated_path = get_i("iso") != 0;
  } else if (kind == "adjust") {
    r.kind = RecKind::Adjust;
    r.what = f.at("what").get<std::string>();
    r.old_t = Time{get_i("old")};
    r.new_t = Time{get_i("new")};
  } else if (kind == "route") {
    r.kind = RecKind::Route;
    r.mid = get_i("mid");
    r.next_hop = static_cast<int>(get_i("next"));
    r.latency_us = get_i("lat");
  } else if (kind == "genmsg") {
    r.kind = RecKind::GenMsg;
    r.mid = get_i("mid");
    r.created = Time{get_i("created")};
  } else if (kind == "genuni") {
    r.kind = RecKind::GenUni;
    r.uid = get_i("uid");
  } else if (kind == "abort") {
    r.kind = RecKind::Abort;
    r.mid = get_i("mid");
    r.at = Time{get_i("at")};
    for (const auto& v : f.at("recv")) r.receivers.push_back(v.get<int>());
  } else if (kind == "resched") {
    r.kind = RecKind::Resched;
    r.mid = get_i("mid");
    r.old_t = Time{get_i("old")};
    r.new_t = Time{get_i("new")};
  } else if (kind == "prolong") {
    r.kind = RecKind::Prolong;
    r.at = Time{get_i("until")};
  } else if (kind == "purge") {
    r.kind = RecKind::Purge;
    r.count = static_cast<int>(get_i("n"));
  } else {
    throw std::runtime_error("unknown trace record kind: " + kind);
  }
  return r;
}

inline Trace read_trace_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Trace out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(parse_trace_line(line));
  }
  return out;
}

}  // namespace dqsb
