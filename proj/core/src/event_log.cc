#include "planner/event_log.h"

#include <sstream>

#include <nlohmann/json.hpp>

#include "planner/errors.h"

namespace planner {
namespace {

using nlohmann::json;

EventKind kind_from_name(const std::string& name) {
  if (name == "genesis") return EventKind::kGenesis;
  if (name == "invoke") return EventKind::kInvoke;
  if (name == "respond") return EventKind::kRespond;
  if (name == "aborted") return EventKind::kAborted;
  throw std::invalid_argument("unknown event '" + name + "'");
}

json record_json(const EventRecord& r) {
  json j = {{"ts", r.ts}, {"event", std::string(event_kind_name(r.event))}};
  switch (r.event) {
    case EventKind::kGenesis:
      j["digest"] = to_hex(r.loaded_digest);
      break;
    case EventKind::kInvoke:
      j["pid"] = r.pid;
      j["kind"] = r.process_kind;
      j["cohort"] = r.cohort;
      j["round"] = r.round;
      j["args_hash"] = to_hex(r.args_hash);
      j["loaded_digest"] = to_hex(r.loaded_digest);
      break;
    case EventKind::kRespond:
      j["pid"] = r.pid;
      j["output"] = r.output ? json(*r.output) : json(nullptr);
      j["output_digest"] = r.output_digest ? json(to_hex(*r.output_digest)) : json(nullptr);
      j["evidence_digest"] = to_hex(r.evidence_digest);
      break;
    case EventKind::kAborted:
      j["pid"] = r.pid;
      j["reason"] = r.reason;
      break;
  }
  return j;
}

EventRecord parse_record(const json& j) {
  EventRecord r;
  r.ts = j.at("ts").get<std::uint64_t>();
  r.event = kind_from_name(j.at("event").get<std::string>());
  switch (r.event) {
    case EventKind::kGenesis:
      r.loaded_digest = fixed_from_hex<Digest>(j.at("digest").get<std::string>());
      break;
    case EventKind::kInvoke:
      r.pid = j.at("pid").get<ProcessId>();
      r.process_kind = j.at("kind").get<std::string>();
      r.cohort = j.at("cohort").get<ClientList>();
      r.round = j.at("round").get<RoundIndex>();
      r.args_hash = fixed_from_hex<Digest>(j.at("args_hash").get<std::string>());
      r.loaded_digest = fixed_from_hex<Digest>(j.at("loaded_digest").get<std::string>());
      break;
    case EventKind::kRespond:
      r.pid = j.at("pid").get<ProcessId>();
      if (!j.at("output").is_null()) r.output = j.at("output").get<ModelVector>();
      if (!j.at("output_digest").is_null()) {
        r.output_digest = fixed_from_hex<Digest>(j.at("output_digest").get<std::string>());
      }
      r.evidence_digest = fixed_from_hex<Digest>(j.at("evidence_digest").get<std::string>());
      break;
    case EventKind::kAborted:
      r.pid = j.at("pid").get<ProcessId>();
      r.reason = j.at("reason").get<std::string>();
      break;
  }
  return r;
}

}  // namespace

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kGenesis: return "genesis";
    case EventKind::kInvoke: return "invoke";
    case EventKind::kRespond: return "respond";
    case EventKind::kAborted: return "aborted";
  }
  return "unknown";
}

Digest output_digest(const ModelVector& output) {
  CanonicalWriter w;
  w.doubles(output);
  return hash(w.bytes());
}

void EventLog::genesis(const Digest& init_digest) {
  EventRecord r;
  r.ts = next_ts();
  r.event = EventKind::kGenesis;
  r.loaded_digest = init_digest;
  records_.push_back(std::move(r));
}

void EventLog::invoke(ProcessId pid, std::string_view process_kind, const ClientList& cohort,
                      RoundIndex round, const Digest& args_hash, const Digest& loaded_digest) {
  EventRecord r;
  r.ts = next_ts();
  r.event = EventKind::kInvoke;
  r.pid = pid;
  r.process_kind = std::string(process_kind);
  r.cohort = cohort;
  r.round = round;
  r.args_hash = args_hash;
  r.loaded_digest = loaded_digest;
  records_.push_back(std::move(r));
}

void EventLog::respond(ProcessId pid, const std::optional<ModelVector>& output,
                       const Digest& evidence_digest) {
  EventRecord r;
  r.ts = next_ts();
  r.event = EventKind::kRespond;
  r.pid = pid;
  r.output = output;
  if (output) r.output_digest = output_digest(*output);
  r.evidence_digest = evidence_digest;
  records_.push_back(std::move(r));
}

void EventLog::aborted(ProcessId pid, std::string_view reason) {
  EventRecord r;
  r.ts = next_ts();
  r.event = EventKind::kAborted;
  r.pid = pid;
  r.reason = std::string(reason);
  records_.push_back(std::move(r));
}

void EventLog::append_raw(EventRecord record) {
  clock_ = std::max(clock_, record.ts);
  records_.push_back(std::move(record));
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const EventRecord& r : records_) {
    out += record_json(r).dump();
    out += '\n';
  }
  return out;
}

EventLog EventLog::from_jsonl(std::string_view text) {
  EventLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      log.append_raw(parse_record(json::parse(line)));
    } catch (const std::exception& ex) {
      throw ProtocolError(Errc::kLogMalformed,
                          "line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

}  // namespace planner
