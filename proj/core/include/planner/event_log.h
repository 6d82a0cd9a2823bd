#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "planner/dpftrl.h"
#include "planner/primitives.h"

namespace planner {

using ProcessId = std::uint32_t;

enum class EventKind { kGenesis, kInvoke, kRespond, kAborted };

std::string_view event_kind_name(EventKind kind);

// One line of the log. Which fields are meaningful depends on `event`:
//   genesis: loaded_digest (digest of the init evidence)
//   invoke:  process_kind, cohort, round, args_hash, loaded_digest
//   respond: output (absent for recovery or when aggregation did not finish),
//            output_digest, evidence_digest (last entry the process added)
//   aborted: reason
struct EventRecord {
  std::uint64_t ts = 0;
  EventKind event = EventKind::kGenesis;
  ProcessId pid = 0;
  std::string process_kind = "update";
  ClientList cohort;
  RoundIndex round = 0;
  Digest args_hash;
  Digest loaded_digest;
  std::optional<ModelVector> output;
  std::optional<Digest> output_digest;
  Digest evidence_digest;
  std::string reason;

  bool operator==(const EventRecord&) const = default;
};

Digest output_digest(const ModelVector& output);

// Append-only record of update-process invocations and responses, stamped
// with strictly increasing logical time.
class EventLog {
 public:
  const std::vector<EventRecord>& records() const { return records_; }

  void genesis(const Digest& init_digest);
  void invoke(ProcessId pid, std::string_view process_kind, const ClientList& cohort,
              RoundIndex round, const Digest& args_hash, const Digest& loaded_digest);
  void respond(ProcessId pid, const std::optional<ModelVector>& output,
               const Digest& evidence_digest);
  void aborted(ProcessId pid, std::string_view reason);
  // Appends a record as is, keeping its fields; used to build fixtures.
  void append_raw(EventRecord record);

  // One JSON object per line.
  std::string to_jsonl() const;
  // Throws ProtocolError(kLogMalformed).
  static EventLog from_jsonl(std::string_view text);

  bool operator==(const EventLog&) const = default;

 private:
  std::uint64_t next_ts() { return ++clock_; }

  std::vector<EventRecord> records_;
  std::uint64_t clock_ = 0;
};

}  // namespace planner
