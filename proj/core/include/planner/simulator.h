#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "planner/actors.h"
#include "planner/dpftrl.h"
#include "planner/event_log.h"
#include "planner/evidence_chain.h"

namespace planner {

struct WorldConfig {
  std::uint32_t n = 20;
  double gamma = 0.0;
  double kappa = 1.0;
  double beta = 0.0;
  std::uint32_t n_round = 5;
  // Number of rounds the server attempts; 0 means n_round.
  std::uint32_t rounds = 0;
  std::uint32_t n_audit = 5;
  std::uint32_t tau = 3;
  std::uint32_t d = 4;
  double sigma = 1.0;
  double zeta = 1.0;
  ParticipationSchema schema = ParticipationSchema::once(5);
  // "identity" | "prefix" | "sqrt_prefix" | CSV path.
  std::string strategy_matrix = "identity";
  std::uint32_t cohort_size = 3;
  std::uint32_t overselect_margin = 0;
  std::uint32_t points_per_client = 4;
  double learning_rate = 0.1;
  bool record_participation = false;
  bool track_taint = true;
  std::uint64_t master_seed = 1;
  AdversaryScript adversary;

  std::uint32_t attempted_rounds() const { return rounds ? rounds : n_round; }
};

// Throws ProtocolError(kConfigInvalid) on unknown keys, bad types or
// inconsistent values.
WorldConfig world_config_from_json(std::string_view text);
std::string world_config_to_json(const WorldConfig& config);
void validate(const WorldConfig& config);

// The ceil(gamma n) clients the adversary controls, sorted.
ClientList corrupted_clients(const WorldConfig& config);

// What the harness knows beyond the server's view: seeds and the plaintext
// updates behind every completed aggregation.
struct Witness {
  struct Process {
    ProcessId pid = 0;
    RoundIndex round = 0;
    ModelVector theta;
    ClientList participants;
    std::vector<ModelVector> updates;  // aligned with participants
  };

  std::uint32_t n = 0;
  PublicKey manufacturer_pk;
  std::uint64_t noise_seed = 0;
  double sigma = 1.0;
  double zeta = 1.0;
  std::uint32_t d = 1;
  ParticipationSchema schema;
  std::vector<std::vector<double>> strategy;
  std::vector<Process> processes;

  std::string to_json() const;
  // Throws ProtocolError(kLogMalformed).
  static Witness from_json(std::string_view text);
};

struct RoundOutput {
  ProcessId pid = 0;
  RoundIndex round = 0;
  ModelVector output;
};

struct SafetyReport {
  bool linearizable = true;
  bool integrity = true;
  bool no_taint_leak = true;
  bool honest_sign_once = true;
  std::vector<std::string> violations;

  bool ok() const { return linearizable && integrity && no_taint_leak && honest_sign_once; }
};

struct RunResult {
  EventLog log;
  EvidenceChain chain;
  std::vector<RoundOutput> outputs;
  AttackReport report;
  Witness witness;
  MessageSizes sizes;
  SafetyReport safety;
  std::uint32_t rounds_completed = 0;
  std::uint32_t rounds_aborted = 0;
  std::uint32_t rounds_without_output = 0;
  std::uint32_t recoveries = 0;
};

// Deterministic in config (including master_seed): the scheduler picks the
// next deliverable action with a seeded generator.
RunResult run(const WorldConfig& config);

std::string summary_json(const RunResult& result, int indent = 2);

// Summarises completed processes of a log. Exposed for the CLI's attack
// aggregation.
AttackReport attack_report_from_log(const EventLog& log, std::string_view strategy);

struct LinearizabilityResult {
  bool linearizable = false;
  std::vector<ProcessId> order;  // witness when linearizable
  std::string reason;
};

// Searches for a total order of the completed processes that respects
// real-time precedence and replays digest by digest from the genesis
// record, with rounds counting up from 0. Completed processes with equal
// (loaded, emitted) digests are one transition. Throws
// ProtocolError(kLogMalformed).
LinearizabilityResult check_linearizable(const EventLog& log);

struct IntegrityResult {
  bool ok = true;
  std::vector<std::string> violations;
};

// Checks the chain against the schema round by round and recomputes every
// completed output from the witness. Throws ProtocolError(kLogMalformed).
IntegrityResult check_integrity(const EventLog& log, const EvidenceChain& chain,
                                const Witness& witness);

// Reference model: a trusted party holding all data.
struct IdealConfig {
  ParticipationSchema schema;
  StrategyMatrix strategy = StrategyMatrix::identity(1);
  double sigma = 1.0;
  double zeta = 1.0;
  std::uint32_t d = 1;
  std::uint64_t noise_seed = 0;
  std::vector<ClientDataset> datasets;
  std::set<ClientId> corrupted;
};

struct IdealQuery {
  ClientList cohort;
  RoundIndex k = 0;
  ModelVector theta;
  std::map<ClientId, ModelVector> corrupted_updates;
};

// One entry per query; empty where the query was invalid and the trusted
// party re-prompted without touching its state.
std::vector<std::optional<ModelVector>> ideal_oracle(const IdealConfig& config,
                                                     const std::vector<IdealQuery>& script);

// Builds the ideal-world inputs matching a finished run.
IdealConfig ideal_config_for(const WorldConfig& config, const Witness& witness);
std::vector<IdealQuery> ideal_script_for(const WorldConfig& config, const Witness& witness);

}  // namespace planner
