#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "planner/dpftrl.h"
#include "planner/event_log.h"
#include "planner/evidence_chain.h"
#include "planner/planner_enclave.h"
#include "planner/primitives.h"

namespace planner {

enum class ClientBehavior { kHonest, kCorrupted };

// Why a client declined to answer. Each names the server misbehaviour the
// client detected, except kNoResponse (the client is offline).
enum class Refusal {
  kAttestationFailed,
  kWrongChainId,
  kReplayedDigest,
  kPubkeyListMismatch,
  kArgsMismatch,
  kNoResponse,
};

std::string_view refusal_name(Refusal r);

using AuditOutcome = std::variant<Signature, Refusal>;
using SecAggOutcome = std::variant<SecAggMessage, Refusal>;

// What every client knows out of band: the manufacturer key, the planner
// code identity, and the digest of the published public-key list.
struct AuditContext {
  PublicKey manufacturer_pk;
  Digest code_id;
  Digest pubkey_list_digest;
};

// Client side of secure aggregation: encrypts `update` under a fresh key,
// wraps that key with a DH key shared with the enclave, MACs the lot.
SecAggMessage make_secagg_message(ClientId sender, const ModelVector& update,
                                  const SecAggBroadcast& broadcast, PartyRng& rng);

class Client {
 public:
  Client(ClientId index, std::uint64_t master_seed, ClientBehavior behavior, std::size_t d,
         std::size_t points);

  ClientId index() const { return index_; }
  ClientBehavior behavior() const { return behavior_; }
  const PublicKey& public_key() const { return keys_.public_key; }
  const ClientDataset& dataset() const { return data_; }
  const std::optional<Nonce>& evidence_chain_id() const { return chain_id_; }
  const std::set<Digest>& signed_digests() const { return signed_digests_; }
  // How often this client signed an agreement broadcast for `digest`.
  std::size_t signatures_for(const Digest& digest) const;

  AuditOutcome audit(const AuditBroadcast& broadcast, const AuditContext& ctx);
  SecAggOutcome secure_aggregation(const SecAggBroadcast& broadcast, const SecAggArgs& args,
                                   const AuditContext& ctx);

  // Plaintext behind the most recent message. Harness-only.
  const ModelVector& last_update() const { return last_update_; }

 private:
  ClientId index_;
  ClientBehavior behavior_;
  KeyPair keys_;
  ClientDataset data_;
  PartyRng rng_;
  std::optional<Nonce> chain_id_;
  std::set<Digest> signed_digests_;
  std::map<Digest, std::size_t> sign_counts_;
  ModelVector last_update_;
};

// Per-round availability. Round i offers ceil(kappa n) candidates drawn at
// random; ceil(beta kappa n) of those are offline for the whole round.
class DropoutSchedule {
 public:
  DropoutSchedule() = default;
  DropoutSchedule(std::uint64_t master_seed, std::uint32_t n, double kappa, double beta);

  struct Round {
    ClientList candidates;
    std::set<ClientId> dropped;
  };

  const Round& round(RoundIndex i) const;
  bool is_out(ClientId j, RoundIndex i) const { return round(i).dropped.count(j) > 0; }

 private:
  std::uint64_t seed_ = 0;
  std::uint32_t n_ = 0;
  std::uint64_t pool_ = 0;
  std::uint64_t drops_ = 0;
  mutable std::map<RoundIndex, Round> cache_;
};

// Byte counts of control messages seen during a run.
struct MessageSizes {
  std::set<std::size_t> audit_broadcast;
  std::set<std::size_t> secagg_broadcast;
  std::set<std::size_t> client_control;
};

// Everything the server can observe, plus the harness-side taint sources.
struct Transcript {
  std::vector<Bytes> server_visible;
  std::vector<Bytes> honest_plaintexts;

  // True if any honest plaintext update occurs inside a server-visible
  // message.
  bool leaked() const;
};

struct World {
  const TeePlatform* platform = nullptr;
  std::uint64_t master_seed = 0;
  AuditContext ctx;
  std::vector<Client> clients;
  EnclaveConfig enclave_config;
  SealedBlob blob;
  EvidenceChain chain;
  DropoutSchedule dropouts;
  MessageSizes sizes;
  Transcript transcript;
  bool track_taint = false;

  std::uint32_t n() const { return static_cast<std::uint32_t>(clients.size()); }
};

// Honest initialization: every client audits the init broadcast and signs.
// Throws whatever the enclave throws (kInitConsensusIncomplete when an
// honest client refuses).
void initialize_world(World& world, const EnclaveConfig& config);

// Random cohort of up to `size` clients that are in round i's candidate pool
// and qualify for round i given the history on `chain`.
ClientList choose_cohort(const World& world, const EvidenceChain& chain, RoundIndex i,
                         std::uint32_t size, PartyRng& rng);

// What a server asks one update process to do.
struct ProcessPlan {
  EvidenceChain loaded_chain;
  ClientList cohort;
  SecAggArgs args;
  // Pool the enclave draws the next round's auditors from.
  ClientList candidates;
  // Honest servers append emitted evidence to world.chain when it extends
  // the current head.
  bool append = true;
  bool record_participation = false;
  // Enclave is killed after the auditors answered, before agreement.
  bool crash_after_quorum = false;
  // Skip auditing and present these signatures instead.
  std::optional<std::vector<AuditSignature>> replayed_signatures;
};

struct Action {
  enum class Kind { kInvoke, kAudit, kAgree, kSecAgg, kAggregate };
  ProcessId pid = 0;
  Kind kind = Kind::kInvoke;
  ClientId target = 0;
};

// Server-side driver of one planner enclave instance through one round. The
// scheduler fires pending() actions in any order it likes.
class UpdateProcess {
 public:
  enum class Status { kRunning, kCompleted, kAborted };

  UpdateProcess(ProcessId pid, World& world, ProcessPlan plan);

  ProcessId pid() const { return pid_; }
  Status status() const { return status_; }
  RoundIndex round() const { return round_; }
  const ProcessPlan& plan() const { return plan_; }
  const std::string& abort_reason() const { return abort_reason_; }
  const std::optional<AuditBroadcast>& broadcast() const { return broadcast_; }
  const std::vector<AuditSignature>& signatures() const { return signatures_; }
  const std::map<ClientId, Refusal>& refusals() const { return refusals_; }
  const std::vector<SecAggMessage>& messages() const { return messages_; }
  const std::optional<Evidence>& evidence() const { return evidence_; }
  const std::optional<AggregationResult>& result() const { return result_; }
  // Harness-only: plaintext updates of the clients that sent messages.
  const std::map<ClientId, ModelVector>& plaintexts() const { return plaintexts_; }

  std::vector<Action> pending() const;
  void fire(const Action& action, EventLog& log);

 private:
  void abort(EventLog& log, std::string reason);
  void finish(EventLog& log);

  ProcessId pid_;
  World* world_;
  ProcessPlan plan_;
  PlannerEnclave enclave_;
  Status status_ = Status::kRunning;
  bool invoked_ = false;
  bool agreed_ = false;
  RoundIndex round_ = 0;
  std::string abort_reason_;
  std::optional<AuditBroadcast> broadcast_;
  std::optional<SecAggBroadcast> secagg_;
  std::set<ClientId> audits_left_;
  std::set<ClientId> secagg_left_;
  std::vector<AuditSignature> signatures_;
  std::map<ClientId, Refusal> refusals_;
  std::vector<SecAggMessage> messages_;
  std::map<ClientId, ModelVector> plaintexts_;
  std::optional<Evidence> evidence_;
  std::optional<Evidence> participation_;
  std::optional<AggregationResult> result_;
};

std::uint64_t enclave_seed(std::uint64_t master_seed, ProcessId pid);

// Recovery of a crashed process on a fresh instance; logged as its own
// process. Returns the regenerated evidence, appended to world.chain when it
// extends the head.
std::optional<Evidence> run_recovery(World& world, ProcessId pid, const UpdateProcess& crashed,
                                     EventLog& log);

struct RoundOutcome {
  UpdateProcess::Status status = UpdateProcess::Status::kRunning;
  std::string reason;
  std::optional<Evidence> evidence;
  std::optional<ModelVector> output;
};

// One honest round on the current head, actions fired in a seeded order.
RoundOutcome honest_server_round(World& world, ProcessId pid, const ClientList& cohort,
                                 const SecAggArgs& args, EventLog& log);

enum class AdversaryStrategy { kHonest, kFork, kRollback, kReplay, kSybilFlood, kPretendCrash };

std::string_view strategy_name(AdversaryStrategy s);
// Accepts "pretend-crash" and "pretend_crash", "sybil" and "sybil_flood".
// Throws ProtocolError(kConfigInvalid).
AdversaryStrategy strategy_from_name(std::string_view name);

struct AdversaryScript {
  AdversaryStrategy strategy = AdversaryStrategy::kHonest;
  // Round at which the deviation happens.
  RoundIndex attack_round = 1;
  // Concurrent replicas for fork-style attacks.
  std::uint32_t fork_width = 2;
  // Honest-run fault injection: crash the enclave after quorum in this round.
  std::optional<RoundIndex> crash_round;
};

struct AttackReport {
  std::string strategy;
  std::uint64_t processes_attempted = 0;
  std::uint64_t processes_completed = 0;
  std::uint64_t processes_aborted = 0;
  // Largest number of distinct successor evidences completed processes
  // produced from one loaded digest.
  std::uint64_t max_outputs_per_digest = 0;
  std::uint64_t divergent_completions = 0;
  bool bypassed = false;
  std::map<std::string, std::uint64_t> refusals;
  std::map<std::string, std::uint64_t> abort_reasons;
};

}  // namespace planner
