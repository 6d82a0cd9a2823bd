#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "planner/dpftrl.h"
#include "planner/errors.h"
#include "planner/evidence_chain.h"
#include "planner/primitives.h"

namespace planner {

// Settings burned into the sealed state at initialization. Every replica
// inherits them, so the server cannot weaken the quorum mid-run.
struct EnclaveConfig {
  std::uint32_t n_audit = 1;
  std::uint32_t tau = 1;
  std::uint32_t min_candidates = 1;  // ceil(n * kappa)
  ParticipationSchema schema = ParticipationSchema::once(1);
  std::uint32_t d = 1;
  double zeta = 1.0;
  double sigma = 1.0;
  StrategyMatrix strategy = StrategyMatrix::identity(1);
  std::uint32_t overselect_margin = 0;

  bool operator==(const EnclaveConfig&) const = default;
};

// Round arguments for secure aggregation: the model to differentiate at and
// the shape the enclave expects.
struct SecAggArgs {
  ModelVector theta;
  std::uint32_t d = 0;
  double zeta = 0.0;

  Bytes canonical() const;
  bool operator==(const SecAggArgs&) const = default;
};

Digest args_hash(const SecAggArgs& args);
// H(cohort || args), the value auditors see for a transition.
Digest inputs_hash(const ClientList& cohort, const SecAggArgs& args);
Digest pubkey_list_digest(const std::vector<PublicKey>& pubkeys);

enum class BroadcastKind { kInit, kAgreement };

// What an enclave sends to auditors. For kInit `digest` is the public-key
// list digest; for kAgreement it is the digest of the loaded chain and
// `encrypted_next` holds C_next under the recovery key.
struct AuditBroadcast {
  BroadcastKind kind = BroadcastKind::kInit;
  Nonce thread_nonce;
  Nonce chain_id;
  Digest digest;
  Digest inputs_hash;
  AeadBox encrypted_next;
  Quote quote;

  Bytes payload() const;
  std::size_t wire_size() const;
};

// Sent to the cohort once agreement is reached. Carries the hash of the
// round arguments rather than the model itself; the model travels with the
// server's round announcement and clients check it against this hash.
struct SecAggBroadcast {
  Nonce thread_nonce;
  Nonce chain_id;
  RoundIndex round_index = 0;
  Digest args_hash;
  PublicKey ec_pub_key;
  Quote quote;

  Bytes payload() const;
  std::size_t wire_size() const;
};

struct SecAggMessage {
  ClientId sender = 0;
  AeadBox encrypted_update;
  AeadBox encrypted_decryption_key;
  PublicKey ec_pub_key;
  Mac mac;
  Nonce thread_nonce;

  // Everything the MAC covers.
  Bytes mac_input() const;
  // Byte length without the encrypted update payload.
  std::size_t control_size() const;
};

struct AuditSignature {
  ClientId signer = 0;
  Signature signature;
};

struct InitResult {
  SealedBlob blob;
  Evidence evidence;
};

struct AggregationResult {
  ModelVector output;
  ClientList participants;
  std::vector<std::pair<ClientId, Errc>> rejected;
};

enum class EnclavePhase {
  kCreated,
  kAwaitingInitConsensus,
  kSealedReady,
  kLoaded,
  kAwaitingAgreement,
  kAgreed,
  kAggregating,
  kDone,
  kCrashed,
};

std::string_view enclave_phase_name(EnclavePhase phase);

// Uniform n_audit-subset of the distinct candidates, returned sorted.
// Throws ProtocolError(kTooFewCandidates) when fewer than min_candidates
// (or n_audit) distinct candidates are offered.
ClientList f_select(const ClientList& candidates, std::uint32_t n_audit,
                    std::uint32_t min_candidates, PartyRng& rng);

// One simulated planner enclave instance. Instances never share state; the
// server drives each through either the init path (init, finish_init), the
// round path (replicate, collect_agreement, secagg_broadcast,
// secure_aggregate) or recover.
class PlannerEnclave {
 public:
  PlannerEnclave(const TeePlatform& platform, std::uint64_t instance_seed);

  EnclavePhase phase() const { return phase_; }

  // Throws ProtocolError(kBadQuorumParams) unless n_audit/2 < tau <= n_audit,
  // (kConfigInvalid) on inconsistent settings.
  AuditBroadcast init(const std::vector<PublicKey>& pubkeys,
                      const ClientList& args_selection,
                      const EnclaveConfig& config);
  // Needs a valid signature over the init nonce from every client.
  // Throws kInitConsensusIncomplete, kBadSignature, kTooFewCandidates.
  InitResult finish_init(const std::vector<AuditSignature>& signatures);

  // Throws kInvalidChain, kWrongChainId, kRoundOutOfRange, kSchemaViolation,
  // kArgsMismatch, kTooFewCandidates, kWrongCodeIdentity, kSealCorrupted.
  AuditBroadcast replicate(const SealedBlob& blob, const EvidenceChain& chain,
                           const ClientList& cohort, const SecAggArgs& args,
                           const ClientList& candidates);
  // Invalid, duplicate and non-auditor signatures are ignored. Throws
  // kQuorumNotReached when fewer than tau distinct auditors remain.
  Evidence collect_agreement(const std::vector<AuditSignature>& signatures);
  SecAggBroadcast secagg_broadcast() const;
  // Rejected messages count as dropouts. Throws kCohortIncomplete when more
  // than overselect_margin cohort members are missing.
  AggregationResult secure_aggregate(const std::vector<SecAggMessage>& messages);
  // Records who actually contributed to the round just aggregated.
  Evidence participation_evidence() const;

  // Rebuilds the update evidence a crashed instance would have emitted after
  // reaching quorum on `crashed`. Throws kBadRecoverySignatures,
  // kWrongChainId, kInvalidChain, kArgsMismatch.
  Evidence recover(const SealedBlob& blob, const EvidenceChain& chain,
                   const ClientList& cohort, const SecAggArgs& args,
                   const AuditBroadcast& crashed,
                   const std::vector<AuditSignature>& signatures);

  // Every later call throws ProtocolError(kEnclaveCrashed).
  void crash() { phase_ = EnclavePhase::kCrashed; }

  struct Sealed {
    Nonce chain_id;
    std::uint64_t noise_seed = 0;
    SymmetricKey recovery_key;
    std::vector<PublicKey> pubkeys;
    EnclaveConfig config;
  };

 private:
  void require(EnclavePhase expected, std::string_view op) const;
  void load(const SealedBlob& blob, const EvidenceChain& chain);
  Evidence attested(Evidence e) const;
  Evidence update_evidence(const ClientList& auditors_next) const;

  const TeePlatform* platform_;
  PartyRng rng_;
  EnclavePhase phase_ = EnclavePhase::kCreated;

  Sealed sealed_;
  ClientList args_selection_;
  Nonce thread_nonce_;
  EvidenceChain chain_;
  Digest loaded_digest_;
  RoundIndex round_ = 0;
  ClientList cohort_;
  SecAggArgs args_;
  ClientList chosen_auditors_;
  ClientList next_auditors_;
  KeyPair ec_key_;
  std::optional<Evidence> emitted_;
  ClientList participants_;
};

// Test-harness hook standing in for the simulator's view of the hardware:
// decodes a sealed blob. Never reachable from a server actor.
PlannerEnclave::Sealed inspect_sealed_state(const TeePlatform& platform,
                                            const SealedBlob& blob);

}  // namespace planner
