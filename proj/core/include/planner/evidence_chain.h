#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "planner/dpftrl.h"
#include "planner/primitives.h"

namespace planner {

enum class EvidenceKind { kInit, kUpdate, kRecovery, kParticipation };

std::string_view evidence_kind_name(EvidenceKind kind);
// Throws ProtocolError(kInvalidChain) on an unknown name.
EvidenceKind evidence_kind_from_name(std::string_view name);

// One enclave-attested block. `quote` covers payload(), i.e. every field
// above it. Participation entries record the clients that actually delivered
// an update for the preceding round (in `cohort`) and carry that round's
// index and auditors unchanged.
struct Evidence {
  Nonce chain_id;
  std::optional<Digest> prev_digest;
  EvidenceKind kind = EvidenceKind::kInit;
  ClientList auditors_next;
  ClientList cohort;
  std::optional<RoundIndex> round_index;
  Digest args_secagg_hash;
  std::optional<Digest> pubkey_list_digest;
  Quote quote;

  Bytes payload() const;
  // payload() followed by the quote's code id and signature.
  Bytes canonical() const;

  bool operator==(const Evidence&) const = default;
};

Digest evidence_digest(const Evidence& e);

class EvidenceChain {
 public:
  EvidenceChain() = default;
  explicit EvidenceChain(std::vector<Evidence> entries)
      : entries_(std::move(entries)) {}

  const std::vector<Evidence>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Evidence& back() const { return entries_.back(); }

  EvidenceChain appended(Evidence e) const;
  EvidenceChain prefix(std::size_t count) const;

  bool operator==(const EvidenceChain&) const = default;

 private:
  std::vector<Evidence> entries_;
};

// Throws ProtocolError(kEmptyChain).
Digest chain_digest(const EvidenceChain& chain);

enum class ChainFault {
  kNone,
  kEmptyChain,
  kBrokenLink,
  kBadQuote,
  kMixedChainId,
  kBadRoundIndex,
};

std::string_view chain_fault_name(ChainFault fault);

struct ChainVerdict {
  ChainFault fault = ChainFault::kNone;
  std::size_t index = 0;  // first offending entry

  bool ok() const { return fault == ChainFault::kNone; }
  explicit operator bool() const { return ok(); }
};

// Checks hash links, a uniform chain id, sequential round indices and the
// latest entry's quote. Earlier quotes are kept but not checked.
ChainVerdict verify_chain(const EvidenceChain& chain,
                          const PublicKey& manufacturer_pk,
                          const Digest& code_id);

// Index the next update or recovery entry must carry.
RoundIndex next_round_index(const EvidenceChain& chain);

// Throw ProtocolError(kInvalidChain) on an empty or ill-formed chain.
ClientList latest_auditors(const EvidenceChain& chain);
ParticipationHistory derive_history(const EvidenceChain& chain,
                                    std::size_t n_clients);

// JSON array of entries, bytes hex-encoded. Parsing throws
// ProtocolError(kInvalidChain) on malformed input.
std::string chain_to_json(const EvidenceChain& chain, int indent = 2);
EvidenceChain chain_from_json(std::string_view text);
std::string evidence_to_json(const Evidence& e);
Evidence evidence_from_json(std::string_view text);

}  // namespace planner
