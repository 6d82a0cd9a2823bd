#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace planner {

// Every failure the protocol can name. Codes that signal server misbehavior
// are reported by the party that detected it.
enum class Errc {
  // primitives
  kMacFailure,
  kWrongCodeIdentity,
  kSealCorrupted,
  // evidence chain
  kEmptyChain,
  kInvalidChain,
  // dp-ftrl core
  kRoundOutOfRange,
  kSchemaViolation,
  kSingularC,
  // planner enclave
  kBadQuorumParams,
  kInitConsensusIncomplete,
  kBadSignature,
  kTooFewCandidates,
  kWrongChainId,
  kQuorumNotReached,
  kNotAnAuditor,
  kCohortIncomplete,
  kWrongNonce,
  kBadRecoverySignatures,
  kArgsMismatch,
  kWrongPhase,
  kEnclaveCrashed,
  kMalformedUpdate,
  // simulator / analysis / cli
  kConfigInvalid,
  kParamsInvalid,
  kNoFeasibleParams,
  kLogMalformed,
};

std::string_view errc_name(Errc code);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) +
                           (detail.empty() ? "" : ": " + detail)),
        code_(code) {}
  explicit ProtocolError(Errc code) : ProtocolError(code, "") {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace planner
