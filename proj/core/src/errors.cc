#include "planner/errors.h"

namespace planner {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMacFailure: return "MacFailure";
    case Errc::kWrongCodeIdentity: return "WrongCodeIdentity";
    case Errc::kSealCorrupted: return "SealCorrupted";
    case Errc::kEmptyChain: return "EmptyChain";
    case Errc::kInvalidChain: return "InvalidChain";
    case Errc::kRoundOutOfRange: return "RoundOutOfRange";
    case Errc::kSchemaViolation: return "SchemaViolation";
    case Errc::kSingularC: return "SingularC";
    case Errc::kBadQuorumParams: return "BadQuorumParams";
    case Errc::kInitConsensusIncomplete: return "InitConsensusIncomplete";
    case Errc::kBadSignature: return "BadSignature";
    case Errc::kTooFewCandidates: return "TooFewCandidates";
    case Errc::kWrongChainId: return "WrongChainId";
    case Errc::kQuorumNotReached: return "QuorumNotReached";
    case Errc::kNotAnAuditor: return "NotAnAuditor";
    case Errc::kCohortIncomplete: return "CohortIncomplete";
    case Errc::kWrongNonce: return "WrongNonce";
    case Errc::kBadRecoverySignatures: return "BadRecoverySignatures";
    case Errc::kArgsMismatch: return "ArgsMismatch";
    case Errc::kWrongPhase: return "WrongPhase";
    case Errc::kEnclaveCrashed: return "EnclaveCrashed";
    case Errc::kMalformedUpdate: return "MalformedUpdate";
    case Errc::kConfigInvalid: return "ConfigInvalid";
    case Errc::kParamsInvalid: return "ParamsInvalid";
    case Errc::kNoFeasibleParams: return "NoFeasibleParams";
    case Errc::kLogMalformed: return "LogMalformed";
  }
  return "Unknown";
}

}  // namespace planner
