#include "planner/planner_enclave.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace planner {
namespace {

using nlohmann::json;

constexpr std::size_t kQuoteTrailer = 4 + Digest::kSize + 4 + Signature::kSize;

std::string_view broadcast_kind_name(BroadcastKind kind) {
  return kind == BroadcastKind::kInit ? "init" : "agreement";
}

Bytes encode_sealed(const PlannerEnclave::Sealed& s) {
  const EnclaveConfig& c = s.config;
  json keys = json::array();
  for (const PublicKey& pk : s.pubkeys) keys.push_back(to_hex(pk));
  json j = {
      {"chain_id", to_hex(s.chain_id)},
      {"noise_seed", s.noise_seed},
      {"recovery_key", to_hex(s.recovery_key)},
      {"pubkeys", keys},
      {"n_audit", c.n_audit},
      {"tau", c.tau},
      {"min_candidates", c.min_candidates},
      {"schema_once", c.schema.kind == ParticipationSchema::Kind::kOnce},
      {"schema_b", c.schema.b},
      {"n_round", c.schema.n_round},
      {"d", c.d},
      {"zeta", c.zeta},
      {"sigma", c.sigma},
      {"strategy", c.strategy.rows()},
      {"overselect_margin", c.overselect_margin},
  };
  return to_bytes(j.dump());
}

PlannerEnclave::Sealed decode_sealed(const Bytes& raw) {
  json j = json::parse(raw.begin(), raw.end());
  PlannerEnclave::Sealed s;
  s.chain_id = fixed_from_hex<Nonce>(j.at("chain_id").get<std::string>());
  s.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  s.recovery_key = fixed_from_hex<SymmetricKey>(j.at("recovery_key").get<std::string>());
  for (const json& k : j.at("pubkeys")) {
    s.pubkeys.push_back(fixed_from_hex<PublicKey>(k.get<std::string>()));
  }
  EnclaveConfig& c = s.config;
  c.n_audit = j.at("n_audit").get<std::uint32_t>();
  c.tau = j.at("tau").get<std::uint32_t>();
  c.min_candidates = j.at("min_candidates").get<std::uint32_t>();
  auto n_round = j.at("n_round").get<std::uint32_t>();
  c.schema = j.at("schema_once").get<bool>()
                 ? ParticipationSchema::once(n_round)
                 : ParticipationSchema::min_separation(j.at("schema_b").get<std::uint32_t>(),
                                                       n_round);
  c.d = j.at("d").get<std::uint32_t>();
  c.zeta = j.at("zeta").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.strategy = StrategyMatrix(j.at("strategy").get<std::vector<std::vector<double>>>());
  c.overselect_margin = j.at("overselect_margin").get<std::uint32_t>();
  return s;
}

std::size_t count_quorum(const std::vector<AuditSignature>& signatures,
                         const ClientList& auditors, const Nonce& nonce,
                         const std::vector<PublicKey>& pubkeys) {
  std::set<ClientId> eligible(auditors.begin(), auditors.end());
  std::set<ClientId> valid;
  for (const AuditSignature& s : signatures) {
    if (!eligible.count(s.signer) || s.signer >= pubkeys.size()) continue;
    if (verify(pubkeys[s.signer], nonce.view(), s.signature)) valid.insert(s.signer);
  }
  return valid.size();
}

}  // namespace

Bytes SecAggArgs::canonical() const {
  CanonicalWriter w;
  w.doubles(theta).u64(d).f64(zeta);
  return std::move(w).bytes();
}

Digest args_hash(const SecAggArgs& args) { return hash(args.canonical()); }

Digest inputs_hash(const ClientList& cohort, const SecAggArgs& args) {
  CanonicalWriter w;
  w.indices(cohort).field(args.canonical());
  return hash(w.bytes());
}

Digest pubkey_list_digest(const std::vector<PublicKey>& pubkeys) {
  CanonicalWriter w;
  for (const PublicKey& pk : pubkeys) w.field(pk);
  return hash(w.bytes());
}

Bytes AuditBroadcast::payload() const {
  CanonicalWriter w;
  w.field(broadcast_kind_name(kind))
      .field(thread_nonce)
      .field(chain_id)
      .field(digest)
      .field(inputs_hash)
      .field(encrypted_next.ciphertext)
      .field(encrypted_next.mac);
  return std::move(w).bytes();
}

std::size_t AuditBroadcast::wire_size() const { return payload().size() + kQuoteTrailer; }

Bytes SecAggBroadcast::payload() const {
  CanonicalWriter w;
  w.field(thread_nonce).field(chain_id).u64(round_index).field(args_hash).field(ec_pub_key);
  return std::move(w).bytes();
}

std::size_t SecAggBroadcast::wire_size() const { return payload().size() + kQuoteTrailer; }

Bytes SecAggMessage::mac_input() const {
  CanonicalWriter w;
  w.u64(sender)
      .field(encrypted_update.ciphertext)
      .field(encrypted_update.mac)
      .field(encrypted_decryption_key.ciphertext)
      .field(encrypted_decryption_key.mac)
      .field(ec_pub_key)
      .field(thread_nonce);
  return std::move(w).bytes();
}

std::size_t SecAggMessage::control_size() const {
  return mac_input().size() - encrypted_update.ciphertext.size() + 4 + Mac::kSize;
}

std::string_view enclave_phase_name(EnclavePhase phase) {
  switch (phase) {
    case EnclavePhase::kCreated: return "created";
    case EnclavePhase::kAwaitingInitConsensus: return "awaiting_init_consensus";
    case EnclavePhase::kSealedReady: return "sealed_ready";
    case EnclavePhase::kLoaded: return "loaded";
    case EnclavePhase::kAwaitingAgreement: return "awaiting_agreement";
    case EnclavePhase::kAgreed: return "agreed";
    case EnclavePhase::kAggregating: return "aggregating";
    case EnclavePhase::kDone: return "done";
    case EnclavePhase::kCrashed: return "crashed";
  }
  return "unknown";
}

ClientList f_select(const ClientList& candidates, std::uint32_t n_audit,
                    std::uint32_t min_candidates, PartyRng& rng) {
  std::set<ClientId> distinct(candidates.begin(), candidates.end());
  if (distinct.size() < min_candidates || distinct.size() < n_audit) {
    throw ProtocolError(Errc::kTooFewCandidates,
                        std::to_string(distinct.size()) + " candidates, need " +
                            std::to_string(std::max(min_candidates, n_audit)));
  }
  ClientList out;
  out.reserve(n_audit);
  std::sample(distinct.begin(), distinct.end(), std::back_inserter(out), n_audit, rng);
  return out;
}

PlannerEnclave::PlannerEnclave(const TeePlatform& platform, std::uint64_t instance_seed)
    : platform_(&platform), rng_(instance_seed, "enclave") {}

void PlannerEnclave::require(EnclavePhase expected, std::string_view op) const {
  if (phase_ == EnclavePhase::kCrashed) throw ProtocolError(Errc::kEnclaveCrashed);
  if (phase_ != expected) {
    throw ProtocolError(Errc::kWrongPhase, std::string(op) + " in phase " +
                                               std::string(enclave_phase_name(phase_)));
  }
}

Evidence PlannerEnclave::attested(Evidence e) const {
  e.quote = platform_->attest(planner_code_id(), e.payload());
  return e;
}

AuditBroadcast PlannerEnclave::init(const std::vector<PublicKey>& pubkeys,
                                    const ClientList& args_selection,
                                    const EnclaveConfig& config) {
  require(EnclavePhase::kCreated, "init");
  if (config.n_audit == 0 || 2ull * config.tau <= config.n_audit ||
      config.tau > config.n_audit) {
    throw ProtocolError(Errc::kBadQuorumParams,
                        "tau=" + std::to_string(config.tau) +
                            " n_audit=" + std::to_string(config.n_audit));
  }
  if (pubkeys.empty() || args_selection.empty() || config.d == 0 ||
      !(config.zeta > 0.0) || !(config.sigma > 0.0) ||
      config.strategy.size() != config.schema.n_round) {
    throw ProtocolError(Errc::kConfigInvalid, "inconsistent enclave configuration");
  }
  sealed_.pubkeys = pubkeys;
  sealed_.config = config;
  sealed_.chain_id = rng_.nonce();
  sealed_.noise_seed = rng_.seed();
  sealed_.recovery_key = rng_.symmetric_key();
  args_selection_ = args_selection;
  thread_nonce_ = rng_.nonce();

  AuditBroadcast b;
  b.kind = BroadcastKind::kInit;
  b.thread_nonce = thread_nonce_;
  b.chain_id = sealed_.chain_id;
  b.digest = pubkey_list_digest(pubkeys);
  b.quote = platform_->attest(planner_code_id(), b.payload());
  phase_ = EnclavePhase::kAwaitingInitConsensus;
  return b;
}

InitResult PlannerEnclave::finish_init(const std::vector<AuditSignature>& signatures) {
  require(EnclavePhase::kAwaitingInitConsensus, "finish_init");
  const auto& keys = sealed_.pubkeys;
  std::set<ClientId> signed_by;
  for (const AuditSignature& s : signatures) {
    if (s.signer >= keys.size() ||
        !verify(keys[s.signer], thread_nonce_.view(), s.signature)) {
      throw ProtocolError(Errc::kBadSignature,
                          "init signature from client " + std::to_string(s.signer));
    }
    signed_by.insert(s.signer);
  }
  if (signed_by.size() < keys.size()) {
    std::string missing;
    std::size_t listed = 0;
    for (ClientId j = 0; j < keys.size() && listed < 16; ++j) {
      if (signed_by.count(j)) continue;
      missing += (listed++ ? "," : "") + std::to_string(j);
    }
    if (keys.size() - signed_by.size() > listed) missing += ",...";
    throw ProtocolError(Errc::kInitConsensusIncomplete, "missing signers " + missing);
  }

  const EnclaveConfig& c = sealed_.config;
  Evidence e;
  e.chain_id = sealed_.chain_id;
  e.kind = EvidenceKind::kInit;
  e.auditors_next = f_select(args_selection_, c.n_audit, c.min_candidates, rng_);
  e.pubkey_list_digest = pubkey_list_digest(keys);

  InitResult out{platform_->seal(planner_code_id(), encode_sealed(sealed_)), attested(std::move(e))};
  phase_ = EnclavePhase::kSealedReady;
  return out;
}

void PlannerEnclave::load(const SealedBlob& blob, const EvidenceChain& chain) {
  Bytes raw = platform_->unseal(planner_code_id(), blob);
  try {
    sealed_ = decode_sealed(raw);
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ProtocolError(Errc::kSealCorrupted, ex.what());
  }
  ChainVerdict verdict =
      verify_chain(chain, platform_->manufacturer_public_key(), planner_code_id());
  if (!verdict) {
    throw ProtocolError(Errc::kInvalidChain, std::string(chain_fault_name(verdict.fault)) +
                                                 " at entry " + std::to_string(verdict.index));
  }
  if (chain.entries().front().chain_id != sealed_.chain_id) {
    throw ProtocolError(Errc::kWrongChainId);
  }
  if (chain.entries().front().pubkey_list_digest != pubkey_list_digest(sealed_.pubkeys)) {
    throw ProtocolError(Errc::kInvalidChain, "public key list digest differs");
  }
  chain_ = chain;
  loaded_digest_ = chain_digest(chain);
  round_ = next_round_index(chain);
}

AuditBroadcast PlannerEnclave::replicate(const SealedBlob& blob, const EvidenceChain& chain,
                                         const ClientList& cohort, const SecAggArgs& args,
                                         const ClientList& candidates) {
  require(EnclavePhase::kCreated, "replicate");
  load(blob, chain);
  phase_ = EnclavePhase::kLoaded;
  const EnclaveConfig& c = sealed_.config;
  if (round_ >= c.schema.n_round) {
    throw ProtocolError(Errc::kRoundOutOfRange,
                        "round " + std::to_string(round_) + " of " +
                            std::to_string(c.schema.n_round));
  }
  bool finite = std::all_of(args.theta.begin(), args.theta.end(),
                            [](double v) { return std::isfinite(v); });
  if (args.d != c.d || args.zeta != c.zeta || args.theta.size() != c.d || !finite) {
    throw ProtocolError(Errc::kArgsMismatch, "round arguments do not match the sealed shape");
  }
  std::set<ClientId> unique(cohort.begin(), cohort.end());
  if (unique.size() != cohort.size()) {
    throw ProtocolError(Errc::kSchemaViolation, "cohort lists a client twice");
  }
  update_history(c.schema, derive_history(chain, sealed_.pubkeys.size()), cohort, round_);

  ClientList pool;
  for (ClientId j : candidates) {
    if (j < sealed_.pubkeys.size()) pool.push_back(j);
  }
  cohort_ = ClientList(unique.begin(), unique.end());
  args_ = args;
  chosen_auditors_ = latest_auditors(chain);
  next_auditors_ = f_select(pool, c.n_audit, c.min_candidates, rng_);
  thread_nonce_ = rng_.nonce();
  ec_key_ = keygen(rng_.seed());

  AuditBroadcast b;
  b.kind = BroadcastKind::kAgreement;
  b.thread_nonce = thread_nonce_;
  b.chain_id = sealed_.chain_id;
  b.digest = loaded_digest_;
  b.inputs_hash = inputs_hash(cohort_, args_);
  CanonicalWriter next;
  next.indices(next_auditors_);
  b.encrypted_next = aead_encrypt(sealed_.recovery_key, thread_nonce_, next.bytes());
  b.quote = platform_->attest(planner_code_id(), b.payload());
  phase_ = EnclavePhase::kAwaitingAgreement;
  return b;
}

Evidence PlannerEnclave::update_evidence(const ClientList& auditors_next) const {
  Evidence e;
  e.chain_id = sealed_.chain_id;
  e.prev_digest = loaded_digest_;
  e.kind = EvidenceKind::kUpdate;
  e.auditors_next = auditors_next;
  e.cohort = cohort_;
  e.round_index = round_;
  e.args_secagg_hash = args_hash(args_);
  return attested(std::move(e));
}

Evidence PlannerEnclave::collect_agreement(const std::vector<AuditSignature>& signatures) {
  require(EnclavePhase::kAwaitingAgreement, "collect_agreement");
  std::size_t valid =
      count_quorum(signatures, chosen_auditors_, thread_nonce_, sealed_.pubkeys);
  if (valid < sealed_.config.tau) {
    throw ProtocolError(Errc::kQuorumNotReached,
                        std::to_string(valid) + " valid of " +
                            std::to_string(sealed_.config.tau) + " required");
  }
  emitted_ = update_evidence(next_auditors_);
  phase_ = EnclavePhase::kAgreed;
  return *emitted_;
}

SecAggBroadcast PlannerEnclave::secagg_broadcast() const {
  require(EnclavePhase::kAgreed, "secagg_broadcast");
  SecAggBroadcast b;
  b.thread_nonce = thread_nonce_;
  b.chain_id = sealed_.chain_id;
  b.round_index = round_;
  b.args_hash = args_hash(args_);
  b.ec_pub_key = ec_key_.public_key;
  b.quote = platform_->attest(planner_code_id(), b.payload());
  return b;
}

AggregationResult PlannerEnclave::secure_aggregate(const std::vector<SecAggMessage>& messages) {
  require(EnclavePhase::kAgreed, "secure_aggregate");
  phase_ = EnclavePhase::kAggregating;
  const EnclaveConfig& c = sealed_.config;
  std::set<ClientId> expected(cohort_.begin(), cohort_.end());
  std::set<ClientId> accepted;
  AggregationResult out;
  out.output.assign(c.d, 0.0);

  for (const SecAggMessage& m : messages) {
    if (!expected.count(m.sender) || accepted.count(m.sender)) {
      out.rejected.emplace_back(m.sender, Errc::kMalformedUpdate);
      continue;
    }
    if (m.thread_nonce != thread_nonce_) {
      out.rejected.emplace_back(m.sender, Errc::kWrongNonce);
      continue;
    }
    try {
      SymmetricKey shared = dh_shared(ec_key_.secret_key, m.ec_pub_key);
      if (!mac_verify(shared, m.mac_input(), m.mac)) {
        throw ProtocolError(Errc::kMacFailure);
      }
      Bytes key_raw = aead_decrypt(shared, thread_nonce_, m.encrypted_decryption_key.ciphertext,
                                   m.encrypted_decryption_key.mac);
      if (key_raw.size() != SymmetricKey::kSize) throw ProtocolError(Errc::kMalformedUpdate);
      SymmetricKey update_key;
      std::copy(key_raw.begin(), key_raw.end(), update_key.bytes.begin());
      Bytes plain = aead_decrypt(update_key, thread_nonce_, m.encrypted_update.ciphertext,
                                 m.encrypted_update.mac);
      CanonicalReader r(plain);
      ModelVector update = r.doubles();
      bool finite = std::all_of(update.begin(), update.end(),
                                [](double v) { return std::isfinite(v); });
      if (!r.done() || update.size() != c.d || !finite) {
        throw ProtocolError(Errc::kMalformedUpdate);
      }
      update = clip(update, c.zeta);
      for (std::size_t k = 0; k < c.d; ++k) out.output[k] += update[k];
      accepted.insert(m.sender);
    } catch (const ProtocolError& err) {
      out.rejected.emplace_back(m.sender, err.code());
    } catch (const std::out_of_range&) {
      out.rejected.emplace_back(m.sender, Errc::kMalformedUpdate);
    }
  }

  std::size_t required =
      cohort_.size() > c.overselect_margin ? cohort_.size() - c.overselect_margin : 0;
  if (accepted.size() < required) {
    phase_ = EnclavePhase::kDone;
    throw ProtocolError(Errc::kCohortIncomplete,
                        std::to_string(accepted.size()) + " of " +
                            std::to_string(required) + " required updates");
  }
  NoiseMatrix z(sealed_.noise_seed, c.sigma, c.d);
  ModelVector noise = correlated_noise(z, c.strategy, round_, c.zeta);
  for (std::size_t k = 0; k < c.d; ++k) out.output[k] += noise[k];
  out.participants.assign(accepted.begin(), accepted.end());
  participants_ = out.participants;
  phase_ = EnclavePhase::kDone;
  return out;
}

Evidence PlannerEnclave::participation_evidence() const {
  require(EnclavePhase::kDone, "participation_evidence");
  if (!emitted_) throw ProtocolError(Errc::kWrongPhase, "no update evidence emitted");
  Evidence e;
  e.chain_id = sealed_.chain_id;
  e.prev_digest = evidence_digest(*emitted_);
  e.kind = EvidenceKind::kParticipation;
  e.auditors_next = next_auditors_;
  e.cohort = participants_;
  e.round_index = round_;
  e.args_secagg_hash = args_hash(args_);
  return attested(std::move(e));
}

Evidence PlannerEnclave::recover(const SealedBlob& blob, const EvidenceChain& chain,
                                 const ClientList& cohort, const SecAggArgs& args,
                                 const AuditBroadcast& crashed,
                                 const std::vector<AuditSignature>& signatures) {
  require(EnclavePhase::kCreated, "recover");
  load(blob, chain);
  if (crashed.chain_id != sealed_.chain_id) throw ProtocolError(Errc::kWrongChainId);
  if (crashed.kind != BroadcastKind::kAgreement || crashed.quote.payload != crashed.payload() ||
      !verify_quote(crashed.quote, planner_code_id(), platform_->manufacturer_public_key())) {
    throw ProtocolError(Errc::kBadRecoverySignatures, "broadcast is not enclave-attested");
  }
  if (crashed.digest != loaded_digest_) {
    throw ProtocolError(Errc::kInvalidChain, "broadcast does not extend this chain");
  }
  std::set<ClientId> unique(cohort.begin(), cohort.end());
  cohort_ = ClientList(unique.begin(), unique.end());
  if (inputs_hash(cohort_, args) != crashed.inputs_hash) {
    throw ProtocolError(Errc::kArgsMismatch, "cohort or arguments differ from the broadcast");
  }
  std::size_t valid =
      count_quorum(signatures, latest_auditors(chain), crashed.thread_nonce, sealed_.pubkeys);
  if (valid < sealed_.config.tau) {
    throw ProtocolError(Errc::kBadRecoverySignatures,
                        std::to_string(valid) + " valid of " +
                            std::to_string(sealed_.config.tau) + " required");
  }
  Bytes next_raw = aead_decrypt(sealed_.recovery_key, crashed.thread_nonce,
                                crashed.encrypted_next.ciphertext, crashed.encrypted_next.mac);
  CanonicalReader r(next_raw);
  ClientList next = r.indices();
  args_ = args;
  Evidence e = update_evidence(next);
  phase_ = EnclavePhase::kDone;
  return e;
}

PlannerEnclave::Sealed inspect_sealed_state(const TeePlatform& platform, const SealedBlob& blob) {
  return decode_sealed(platform.unseal(planner_code_id(), blob));
}

}  // namespace planner
