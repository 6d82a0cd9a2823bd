#include "planner/actors.h"

#include <algorithm>
#include <functional>
#include <random>

#include "planner/analysis.h"
#include "planner/errors.h"

namespace planner {
namespace {

Bytes update_plaintext(const ModelVector& update) {
  CanonicalWriter w;
  w.doubles(update);
  return std::move(w).bytes();
}

Bytes concat(const Bytes& a, ByteView b) {
  Bytes out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

ModelVector adversarial_update(std::size_t d, double zeta, PartyRng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.0, 1.0);
  ModelVector v(d);
  for (double& x : v) x = gauss(rng);
  double norm = l2_norm(v);
  double target = zeta * scale(rng);
  if (norm > 0.0) {
    for (double& x : v) x *= target / norm;
  }
  return v;
}

}  // namespace

std::string_view refusal_name(Refusal r) {
  switch (r) {
    case Refusal::kAttestationFailed: return "AttestationFailed";
    case Refusal::kWrongChainId: return "WrongChainId";
    case Refusal::kReplayedDigest: return "ReplayedDigest";
    case Refusal::kPubkeyListMismatch: return "PubkeyListMismatch";
    case Refusal::kArgsMismatch: return "ArgsMismatch";
    case Refusal::kNoResponse: return "NoResponse";
  }
  return "Unknown";
}

SecAggMessage make_secagg_message(ClientId sender, const ModelVector& update,
                                  const SecAggBroadcast& broadcast, PartyRng& rng) {
  KeyPair ec = keygen(rng.seed(), sender);
  SymmetricKey shared = dh_shared(ec.secret_key, broadcast.ec_pub_key);
  SymmetricKey update_key = rng.symmetric_key();
  SecAggMessage m;
  m.sender = sender;
  m.encrypted_update = aead_encrypt(update_key, broadcast.thread_nonce, update_plaintext(update));
  m.encrypted_decryption_key = aead_encrypt(shared, broadcast.thread_nonce, update_key.view());
  m.ec_pub_key = ec.public_key;
  m.thread_nonce = broadcast.thread_nonce;
  m.mac = mac_compute(shared, m.mac_input());
  return m;
}

Client::Client(ClientId index, std::uint64_t master_seed, ClientBehavior behavior, std::size_t d,
               std::size_t points)
    : index_(index),
      behavior_(behavior),
      keys_(keygen(PartyRng(master_seed, "client-key", index).seed(), index)),
      data_(synthetic_dataset(PartyRng(master_seed, "client-data", index).seed(), d, points)),
      rng_(master_seed, "client", index) {}

std::size_t Client::signatures_for(const Digest& digest) const {
  auto it = sign_counts_.find(digest);
  return it == sign_counts_.end() ? 0 : it->second;
}

AuditOutcome Client::audit(const AuditBroadcast& b, const AuditContext& ctx) {
  if (behavior_ == ClientBehavior::kCorrupted) {
    if (!chain_id_) chain_id_ = b.chain_id;
    if (b.kind == BroadcastKind::kAgreement) ++sign_counts_[b.digest];
    return sign(keys_.secret_key, b.thread_nonce.view());
  }
  if (b.quote.payload != b.payload() ||
      !verify_quote(b.quote, ctx.code_id, ctx.manufacturer_pk)) {
    return Refusal::kAttestationFailed;
  }
  if (b.kind == BroadcastKind::kInit && b.digest != ctx.pubkey_list_digest) {
    return Refusal::kPubkeyListMismatch;
  }
  if (chain_id_ && *chain_id_ != b.chain_id) return Refusal::kWrongChainId;
  chain_id_ = b.chain_id;
  if (b.kind == BroadcastKind::kAgreement) {
    if (signed_digests_.count(b.digest)) return Refusal::kReplayedDigest;
    signed_digests_.insert(b.digest);
    ++sign_counts_[b.digest];
  }
  return sign(keys_.secret_key, b.thread_nonce.view());
}

SecAggOutcome Client::secure_aggregation(const SecAggBroadcast& b, const SecAggArgs& args,
                                         const AuditContext& ctx) {
  if (behavior_ == ClientBehavior::kCorrupted) {
    last_update_ = adversarial_update(args.theta.size(), args.zeta, rng_);
    return make_secagg_message(index_, last_update_, b, rng_);
  }
  if (b.quote.payload != b.payload() ||
      !verify_quote(b.quote, ctx.code_id, ctx.manufacturer_pk)) {
    return Refusal::kAttestationFailed;
  }
  if (chain_id_ && *chain_id_ != b.chain_id) return Refusal::kWrongChainId;
  if (args_hash(args) != b.args_hash) return Refusal::kArgsMismatch;
  last_update_ = local_update(data_, args.theta, args.zeta);
  return make_secagg_message(index_, last_update_, b, rng_);
}

DropoutSchedule::DropoutSchedule(std::uint64_t master_seed, std::uint32_t n, double kappa,
                                 double beta)
    : seed_(master_seed), n_(n) {
  double nd = static_cast<double>(n);
  pool_ = std::min<std::uint64_t>(n, ceil_count(kappa * nd));
  drops_ = std::min<std::uint64_t>(pool_, ceil_count(beta * kappa * nd));
}

const DropoutSchedule::Round& DropoutSchedule::round(RoundIndex i) const {
  auto it = cache_.find(i);
  if (it != cache_.end()) return it->second;
  std::vector<ClientId> order(n_);
  for (ClientId j = 0; j < n_; ++j) order[j] = j;
  PartyRng rng(seed_, "availability", i);
  std::shuffle(order.begin(), order.end(), rng);
  Round r;
  r.candidates.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool_));
  std::sort(r.candidates.begin(), r.candidates.end());
  r.dropped.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(drops_));
  return cache_.emplace(i, std::move(r)).first->second;
}

bool Transcript::leaked() const {
  for (const Bytes& secret : honest_plaintexts) {
    std::boyer_moore_searcher search(secret.begin(), secret.end());
    for (const Bytes& seen : server_visible) {
      if (std::search(seen.begin(), seen.end(), search) != seen.end()) return true;
    }
  }
  return false;
}

void initialize_world(World& world, const EnclaveConfig& config) {
  std::vector<PublicKey> pubkeys;
  for (const Client& c : world.clients) pubkeys.push_back(c.public_key());
  world.ctx = {world.platform->manufacturer_public_key(), planner_code_id(),
               pubkey_list_digest(pubkeys)};
  world.enclave_config = config;

  PlannerEnclave enclave(*world.platform, PartyRng(world.master_seed, "enclave-init").seed());
  AuditBroadcast b = enclave.init(pubkeys, world.dropouts.round(0).candidates, config);
  world.transcript.server_visible.push_back(concat(b.payload(), b.quote.signature.view()));
  std::vector<AuditSignature> sigs;
  for (Client& c : world.clients) {
    AuditOutcome out = c.audit(b, world.ctx);
    if (auto* sig = std::get_if<Signature>(&out)) sigs.push_back({c.index(), *sig});
  }
  InitResult init = enclave.finish_init(sigs);
  world.blob = init.blob;
  world.chain = EvidenceChain({init.evidence});
}

ClientList choose_cohort(const World& world, const EvidenceChain& chain, RoundIndex i,
                         std::uint32_t size, PartyRng& rng) {
  ClientList qualified =
      f_qualify(world.enclave_config.schema, derive_history(chain, world.n()), i);
  const ClientList& online = world.dropouts.round(i).candidates;
  ClientList pool;
  std::set_intersection(qualified.begin(), qualified.end(), online.begin(), online.end(),
                        std::back_inserter(pool));
  ClientList out;
  std::sample(pool.begin(), pool.end(), std::back_inserter(out),
              std::min<std::size_t>(size, pool.size()), rng);
  return out;
}

std::uint64_t enclave_seed(std::uint64_t master_seed, ProcessId pid) {
  return PartyRng(master_seed, "enclave-instance", pid).seed();
}

UpdateProcess::UpdateProcess(ProcessId pid, World& world, ProcessPlan plan)
    : pid_(pid),
      world_(&world),
      plan_(std::move(plan)),
      enclave_(*world.platform, enclave_seed(world.master_seed, pid)) {
  std::sort(plan_.cohort.begin(), plan_.cohort.end());
}

std::vector<Action> UpdateProcess::pending() const {
  std::vector<Action> out;
  if (status_ != Status::kRunning) return out;
  if (!invoked_) {
    out.push_back({pid_, Action::Kind::kInvoke, 0});
  } else if (!audits_left_.empty()) {
    for (ClientId j : audits_left_) out.push_back({pid_, Action::Kind::kAudit, j});
  } else if (!agreed_) {
    out.push_back({pid_, Action::Kind::kAgree, 0});
  } else if (!secagg_left_.empty()) {
    for (ClientId j : secagg_left_) out.push_back({pid_, Action::Kind::kSecAgg, j});
  } else {
    out.push_back({pid_, Action::Kind::kAggregate, 0});
  }
  return out;
}

void UpdateProcess::abort(EventLog& log, std::string reason) {
  status_ = Status::kAborted;
  abort_reason_ = std::move(reason);
  log.aborted(pid_, abort_reason_);
}

void UpdateProcess::finish(EventLog& log) {
  status_ = Status::kCompleted;
  const Evidence& last = participation_ ? *participation_ : *evidence_;
  std::optional<ModelVector> output;
  if (result_) output = result_->output;
  log.respond(pid_, output, evidence_digest(last));
}

void UpdateProcess::fire(const Action& action, EventLog& log) {
  World& w = *world_;
  switch (action.kind) {
    case Action::Kind::kInvoke: {
      invoked_ = true;
      round_ = next_round_index(plan_.loaded_chain);
      log.invoke(pid_, "update", plan_.cohort, round_, args_hash(plan_.args),
                 chain_digest(plan_.loaded_chain));
      try {
        broadcast_ = enclave_.replicate(w.blob, plan_.loaded_chain, plan_.cohort, plan_.args,
                                        plan_.candidates);
      } catch (const ProtocolError& err) {
        abort(log, std::string(errc_name(err.code())));
        return;
      }
      w.sizes.audit_broadcast.insert(broadcast_->wire_size());
      w.transcript.server_visible.push_back(
          concat(broadcast_->payload(), broadcast_->quote.signature.view()));
      if (plan_.replayed_signatures) {
        signatures_ = *plan_.replayed_signatures;
      } else {
        ClientList auditors = latest_auditors(plan_.loaded_chain);
        audits_left_.insert(auditors.begin(), auditors.end());
      }
      return;
    }
    case Action::Kind::kAudit: {
      ClientId j = action.target;
      audits_left_.erase(j);
      if (j >= w.n() || w.dropouts.is_out(j, round_)) {
        refusals_[j] = Refusal::kNoResponse;
        return;
      }
      AuditOutcome out = w.clients[j].audit(*broadcast_, w.ctx);
      if (auto* sig = std::get_if<Signature>(&out)) {
        signatures_.push_back({j, *sig});
      } else {
        refusals_[j] = std::get<Refusal>(out);
      }
      return;
    }
    case Action::Kind::kAgree: {
      agreed_ = true;
      if (plan_.crash_after_quorum) {
        enclave_.crash();
        abort(log, std::string(errc_name(Errc::kEnclaveCrashed)));
        return;
      }
      try {
        evidence_ = enclave_.collect_agreement(signatures_);
        secagg_ = enclave_.secagg_broadcast();
      } catch (const ProtocolError& err) {
        abort(log, std::string(errc_name(err.code())));
        return;
      }
      if (plan_.append && chain_digest(w.chain) == *evidence_->prev_digest) {
        w.chain = w.chain.appended(*evidence_);
      }
      w.sizes.secagg_broadcast.insert(secagg_->wire_size());
      w.transcript.server_visible.push_back(
          concat(secagg_->payload(), secagg_->quote.signature.view()));
      secagg_left_.insert(plan_.cohort.begin(), plan_.cohort.end());
      return;
    }
    case Action::Kind::kSecAgg: {
      ClientId j = action.target;
      secagg_left_.erase(j);
      if (j >= w.n() || w.dropouts.is_out(j, round_)) return;
      Client& c = w.clients[j];
      SecAggOutcome out = c.secure_aggregation(*secagg_, plan_.args, w.ctx);
      if (auto* refusal = std::get_if<Refusal>(&out)) {
        refusals_[j] = *refusal;
        return;
      }
      const SecAggMessage& m = std::get<SecAggMessage>(out);
      messages_.push_back(m);
      plaintexts_[j] = c.last_update();
      w.sizes.client_control.insert(m.control_size());
      w.transcript.server_visible.push_back(concat(m.mac_input(), m.mac.view()));
      if (w.track_taint && c.behavior() == ClientBehavior::kHonest) {
        w.transcript.honest_plaintexts.push_back(update_plaintext(c.last_update()));
      }
      return;
    }
    case Action::Kind::kAggregate: {
      try {
        result_ = enclave_.secure_aggregate(messages_);
      } catch (const ProtocolError& err) {
        // The round's evidence is already out; the transition stands
        // without an output.
        abort_reason_ = std::string(errc_name(err.code()));
        finish(log);
        return;
      }
      if (plan_.record_participation) {
        participation_ = enclave_.participation_evidence();
        if (plan_.append && chain_digest(w.chain) == evidence_digest(*evidence_)) {
          w.chain = w.chain.appended(*participation_);
        }
      }
      w.transcript.server_visible.push_back(update_plaintext(result_->output));
      finish(log);
      return;
    }
  }
}

std::optional<Evidence> run_recovery(World& world, ProcessId pid, const UpdateProcess& crashed,
                                     EventLog& log) {
  const ProcessPlan& plan = crashed.plan();
  log.invoke(pid, "recovery", plan.cohort, next_round_index(plan.loaded_chain),
             args_hash(plan.args), chain_digest(plan.loaded_chain));
  if (!crashed.broadcast()) {
    log.aborted(pid, errc_name(Errc::kBadRecoverySignatures));
    return std::nullopt;
  }
  PlannerEnclave enclave(*world.platform, enclave_seed(world.master_seed, pid));
  try {
    Evidence e = enclave.recover(world.blob, plan.loaded_chain, plan.cohort, plan.args,
                                 *crashed.broadcast(), crashed.signatures());
    if (chain_digest(world.chain) == *e.prev_digest) world.chain = world.chain.appended(e);
    log.respond(pid, std::nullopt, evidence_digest(e));
    return e;
  } catch (const ProtocolError& err) {
    log.aborted(pid, errc_name(err.code()));
    return std::nullopt;
  }
}

RoundOutcome honest_server_round(World& world, ProcessId pid, const ClientList& cohort,
                                 const SecAggArgs& args, EventLog& log) {
  ProcessPlan plan;
  plan.loaded_chain = world.chain;
  plan.cohort = cohort;
  plan.args = args;
  plan.candidates = world.dropouts.round(next_round_index(world.chain) + 1).candidates;
  UpdateProcess p(pid, world, std::move(plan));
  PartyRng order(world.master_seed, "server-order", pid);
  for (auto acts = p.pending(); !acts.empty(); acts = p.pending()) {
    std::uniform_int_distribution<std::size_t> pick(0, acts.size() - 1);
    p.fire(acts[pick(order)], log);
  }
  RoundOutcome out;
  out.status = p.status();
  out.reason = p.abort_reason();
  out.evidence = p.evidence();
  if (p.result()) out.output = p.result()->output;
  return out;
}

std::string_view strategy_name(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::kHonest: return "honest";
    case AdversaryStrategy::kFork: return "fork";
    case AdversaryStrategy::kRollback: return "rollback";
    case AdversaryStrategy::kReplay: return "replay";
    case AdversaryStrategy::kSybilFlood: return "sybil_flood";
    case AdversaryStrategy::kPretendCrash: return "pretend_crash";
  }
  return "unknown";
}

AdversaryStrategy strategy_from_name(std::string_view name) {
  if (name == "honest") return AdversaryStrategy::kHonest;
  if (name == "fork") return AdversaryStrategy::kFork;
  if (name == "rollback") return AdversaryStrategy::kRollback;
  if (name == "replay") return AdversaryStrategy::kReplay;
  if (name == "sybil" || name == "sybil_flood") return AdversaryStrategy::kSybilFlood;
  if (name == "pretend-crash" || name == "pretend_crash") return AdversaryStrategy::kPretendCrash;
  throw ProtocolError(Errc::kConfigInvalid, "unknown strategy '" + std::string(name) + "'");
}

}  // namespace planner
