#include "planner/evidence_chain.h"

#include <nlohmann/json.hpp>

#include "planner/errors.h"

namespace planner {
namespace {

using nlohmann::json;

bool consumes_round(EvidenceKind kind) {
  return kind == EvidenceKind::kUpdate || kind == EvidenceKind::kRecovery;
}

json optional_hex(const std::optional<Digest>& d) {
  return d ? json(to_hex(*d)) : json(nullptr);
}

std::optional<Digest> optional_digest(const json& j) {
  if (j.is_null()) return std::nullopt;
  return fixed_from_hex<Digest>(j.get<std::string>());
}

json evidence_json(const Evidence& e) {
  json quote = {{"code_id", to_hex(e.quote.code_id)},
                {"payload", to_hex(e.quote.payload)},
                {"signature", to_hex(e.quote.signature)}};
  return {
      {"chain_id", to_hex(e.chain_id)},
      {"prev_digest", optional_hex(e.prev_digest)},
      {"kind", std::string(evidence_kind_name(e.kind))},
      {"auditors_next", e.auditors_next},
      {"cohort", e.cohort},
      {"round_index", e.round_index ? json(*e.round_index) : json(nullptr)},
      {"args_secagg_hash", to_hex(e.args_secagg_hash)},
      {"pubkey_list_digest", optional_hex(e.pubkey_list_digest)},
      {"quote", quote},
  };
}

Evidence parse_evidence(const json& j) {
  static const char* kFields[] = {"chain_id",      "prev_digest",
                                  "kind",          "auditors_next",
                                  "cohort",        "round_index",
                                  "args_secagg_hash", "pubkey_list_digest",
                                  "quote"};
  if (!j.is_object()) throw std::invalid_argument("entry is not an object");
  for (const char* f : kFields) {
    if (!j.contains(f)) throw std::invalid_argument(std::string("missing ") + f);
  }
  Evidence e;
  e.chain_id = fixed_from_hex<Nonce>(j.at("chain_id").get<std::string>());
  e.prev_digest = optional_digest(j.at("prev_digest"));
  e.kind = evidence_kind_from_name(j.at("kind").get<std::string>());
  e.auditors_next = j.at("auditors_next").get<ClientList>();
  e.cohort = j.at("cohort").get<ClientList>();
  if (!j.at("round_index").is_null()) {
    e.round_index = j.at("round_index").get<RoundIndex>();
  }
  e.args_secagg_hash = fixed_from_hex<Digest>(j.at("args_secagg_hash").get<std::string>());
  e.pubkey_list_digest = optional_digest(j.at("pubkey_list_digest"));
  const json& q = j.at("quote");
  e.quote.code_id = fixed_from_hex<Digest>(q.at("code_id").get<std::string>());
  e.quote.payload = from_hex(q.at("payload").get<std::string>());
  e.quote.signature = fixed_from_hex<Signature>(q.at("signature").get<std::string>());
  return e;
}

void check_structure(const EvidenceChain& chain) {
  if (chain.empty()) throw ProtocolError(Errc::kInvalidChain, "empty chain");
  if (chain.entries().front().kind != EvidenceKind::kInit) {
    throw ProtocolError(Errc::kInvalidChain, "first entry is not init");
  }
}

}  // namespace

std::string_view evidence_kind_name(EvidenceKind kind) {
  switch (kind) {
    case EvidenceKind::kInit: return "init";
    case EvidenceKind::kUpdate: return "update";
    case EvidenceKind::kRecovery: return "recovery";
    case EvidenceKind::kParticipation: return "participation";
  }
  return "unknown";
}

EvidenceKind evidence_kind_from_name(std::string_view name) {
  if (name == "init") return EvidenceKind::kInit;
  if (name == "update") return EvidenceKind::kUpdate;
  if (name == "recovery") return EvidenceKind::kRecovery;
  if (name == "participation") return EvidenceKind::kParticipation;
  throw ProtocolError(Errc::kInvalidChain, "unknown evidence kind '" + std::string(name) + "'");
}

Bytes Evidence::payload() const {
  CanonicalWriter w;
  w.field(chain_id);
  if (prev_digest) {
    w.field(*prev_digest);
  } else {
    w.field(ByteView{});
  }
  w.field(evidence_kind_name(kind));
  w.indices(auditors_next);
  w.indices(cohort);
  if (round_index) {
    w.u64(*round_index);
  } else {
    w.field(ByteView{});
  }
  w.field(args_secagg_hash);
  if (pubkey_list_digest) {
    w.field(*pubkey_list_digest);
  } else {
    w.field(ByteView{});
  }
  return std::move(w).bytes();
}

Bytes Evidence::canonical() const {
  Bytes out = payload();
  CanonicalWriter w;
  w.field(quote.code_id).field(quote.signature);
  const Bytes& tail = w.bytes();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

Digest evidence_digest(const Evidence& e) { return hash(e.canonical()); }

EvidenceChain EvidenceChain::appended(Evidence e) const {
  std::vector<Evidence> next = entries_;
  next.push_back(std::move(e));
  return EvidenceChain(std::move(next));
}

EvidenceChain EvidenceChain::prefix(std::size_t count) const {
  count = std::min(count, entries_.size());
  return EvidenceChain(std::vector<Evidence>(entries_.begin(), entries_.begin() + count));
}

Digest chain_digest(const EvidenceChain& chain) {
  if (chain.empty()) throw ProtocolError(Errc::kEmptyChain);
  return evidence_digest(chain.back());
}

std::string_view chain_fault_name(ChainFault fault) {
  switch (fault) {
    case ChainFault::kNone: return "None";
    case ChainFault::kEmptyChain: return "EmptyChain";
    case ChainFault::kBrokenLink: return "BrokenLink";
    case ChainFault::kBadQuote: return "BadQuote";
    case ChainFault::kMixedChainId: return "MixedChainId";
    case ChainFault::kBadRoundIndex: return "BadRoundIndex";
  }
  return "Unknown";
}

ChainVerdict verify_chain(const EvidenceChain& chain, const PublicKey& manufacturer_pk,
                          const Digest& code_id) {
  if (chain.empty()) return {ChainFault::kEmptyChain, 0};
  const auto& entries = chain.entries();
  RoundIndex consumed = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Evidence& e = entries[k];
    bool is_init = e.kind == EvidenceKind::kInit;
    if (is_init != (k == 0) || is_init == e.prev_digest.has_value()) {
      return {ChainFault::kBrokenLink, k};
    }
    if (k > 0) {
      if (*e.prev_digest != evidence_digest(entries[k - 1])) {
        return {ChainFault::kBrokenLink, k};
      }
      if (e.chain_id != entries[0].chain_id) return {ChainFault::kMixedChainId, k};
    }
    if (is_init) {
      if (e.round_index) return {ChainFault::kBadRoundIndex, k};
    } else if (consumes_round(e.kind)) {
      if (e.round_index != consumed) return {ChainFault::kBadRoundIndex, k};
      ++consumed;
    } else {
      if (consumed == 0 || e.round_index != consumed - 1) {
        return {ChainFault::kBadRoundIndex, k};
      }
    }
  }
  const Evidence& last = entries.back();
  if (last.quote.payload != last.payload() ||
      !verify_quote(last.quote, code_id, manufacturer_pk)) {
    return {ChainFault::kBadQuote, entries.size() - 1};
  }
  return {};
}

RoundIndex next_round_index(const EvidenceChain& chain) {
  RoundIndex consumed = 0;
  for (const Evidence& e : chain.entries()) {
    if (consumes_round(e.kind)) ++consumed;
  }
  return consumed;
}

ClientList latest_auditors(const EvidenceChain& chain) {
  check_structure(chain);
  return chain.back().auditors_next;
}

ParticipationHistory derive_history(const EvidenceChain& chain, std::size_t n_clients) {
  check_structure(chain);
  ParticipationHistory h(n_clients);
  for (const Evidence& e : chain.entries()) {
    if (e.kind != EvidenceKind::kUpdate) continue;
    if (!e.round_index) throw ProtocolError(Errc::kInvalidChain, "update without round index");
    for (ClientId j : e.cohort) {
      if (j >= n_clients) {
        throw ProtocolError(Errc::kInvalidChain,
                            "cohort member " + std::to_string(j) + " out of range");
      }
      h.add(j, *e.round_index);
    }
  }
  return h;
}

std::string chain_to_json(const EvidenceChain& chain, int indent) {
  json arr = json::array();
  for (const Evidence& e : chain.entries()) arr.push_back(evidence_json(e));
  return arr.dump(indent);
}

EvidenceChain chain_from_json(std::string_view text) {
  try {
    json arr = json::parse(text);
    if (!arr.is_array()) throw std::invalid_argument("chain is not an array");
    std::vector<Evidence> entries;
    for (const json& j : arr) entries.push_back(parse_evidence(j));
    return EvidenceChain(std::move(entries));
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ProtocolError(Errc::kInvalidChain, std::string("malformed chain JSON: ") + ex.what());
  }
}

std::string evidence_to_json(const Evidence& e) { return evidence_json(e).dump(); }

Evidence evidence_from_json(std::string_view text) {
  try {
    return parse_evidence(json::parse(text));
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ProtocolError(Errc::kInvalidChain, std::string("malformed evidence JSON: ") + ex.what());
  }
}

}  // namespace planner
