#include <gtest/gtest.h>

#include <variant>

#include "planner/actors.h"
#include "test_support.h"

namespace planner {
namespace {

using testing::code_of;

struct SmallWorld {
  TeePlatform tee{77};
  World world;
  EventLog log;

  explicit SmallWorld(std::uint32_t n = 12, std::set<ClientId> corrupted = {},
                      std::uint64_t seed = 5) {
    world.platform = &tee;
    world.master_seed = seed;
    world.track_taint = true;
    for (ClientId j = 0; j < n; ++j) {
      world.clients.emplace_back(j, seed, corrupted.count(j) ? ClientBehavior::kCorrupted
                                                          : ClientBehavior::kHonest,
                                 3, 4);
    }
    world.dropouts = DropoutSchedule(seed, n, 1.0, 0.0);
    EnclaveConfig c;
    c.n_audit = 4;
    c.tau = 3;
    c.min_candidates = n;
    c.schema = ParticipationSchema::once(4);
    c.d = 3;
    c.zeta = 1.0;
    c.sigma = 1.0;
    c.strategy = StrategyMatrix::identity(4);
    initialize_world(world, c);
    log.genesis(chain_digest(world.chain));
  }

  SecAggArgs args() const { return {{0.1, 0.2, -0.3}, 3, 1.0}; }

  AuditBroadcast agreement_broadcast(std::uint64_t instance) {
    PlannerEnclave e(tee, instance);
    return e.replicate(world.blob, world.chain, {0}, args(),
                       world.dropouts.round(1).candidates);
  }
};

TEST(Client, HonestAuditorSignsFreshDigestOnce) {
  SmallWorld w;
  Client& c = w.world.clients[0];
  AuditBroadcast b = w.agreement_broadcast(10);
  EXPECT_TRUE(std::holds_alternative<Signature>(c.audit(b, w.world.ctx)));
  AuditBroadcast again = w.agreement_broadcast(11);
  ASSERT_EQ(again.digest, b.digest);
  AuditOutcome second = c.audit(again, w.world.ctx);
  ASSERT_TRUE(std::holds_alternative<Refusal>(second));
  EXPECT_EQ(std::get<Refusal>(second), Refusal::kReplayedDigest);
  EXPECT_EQ(c.signatures_for(b.digest), 1u);
}

TEST(Client, CorruptedAuditorSignsAnything) {
  SmallWorld w(12, {0});
  Client& c = w.world.clients[0];
  AuditBroadcast b = w.agreement_broadcast(10);
  EXPECT_TRUE(std::holds_alternative<Signature>(c.audit(b, w.world.ctx)));
  EXPECT_TRUE(std::holds_alternative<Signature>(c.audit(w.agreement_broadcast(11), w.world.ctx)));
  EXPECT_EQ(c.signatures_for(b.digest), 2u);
}

TEST(Client, RefusesUnattestedBroadcast) {
  SmallWorld w;
  AuditBroadcast b = w.agreement_broadcast(10);
  b.inputs_hash.bytes[0] ^= 1;
  AuditOutcome out = w.world.clients[1].audit(b, w.world.ctx);
  ASSERT_TRUE(std::holds_alternative<Refusal>(out));
  EXPECT_EQ(std::get<Refusal>(out), Refusal::kAttestationFailed);
}

TEST(Client, RefusesOtherChainId) {
  SmallWorld w;
  SmallWorld other(12, {}, 6);  // same platform, another deployment
  AuditBroadcast foreign = [&] {
    PlannerEnclave e(other.tee, 3);
    return e.replicate(other.world.blob, other.world.chain, {0}, other.args(),
                       other.world.dropouts.round(1).candidates);
  }();
  ASSERT_NE(foreign.chain_id, w.world.chain.entries()[0].chain_id);
  AuditOutcome out = w.world.clients[2].audit(foreign, w.world.ctx);
  ASSERT_TRUE(std::holds_alternative<Refusal>(out));
  EXPECT_EQ(std::get<Refusal>(out), Refusal::kWrongChainId);
}

TEST(Client, RefusesMismatchedPubkeyListAtInit) {
  SmallWorld w;
  AuditContext ctx = w.world.ctx;
  ctx.pubkey_list_digest.bytes[0] ^= 1;
  PlannerEnclave e(w.tee, 99);
  std::vector<PublicKey> keys;
  for (const Client& c : w.world.clients) keys.push_back(c.public_key());
  AuditBroadcast b = e.init(keys, {0, 1, 2, 3, 4}, w.world.enclave_config);
  Client fresh(0, 6, ClientBehavior::kHonest, 3, 4);
  AuditOutcome out = fresh.audit(b, ctx);
  ASSERT_TRUE(std::holds_alternative<Refusal>(out));
  EXPECT_EQ(std::get<Refusal>(out), Refusal::kPubkeyListMismatch);
}

TEST(Client, SecAggRefusesArgsThatDoNotMatchTheHash) {
  SmallWorld w;
  PlannerEnclave e(w.tee, 10);
  AuditBroadcast b = e.replicate(w.world.blob, w.world.chain, {0}, w.args(),
                                 w.world.dropouts.round(1).candidates);
  std::vector<AuditSignature> sigs;
  for (ClientId j : latest_auditors(w.world.chain)) {
    sigs.push_back({j, std::get<Signature>(w.world.clients[j].audit(b, w.world.ctx))});
  }
  e.collect_agreement(sigs);
  SecAggBroadcast sb = e.secagg_broadcast();
  SecAggArgs other = w.args();
  other.theta[0] = 9.0;
  SecAggOutcome out = w.world.clients[0].secure_aggregation(sb, other, w.world.ctx);
  ASSERT_TRUE(std::holds_alternative<Refusal>(out));
  EXPECT_EQ(std::get<Refusal>(out), Refusal::kArgsMismatch);
  EXPECT_TRUE(std::holds_alternative<SecAggMessage>(
      w.world.clients[0].secure_aggregation(sb, w.args(), w.world.ctx)));
}

TEST(Dropouts, CountsAndSubsets) {
  DropoutSchedule s(3, 100, 0.5, 0.1);
  for (RoundIndex i = 0; i < 20; ++i) {
    const DropoutSchedule::Round& r = s.round(i);
    EXPECT_EQ(r.candidates.size(), 50u);
    EXPECT_EQ(r.dropped.size(), 5u);
    for (ClientId j : r.dropped) {
      EXPECT_TRUE(std::binary_search(r.candidates.begin(), r.candidates.end(), j));
    }
  }
  EXPECT_EQ(DropoutSchedule(3, 100, 0.5, 0.1).round(7).candidates, s.round(7).candidates);
  EXPECT_NE(s.round(1).candidates, s.round(2).candidates);
}

TEST(Dropouts, FractionalCountsRoundUp) {
  DropoutSchedule s(3, 10, 0.25, 0.5);
  EXPECT_EQ(s.round(0).candidates.size(), 3u);  // ceil(2.5)
  EXPECT_EQ(s.round(0).dropped.size(), 2u);     // ceil(1.25)
}

TEST(Transcript, DetectsEmbeddedPlaintext) {
  Transcript t;
  t.honest_plaintexts.push_back({1, 2, 3});
  t.server_visible.push_back({9, 9, 1, 2, 4});
  EXPECT_FALSE(t.leaked());
  t.server_visible.push_back({0, 1, 2, 3, 0});
  EXPECT_TRUE(t.leaked());
}

TEST(HonestRound, OutputIsSumOfClippedUpdatesPlusNoise) {
  SmallWorld w;
  ClientList cohort{1, 4, 7};
  RoundOutcome out = honest_server_round(w.world, 1, cohort, w.args(), w.log);
  ASSERT_EQ(out.status, UpdateProcess::Status::kCompleted) << out.reason;
  ASSERT_TRUE(out.output);

  ModelVector want(3, 0.0);
  for (ClientId j : cohort) {
    // Hand gradient of sum (theta . x - y)^2, clipped to the unit ball.
    ModelVector g(3, 0.0);
    for (const DataPoint& p : w.world.clients[j].dataset()) {
      double r = -p.y;
      for (int k = 0; k < 3; ++k) r += w.args().theta[k] * p.x[k];
      for (int k = 0; k < 3; ++k) g[k] += 2 * r * p.x[k];
    }
    double norm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    double s = norm > 1.0 ? 1.0 / norm : 1.0;
    for (int k = 0; k < 3; ++k) want[k] += s * g[k];
  }
  std::uint64_t seed = inspect_sealed_state(w.tee, w.world.blob).noise_seed;
  std::vector<double> z = NoiseMatrix(seed, 1.0, 3).row(0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR((*out.output)[k], want[k] + z[k], 1e-9);

  EXPECT_EQ(w.world.chain.size(), 2u);
  EXPECT_EQ(w.world.chain.back().cohort, cohort);
  EXPECT_FALSE(w.world.transcript.leaked());
  EXPECT_EQ(w.world.sizes.audit_broadcast.size(), 1u);
}

TEST(HonestRound, SecondProcessOnSameHeadIsRefused) {
  SmallWorld w;
  EvidenceChain head = w.world.chain;
  honest_server_round(w.world, 1, {1, 2}, w.args(), w.log);
  // Replay the same head by hand: auditors already signed that digest.
  ProcessPlan plan;
  plan.loaded_chain = head;
  plan.cohort = {3};
  plan.args = w.args();
  plan.candidates = w.world.dropouts.round(1).candidates;
  UpdateProcess p(2, w.world, plan);
  for (auto acts = p.pending(); !acts.empty(); acts = p.pending()) p.fire(acts.front(), w.log);
  EXPECT_EQ(p.status(), UpdateProcess::Status::kAborted);
  EXPECT_EQ(p.abort_reason(), "QuorumNotReached");
  for (const auto& [j, r] : p.refusals()) EXPECT_EQ(r, Refusal::kReplayedDigest) << j;
  EXPECT_EQ(w.world.chain.size(), 2u);
}

TEST(HonestRound, CohortChoiceHonoursSchema) {
  SmallWorld w;
  honest_server_round(w.world, 1, {0, 1, 2, 3, 4, 5}, w.args(), w.log);
  PartyRng rng(1, "cohort-test");
  for (int t = 0; t < 20; ++t) {
    ClientList c = choose_cohort(w.world, w.world.chain, 1, 6, rng);
    EXPECT_EQ(c.size(), 6u);
    for (ClientId j : c) EXPECT_GE(j, 6u);
  }
}

TEST(Recovery, CrashedProcessIsRecoveredOnce) {
  SmallWorld w;
  ProcessPlan plan;
  plan.loaded_chain = w.world.chain;
  plan.cohort = {2, 3};
  plan.args = w.args();
  plan.candidates = w.world.dropouts.round(1).candidates;
  plan.crash_after_quorum = true;
  UpdateProcess p(1, w.world, plan);
  for (auto acts = p.pending(); !acts.empty(); acts = p.pending()) p.fire(acts.front(), w.log);
  ASSERT_EQ(p.status(), UpdateProcess::Status::kAborted);
  EXPECT_EQ(p.abort_reason(), "EnclaveCrashed");
  EXPECT_EQ(w.world.chain.size(), 1u);

  std::optional<Evidence> e = run_recovery(w.world, 2, p, w.log);
  ASSERT_TRUE(e);
  EXPECT_EQ(w.world.chain.size(), 2u);
  EXPECT_EQ(e->cohort, (ClientList{2, 3}));
  EXPECT_EQ(e->round_index, 0u);
}

TEST(Strategies, NamesRoundTrip) {
  for (AdversaryStrategy s : {AdversaryStrategy::kHonest, AdversaryStrategy::kFork,
                              AdversaryStrategy::kRollback, AdversaryStrategy::kReplay,
                              AdversaryStrategy::kSybilFlood, AdversaryStrategy::kPretendCrash}) {
    EXPECT_EQ(strategy_from_name(strategy_name(s)), s);
  }
  EXPECT_EQ(strategy_from_name("pretend-crash"), AdversaryStrategy::kPretendCrash);
  EXPECT_EQ(strategy_from_name("sybil"), AdversaryStrategy::kSybilFlood);
  EXPECT_EQ(code_of([] { strategy_from_name("nope"); }), Errc::kConfigInvalid);
}

}  // namespace
}  // namespace planner
