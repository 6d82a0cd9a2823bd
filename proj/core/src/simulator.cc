#include "planner/simulator.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>

#include "planner/analysis.h"
#include "planner/errors.h"
#include "planner/planner_enclave.h"

namespace planner {
namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) {
  throw ProtocolError(Errc::kConfigInvalid, what);
}

[[noreturn]] void log_error(const std::string& what) {
  throw ProtocolError(Errc::kLogMalformed, what);
}

std::string short_hex(const Digest& d) { return to_hex(d).substr(0, 12); }

json schema_json(const ParticipationSchema& s) {
  json j = {{"kind", s.kind == ParticipationSchema::Kind::kOnce ? "once" : "min_separation"}};
  if (s.kind == ParticipationSchema::Kind::kMinSeparation) j["b"] = s.b;
  return j;
}

ParticipationSchema parse_schema(const json& j, std::uint32_t n_round) {
  std::string kind;
  std::uint32_t b = 1;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    for (const auto& [key, _] : j.items()) {
      if (key != "kind" && key != "b") config_error("unknown schema key '" + key + "'");
    }
    kind = j.at("kind").get<std::string>();
    if (j.contains("b")) b = j.at("b").get<std::uint32_t>();
  } else {
    config_error("schema must be a string or an object");
  }
  if (kind == "once") return ParticipationSchema::once(n_round);
  if (kind == "min_separation") return ParticipationSchema::min_separation(b, n_round);
  config_error("unknown schema '" + kind + "'");
}

// Relative comparison scaled by the larger vector's max norm.
bool close(const ModelVector& a, const ModelVector& b, double rel) {
  if (a.size() != b.size()) return false;
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    scale = std::max({scale, std::abs(a[k]), std::abs(b[k])});
    diff = std::max(diff, std::abs(a[k] - b[k]));
  }
  return diff <= rel * std::max(scale, 1e-300);
}

struct ProcRecord {
  const EventRecord* invoke = nullptr;
  const EventRecord* terminal = nullptr;
};

struct ParsedLog {
  Digest genesis;
  std::map<ProcessId, ProcRecord> procs;
};

ParsedLog parse_log(const EventLog& log) {
  ParsedLog out;
  const auto& recs = log.records();
  if (recs.empty() || recs.front().event != EventKind::kGenesis) {
    log_error("log must start with a genesis record");
  }
  out.genesis = recs.front().loaded_digest;
  std::uint64_t last_ts = 0;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const EventRecord& r = recs[k];
    if (k > 0 && r.ts <= last_ts) {
      log_error("timestamps not increasing at record " + std::to_string(k + 1));
    }
    last_ts = r.ts;
    if (r.event == EventKind::kGenesis) {
      if (k != 0) log_error("second genesis record at " + std::to_string(k + 1));
      continue;
    }
    ProcRecord& p = out.procs[r.pid];
    if (r.event == EventKind::kInvoke) {
      if (p.invoke) log_error("process " + std::to_string(r.pid) + " invoked twice");
      p.invoke = &r;
    } else {
      if (!p.invoke) {
        log_error("process " + std::to_string(r.pid) + " ends before it is invoked");
      }
      if (p.terminal) log_error("process " + std::to_string(r.pid) + " ends twice");
      p.terminal = &r;
    }
  }
  return out;
}

bool completed(const ProcRecord& p) {
  return p.terminal && p.terminal->event == EventKind::kRespond;
}

// Scheduler over a set of live processes: at each step one deliverable action
// among all of them fires, chosen by the seeded generator.
void drive(const std::vector<UpdateProcess*>& procs, PartyRng& order, EventLog& log) {
  for (;;) {
    std::vector<std::pair<UpdateProcess*, Action>> ready;
    for (UpdateProcess* p : procs) {
      for (const Action& a : p->pending()) ready.emplace_back(p, a);
    }
    if (ready.empty()) return;
    std::uniform_int_distribution<std::size_t> pick(0, ready.size() - 1);
    auto& [proc, action] = ready[pick(order)];
    proc->fire(action, log);
  }
}

std::size_t update_entries(const EvidenceChain& chain) {
  std::size_t count = 0;
  for (const Evidence& e : chain.entries()) {
    if (e.kind == EvidenceKind::kUpdate || e.kind == EvidenceKind::kRecovery) ++count;
  }
  return count;
}

class Runner {
 public:
  explicit Runner(const WorldConfig& cfg)
      : cfg_(cfg), platform_(PartyRng(cfg.master_seed, "platform").seed()) {}

  RunResult run();

 private:
  ProcessPlan plan_on(const EvidenceChain& chain, ProcessId pid) const;
  UpdateProcess& spawn(ProcessPlan plan);
  void drive_now(const std::vector<UpdateProcess*>& procs);
  ProcessId take_pid() { return next_pid_++; }

  void honest_iteration(bool crash);
  void fork_iteration();
  void rollback_iteration();
  void replay_iteration();
  void pretend_crash_iteration();
  void sybil_iteration();
  void settle(const std::vector<UpdateProcess*>& spawned, std::size_t updates_before);
  // Outputs of adversarial side processes, if any slipped through.
  void record_side(const std::vector<UpdateProcess*>& spawned);
  void record_output(const UpdateProcess& p);
  void finish();

  const WorldConfig& cfg_;
  TeePlatform platform_;
  World world_;
  EventLog log_;
  RunResult result_;
  ModelVector theta_;
  ProcessId next_pid_ = 1;
  std::uint32_t iteration_ = 0;
  std::vector<std::unique_ptr<UpdateProcess>> processes_;
  std::set<ClientId> corrupted_;
  bool fork_pending_ = false;
};

ProcessPlan Runner::plan_on(const EvidenceChain& chain, ProcessId pid) const {
  RoundIndex i = next_round_index(chain);
  PartyRng cohort_rng(cfg_.master_seed, "cohort", pid);
  ProcessPlan plan;
  plan.loaded_chain = chain;
  plan.cohort = choose_cohort(world_, chain, i, cfg_.cohort_size + cfg_.overselect_margin,
                              cohort_rng);
  plan.args = {theta_, cfg_.d, cfg_.zeta};
  plan.candidates = world_.dropouts.round(i + 1).candidates;
  plan.record_participation = cfg_.record_participation;
  return plan;
}

UpdateProcess& Runner::spawn(ProcessPlan plan) {
  ProcessId pid = take_pid();
  processes_.push_back(std::make_unique<UpdateProcess>(pid, world_, std::move(plan)));
  return *processes_.back();
}

void Runner::drive_now(const std::vector<UpdateProcess*>& procs) {
  PartyRng order(cfg_.master_seed, "scheduler", next_pid_);
  drive(procs, order, log_);
}

void Runner::honest_iteration(bool crash) {
  std::size_t before = update_entries(world_.chain);
  ProcessPlan plan = plan_on(world_.chain, next_pid_);
  plan.crash_after_quorum = crash;
  UpdateProcess& p = spawn(std::move(plan));
  drive_now({&p});
  if (p.status() == UpdateProcess::Status::kAborted &&
      p.abort_reason() == errc_name(Errc::kEnclaveCrashed)) {
    if (run_recovery(world_, take_pid(), p, log_)) ++result_.recoveries;
  }
  settle({&p}, before);
}

void Runner::fork_iteration() {
  std::size_t before = update_entries(world_.chain);
  std::vector<UpdateProcess*> forks;
  for (std::uint32_t k = 0; k < cfg_.adversary.fork_width; ++k) {
    forks.push_back(&spawn(plan_on(world_.chain, next_pid_)));
  }
  drive_now(forks);
  settle(forks, before);
}

void Runner::rollback_iteration() {
  std::size_t before = update_entries(world_.chain);
  EvidenceChain head = world_.chain;
  UpdateProcess& honest = spawn(plan_on(world_.chain, next_pid_));
  drive_now({&honest});
  settle({&honest}, before);
  // Replay the sealed state against every older prefix still on record: the
  // head the honest round just consumed and the bare init entry.
  std::vector<std::size_t> lengths{head.size()};
  if (head.size() > 1) lengths.push_back(1);
  std::vector<UpdateProcess*> stale;
  for (std::size_t len : lengths) {
    ProcessPlan plan = plan_on(head.prefix(len), next_pid_);
    plan.append = false;
    stale.push_back(&spawn(std::move(plan)));
  }
  drive_now(stale);
  record_side(stale);
}

void Runner::replay_iteration() {
  std::size_t before = update_entries(world_.chain);
  UpdateProcess& a = spawn(plan_on(world_.chain, next_pid_));
  drive_now({&a});
  settle({&a}, before);
  ProcessPlan plan;
  plan.loaded_chain = a.plan().loaded_chain;
  plan.cohort = a.plan().cohort;
  plan.args = a.plan().args;
  plan.candidates = a.plan().candidates;
  plan.append = false;
  plan.replayed_signatures = a.signatures();
  UpdateProcess& b = spawn(std::move(plan));
  drive_now({&b});
  record_side({&b});
}

void Runner::pretend_crash_iteration() {
  std::size_t before = update_entries(world_.chain);
  UpdateProcess& a = spawn(plan_on(world_.chain, next_pid_));
  drive_now({&a});
  settle({&a}, before);
  // The server claims A died and tries both a fresh replica on A's input and
  // a recovery with A's agreement material.
  ProcessPlan plan = plan_on(a.plan().loaded_chain, next_pid_);
  plan.append = false;
  UpdateProcess& b = spawn(std::move(plan));
  drive_now({&b});
  run_recovery(world_, take_pid(), a, log_);
  record_side({&b});
}

void Runner::sybil_iteration() {
  std::size_t before = update_entries(world_.chain);
  RoundIndex i = next_round_index(world_.chain);
  ClientList flood(corrupted_.begin(), corrupted_.end());
  ProcessPlan first = plan_on(world_.chain, next_pid_);
  first.candidates = flood;
  UpdateProcess& p1 = spawn(std::move(first));
  drive_now({&p1});
  std::vector<UpdateProcess*> spawned{&p1};
  if (p1.status() == UpdateProcess::Status::kAborted) {
    // Pad the flood with as few honest candidates as the enclave tolerates.
    ClientList padded = flood;
    for (ClientId j : world_.dropouts.round(i + 1).candidates) {
      if (padded.size() >= world_.enclave_config.min_candidates) break;
      if (!corrupted_.count(j)) padded.push_back(j);
    }
    std::sort(padded.begin(), padded.end());
    ProcessPlan second = plan_on(world_.chain, next_pid_);
    second.candidates = padded;
    UpdateProcess& p2 = spawn(std::move(second));
    drive_now({&p2});
    spawned.push_back(&p2);
  }
  settle(spawned, before);
  fork_pending_ = true;
}

void Runner::settle(const std::vector<UpdateProcess*>& spawned, std::size_t updates_before) {
  std::set<Digest> on_chain;
  for (const Evidence& e : world_.chain.entries()) on_chain.insert(evidence_digest(e));
  std::size_t added = update_entries(world_.chain) - updates_before;
  result_.rounds_completed += static_cast<std::uint32_t>(added);
  if (added == 0) ++result_.rounds_aborted;
  bool advanced_theta = false;
  for (UpdateProcess* p : spawned) {
    if (p->status() != UpdateProcess::Status::kCompleted || !p->result()) continue;
    const AggregationResult& r = *p->result();
    record_output(*p);
    if (!advanced_theta && on_chain.count(evidence_digest(*p->evidence()))) {
      double scale = cfg_.learning_rate / std::max<double>(1.0, r.participants.size());
      for (std::size_t k = 0; k < theta_.size(); ++k) theta_[k] -= scale * r.output[k];
      advanced_theta = true;
    }
  }
  if (added > 0 && !advanced_theta) ++result_.rounds_without_output;
}

void Runner::record_output(const UpdateProcess& p) {
  const AggregationResult& r = *p.result();
  result_.outputs.push_back({p.pid(), p.round(), r.output});
  Witness::Process w{p.pid(), p.round(), p.plan().args.theta, r.participants, {}};
  for (ClientId j : r.participants) w.updates.push_back(p.plaintexts().at(j));
  result_.witness.processes.push_back(std::move(w));
}

void Runner::record_side(const std::vector<UpdateProcess*>& spawned) {
  for (UpdateProcess* p : spawned) {
    if (p->status() == UpdateProcess::Status::kCompleted && p->result()) record_output(*p);
  }
}

RunResult Runner::run() {
  validate(cfg_);
  StrategyMatrix strategy = StrategyMatrix::from_name(cfg_.strategy_matrix, cfg_.n_round);
  ClientList bad = corrupted_clients(cfg_);
  corrupted_.insert(bad.begin(), bad.end());

  world_.platform = &platform_;
  world_.master_seed = cfg_.master_seed;
  world_.track_taint = cfg_.track_taint;
  world_.dropouts = DropoutSchedule(cfg_.master_seed, cfg_.n, cfg_.kappa, cfg_.beta);
  world_.clients.reserve(cfg_.n);
  for (ClientId j = 0; j < cfg_.n; ++j) {
    ClientBehavior b = corrupted_.count(j) ? ClientBehavior::kCorrupted : ClientBehavior::kHonest;
    world_.clients.emplace_back(j, cfg_.master_seed, b, cfg_.d, cfg_.points_per_client);
  }
  EnclaveConfig ec;
  ec.n_audit = cfg_.n_audit;
  ec.tau = cfg_.tau;
  ec.min_candidates = static_cast<std::uint32_t>(
      std::min<std::uint64_t>(cfg_.n, ceil_count(cfg_.kappa * cfg_.n)));
  ec.schema = cfg_.schema;
  ec.d = cfg_.d;
  ec.zeta = cfg_.zeta;
  ec.sigma = cfg_.sigma;
  ec.strategy = strategy;
  ec.overselect_margin = cfg_.overselect_margin;
  initialize_world(world_, ec);
  log_.genesis(chain_digest(world_.chain));
  theta_.assign(cfg_.d, 0.0);

  bool attacked = false;
  bool crashed = false;
  const AdversaryScript& adv = cfg_.adversary;
  for (iteration_ = 0; iteration_ < cfg_.attempted_rounds(); ++iteration_) {
    RoundIndex i = next_round_index(world_.chain);
    if (i >= cfg_.n_round) break;
    if (fork_pending_) {
      fork_pending_ = false;
      fork_iteration();
      continue;
    }
    if (adv.strategy != AdversaryStrategy::kHonest && !attacked && i >= adv.attack_round) {
      attacked = true;
      switch (adv.strategy) {
        case AdversaryStrategy::kFork: fork_iteration(); break;
        case AdversaryStrategy::kRollback: rollback_iteration(); break;
        case AdversaryStrategy::kReplay: replay_iteration(); break;
        case AdversaryStrategy::kPretendCrash: pretend_crash_iteration(); break;
        case AdversaryStrategy::kSybilFlood: sybil_iteration(); break;
        case AdversaryStrategy::kHonest: break;
      }
      continue;
    }
    bool crash = !crashed && adv.crash_round && *adv.crash_round == i;
    crashed = crashed || crash;
    honest_iteration(crash);
  }
  finish();
  return std::move(result_);
}

void Runner::finish() {
  result_.log = log_;
  result_.chain = world_.chain;
  result_.sizes = world_.sizes;

  Witness& w = result_.witness;
  w.n = cfg_.n;
  w.manufacturer_pk = platform_.manufacturer_public_key();
  w.noise_seed = inspect_sealed_state(platform_, world_.blob).noise_seed;
  w.sigma = cfg_.sigma;
  w.zeta = cfg_.zeta;
  w.d = cfg_.d;
  w.schema = cfg_.schema;
  w.strategy = world_.enclave_config.strategy.rows();

  result_.report = attack_report_from_log(log_, strategy_name(cfg_.adversary.strategy));
  for (const auto& p : processes_) {
    for (const auto& [j, why] : p->refusals()) {
      ++result_.report.refusals[std::string(refusal_name(why))];
    }
  }

  SafetyReport& s = result_.safety;
  LinearizabilityResult lin = check_linearizable(log_);
  s.linearizable = lin.linearizable;
  if (!lin.linearizable) s.violations.push_back("linearizability: " + lin.reason);
  IntegrityResult integ = check_integrity(log_, world_.chain, w);
  s.integrity = integ.ok;
  for (const std::string& v : integ.violations) s.violations.push_back("integrity: " + v);
  if (cfg_.track_taint && world_.transcript.leaked()) {
    s.no_taint_leak = false;
    s.violations.push_back("taint: an honest plaintext update reached the server");
  }
  for (const Client& c : world_.clients) {
    if (c.behavior() != ClientBehavior::kHonest) continue;
    for (const Digest& d : c.signed_digests()) {
      if (c.signatures_for(d) > 1) {
        s.honest_sign_once = false;
        s.violations.push_back("client " + std::to_string(c.index()) + " signed digest " +
                               short_hex(d) + " more than once");
      }
    }
  }
  result_.report.bypassed =
      result_.report.divergent_completions > 0 || !s.linearizable || !s.integrity;
}

}  // namespace

void validate(const WorldConfig& c) {
  auto unit = [](double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) config_error(std::string(name) + " must lie in [0,1]");
  };
  if (c.n == 0) config_error("n must be positive");
  unit(c.gamma, "gamma");
  unit(c.kappa, "kappa");
  unit(c.beta, "beta");
  if (c.kappa == 0.0) config_error("kappa must be positive");
  if (c.n_round == 0) config_error("n_round must be positive");
  if (c.rounds > c.n_round) config_error("rounds exceeds n_round");
  if (c.schema.n_round != c.n_round) config_error("schema n_round differs from n_round");
  if (c.n_audit == 0 || c.n_audit > c.n) config_error("n_audit must lie in [1, n]");
  if (2 * static_cast<std::uint64_t>(c.tau) <= c.n_audit || c.tau > c.n_audit) {
    config_error("tau must satisfy n_audit/2 < tau <= n_audit");
  }
  if (c.d == 0) config_error("d must be positive");
  if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) config_error("sigma must be > 0");
  if (!(c.zeta > 0.0) || !std::isfinite(c.zeta)) config_error("zeta must be > 0");
  if (c.cohort_size == 0) config_error("cohort_size must be positive");
  if (c.points_per_client == 0) config_error("points_per_client must be positive");
  if (!std::isfinite(c.learning_rate)) config_error("learning_rate must be finite");
  if (c.adversary.fork_width < 2) config_error("fork_width must be at least 2");
  if (c.adversary.attack_round >= c.n_round) config_error("attack_round outside [0, n_round)");
}

ClientList corrupted_clients(const WorldConfig& c) {
  std::uint64_t count = std::min<std::uint64_t>(c.n, ceil_count(c.gamma * c.n));
  ClientList all(c.n);
  for (ClientId j = 0; j < c.n; ++j) all[j] = j;
  ClientList out;
  PartyRng rng(c.master_seed, "corrupted");
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
  return out;
}

WorldConfig world_config_from_json(std::string_view text) {
  static const std::set<std::string> kKeys = {
      "n", "gamma", "kappa", "beta", "n_round", "rounds", "n_audit", "tau", "d", "sigma",
      "zeta", "schema", "strategy_matrix", "cohort_size", "overselect_margin",
      "points_per_client", "learning_rate", "record_participation", "track_taint",
      "master_seed", "adversary", "out"};
  static const std::set<std::string> kAdversaryKeys = {"strategy", "attack_round", "fork_width",
                                                       "crash_round"};
  WorldConfig c;
  try {
    json j = json::parse(text);
    if (!j.is_object()) config_error("config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (!kKeys.count(key)) config_error("unknown key '" + key + "'");
    }
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n", c.n);
    get("gamma", c.gamma);
    get("kappa", c.kappa);
    get("beta", c.beta);
    get("n_round", c.n_round);
    get("rounds", c.rounds);
    get("n_audit", c.n_audit);
    get("tau", c.tau);
    get("d", c.d);
    get("sigma", c.sigma);
    get("zeta", c.zeta);
    get("strategy_matrix", c.strategy_matrix);
    get("cohort_size", c.cohort_size);
    get("overselect_margin", c.overselect_margin);
    get("points_per_client", c.points_per_client);
    get("learning_rate", c.learning_rate);
    get("record_participation", c.record_participation);
    get("track_taint", c.track_taint);
    get("master_seed", c.master_seed);
    c.schema = j.contains("schema") ? parse_schema(j.at("schema"), c.n_round)
                                    : ParticipationSchema::once(c.n_round);
    if (j.contains("out") && !j.at("out").is_string() && !j.at("out").is_object()) {
      config_error("out must be a string or an object");
    }
    if (j.contains("adversary")) {
      const json& a = j.at("adversary");
      if (a.is_string()) {
        c.adversary.strategy = strategy_from_name(a.get<std::string>());
      } else if (a.is_object()) {
        for (const auto& [key, _] : a.items()) {
          if (!kAdversaryKeys.count(key)) config_error("unknown adversary key '" + key + "'");
        }
        if (a.contains("strategy")) {
          c.adversary.strategy = strategy_from_name(a.at("strategy").get<std::string>());
        }
        if (a.contains("attack_round")) {
          c.adversary.attack_round = a.at("attack_round").get<RoundIndex>();
        }
        if (a.contains("fork_width")) {
          c.adversary.fork_width = a.at("fork_width").get<std::uint32_t>();
        }
        if (a.contains("crash_round") && !a.at("crash_round").is_null()) {
          c.adversary.crash_round = a.at("crash_round").get<RoundIndex>();
        }
      } else {
        config_error("adversary must be a string or an object");
      }
    }
  } catch (const json::exception& e) {
    config_error(e.what());
  }
  validate(c);
  return c;
}

std::string world_config_to_json(const WorldConfig& c) {
  json adv = {{"strategy", strategy_name(c.adversary.strategy)},
              {"attack_round", c.adversary.attack_round},
              {"fork_width", c.adversary.fork_width},
              {"crash_round", c.adversary.crash_round ? json(*c.adversary.crash_round)
                                                      : json(nullptr)}};
  json j = {{"n", c.n},
            {"gamma", c.gamma},
            {"kappa", c.kappa},
            {"beta", c.beta},
            {"n_round", c.n_round},
            {"rounds", c.rounds},
            {"n_audit", c.n_audit},
            {"tau", c.tau},
            {"d", c.d},
            {"sigma", c.sigma},
            {"zeta", c.zeta},
            {"schema", schema_json(c.schema)},
            {"strategy_matrix", c.strategy_matrix},
            {"cohort_size", c.cohort_size},
            {"overselect_margin", c.overselect_margin},
            {"points_per_client", c.points_per_client},
            {"learning_rate", c.learning_rate},
            {"record_participation", c.record_participation},
            {"track_taint", c.track_taint},
            {"master_seed", c.master_seed},
            {"adversary", adv}};
  return j.dump(2);
}

std::string Witness::to_json() const {
  json procs = json::array();
  for (const Process& p : processes) {
    procs.push_back({{"pid", p.pid},
                     {"round", p.round},
                     {"theta", p.theta},
                     {"participants", p.participants},
                     {"updates", p.updates}});
  }
  json j = {{"n", n},
            {"manufacturer_pk", to_hex(manufacturer_pk)},
            {"noise_seed", noise_seed},
            {"sigma", sigma},
            {"zeta", zeta},
            {"d", d},
            {"schema", schema_json(schema)},
            {"n_round", schema.n_round},
            {"strategy", strategy},
            {"processes", procs}};
  return j.dump();
}

Witness Witness::from_json(std::string_view text) {
  Witness w;
  try {
    json j = json::parse(text);
    w.n = j.at("n").get<std::uint32_t>();
    w.manufacturer_pk = fixed_from_hex<PublicKey>(j.at("manufacturer_pk").get<std::string>());
    w.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    w.sigma = j.at("sigma").get<double>();
    w.zeta = j.at("zeta").get<double>();
    w.d = j.at("d").get<std::uint32_t>();
    w.schema = parse_schema(j.at("schema"), j.at("n_round").get<std::uint32_t>());
    w.strategy = j.at("strategy").get<std::vector<std::vector<double>>>();
    for (const json& p : j.at("processes")) {
      Process q;
      q.pid = p.at("pid").get<ProcessId>();
      q.round = p.at("round").get<RoundIndex>();
      q.theta = p.at("theta").get<ModelVector>();
      q.participants = p.at("participants").get<ClientList>();
      q.updates = p.at("updates").get<std::vector<ModelVector>>();
      if (q.updates.size() != q.participants.size()) {
        log_error("witness process " + std::to_string(q.pid) + " has mismatched updates");
      }
      w.processes.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    log_error(std::string("witness: ") + e.what());
  } catch (const std::invalid_argument& e) {
    log_error(std::string("witness: ") + e.what());
  } catch (const ProtocolError& e) {
    if (e.code() == Errc::kLogMalformed) throw;
    log_error(std::string("witness: ") + e.what());
  }
  return w;
}

RunResult run(const WorldConfig& config) {
  Runner runner(config);
  return runner.run();
}

std::string summary_json(const RunResult& r, int indent) {
  auto sizes = [](const std::set<std::size_t>& s) {
    return json(std::vector<std::size_t>(s.begin(), s.end()));
  };
  const AttackReport& a = r.report;
  json report = {{"strategy", a.strategy},
                 {"processes_attempted", a.processes_attempted},
                 {"processes_completed", a.processes_completed},
                 {"processes_aborted", a.processes_aborted},
                 {"max_outputs_per_digest", a.max_outputs_per_digest},
                 {"divergent_completions", a.divergent_completions},
                 {"bypassed", a.bypassed},
                 {"refusals", a.refusals},
                 {"abort_reasons", a.abort_reasons}};
  json j = {{"rounds_completed", r.rounds_completed},
            {"rounds_aborted", r.rounds_aborted},
            {"rounds_without_output", r.rounds_without_output},
            {"recoveries", r.recoveries},
            {"chain_length", r.chain.size()},
            {"outputs", r.outputs.size()},
            {"attack_bypassed", a.bypassed},
            {"attack", report},
            {"safety",
             {{"ok", r.safety.ok()},
              {"linearizable", r.safety.linearizable},
              {"integrity", r.safety.integrity},
              {"no_taint_leak", r.safety.no_taint_leak},
              {"honest_sign_once", r.safety.honest_sign_once},
              {"violations", r.safety.violations}}},
            {"message_sizes",
             {{"audit_broadcast", sizes(r.sizes.audit_broadcast)},
              {"secagg_broadcast", sizes(r.sizes.secagg_broadcast)},
              {"client_control", sizes(r.sizes.client_control)}}}};
  return j.dump(indent);
}

AttackReport attack_report_from_log(const EventLog& log, std::string_view strategy) {
  ParsedLog parsed = parse_log(log);
  AttackReport a;
  a.strategy = std::string(strategy);
  std::map<Digest, std::set<Digest>> successors;
  for (const auto& [pid, p] : parsed.procs) {
    ++a.processes_attempted;
    if (!p.terminal) continue;
    if (p.terminal->event == EventKind::kAborted) {
      ++a.processes_aborted;
      ++a.abort_reasons[p.terminal->reason];
      continue;
    }
    ++a.processes_completed;
    successors[p.invoke->loaded_digest].insert(p.terminal->evidence_digest);
  }
  for (const auto& [loaded, next] : successors) {
    a.max_outputs_per_digest = std::max<std::uint64_t>(a.max_outputs_per_digest, next.size());
    a.divergent_completions += next.size() - 1;
  }
  a.bypassed = a.divergent_completions > 0;
  return a;
}

LinearizabilityResult check_linearizable(const EventLog& log) {
  ParsedLog parsed = parse_log(log);
  struct Transition {
    Digest loaded;
    Digest emitted;
    RoundIndex round = 0;
    std::uint64_t invoke_ts = 0;
    std::uint64_t respond_ts = 0;
    std::vector<ProcessId> pids;
  };
  std::vector<Transition> ts;
  std::map<std::tuple<Digest, Digest, RoundIndex>, std::size_t> merged;
  for (const auto& [pid, p] : parsed.procs) {
    if (!completed(p)) continue;
    auto key = std::make_tuple(p.invoke->loaded_digest, p.terminal->evidence_digest,
                               p.invoke->round);
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged.emplace(key, ts.size());
      ts.push_back({p.invoke->loaded_digest, p.terminal->evidence_digest, p.invoke->round,
                    p.invoke->ts, p.terminal->ts, {pid}});
    } else {
      Transition& t = ts[it->second];
      t.invoke_ts = std::min(t.invoke_ts, p.invoke->ts);
      t.respond_ts = std::min(t.respond_ts, p.terminal->ts);
      t.pids.push_back(pid);
    }
  }
  const std::size_t n = ts.size();
  std::vector<std::vector<std::size_t>> before(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && ts[a].respond_ts < ts[b].invoke_ts) before[b].push_back(a);
    }
  }

  std::vector<bool> used(n, false);
  std::vector<std::size_t> order;
  std::vector<std::size_t> deepest;
  std::set<std::pair<std::vector<bool>, Digest>> dead;
  std::function<bool(const Digest&, RoundIndex)> search = [&](const Digest& head,
                                                             RoundIndex round) {
    if (order.size() == n) return true;
    if (dead.count({used, head})) return false;
    for (std::size_t t = 0; t < n; ++t) {
      if (used[t] || ts[t].loaded != head || ts[t].round != round) continue;
      bool ready = std::all_of(before[t].begin(), before[t].end(),
                               [&](std::size_t p) { return used[p]; });
      if (!ready) continue;
      used[t] = true;
      order.push_back(t);
      if (order.size() > deepest.size()) deepest = order;
      if (search(ts[t].emitted, round + 1)) return true;
      order.pop_back();
      used[t] = false;
    }
    dead.insert({used, head});
    return false;
  };

  LinearizabilityResult out;
  out.linearizable = search(parsed.genesis, 0);
  if (out.linearizable) {
    for (std::size_t t : order) {
      std::vector<ProcessId> pids = ts[t].pids;
      std::sort(pids.begin(), pids.end());
      out.order.insert(out.order.end(), pids.begin(), pids.end());
    }
    return out;
  }
  for (std::size_t t : deepest) out.order.push_back(*std::min_element(ts[t].pids.begin(),
                                                                      ts[t].pids.end()));
  std::string prefix;
  for (ProcessId pid : out.order) prefix += (prefix.empty() ? "" : ",") + std::to_string(pid);
  std::vector<ProcessId> stuck;
  for (std::size_t t = 0; t < n; ++t) {
    if (std::find(deepest.begin(), deepest.end(), t) == deepest.end()) {
      stuck.push_back(*std::min_element(ts[t].pids.begin(), ts[t].pids.end()));
    }
  }
  std::sort(stuck.begin(), stuck.end());
  std::string rest;
  for (ProcessId pid : stuck) rest += (rest.empty() ? "" : ",") + std::to_string(pid);
  out.reason = "no sequential order of " + std::to_string(n) +
               " completed processes; longest replayable prefix [" + prefix +
               "] cannot be followed by [" + rest + "]";
  return out;
}

IntegrityResult check_integrity(const EventLog& log, const EvidenceChain& chain,
                                const Witness& witness) {
  ParsedLog parsed = parse_log(log);
  IntegrityResult out;
  auto fail = [&](std::string v) {
    out.ok = false;
    out.violations.push_back(std::move(v));
  };

  ChainVerdict verdict = verify_chain(chain, witness.manufacturer_pk, planner_code_id());
  if (!verdict) {
    fail("chain: " + std::string(chain_fault_name(verdict.fault)) + " at entry " +
         std::to_string(verdict.index));
  }

  std::vector<std::set<RoundIndex>> history(witness.n);
  std::set<Digest> on_chain;
  for (const Evidence& e : chain.entries()) {
    on_chain.insert(evidence_digest(e));
    if (e.kind != EvidenceKind::kUpdate && e.kind != EvidenceKind::kRecovery) continue;
    RoundIndex r = e.round_index.value_or(0);
    for (ClientId j : e.cohort) {
      if (j >= witness.n) {
        fail("round " + std::to_string(r) + ": client " + std::to_string(j) + " out of range");
        continue;
      }
      history[j].insert(r);
      if (!witness.schema.permits(history[j])) {
        fail("round " + std::to_string(r) + ": client " + std::to_string(j) + " breaks " +
             witness.schema.describe());
      }
    }
  }

  std::map<ProcessId, const Witness::Process*> by_pid;
  for (const Witness::Process& p : witness.processes) by_pid[p.pid] = &p;
  std::optional<StrategyMatrix> c;
  try {
    c.emplace(witness.strategy);
  } catch (const ProtocolError& e) {
    fail(std::string("witness strategy matrix: ") + e.what());
  }
  NoiseMatrix z(witness.noise_seed, witness.sigma, witness.d);

  for (const auto& [pid, p] : parsed.procs) {
    if (!completed(p)) continue;
    RoundIndex r = p.invoke->round;
    std::string where = "round " + std::to_string(r) + ": process " + std::to_string(pid);
    if (!on_chain.count(p.terminal->evidence_digest)) {
      fail(where + " emitted evidence that is not on the chain");
    }
    const auto& output = p.terminal->output;
    if (!output) continue;
    if (!p.terminal->output_digest || *p.terminal->output_digest != output_digest(*output)) {
      fail(where + " output digest does not match its output");
    }
    auto it = by_pid.find(pid);
    if (it == by_pid.end()) {
      fail(where + " has no witness record");
      continue;
    }
    const Witness::Process& w = *it->second;
    const ClientList& cohort = p.invoke->cohort;
    for (ClientId j : w.participants) {
      if (!std::binary_search(cohort.begin(), cohort.end(), j)) {
        fail(where + " aggregated client " + std::to_string(j) + " outside its cohort");
      }
    }
    if (!c || r >= c->size()) {
      fail(where + " cannot be recomputed");
      continue;
    }
    ModelVector expected(witness.d, 0.0);
    for (const ModelVector& u : w.updates) {
      ModelVector g = clip(u, witness.zeta);
      if (g.size() != expected.size()) {
        fail(where + " witness update has wrong dimension");
        break;
      }
      for (std::size_t k = 0; k < g.size(); ++k) expected[k] += g[k];
    }
    ModelVector noise = correlated_noise(z, *c, r, witness.zeta);
    for (std::size_t k = 0; k < expected.size(); ++k) expected[k] += noise[k];
    if (!close(*output, expected, 1e-9)) {
      fail(where + " output differs from the recomputed sum of clipped updates plus noise");
    }
  }
  return out;
}

std::vector<std::optional<ModelVector>> ideal_oracle(const IdealConfig& config,
                                                     const std::vector<IdealQuery>& script) {
  const std::size_t n = config.datasets.size();
  ParticipationHistory h(n);
  std::set<RoundIndex> used;
  NoiseMatrix z(config.noise_seed, config.sigma, config.d);
  std::vector<std::optional<ModelVector>> out;
  out.reserve(script.size());

  for (const IdealQuery& q : script) {
    bool valid = q.k < config.schema.n_round && q.k < config.strategy.size() &&
                 !used.count(q.k) && q.theta.size() == config.d;
    std::set<ClientId> distinct(q.cohort.begin(), q.cohort.end());
    valid = valid && distinct.size() == q.cohort.size();
    if (valid) {
      ClientList qualified = f_qualify(config.schema, h, q.k);
      for (ClientId j : distinct) {
        if (j >= n || !std::binary_search(qualified.begin(), qualified.end(), j)) valid = false;
        if (config.corrupted.count(j) &&
            (!q.corrupted_updates.count(j) || q.corrupted_updates.at(j).size() != config.d)) {
          valid = false;
        }
      }
    }
    if (!valid) {
      out.push_back(std::nullopt);
      continue;
    }
    for (ClientId j : distinct) h.add(j, q.k);
    used.insert(q.k);
    ModelVector sum(config.d, 0.0);
    for (ClientId j : distinct) {
      ModelVector g = config.corrupted.count(j)
                          ? q.corrupted_updates.at(j)
                          : clip(local_update(config.datasets[j], q.theta, config.zeta),
                                 config.zeta);
      for (std::size_t k = 0; k < config.d; ++k) sum[k] += g[k];
    }
    ModelVector noise = correlated_noise(z, config.strategy, q.k, config.zeta);
    for (std::size_t k = 0; k < config.d; ++k) sum[k] += noise[k];
    out.push_back(std::move(sum));
  }
  return out;
}

IdealConfig ideal_config_for(const WorldConfig& config, const Witness& witness) {
  IdealConfig ic;
  ic.schema = config.schema;
  ic.strategy = StrategyMatrix(witness.strategy);
  ic.sigma = witness.sigma;
  ic.zeta = witness.zeta;
  ic.d = witness.d;
  ic.noise_seed = witness.noise_seed;
  ClientList bad = corrupted_clients(config);
  ic.corrupted.insert(bad.begin(), bad.end());
  for (ClientId j = 0; j < config.n; ++j) {
    ClientBehavior b = ic.corrupted.count(j) ? ClientBehavior::kCorrupted : ClientBehavior::kHonest;
    ic.datasets.push_back(Client(j, config.master_seed, b, config.d, config.points_per_client)
                              .dataset());
  }
  return ic;
}

std::vector<IdealQuery> ideal_script_for(const WorldConfig& config, const Witness& witness) {
  std::set<ClientId> bad;
  for (ClientId j : corrupted_clients(config)) bad.insert(j);
  std::vector<IdealQuery> script;
  for (const Witness::Process& p : witness.processes) {
    IdealQuery q;
    q.cohort = p.participants;
    q.k = p.round;
    q.theta = p.theta;
    // What the simulator forwards for a corrupted client is the value the
    // real enclave would have summed, i.e. after clipping.
    for (std::size_t k = 0; k < p.participants.size(); ++k) {
      if (bad.count(p.participants[k])) {
        q.corrupted_updates[p.participants[k]] = clip(p.updates[k], witness.zeta);
      }
    }
    script.push_back(std::move(q));
  }
  return script;
}

}  // namespace planner
