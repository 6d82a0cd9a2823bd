#include "cli.h"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "planner/analysis.h"
#include "planner/errors.h"
#include "planner/planner_enclave.h"
#include "planner/simulator.h"

namespace planner::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProtocolError(Errc::kConfigInvalid, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ProtocolError(Errc::kConfigInvalid, "cannot write " + path.string());
  f << text;
}

// --- optimize --------------------------------------------------------------

struct OptimizeFlags {
  std::uint64_t n = 10'000'000;
  double gamma = 0.1;
  double beta = 0.1;
  double kappa = 1.0;
  std::uint32_t rounds = 10'000;
  double p_privacy = 1e-8;
  double p_interrupt = 1e-8;
  std::uint32_t search_limit = 0;
};

int cmd_optimize(const OptimizeFlags& f, std::ostream& out, std::ostream& err) {
  try {
    OptimizeResult r = optimize_params(f.n, f.gamma, f.kappa, f.beta, f.rounds, f.p_privacy,
                                       f.p_interrupt, f.search_limit);
    json j = {{"n_audit", r.n_audit},
              {"tau", r.tau},
              {"delta_privacy", r.delta_privacy},
              {"delta_interrupt", r.delta_interrupt},
              {"n", f.n},
              {"gamma", f.gamma},
              {"beta", f.beta},
              {"kappa", f.kappa},
              {"n_round", f.rounds},
              {"p_privacy", f.p_privacy},
              {"p_interrupt", f.p_interrupt}};
    out << j.dump() << "\n";
    return kExitOk;
  } catch (const ProtocolError& e) {
    if (e.code() == Errc::kNoFeasibleParams) {
      out << json{{"error", "NoFeasibleParams"}, {"detail", e.what()}}.dump() << "\n";
      return kExitInfeasible;
    }
    err << "optimize: " << e.what() << "\n";
    return kExitUsage;
  }
}

// --- sweep -----------------------------------------------------------------

int cmd_sweep(const std::string& preset, const std::string& custom, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
  try {
    if (preset.empty() == custom.empty()) {
      throw ProtocolError(Errc::kConfigInvalid, "give exactly one of --spec or --custom");
    }
    SweepSpec spec = preset.empty() ? sweep_spec_from_json(read_file(custom))
                                    : sweep_preset(preset);
    std::vector<SweepRow> rows = sweep(spec);
    if (out_path == "-") {
      write_sweep_csv(out, rows);
    } else {
      std::ofstream f(out_path);
      if (!f) throw ProtocolError(Errc::kConfigInvalid, "cannot write " + out_path);
      write_sweep_csv(f, rows);
    }
    return kExitOk;
  } catch (const ProtocolError& e) {
    err << "sweep: " << e.what() << "\n";
    return kExitUsage;
  }
}

// --- simulate --------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 std::string out_dir, std::ostream& out, std::ostream& err) {
  RunResult r;
  try {
    std::string text = read_file(config_path);
    WorldConfig cfg = world_config_from_json(text);
    if (seed) cfg.master_seed = *seed;
    if (out_dir.empty()) {
      json j = json::parse(text);
      if (j.contains("out") && j.at("out").is_string()) out_dir = j.at("out").get<std::string>();
    }
    if (out_dir.empty()) throw ProtocolError(Errc::kConfigInvalid, "no output directory");
    r = run(cfg);
    fs::create_directories(out_dir);
    fs::path dir(out_dir);
    write_file(dir / "events.jsonl", r.log.to_jsonl());
    write_file(dir / "chain.json", chain_to_json(r.chain));
    write_file(dir / "witness.json", r.witness.to_json());
    write_file(dir / "summary.json", summary_json(r) + "\n");
  } catch (const ProtocolError& e) {
    err << "simulate: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "simulate: " << e.what() << "\n";
    return kExitUsage;
  }
  out << "rounds_completed=" << r.rounds_completed << " rounds_aborted=" << r.rounds_aborted
      << " rounds_without_output=" << r.rounds_without_output
      << " recoveries=" << r.recoveries << " chain_length=" << r.chain.size()
      << " attack_bypassed=" << (r.report.bypassed ? "true" : "false")
      << " safety=" << (r.safety.ok() ? "ok" : "FAILED") << "\n";
  for (const std::string& v : r.safety.violations) err << "violation: " << v << "\n";
  return r.safety.ok() ? kExitOk : kExitUnsafe;
}

// --- check -----------------------------------------------------------------

int cmd_check(const std::string& events_path, const std::string& chain_path,
              std::string witness_path, std::ostream& out, std::ostream& err) {
  EventLog log;
  std::optional<EvidenceChain> chain;
  std::optional<Witness> witness;
  try {
    log = EventLog::from_jsonl(read_file(events_path));
    if (!chain_path.empty()) {
      chain = chain_from_json(read_file(chain_path));
      if (witness_path.empty()) {
        witness_path = (fs::path(chain_path).parent_path() / "witness.json").string();
      }
      witness = Witness::from_json(read_file(witness_path));
    }
  } catch (const ProtocolError& e) {
    err << "check: " << e.what() << "\n";
    return kExitUsage;
  }

  bool ok = true;
  try {
    LinearizabilityResult lin = check_linearizable(log);
    std::string order;
    for (ProcessId pid : lin.order) order += (order.empty() ? "" : ",") + std::to_string(pid);
    if (lin.linearizable) {
      out << "linearizable: pass (order " << order << ")\n";
    } else {
      ok = false;
      out << "linearizable: FAIL: " << lin.reason << "\n";
    }
    if (chain) {
      IntegrityResult integ = check_integrity(log, *chain, *witness);
      if (integ.ok) {
        out << "integrity: pass\n";
      } else {
        ok = false;
        out << "integrity: FAIL\n";
        for (const std::string& v : integ.violations) out << "  " << v << "\n";
      }
    }
  } catch (const ProtocolError& e) {
    err << "check: " << e.what() << "\n";
    return kExitUsage;
  }
  return ok ? kExitOk : kExitUnsafe;
}

// --- attack ----------------------------------------------------------------

struct AttackFlags {
  std::string strategy;
  std::uint64_t trials = 200;
  std::uint64_t seed = 1;
  std::string config;
  std::optional<std::uint32_t> n;
  std::optional<double> gamma;
  std::optional<double> kappa;
  std::optional<double> beta;
  std::optional<std::uint32_t> n_audit;
  std::optional<std::uint32_t> tau;
  std::optional<std::uint32_t> rounds;
  std::uint64_t e2e_trials = 100;
};

WorldConfig attack_world(const AttackFlags& f, AdversaryStrategy s) {
  WorldConfig c;
  if (!f.config.empty()) {
    c = world_config_from_json(read_file(f.config));
  } else if (s == AdversaryStrategy::kSybilFlood) {
    c.n = 100;
    c.gamma = 0.2;
    c.n_audit = 5;
    c.tau = 4;
  }
  if (f.n) c.n = *f.n;
  if (f.gamma) c.gamma = *f.gamma;
  if (f.kappa) c.kappa = *f.kappa;
  if (f.beta) c.beta = *f.beta;
  if (f.n_audit) c.n_audit = *f.n_audit;
  if (f.tau) c.tau = *f.tau;
  if (f.rounds) {
    c.n_round = *f.rounds;
    c.schema.n_round = *f.rounds;
  }
  c.adversary.strategy = s;
  validate(c);
  return c;
}

struct Tally {
  std::uint64_t runs = 0;
  std::uint64_t successes = 0;
  std::uint64_t divergent = 0;
  std::uint64_t safety_failures = 0;
  std::uint64_t attempted = 0;
  std::uint64_t completed = 0;
  std::uint64_t aborted = 0;
  std::map<std::string, std::uint64_t> abort_reasons;
  std::map<std::string, std::uint64_t> refusals;

  void add(const RunResult& r) {
    ++runs;
    if (r.report.bypassed) ++successes;
    divergent += r.report.divergent_completions;
    if (!r.safety.ok()) ++safety_failures;
    attempted += r.report.processes_attempted;
    completed += r.report.processes_completed;
    aborted += r.report.processes_aborted;
    for (const auto& [k, v] : r.report.abort_reasons) abort_reasons[k] += v;
    for (const auto& [k, v] : r.report.refusals) refusals[k] += v;
  }

  json to_json() const {
    return {{"runs", runs},
            {"successes", successes},
            {"divergent_completions", divergent},
            {"safety_failures", safety_failures},
            {"processes_attempted", attempted},
            {"processes_completed", completed},
            {"processes_aborted", aborted},
            {"abort_reasons", abort_reasons},
            {"refusals", refusals}};
  }
};

Tally run_trials(WorldConfig cfg, std::uint64_t trials, std::uint64_t seed) {
  Tally t;
  for (std::uint64_t k = 0; k < trials; ++k) {
    cfg.master_seed = PartyRng(seed, "attack-trial", k).seed();
    t.add(run(cfg));
  }
  return t;
}

// Per-round quorum corruption under a sybil flood: the flood alone is refused
// for lack of candidates, so the server pads it to the minimum and the
// enclave draws auditors from that pool.
json sybil_calibration(const WorldConfig& cfg, std::uint64_t trials, std::uint64_t seed) {
  ClientList bad = corrupted_clients(cfg);
  std::set<ClientId> bad_set(bad.begin(), bad.end());
  auto min_candidates = static_cast<std::uint32_t>(
      std::min<std::uint64_t>(cfg.n, ceil_count(cfg.kappa * cfg.n)));
  ClientList padded = bad;
  for (ClientId j = 0; j < cfg.n && padded.size() < min_candidates; ++j) {
    if (!bad_set.count(j)) padded.push_back(j);
  }
  std::sort(padded.begin(), padded.end());

  const std::int64_t threshold = 2 * static_cast<std::int64_t>(cfg.tau) - cfg.n_audit;
  std::uint64_t flood_refused = 0;
  std::uint64_t corrupted_quorums = 0;
  std::uint64_t fork_capable = 0;
  for (std::uint64_t k = 0; k < trials; ++k) {
    PartyRng rng(seed, "sybil-trial", k);
    try {
      f_select(bad, cfg.n_audit, min_candidates, rng);
    } catch (const ProtocolError& e) {
      if (e.code() != Errc::kTooFewCandidates) throw;
      ++flood_refused;
    }
    ClientList auditors = f_select(padded, cfg.n_audit, min_candidates, rng);
    std::int64_t a = std::count_if(auditors.begin(), auditors.end(),
                                   [&](ClientId j) { return bad_set.count(j) > 0; });
    if (a > threshold) ++corrupted_quorums;
    if (a >= threshold) ++fork_capable;
  }
  FailureParams p{cfg.n, cfg.gamma, cfg.kappa, cfg.beta, cfg.n_audit, cfg.tau, 1};
  double predicted = privacy_round_term(p);
  double rate = static_cast<double>(corrupted_quorums) / static_cast<double>(trials);
  double se = std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(trials));
  double z = se > 0.0 ? (rate - predicted) / se : (rate == predicted ? 0.0 : INFINITY);
  return {{"trials", trials},
          {"flood_refused", flood_refused},
          {"quorum_corruptions", corrupted_quorums},
          {"empirical_rate", rate},
          {"predicted_round_term", predicted},
          {"std_error", se},
          {"z_score", z},
          {"within_3_std_errors", std::abs(z) <= 3.0},
          {"fork_capable_rate", static_cast<double>(fork_capable) / static_cast<double>(trials)}};
}

int cmd_attack(const AttackFlags& f, std::ostream& out, std::ostream& err) {
  try {
    AdversaryStrategy s = strategy_from_name(f.strategy);
    if (s == AdversaryStrategy::kHonest) {
      throw ProtocolError(Errc::kConfigInvalid, "honest is not an attack");
    }
    if (f.trials == 0) throw ProtocolError(Errc::kConfigInvalid, "--trials must be positive");
    WorldConfig cfg = attack_world(f, s);
    json j = {{"strategy", strategy_name(s)},
              {"seed", f.seed},
              {"n", cfg.n},
              {"gamma", cfg.gamma},
              {"n_audit", cfg.n_audit},
              {"tau", cfg.tau}};
    bool unsafe = false;
    if (s == AdversaryStrategy::kSybilFlood) {
      j["calibration"] = sybil_calibration(cfg, f.trials, f.seed);
      Tally t = run_trials(cfg, f.e2e_trials, f.seed);
      j["end_to_end"] = t.to_json();
      j["successes"] = t.successes;
      j["trials"] = f.trials;
      unsafe = cfg.gamma == 0.0 && t.successes > 0;
    } else {
      Tally t = run_trials(cfg, f.trials, f.seed);
      j.update(t.to_json());
      j["trials"] = f.trials;
      unsafe = t.successes > 0 || t.safety_failures > 0;
    }
    out << j.dump(2) << "\n";
    return unsafe ? kExitUnsafe : kExitOk;
  } catch (const ProtocolError& e) {
    err << "attack: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planner protocol simulator and analysis toolkit", "planner"};
  app.require_subcommand(1);

  OptimizeFlags of;
  auto* optimize = app.add_subcommand("optimize", "Smallest auditor count meeting both targets");
  optimize->add_option("--n", of.n, "Number of clients");
  optimize->add_option("--gamma", of.gamma, "Corrupted fraction");
  optimize->add_option("--beta", of.beta, "Dropout fraction of the candidate pool");
  optimize->add_option("--kappa", of.kappa, "Candidate fraction");
  optimize->add_option("--rounds", of.rounds, "Number of rounds");
  optimize->add_option("--p-privacy", of.p_privacy, "Target for delta_privacy");
  optimize->add_option("--p-interrupt", of.p_interrupt, "Target for delta_interrupt");
  optimize->add_option("--search-limit", of.search_limit, "Largest n_audit tried (0: default)");

  std::string preset, custom, sweep_out = "-";
  auto* sweep_cmd = app.add_subcommand("sweep", "Write a parameter sweep as CSV");
  sweep_cmd->add_option("--spec", preset, "fig3left | fig3right | fig4");
  sweep_cmd->add_option("--custom", custom, "JSON sweep specification");
  sweep_cmd->add_option("--out", sweep_out, "CSV path, - for standard output");

  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Run one simulated deployment");
  simulate->add_option("--config", sim_config, "World configuration JSON")->required();
  simulate->add_option("--seed", sim_seed, "Master seed (overrides the config)");
  simulate->add_option("--out", sim_out, "Output directory");

  std::string events, chain, witness;
  auto* check = app.add_subcommand("check", "Check a recorded run");
  check->add_option("--events", events, "events.jsonl")->required();
  check->add_option("--chain", chain, "chain.json");
  check->add_option("--witness", witness, "witness.json (default: next to the chain)");

  AttackFlags af;
  auto* attack = app.add_subcommand("attack", "Run an adversary script over many seeds");
  attack->add_option("--strategy", af.strategy, "fork | rollback | replay | sybil | pretend-crash")
      ->required();
  attack->add_option("--trials", af.trials, "Number of seeded trials");
  attack->add_option("--seed", af.seed, "Base seed");
  attack->add_option("--config", af.config, "Base world configuration JSON");
  attack->add_option("--n", af.n);
  attack->add_option("--gamma", af.gamma);
  attack->add_option("--kappa", af.kappa);
  attack->add_option("--beta", af.beta);
  attack->add_option("--n-audit", af.n_audit);
  attack->add_option("--tau", af.tau);
  attack->add_option("--rounds", af.rounds);
  attack->add_option("--e2e-trials", af.e2e_trials, "End-to-end runs for sybil");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*optimize) return cmd_optimize(of, out, err);
  if (*sweep_cmd) return cmd_sweep(preset, custom, sweep_out, out, err);
  if (*simulate) return cmd_simulate(sim_config, sim_seed, sim_out, out, err);
  if (*check) return cmd_check(events, chain, witness, out, err);
  if (*attack) return cmd_attack(af, out, err);
  return kExitUsage;
}

}  // namespace planner::cli
