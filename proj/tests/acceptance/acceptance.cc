// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "planner/analysis.h"
#include "planner/errors.h"
#include "planner/simulator.h"

#ifdef PLANNER_HAVE_CLI
#include "cli.h"
#endif

namespace planner {
namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- independent helpers ----

long double choose(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0.0L;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / i;
  return r;
}

// P[X > t] for X ~ Hypergeometric(N, K, draws), by direct summation.
long double tail_above(std::uint64_t N, std::uint64_t K, std::uint64_t draws, std::int64_t t) {
  long double s = 0.0L;
  for (std::uint64_t x = 0; x <= draws; ++x) {
    if (static_cast<std::int64_t>(x) > t) s += choose(K, x) * choose(N - K, draws - x);
  }
  return s / choose(N, draws);
}

// Counts auditor subsets of {0..pool-1} (the first `bad` are marked) with
// more than t marked members.
std::pair<std::uint64_t, std::uint64_t> enumerate(std::uint32_t pool, std::uint32_t bad,
                                                  std::uint32_t draws, std::int64_t t) {
  std::uint64_t hit = 0, all = 0;
  for (std::uint32_t mask = 0; mask < (1u << pool); ++mask) {
    if (static_cast<std::uint32_t>(__builtin_popcount(mask)) != draws) continue;
    ++all;
    std::int64_t marked = __builtin_popcount(mask & ((1u << bad) - 1u));
    if (marked > t) ++hit;
  }
  return {hit, all};
}

// ---- 1 ----

Verdict ac1() {
  auto t0 = Clock::now();
  OptimizeResult r = optimize_params(10'000'000, 0.1, 1.0, 0.1, 10'000, 1e-8, 1e-8);
  double dt = seconds_since(t0);
  Verdict v;
  v.pass = r.n_audit == 129 && dt < 30.0;
  v.detail = "n_audit=" + std::to_string(r.n_audit) + " tau=" + std::to_string(r.tau) +
             " (want 129) time=" + fmt("%.3fs", dt);
  return v;
}

// ---- 2 ----

Verdict ac2() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.0, 0.45);
  std::uniform_real_distribution<double> kap(0.05, 1.0);
  int bad = 0;
  for (int k = 0; k < 100; ++k) {
    FailureParams p;
    p.n = 10 + rng() % 1'000'000;
    p.kappa = kap(rng);
    p.gamma = frac(rng);
    p.beta = frac(rng);
    std::uint64_t pool = std::max<std::uint64_t>(1, floor_count(p.kappa * p.n));
    p.n_audit = 1 + static_cast<std::uint32_t>(rng() % std::min<std::uint64_t>(pool, 500));
    p.tau = p.n_audit / 2 + 1 + static_cast<std::uint32_t>(rng() % ((p.n_audit + 1) / 2));
    p.tau = std::min(p.tau, p.n_audit);
    p.n_round = 1 + static_cast<std::uint32_t>(rng() % 100'000);
    FailureParams zg = p, zb = p;
    zg.gamma = 0.0;
    zb.beta = 0.0;
    if (delta_privacy(zg) != 0.0) ++bad;
    if (delta_interrupt(zb) != 0.0) ++bad;
  }
  double dt = seconds_since(t0);
  return {bad == 0 && dt < 1.0,
          "nonzero=" + std::to_string(bad) + " of 200 time=" + fmt("%.3fs", dt)};
}

// ---- 3 ----

Verdict ac3() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;

  FailureParams priv{10, 0.2, 1.0, 0.0, 3, 2, 1};
  FailureParams intr{10, 0.0, 1.0, 0.3, 3, 2, 1};
  auto [ph, pa] = enumerate(10, 2, 3, 2 * 2 - 3);
  auto [ih, ia] = enumerate(10, 3, 3, 3 - 2);
  double pe = static_cast<double>(ph) / static_cast<double>(pa);
  double ie = static_cast<double>(ih) / static_cast<double>(ia);
  bool exact = ph * 15 == pa && ih * 60 == ia * 11 && privacy_round_term(priv) == pe &&
               interrupt_round_term(intr) == ie;
  ok = ok && exact;
  d << "enum=" << ph << "/" << pa << "," << ih << "/" << ia << (exact ? " exact" : " MISMATCH");

  struct Fixture {
    FailureMode mode;
    FailureParams p;
  };
  std::vector<Fixture> fx;
  for (std::uint64_t n : {10u, 12u, 15u, 20u, 30u}) {
    for (auto [na, tau] : {std::pair{3u, 2u}, {5u, 3u}, {5u, 4u}}) {
      if (na > n) continue;
      fx.push_back({FailureMode::kPrivacy, {n, 0.25, 1.0, 0.0, na, tau, 1}});
      fx.push_back({FailureMode::kInterrupt, {n, 0.0, 0.8, 0.3, na, tau, 1}});
    }
  }
  int worst_fixture = -1;
  double worst = 0.0;
  int over = 0;
  for (std::size_t k = 0; k < fx.size(); ++k) {
    const Fixture& f = fx[k];
    double closed = f.mode == FailureMode::kPrivacy ? privacy_round_term(f.p)
                                                    : interrupt_round_term(f.p);
    // Independent long-double tail as a cross-check of the closed form.
    FailureCounts c = failure_counts(f.p);
    long double ref = f.mode == FailureMode::kPrivacy
                          ? tail_above(c.pool, c.corrupted, f.p.n_audit,
                                       2 * static_cast<std::int64_t>(f.p.tau) - f.p.n_audit)
                          : tail_above(c.pool, c.dropouts, f.p.n_audit,
                                       static_cast<std::int64_t>(f.p.n_audit) - f.p.tau);
    if (std::abs(static_cast<long double>(closed) - ref) > 1e-12L) ++over;
    McEstimate mc = mc_round_failure(f.mode, f.p, 100'000, 1000 + k);
    double se = std::sqrt(closed * (1.0 - closed) / 100'000.0);
    double z = se > 0 ? std::abs(mc.estimate - closed) / se : (mc.estimate == closed ? 0 : 1e9);
    if (z > worst) {
      worst = z;
      worst_fixture = static_cast<int>(k);
    }
    if (z > 3.0) ++over;
  }
  double dt = seconds_since(t0);
  ok = ok && over == 0 && fx.size() >= 20 && dt < 60.0;
  d << " fixtures=" << fx.size() << " outside=" << over << " worst_z=" << fmt("%.2f", worst)
    << " (#" << worst_fixture << ") time=" << fmt("%.2fs", dt);
  return {ok, d.str()};
}

// ---- 4 ----

Verdict ac4() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  for (const char* preset : {"prefix", "sqrt_prefix"}) {
    WorldConfig c;
    c.n = 50;
    c.d = 8;
    c.n_round = 10;
    c.schema = ParticipationSchema::once(10);
    c.strategy_matrix = preset;
    c.master_seed = 4;
    RunResult r = run(c);
    std::vector<std::optional<ModelVector>> want =
        ideal_oracle(ideal_config_for(c, r.witness), ideal_script_for(c, r.witness));
    double worst = 0.0;
    bool shape = r.outputs.size() == 10 && want.size() == r.outputs.size();
    for (std::size_t k = 0; shape && k < want.size(); ++k) {
      if (!want[k] || want[k]->size() != c.d) {
        shape = false;
        break;
      }
      for (std::size_t i = 0; i < c.d; ++i) {
        double a = r.outputs[k].output[i], b = (*want[k])[i];
        worst = std::max(worst, std::abs(a - b) / std::abs(b));
      }
    }
    bool good = shape && worst <= 1e-9;
    ok = ok && good;
    d << preset << ": rounds=" << r.outputs.size() << " max_rel=" << fmt("%.2e", worst) << " ";
  }
  double dt = seconds_since(t0);
  ok = ok && dt < 10.0;
  d << "time=" << fmt("%.2fs", dt);
  return {ok, d.str()};
}

// ---- 5 ----

Verdict ac5() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  for (AdversaryStrategy s : {AdversaryStrategy::kFork, AdversaryStrategy::kRollback,
                              AdversaryStrategy::kReplay, AdversaryStrategy::kPretendCrash}) {
    std::uint64_t divergent = 0, bypassed = 0, lin_fail = 0, int_fail = 0, completed = 0;
    for (std::uint64_t k = 0; k < 200; ++k) {
      WorldConfig c;
      c.gamma = 0.0;
      c.adversary.strategy = s;
      c.master_seed = 5000 + k;
      RunResult r = run(c);
      divergent += r.report.divergent_completions;
      bypassed += r.report.bypassed;
      completed += r.report.processes_completed;
      if (!check_linearizable(r.log).linearizable) ++lin_fail;
      if (!check_integrity(r.log, r.chain, r.witness).ok) ++int_fail;
    }
    bool good = divergent == 0 && bypassed == 0 && lin_fail == 0 && int_fail == 0;
    ok = ok && good;
    d << strategy_name(s) << ":div=" << divergent << ",lin_fail=" << lin_fail
      << ",int_fail=" << int_fail << ",completed=" << completed << " ";
  }
  double dt = seconds_since(t0);
  ok = ok && dt < 120.0;
  d << "time=" << fmt("%.1fs", dt);
  return {ok, d.str()};
}

// ---- 6 ----

Verdict ac6() {
#ifdef PLANNER_HAVE_CLI
  auto t0 = Clock::now();
  std::ostringstream out, err;
  int code = cli::run({"attack", "--strategy", "sybil", "--n", "100", "--gamma", "0.2",
                       "--n-audit", "5", "--tau", "4", "--trials", "100000", "--e2e-trials", "5",
                       "--seed", "6"},
                      out, err);
  double dt = seconds_since(t0);
  if (code != cli::kExitOk) return {false, "attack exited " + std::to_string(code) + ": " + err.str()};
  nlohmann::json cal = nlohmann::json::parse(out.str()).at("calibration");
  auto trials = cal.at("trials").get<std::uint64_t>();
  auto hits = cal.at("quorum_corruptions").get<std::uint64_t>();
  // Twenty corrupted of a hundred, five auditors, more than 2*4-5 = 3 of them.
  double closed = static_cast<double>(tail_above(100, 20, 5, 3));
  double lib = privacy_round_term({100, 0.2, 1.0, 0.0, 5, 4, 1});
  double rate = static_cast<double>(hits) / static_cast<double>(trials);
  double se = std::sqrt(closed * (1.0 - closed) / static_cast<double>(trials));
  double z = (rate - closed) / se;
  bool ok = trials == 100'000 && std::abs(z) <= 3.0 && std::abs(lib - closed) < 1e-12 &&
            dt < 60.0;
  return {ok, "rate=" + fmt("%.6f", rate) + " closed=" + fmt("%.6f", closed) +
                  " z=" + fmt("%.2f", z) + " time=" + fmt("%.1fs", dt)};
#else
  return {false, "CLI not built (configure with PLANNER_BUILD_TOOLS=ON)"};
#endif
}

// ---- 7 ----

Digest tag(std::string_view s) { return hash(s); }

struct Op {
  char kind;
  ProcessId pid;
  std::string loaded;
  std::string emitted;
  RoundIndex round;
};

EventLog history(const std::vector<Op>& ops) {
  EventLog log;
  log.genesis(tag("g"));
  for (const Op& op : ops) {
    if (op.kind == 'i') {
      log.invoke(op.pid, "update", {op.pid}, op.round, tag("args"), tag(op.loaded));
    } else {
      log.respond(op.pid, std::nullopt, tag(op.emitted));
    }
  }
  return log;
}

// Every permutation of the completed processes, walking digests from the
// genesis record and honouring respond-before-invoke.
bool brute_force(const EventLog& log) {
  struct P {
    std::uint64_t inv = 0, resp = 0;
    Digest loaded, emitted;
    RoundIndex round = 0;
    bool done = false;
  };
  std::map<ProcessId, P> ps;
  Digest genesis;
  for (const EventRecord& r : log.records()) {
    if (r.event == EventKind::kGenesis) genesis = r.loaded_digest;
    if (r.event == EventKind::kInvoke) {
      ps[r.pid].inv = r.ts;
      ps[r.pid].loaded = r.loaded_digest;
      ps[r.pid].round = r.round;
    }
    if (r.event == EventKind::kRespond) {
      ps[r.pid].resp = r.ts;
      ps[r.pid].emitted = r.evidence_digest;
      ps[r.pid].done = true;
    }
  }
  std::vector<P> done;
  for (auto& [pid, p] : ps) {
    if (p.done) done.push_back(p);
  }
  // Completed replays of one transition count once.
  std::vector<P> uniq;
  for (const P& p : done) {
    auto same = std::find_if(uniq.begin(), uniq.end(), [&](const P& q) {
      return q.loaded == p.loaded && q.emitted == p.emitted && q.round == p.round;
    });
    if (same == uniq.end()) {
      uniq.push_back(p);
    } else {
      same->inv = std::min(same->inv, p.inv);
      same->resp = std::min(same->resp, p.resp);
    }
  }
  std::vector<std::size_t> idx(uniq.size());
  std::iota(idx.begin(), idx.end(), 0);
  do {
    bool ok = true;
    Digest head = genesis;
    for (std::size_t pos = 0; pos < idx.size() && ok; ++pos) {
      const P& p = uniq[idx[pos]];
      ok = p.loaded == head && p.round == pos;
      for (std::size_t later = pos + 1; later < idx.size() && ok; ++later) {
        ok = !(uniq[idx[later]].resp < p.inv);
      }
      head = p.emitted;
    }
    if (ok) return true;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return false;
}

EventLog random_history(std::mt19937_64& rng) {
  int k = 1 + static_cast<int>(rng() % 5);
  std::set<std::pair<std::string, std::string>> used;
  std::vector<std::tuple<ProcessId, std::string, std::string, RoundIndex>> procs;
  for (int p = 0; p < k; ++p) {
    auto round = static_cast<RoundIndex>(rng() % 3);
    std::string loaded = round == 0 ? "g" : "s" + std::to_string(round);
    std::string emitted = "s" + std::to_string(round + 1);
    if (rng() % 2 || !used.insert({loaded, emitted}).second) emitted = "x" + std::to_string(p);
    procs.emplace_back(p + 1, loaded, emitted, round);
  }
  std::vector<Op> ops;
  std::vector<int> stage(k, 0);
  int left = 2 * k;
  while (left > 0) {
    int p = static_cast<int>(rng() % k);
    if (stage[p] == 2) continue;
    auto& [pid, loaded, emitted, round] = procs[p];
    ops.push_back({stage[p] == 0 ? 'i' : 'r', pid, loaded, emitted, round});
    ++stage[p];
    --left;
  }
  return history(ops);
}

Verdict ac7() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool a = check_linearizable(history({{'i', 1, "g", "", 0},
                                       {'i', 2, "a1", "", 1},
                                       {'r', 2, "", "a1a2", 0},
                                       {'r', 1, "", "a1", 0}}))
               .linearizable;
  bool b = check_linearizable(history({{'i', 1, "g", "", 0},
                                       {'i', 2, "g", "", 0},
                                       {'r', 2, "", "a2", 0},
                                       {'r', 1, "", "a1", 0}}))
               .linearizable;
  bool c = check_linearizable(history({{'i', 2, "a1", "", 1},
                                       {'r', 2, "", "a1a2", 0},
                                       {'i', 1, "g", "", 0},
                                       {'r', 1, "", "a1", 0}}))
               .linearizable;
  bool hand = a && !b && !c;
  d << "hand=(" << a << "," << b << "," << c << ")";

  std::mt19937_64 rng(77);
  int disagree = 0, lin = 0;
  for (int t = 0; t < 100; ++t) {
    EventLog log = random_history(rng);
    bool want = brute_force(log);
    lin += want;
    if (check_linearizable(log).linearizable != want) ++disagree;
  }
  d << " random: disagree=" << disagree << "/100 (linearizable " << lin << ")";

  // Logs from the simulator's scheduler with up to five concurrent replicas.
  int sim_disagree = 0, sim_lin = 0;
  for (int t = 0; t < 100; ++t) {
    WorldConfig cfg;
    cfg.n_round = 4;
    cfg.schema = ParticipationSchema::once(4);
    cfg.adversary.strategy = t % 2 ? AdversaryStrategy::kFork : AdversaryStrategy::kReplay;
    cfg.adversary.fork_width = 2 + static_cast<std::uint32_t>(rng() % 4);
    cfg.adversary.attack_round = 1 + static_cast<RoundIndex>(rng() % 3);
    cfg.master_seed = 9000 + t;
    RunResult r = run(cfg);
    bool want = brute_force(r.log);
    sim_lin += want;
    if (check_linearizable(r.log).linearizable != want) ++sim_disagree;
  }
  d << " scheduler: disagree=" << sim_disagree << "/100 (linearizable " << sim_lin << ")"
    << " time=" << fmt("%.2fs", seconds_since(t0));
  return {hand && disagree == 0 && sim_disagree == 0, d.str()};
}

// ---- 8 ----

Verdict ac8() {
  WorldConfig c;
  c.n_round = 6;
  c.schema = ParticipationSchema::once(6);
  c.master_seed = 8;
  RunResult clean = run(c);
  c.adversary.crash_round = 2;
  RunResult crashed = run(c);

  std::ostringstream d;
  ChainVerdict v = verify_chain(crashed.chain, crashed.witness.manufacturer_pk, planner_code_id());
  std::set<RoundIndex> done;
  for (const RoundOutput& o : crashed.outputs) done.insert(o.round);
  bool later = done.count(3) && done.count(4) && done.count(5);
  // Entry 0 is the init record, so round 2 sits at index 3.
  bool same = crashed.chain.size() > 3 && clean.chain.size() > 3 &&
              crashed.chain.entries()[3].canonical() == clean.chain.entries()[3].canonical();
  d << "recoveries=" << crashed.recoveries << " verify=" << chain_fault_name(v.fault)
    << " rounds_done=" << done.size() << " round2_evidence_identical=" << same;
  return {v.ok() && crashed.recoveries == 1 && later && same, d.str()};
}

// ---- 9 ----

Verdict ac9() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  const std::size_t n = 12, dim = 6;
  const double zeta = 0.7, sigma = 1.3;
  for (const char* preset : {"prefix", "sqrt_prefix"}) {
    StrategyMatrix C = StrategyMatrix::from_name(preset, n);
    NoiseMatrix z(321, sigma, dim);
    std::vector<ModelVector> rows;
    for (RoundIndex i = 0; i < n; ++i) rows.push_back(correlated_noise(z, C, i, zeta));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> zi = z.row(static_cast<RoundIndex>(i));
      for (std::size_t j = 0; j < dim; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += C.at(i, k) * rows[k][j];
        worst = std::max(worst, std::abs(s / zeta - zi[j]));
      }
    }
    ok = ok && worst <= 1e-9;
    d << preset << ": max_err=" << fmt("%.2e", worst) << " ";
  }

  // Noise the sqrt_prefix pipeline adds to the prefix sum at row i is
  // (C * assembled)[i] = zeta Z[i]; its entries should have variance zeta^2 sigma^2.
  StrategyMatrix C = StrategyMatrix::sqrt_prefix(n);
  const RoundIndex i = 7;
  double sum = 0.0, sq = 0.0;
  std::uint64_t count = 0;
  for (std::uint64_t seed = 0; seed < 10'000; ++seed) {
    NoiseMatrix z(seed, sigma, dim);
    std::vector<ModelVector> rows;
    for (RoundIndex k = 0; k <= i; ++k) rows.push_back(correlated_noise(z, C, k, zeta));
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0;
      for (RoundIndex k = 0; k <= i; ++k) s += C.at(i, k) * rows[k][j];
      sum += s;
      sq += s * s;
      ++count;
    }
  }
  double mean = sum / count;
  double var = sq / count - mean * mean;
  double want = zeta * zeta * sigma * sigma;
  double rel = std::abs(var - want) / want;
  ok = ok && rel <= 0.05;
  d << "var=" << fmt("%.4f", var) << " want=" << fmt("%.4f", want) << " rel=" << fmt("%.4f", rel)
    << " time=" << fmt("%.2fs", seconds_since(t0));
  return {ok, d.str()};
}

// ---- 10 ----

Verdict ac10() {
  auto t0 = Clock::now();
  std::ostringstream d;
  std::set<std::size_t> audit, secagg;
  bool single = true;
  for (std::uint32_t n : {100u, 10'000u}) {
    for (std::uint32_t dim : {8u, 512u}) {
      WorldConfig c;
      c.n = n;
      c.d = dim;
      c.n_round = 2;
      c.schema = ParticipationSchema::once(2);
      c.master_seed = 10;
      RunResult r = run(c);
      if (r.sizes.audit_broadcast.empty() || r.sizes.secagg_broadcast.empty()) {
        return {false, d.str() + "no control messages at n=" + std::to_string(n)};
      }
      single = single && r.sizes.audit_broadcast.size() == 1 && r.sizes.secagg_broadcast.size() == 1;
      audit.insert(r.sizes.audit_broadcast.begin(), r.sizes.audit_broadcast.end());
      secagg.insert(r.sizes.secagg_broadcast.begin(), r.sizes.secagg_broadcast.end());
      d << "n=" << n << ",d=" << dim << ":audit=" << *r.sizes.audit_broadcast.begin()
        << ",secagg=" << *r.sizes.secagg_broadcast.begin() << " ";
    }
  }
  d << "time=" << fmt("%.2fs", seconds_since(t0));
  return {single && audit.size() == 1 && secagg.size() == 1, d.str()};
}

}  // namespace
}  // namespace planner

int main() {
  using planner::Verdict;
  const std::vector<std::function<Verdict()>> checks = {
      planner::ac1, planner::ac2, planner::ac3, planner::ac4, planner::ac5,
      planner::ac6, planner::ac7, planner::ac8, planner::ac9, planner::ac10};
  int failed = 0;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    Verdict v;
    try {
      v = checks[k]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << "AC" << k + 1 << " " << (v.pass ? "PASS" : "FAIL") << " " << v.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
