#include "planner/analysis.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "planner/errors.h"
#include "planner/primitives.h"

namespace planner {
namespace {

constexpr std::uint64_t kExactLimit = 1ull << 53;

// C(a, b) if it stays below 2^53.
std::optional<std::uint64_t> binom_exact(std::uint64_t a, std::uint64_t b) {
  if (b > a) return 0;
  b = std::min(b, a - b);
  unsigned __int128 c = 1;
  for (std::uint64_t k = 0; k < b; ++k) {
    c = c * (a - k) / (k + 1);
    if (c >= kExactLimit) return std::nullopt;
  }
  return static_cast<std::uint64_t>(c);
}

// S[t] = P[X >= t] for t = 0 .. draws + 1.
std::vector<double> tail_table(std::uint64_t population, std::uint64_t successes,
                               std::uint64_t draws) {
  std::vector<double> tail(draws + 2, 0.0);
  std::uint64_t failures = population - successes;
  std::uint64_t lo = draws > failures ? draws - failures : 0;
  std::uint64_t hi = std::min(successes, draws);
  for (std::uint64_t t = 0; t <= lo; ++t) tail[t] = 1.0;
  if (lo == hi) return tail;

  if (auto total = binom_exact(population, draws)) {
    std::uint64_t acc = 0;
    for (std::uint64_t a = hi + 1; a-- > lo + 1;) {
      acc += *binom_exact(successes, a) * *binom_exact(failures, draws - a);
      tail[a] = static_cast<double>(acc) / static_cast<double>(*total);
    }
    return tail;
  }

  const double K = static_cast<double>(successes);
  const double F = static_cast<double>(failures);
  const double m = static_cast<double>(draws);
  auto mode = static_cast<std::uint64_t>(
      std::floor((m + 1.0) * (K + 1.0) / (static_cast<double>(population) + 2.0)));
  mode = std::clamp(mode, lo, hi);

  std::vector<double> w(hi - lo + 1, 0.0);
  w[mode - lo] = 1.0;
  for (std::uint64_t a = mode + 1; a <= hi; ++a) {
    double x = static_cast<double>(a);
    w[a - lo] = w[a - 1 - lo] * (K - x + 1.0) * (m - x + 1.0) / (x * (F - m + x));
    if (w[a - lo] == 0.0) break;
  }
  for (std::uint64_t a = mode; a-- > lo;) {
    double x = static_cast<double>(a);
    w[a - lo] = w[a + 1 - lo] * (x + 1.0) * (F - m + x + 1.0) / ((K - x) * (m - x));
    if (w[a - lo] == 0.0) break;
  }
  double total = 0.0;
  for (std::uint64_t a = hi + 1; a-- > lo;) total += w[a - lo];
  double acc = 0.0;
  for (std::uint64_t a = hi + 1; a-- > lo + 1;) {
    acc += w[a - lo];
    tail[a] = std::min(1.0, acc / total);
  }
  return tail;
}

double tail_at(const std::vector<double>& tail, std::uint64_t t) {
  return t < tail.size() ? tail[t] : 0.0;
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ProtocolError(Errc::kParamsInvalid, std::string(name) + " must lie in [0, 1]");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::uint64_t ceil_count(double x) {
  if (!(x > 0.0)) return 0;
  double r = std::round(x);
  if (std::fabs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::ceil(x));
}

std::uint64_t floor_count(double x) {
  if (!(x > 0.0)) return 0;
  double r = std::round(x);
  if (std::fabs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::floor(x));
}

FailureCounts failure_counts(const FailureParams& p) {
  FailureCounts c;
  double n = static_cast<double>(p.n);
  c.pool = floor_count(p.kappa * n);
  c.corrupted = std::min(ceil_count(p.gamma * n), c.pool);
  c.dropouts = std::min(ceil_count(p.kappa * n * p.beta), c.pool);
  return c;
}

void validate(const FailureParams& p) {
  check_unit(p.gamma, "gamma");
  check_unit(p.kappa, "kappa");
  check_unit(p.beta, "beta");
  if (p.n == 0) throw ProtocolError(Errc::kParamsInvalid, "n must be positive");
  if (p.n_round == 0) throw ProtocolError(Errc::kParamsInvalid, "n_round must be positive");
  FailureCounts c = failure_counts(p);
  if (p.n_audit == 0 || p.n_audit > c.pool) {
    throw ProtocolError(Errc::kParamsInvalid,
                        "n_audit=" + std::to_string(p.n_audit) + " outside [1, " +
                            std::to_string(c.pool) + "]");
  }
  if (2ull * p.tau <= p.n_audit || p.tau > p.n_audit) {
    throw ProtocolError(Errc::kParamsInvalid, "tau must satisfy n_audit/2 < tau <= n_audit");
  }
}

double hypergeometric_tail(std::uint64_t population, std::uint64_t successes,
                           std::uint64_t draws, std::uint64_t threshold) {
  if (successes > population || draws > population) {
    throw ProtocolError(Errc::kParamsInvalid, "hypergeometric counts exceed population");
  }
  return tail_at(tail_table(population, successes, draws), threshold);
}

double privacy_round_term(const FailureParams& p) {
  validate(p);
  FailureCounts c = failure_counts(p);
  return hypergeometric_tail(c.pool, c.corrupted, p.n_audit, 2ull * p.tau - p.n_audit + 1);
}

double interrupt_round_term(const FailureParams& p) {
  validate(p);
  FailureCounts c = failure_counts(p);
  return hypergeometric_tail(c.pool, c.dropouts, p.n_audit, p.n_audit - p.tau + 1);
}

double over_rounds(double p_round, std::uint32_t n_round) {
  if (p_round <= 0.0) return 0.0;
  if (p_round >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(n_round) * std::log1p(-p_round));
}

double delta_privacy(const FailureParams& p) {
  return over_rounds(privacy_round_term(p), p.n_round);
}

double delta_interrupt(const FailureParams& p) {
  return over_rounds(interrupt_round_term(p), p.n_round);
}

OptimizeResult optimize_params(std::uint64_t n, double gamma, double kappa, double beta,
                               std::uint32_t n_round, double p1, double p2,
                               std::uint32_t search_limit) {
  if (!(p1 > 0.0 && p1 < 1.0) || !(p2 > 0.0 && p2 < 1.0)) {
    throw ProtocolError(Errc::kParamsInvalid, "targets must lie in (0, 1)");
  }
  FailureParams base{n, gamma, kappa, beta, 1, 1, n_round};
  check_unit(gamma, "gamma");
  check_unit(kappa, "kappa");
  check_unit(beta, "beta");
  if (n == 0 || n_round == 0) {
    throw ProtocolError(Errc::kParamsInvalid, "n and n_round must be positive");
  }
  FailureCounts c = failure_counts(base);
  if (c.pool == 0) throw ProtocolError(Errc::kParamsInvalid, "empty candidate pool");

  std::uint64_t limit = search_limit ? search_limit : std::min<std::uint64_t>(c.pool, 20000);
  limit = std::min(limit, c.pool);
  for (std::uint32_t m = 1; m <= limit; ++m) {
    std::vector<double> priv = tail_table(c.pool, c.corrupted, m);
    auto dp = [&](std::uint32_t tau) { return over_rounds(tail_at(priv, 2ull * tau - m + 1), n_round); };
    std::uint32_t lo = m / 2 + 1;
    std::uint32_t hi = m;
    if (dp(hi) > p1) continue;
    while (lo < hi) {
      std::uint32_t mid = lo + (hi - lo) / 2;
      if (dp(mid) <= p1) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    std::vector<double> drop = tail_table(c.pool, c.dropouts, m);
    double di = over_rounds(tail_at(drop, m - lo + 1), n_round);
    if (di > p2) continue;
    return {m, lo, dp(lo), di};
  }
  throw ProtocolError(Errc::kNoFeasibleParams,
                      "no n_audit <= " + std::to_string(limit) + " meets both targets");
}

McEstimate mc_round_failure(FailureMode mode, const FailureParams& p, std::uint64_t trials,
                            std::uint64_t seed) {
  validate(p);
  FailureCounts c = failure_counts(p);
  std::uint64_t adversarial = mode == FailureMode::kPrivacy ? c.corrupted : c.dropouts;
  std::uint64_t limit = mode == FailureMode::kPrivacy ? 2ull * p.tau - p.n_audit
                                                      : std::uint64_t{p.n_audit} - p.tau;
  PartyRng rng(seed, "mc-round-failure");
  McEstimate out;
  out.trials = trials;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint64_t left = adversarial;
    std::uint64_t remaining = c.pool;
    std::uint64_t hits = 0;
    for (std::uint32_t k = 0; k < p.n_audit && left > 0; ++k, --remaining) {
      std::uniform_int_distribution<std::uint64_t> pick(0, remaining - 1);
      if (pick(rng) < left) {
        ++hits;
        --left;
      }
    }
    if (hits > limit) ++out.failures;
  }
  if (trials > 0) {
    out.estimate = static_cast<double>(out.failures) / static_cast<double>(trials);
    out.std_error = std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(trials));
  }
  return out;
}

std::uint32_t tradeoff_tau(std::uint32_t n_audit) { return 2 * n_audit / 3 + 1; }

SweepSpec sweep_preset(std::string_view name) {
  SweepSpec s;
  std::vector<double> fractions = {0.01, 0.05, 0.1, 0.15, 0.2};
  if (name == "fig3left" || name == "fig3right") {
    s.mode = SweepSpec::Mode::kTradeoff;
    s.kappas = {1.0};
    for (std::uint32_t m = 10; m <= 300; m += 10) s.n_audits.push_back(m);
    if (name == "fig3left") {
      s.gammas = fractions;
      s.betas = {0.0};
    } else {
      s.gammas = {0.0};
      s.betas = fractions;
    }
    return s;
  }
  if (name == "fig4") {
    s.mode = SweepSpec::Mode::kMinimal;
    s.kappas = {1.0, 0.5};
    for (int k = 0; k <= 6; ++k) {
      s.gammas.push_back(k / 20.0);
      s.betas.push_back(k / 20.0);
    }
    return s;
  }
  throw ProtocolError(Errc::kConfigInvalid, "unknown sweep preset '" + std::string(name) + "'");
}

SweepSpec sweep_spec_from_json(std::string_view text) {
  using nlohmann::json;
  static const std::set<std::string> kKeys = {"mode",  "n",       "n_round",   "gamma",
                                              "beta",  "kappa",   "n_audit",   "p_privacy",
                                              "p_interrupt", "cap"};
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("spec is not an object");
    for (const auto& [key, _] : j.items()) {
      if (!kKeys.count(key)) throw std::invalid_argument("unknown key '" + key + "'");
    }
    SweepSpec s;
    std::string mode = j.value("mode", std::string("tradeoff"));
    if (mode == "tradeoff") {
      s.mode = SweepSpec::Mode::kTradeoff;
    } else if (mode == "minimal") {
      s.mode = SweepSpec::Mode::kMinimal;
    } else {
      throw std::invalid_argument("mode must be tradeoff or minimal");
    }
    s.n = j.value("n", s.n);
    s.n_round = j.value("n_round", s.n_round);
    s.gammas = j.value("gamma", std::vector<double>{});
    s.betas = j.value("beta", std::vector<double>{});
    s.kappas = j.value("kappa", std::vector<double>{});
    s.n_audits = j.value("n_audit", std::vector<std::uint32_t>{});
    s.p_privacy = j.value("p_privacy", s.p_privacy);
    s.p_interrupt = j.value("p_interrupt", s.p_interrupt);
    s.cap = j.value("cap", s.cap);
    return s;
  } catch (const std::exception& ex) {
    throw ProtocolError(Errc::kConfigInvalid, std::string("sweep spec: ") + ex.what());
  }
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
  std::vector<SweepRow> rows;
  for (double kappa : spec.kappas) {
    for (double beta : spec.betas) {
      for (double gamma : spec.gammas) {
        SweepRow base{gamma, beta, kappa, spec.n, spec.n_round, {}, {}, {}, {}};
        if (spec.mode == SweepSpec::Mode::kTradeoff) {
          for (std::uint32_t m : spec.n_audits) {
            SweepRow row = base;
            FailureParams p{spec.n, gamma, kappa, beta, m, tradeoff_tau(m), spec.n_round};
            try {
              validate(p);
            } catch (const ProtocolError&) {
              rows.push_back(row);
              continue;
            }
            row.n_audit = m;
            row.tau = p.tau;
            row.delta_privacy = delta_privacy(p);
            row.delta_interrupt = delta_interrupt(p);
            rows.push_back(row);
          }
        } else {
          SweepRow row = base;
          try {
            OptimizeResult r = optimize_params(spec.n, gamma, kappa, beta, spec.n_round,
                                               spec.p_privacy, spec.p_interrupt, spec.cap);
            row.n_audit = r.n_audit;
            row.tau = r.tau;
            row.delta_privacy = r.delta_privacy;
            row.delta_interrupt = r.delta_interrupt;
          } catch (const ProtocolError& err) {
            if (err.code() != Errc::kNoFeasibleParams) throw;
          }
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  for (const SweepRow& r : rows) {
    out << format_double(r.gamma) << ',' << format_double(r.beta) << ','
        << format_double(r.kappa) << ',' << r.n << ',' << r.n_round << ',';
    if (r.n_audit) out << *r.n_audit;
    out << ',';
    if (r.tau) out << *r.tau;
    out << ',';
    if (r.delta_privacy) out << format_double(*r.delta_privacy);
    out << ',';
    if (r.delta_interrupt) out << format_double(*r.delta_interrupt);
    out << '\n';
  }
}

}  // namespace planner
