#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace planner {

// Integer counts from fractional parameters. A small relative slack absorbs
// representation error, so 0.1 * 100 counts as 10, not 11.
std::uint64_t ceil_count(double x);
std::uint64_t floor_count(double x);

struct FailureParams {
  std::uint64_t n = 0;
  double gamma = 0.0;
  double kappa = 1.0;
  double beta = 0.0;
  std::uint32_t n_audit = 1;
  std::uint32_t tau = 1;
  std::uint32_t n_round = 1;
};

// Rounded in the adversary's favour: corrupted = ceil(gamma n) capped at the
// pool, pool = floor(kappa n), dropouts = ceil(kappa n beta).
struct FailureCounts {
  std::uint64_t pool = 0;
  std::uint64_t corrupted = 0;
  std::uint64_t dropouts = 0;
};

FailureCounts failure_counts(const FailureParams& p);

// Throws ProtocolError(kParamsInvalid).
void validate(const FailureParams& p);

// P[X >= threshold] for X ~ Hypergeometric(population, successes, draws).
// Exact rational arithmetic while C(population, draws) < 2^53, otherwise a
// mode-anchored pmf recurrence normalised by its own sum.
double hypergeometric_tail(std::uint64_t population, std::uint64_t successes,
                           std::uint64_t draws, std::uint64_t threshold);

// Per-round terms: P[corrupted auditors > 2 tau - n_audit] and
// P[dropped auditors > n_audit - tau].
double privacy_round_term(const FailureParams& p);
double interrupt_round_term(const FailureParams& p);

// 1 - (1 - p_round)^n_round, evaluated as -expm1(n_round * log1p(-p_round)).
double over_rounds(double p_round, std::uint32_t n_round);

double delta_privacy(const FailureParams& p);
double delta_interrupt(const FailureParams& p);

struct OptimizeResult {
  std::uint32_t n_audit = 0;
  std::uint32_t tau = 0;
  double delta_privacy = 0.0;
  double delta_interrupt = 0.0;
};

// Smallest n_audit with some tau in (n_audit/2, n_audit] meeting both
// targets; the smallest such tau is reported. The search stops at
// search_limit (0 means min(floor(kappa n), 20000)). Throws
// ProtocolError(kNoFeasibleParams) or (kParamsInvalid).
OptimizeResult optimize_params(std::uint64_t n, double gamma, double kappa, double beta,
                               std::uint32_t n_round, double p1, double p2,
                               std::uint32_t search_limit = 0);

enum class FailureMode { kPrivacy, kInterrupt };

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t failures = 0;
  std::uint64_t trials = 0;
};

// Draws n_audit auditors without replacement from the pool and counts the
// per-round failure event of `mode`.
McEstimate mc_round_failure(FailureMode mode, const FailureParams& p, std::uint64_t trials,
                            std::uint64_t seed);

struct SweepRow {
  double gamma = 0.0;
  double beta = 0.0;
  double kappa = 1.0;
  std::uint64_t n = 0;
  std::uint32_t n_round = 0;
  // Empty when the cell is infeasible or above the cap.
  std::optional<std::uint32_t> n_audit;
  std::optional<std::uint32_t> tau;
  std::optional<double> delta_privacy;
  std::optional<double> delta_interrupt;
};

struct SweepSpec {
  enum class Mode { kTradeoff, kMinimal };

  Mode mode = Mode::kTradeoff;
  std::uint64_t n = 10'000'000;
  std::uint32_t n_round = 10'000;
  std::vector<double> gammas;
  std::vector<double> betas;
  std::vector<double> kappas;
  // Tradeoff mode: audited set sizes; tau = floor(2 n_audit / 3) + 1.
  std::vector<std::uint32_t> n_audits;
  // Minimal mode.
  double p_privacy = 1e-8;
  double p_interrupt = 1e-8;
  std::uint32_t cap = 10'000;
};

// "fig3left" | "fig3right" | "fig4". Throws ProtocolError(kConfigInvalid).
SweepSpec sweep_preset(std::string_view name);
// JSON object with the SweepSpec field names; mode is "tradeoff" or
// "minimal". Throws ProtocolError(kConfigInvalid).
SweepSpec sweep_spec_from_json(std::string_view text);

std::uint32_t tradeoff_tau(std::uint32_t n_audit);

// Rows ordered by (kappa, beta, gamma, n_audit) in the order given.
std::vector<SweepRow> sweep(const SweepSpec& spec);

inline constexpr std::string_view kSweepHeader =
    "gamma,beta,kappa,n,n_round,n_audit,tau,delta_privacy,delta_interrupt";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace planner
