#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "planner/primitives.h"

namespace planner {

using ModelVector = std::vector<double>;
using RoundIndex = std::uint32_t;

// Admissible participation patterns. kOnce allows a single round per client;
// kMinSeparation(b) allows any rounds that are pairwise at least b apart.
struct ParticipationSchema {
  enum class Kind { kOnce, kMinSeparation };

  Kind kind = Kind::kOnce;
  std::uint32_t b = 1;
  std::uint32_t n_round = 0;

  static ParticipationSchema once(std::uint32_t n_round);
  static ParticipationSchema min_separation(std::uint32_t b, std::uint32_t n_round);

  // True iff some pattern of the schema contains `rounds`.
  bool permits(const std::set<RoundIndex>& rounds) const;

  std::string describe() const;
  bool operator==(const ParticipationSchema&) const = default;
};

// Per-client sets of rounds taken (H).
class ParticipationHistory {
 public:
  ParticipationHistory() = default;
  explicit ParticipationHistory(std::size_t n_clients) : sets_(n_clients) {}
  ParticipationHistory(std::initializer_list<std::set<RoundIndex>> sets)
      : sets_(sets) {}

  std::size_t n_clients() const { return sets_.size(); }
  const std::set<RoundIndex>& rounds_of(ClientId j) const { return sets_.at(j); }
  void add(ClientId j, RoundIndex round) { sets_.at(j).insert(round); }
  bool round_used(RoundIndex round) const;

  bool operator==(const ParticipationHistory&) const = default;

 private:
  std::vector<std::set<RoundIndex>> sets_;
};

bool adheres_to(const ParticipationSchema& schema, const ParticipationHistory& h);

// Clients that can take `round` without breaking the schema.
// Throws ProtocolError(kRoundOutOfRange).
ClientList f_qualify(const ParticipationSchema& schema,
                     const ParticipationHistory& h, RoundIndex round);

// Throws ProtocolError(kSchemaViolation) unless cohort ⊆ f_qualify(...).
ParticipationHistory update_history(const ParticipationSchema& schema,
                                    const ParticipationHistory& h,
                                    const ClientList& cohort, RoundIndex round);

// Lower-triangular, invertible n_round x n_round factor of the matrix
// mechanism.
class StrategyMatrix {
 public:
  // Throws ProtocolError(kConfigInvalid) if not square or not lower
  // triangular, kSingularC if a diagonal entry is zero.
  explicit StrategyMatrix(std::vector<std::vector<double>> rows);

  static StrategyMatrix identity(std::size_t n);
  // All-ones lower triangle (prefix sums).
  static StrategyMatrix prefix(std::size_t n);
  // Lower-triangular Toeplitz square root of prefix(n): coefficients
  // binom(2k, k) / 4^k.
  static StrategyMatrix sqrt_prefix(std::size_t n);
  static StrategyMatrix from_csv(std::istream& in);
  static StrategyMatrix from_csv_file(const std::string& path);
  // "identity" | "prefix" | "sqrt_prefix" | path to a CSV file.
  static StrategyMatrix from_name(const std::string& name, std::size_t n);

  std::size_t size() const { return rows_.size(); }
  double at(std::size_t r, std::size_t c) const { return rows_[r][c]; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  void write_csv(std::ostream& out) const;
  bool operator==(const StrategyMatrix&) const = default;

 private:
  std::vector<std::vector<double>> rows_;
};

// Z with i.i.d. N(0, sigma^2) entries, generated per row from (seed, row) so
// any replica holding the seed sees the same values in any access order.
class NoiseMatrix {
 public:
  NoiseMatrix(std::uint64_t seed, double sigma, std::size_t d);

  std::vector<double> row(RoundIndex i) const;
  double at(RoundIndex i, std::size_t j) const { return row(i).at(j); }

  std::uint64_t seed() const { return seed_; }
  double sigma() const { return sigma_; }
  std::size_t d() const { return d_; }

 private:
  std::uint64_t seed_;
  double sigma_;
  std::size_t d_;
};

// min(1, zeta/|v|) v, with clip(0) = 0.
ModelVector clip(const ModelVector& v, double zeta);

// Row `i` of zeta * C^{-1} Z, by forward substitution over rows 0..i.
// Throws ProtocolError(kRoundOutOfRange) or (kSingularC).
ModelVector correlated_noise(const NoiseMatrix& z, const StrategyMatrix& c,
                             RoundIndex i, double zeta);

struct DataPoint {
  std::vector<double> x;
  double y = 0.0;
};
using ClientDataset = std::vector<DataPoint>;

// Synthetic linear-regression data around a seed-derived ground truth.
ClientDataset synthetic_dataset(std::uint64_t seed, std::size_t d,
                                std::size_t points);

// Clipped gradient of sum_k (theta . x_k - y_k)^2 at theta.
ModelVector local_update(const ClientDataset& data, const ModelVector& theta,
                         double zeta);

double l2_norm(const ModelVector& v);

}  // namespace planner
