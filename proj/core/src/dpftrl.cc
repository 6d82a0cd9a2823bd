#include "planner/dpftrl.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "planner/errors.h"

namespace planner {

ParticipationSchema ParticipationSchema::once(std::uint32_t n_round) {
  return {Kind::kOnce, 1, n_round};
}

ParticipationSchema ParticipationSchema::min_separation(std::uint32_t b,
                                                        std::uint32_t n_round) {
  if (b < 1) throw ProtocolError(Errc::kConfigInvalid, "separation b must be >= 1");
  return {Kind::kMinSeparation, b, n_round};
}

bool ParticipationSchema::permits(const std::set<RoundIndex>& rounds) const {
  if (!rounds.empty() && *rounds.rbegin() >= n_round) return false;
  if (kind == Kind::kOnce) return rounds.size() <= 1;
  RoundIndex prev = 0;
  bool first = true;
  for (RoundIndex r : rounds) {
    if (!first && r - prev < b) return false;
    prev = r;
    first = false;
  }
  return true;
}

std::string ParticipationSchema::describe() const {
  if (kind == Kind::kOnce) return "once";
  return "min_separation(" + std::to_string(b) + ")";
}

bool ParticipationHistory::round_used(RoundIndex round) const {
  for (const auto& s : sets_) {
    if (s.count(round)) return true;
  }
  return false;
}

bool adheres_to(const ParticipationSchema& schema, const ParticipationHistory& h) {
  for (std::size_t j = 0; j < h.n_clients(); ++j) {
    if (!schema.permits(h.rounds_of(static_cast<ClientId>(j)))) return false;
  }
  return true;
}

ClientList f_qualify(const ParticipationSchema& schema,
                     const ParticipationHistory& h, RoundIndex round) {
  if (round >= schema.n_round) {
    throw ProtocolError(Errc::kRoundOutOfRange,
                        "round " + std::to_string(round) + " of " +
                            std::to_string(schema.n_round));
  }
  ClientList out;
  for (std::size_t j = 0; j < h.n_clients(); ++j) {
    const auto& taken = h.rounds_of(static_cast<ClientId>(j));
    bool ok = true;
    if (schema.kind == ParticipationSchema::Kind::kOnce) {
      ok = taken.empty();
    } else {
      for (RoundIndex r : taken) {
        RoundIndex gap = r > round ? r - round : round - r;
        if (gap < schema.b) {
          ok = false;
          break;
        }
      }
    }
    if (ok) out.push_back(static_cast<ClientId>(j));
  }
  return out;
}

ParticipationHistory update_history(const ParticipationSchema& schema,
                                    const ParticipationHistory& h,
                                    const ClientList& cohort, RoundIndex round) {
  ClientList qualified = f_qualify(schema, h, round);
  std::set<ClientId> allowed(qualified.begin(), qualified.end());
  ParticipationHistory out = h;
  for (ClientId j : cohort) {
    if (!allowed.count(j)) {
      throw ProtocolError(Errc::kSchemaViolation,
                          "client " + std::to_string(j) + " cannot take round " +
                              std::to_string(round) + " under " + schema.describe());
    }
    out.add(j, round);
  }
  return out;
}

StrategyMatrix::StrategyMatrix(std::vector<std::vector<double>> rows)
    : rows_(std::move(rows)) {
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (rows_[r].size() != rows_.size()) {
      throw ProtocolError(Errc::kConfigInvalid, "strategy matrix is not square");
    }
    for (std::size_t c = r + 1; c < rows_.size(); ++c) {
      if (rows_[r][c] != 0.0) {
        throw ProtocolError(Errc::kConfigInvalid,
                            "strategy matrix is not lower triangular");
      }
    }
    if (rows_[r][r] == 0.0) {
      throw ProtocolError(Errc::kSingularC,
                          "zero diagonal entry at row " + std::to_string(r));
    }
  }
}

StrategyMatrix StrategyMatrix::identity(std::size_t n) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1.0;
  return StrategyMatrix(std::move(rows));
}

StrategyMatrix StrategyMatrix::prefix(std::size_t n) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c <= r; ++c) rows[r][c] = 1.0;
  }
  return StrategyMatrix(std::move(rows));
}

StrategyMatrix StrategyMatrix::sqrt_prefix(std::size_t n) {
  std::vector<double> coef(n, 1.0);
  for (std::size_t k = 1; k < n; ++k) {
    coef[k] = coef[k - 1] * (2.0 * static_cast<double>(k) - 1.0) /
              (2.0 * static_cast<double>(k));
  }
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c <= r; ++c) rows[r][c] = coef[r - c];
  }
  return StrategyMatrix(std::move(rows));
}

StrategyMatrix StrategyMatrix::from_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ProtocolError(Errc::kConfigInvalid, "bad CSV cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ProtocolError(Errc::kConfigInvalid, "empty strategy CSV");
  return StrategyMatrix(std::move(rows));
}

StrategyMatrix StrategyMatrix::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProtocolError(Errc::kConfigInvalid, "cannot open " + path);
  return from_csv(in);
}

StrategyMatrix StrategyMatrix::from_name(const std::string& name, std::size_t n) {
  if (name == "identity") return identity(n);
  if (name == "prefix") return prefix(n);
  if (name == "sqrt_prefix") return sqrt_prefix(n);
  StrategyMatrix loaded = from_csv_file(name);
  if (loaded.size() != n) {
    throw ProtocolError(Errc::kConfigInvalid,
                        "strategy matrix " + name + " has " +
                            std::to_string(loaded.size()) + " rows, expected " +
                            std::to_string(n));
  }
  return loaded;
}

void StrategyMatrix::write_csv(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& row : rows_) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << row[c];
    }
    out << '\n';
  }
}

NoiseMatrix::NoiseMatrix(std::uint64_t seed, double sigma, std::size_t d)
    : seed_(seed), sigma_(sigma), d_(d) {
  if (!(sigma > 0.0)) throw ProtocolError(Errc::kConfigInvalid, "sigma must be > 0");
}

std::vector<double> NoiseMatrix::row(RoundIndex i) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_),
                    static_cast<std::uint32_t>(seed_ >> 32), i, 0x5a5a5a5au};
  std::mt19937_64 engine(seq);
  std::normal_distribution<double> gauss(0.0, sigma_);
  std::vector<double> out(d_);
  for (double& v : out) v = gauss(engine);
  return out;
}

double l2_norm(const ModelVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

ModelVector clip(const ModelVector& v, double zeta) {
  double norm = l2_norm(v);
  if (norm == 0.0 || norm <= zeta) return v;
  double scale = zeta / norm;
  ModelVector out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] * scale;
  return out;
}

ModelVector correlated_noise(const NoiseMatrix& z, const StrategyMatrix& c,
                             RoundIndex i, double zeta) {
  if (i >= c.size()) {
    throw ProtocolError(Errc::kRoundOutOfRange,
                        "noise row " + std::to_string(i) + " beyond C of size " +
                            std::to_string(c.size()));
  }
  std::vector<ModelVector> solved;
  solved.reserve(i + 1);
  for (RoundIndex r = 0; r <= i; ++r) {
    double diag = c.at(r, r);
    if (diag == 0.0) throw ProtocolError(Errc::kSingularC);
    ModelVector row = z.row(r);
    for (double& v : row) v *= zeta;
    for (RoundIndex k = 0; k < r; ++k) {
      double coef = c.at(r, k);
      if (coef == 0.0) continue;
      for (std::size_t j = 0; j < row.size(); ++j) row[j] -= coef * solved[k][j];
    }
    for (double& v : row) v /= diag;
    solved.push_back(std::move(row));
  }
  return solved.back();
}

ClientDataset synthetic_dataset(std::uint64_t seed, std::size_t d,
                                std::size_t points) {
  PartyRng truth_rng(0x7e57da7a, "ground-truth");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(d);
  for (double& v : w) v = gauss(truth_rng);

  PartyRng rng(seed, "client-data");
  ClientDataset data(points);
  for (DataPoint& p : data) {
    p.x.resize(d);
    double y = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      p.x[k] = gauss(rng);
      y += w[k] * p.x[k];
    }
    p.y = y + 0.1 * gauss(rng);
  }
  return data;
}

ModelVector local_update(const ClientDataset& data, const ModelVector& theta,
                         double zeta) {
  ModelVector grad(theta.size(), 0.0);
  for (const DataPoint& p : data) {
    double residual = -p.y;
    for (std::size_t k = 0; k < theta.size(); ++k) residual += theta[k] * p.x[k];
    for (std::size_t k = 0; k < theta.size(); ++k) grad[k] += 2.0 * p.x[k] * residual;
  }
  return clip(grad, zeta);
}

}  // namespace planner
