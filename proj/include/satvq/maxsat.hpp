#pragma once

// Exact and relaxed MAXSAT: signed clause matrices, an exhaustive oracle,
// the low-rank SDP relaxation, the mixing (block coordinate descent) solver
// and randomized rounding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "satvq/core.hpp"

namespace satvq::maxsat {

/// CNF formula as an m x n matrix over {-1, 0, +1}. Row i is clause i.
class ClauseMatrix {
 public:
  ClauseMatrix(int clauses, int vars, std::vector<std::int8_t> entries)
      : m_(clauses), n_(vars), entries_(std::move(entries)) {
    require(m_ >= 1 && n_ >= 1, "ClauseMatrix: need m >= 1 and n >= 1");
    require(entries_.size() == static_cast<std::size_t>(m_) * n_,
            "ClauseMatrix: entry count does not match m*n");
    for (int i = 0; i < m_; ++i) {
      int literals = 0;
      for (int j = 0; j < n_; ++j) {
        const int s = at(i, j);
        require(s >= -1 && s <= 1, "ClauseMatrix: entries must be in {-1,0,+1}");
        literals += s != 0;
      }
      require(literals > 0, "ClauseMatrix: empty clause " + std::to_string(i));
    }
  }

  /// Builds from DIMACS-style literal lists (1-based, negative = negated).
  static ClauseMatrix from_clauses(int vars, const std::vector<std::vector<int>>& clauses) {
    require(!clauses.empty(), "ClauseMatrix: no clauses");
    std::vector<std::int8_t> e(clauses.size() * static_cast<std::size_t>(vars), 0);
    for (std::size_t i = 0; i < clauses.size(); ++i) {
      for (int lit : clauses[i]) {
        const int var = std::abs(lit) - 1;
        require(lit != 0 && var < vars, "ClauseMatrix: literal out of range");
        auto& slot = e[i * vars + var];
        const std::int8_t sign = lit > 0 ? 1 : -1;
        require(slot == 0 || slot == sign,
                "ClauseMatrix: clause " + std::to_string(i) + " contains both polarities");
        slot = sign;
      }
    }
    return ClauseMatrix(static_cast<int>(clauses.size()), vars, std::move(e));
  }

  int m() const { return m_; }
  int n() const { return n_; }
  int at(int clause, int var) const { return entries_[static_cast<std::size_t>(clause) * n_ + var]; }
  int literal_count(int clause) const {
    int c = 0;
    for (int j = 0; j < n_; ++j) c += at(clause, j) != 0;
    return c;
  }
  std::vector<int> literals(int clause) const {
    std::vector<int> out;
    for (int j = 0; j < n_; ++j)
      if (at(clause, j) != 0) out.push_back(at(clause, j) * (j + 1));
    return out;
  }

  friend bool operator==(const ClauseMatrix&, const ClauseMatrix&) = default;

 private:
  int m_;
  int n_;
  std::vector<std::int8_t> entries_;
};

/// Assignment over {-1, +1}; +1 is true.
class Assignment {
 public:
  explicit Assignment(std::vector<int> values) : values_(std::move(values)) {
    for (int v : values_) require(v == 1 || v == -1, "Assignment: values must be +-1");
  }
  int size() const { return static_cast<int>(values_.size()); }
  int operator[](int j) const { return values_[j]; }
  const std::vector<int>& values() const { return values_; }
  friend bool operator==(const Assignment&, const Assignment&) = default;

 private:
  std::vector<int> values_;
};

inline int clause_satisfaction(const ClauseMatrix& s, const Assignment& p) {
  require(p.size() == s.n(), "clause_satisfaction: assignment length != n");
  int count = 0;
  for (int i = 0; i < s.m(); ++i) {
    for (int j = 0; j < s.n(); ++j) {
      if (s.at(i, j) * p[j] > 0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

struct MaxsatOptimum {
  int opt;
  Assignment witness;
};

inline constexpr int kBruteForceMaxVars = 22;

/// Exhaustive MAXSAT. Assignments are visited in lexicographic order with
/// -1 < +1 and variable 1 most significant; the first optimum wins.
inline MaxsatOptimum brute_force_maxsat(const ClauseMatrix& s) {
  if (s.n() > kBruteForceMaxVars)
    throw RefusalError("brute_force_maxsat: n = " + std::to_string(s.n()) +
                       " exceeds the enumeration guard n <= " + std::to_string(kBruteForceMaxVars));
  const int n = s.n();
  std::vector<std::uint32_t> pos(s.m(), 0), neg(s.m(), 0);
  for (int i = 0; i < s.m(); ++i) {
    for (int j = 0; j < n; ++j) {
      const std::uint32_t bit = 1u << (n - 1 - j);
      if (s.at(i, j) > 0) pos[i] |= bit;
      if (s.at(i, j) < 0) neg[i] |= bit;
    }
  }
  const std::uint32_t full = n == 32 ? ~0u : ((1u << n) - 1u);
  int best = -1;
  std::uint32_t best_mask = 0;
  for (std::uint64_t mask64 = 0; mask64 <= full; ++mask64) {
    const auto mask = static_cast<std::uint32_t>(mask64);
    int sat = 0;
    for (int i = 0; i < s.m(); ++i) sat += ((pos[i] & mask) | (neg[i] & ~mask & full)) != 0;
    if (sat > best) {
      best = sat;
      best_mask = mask;
      if (best == s.m()) break;
    }
  }
  std::vector<int> values(n);
  for (int j = 0; j < n; ++j) values[j] = (best_mask >> (n - 1 - j)) & 1u ? 1 : -1;
  return {best, Assignment(std::move(values))};
}

/// m x (n+1) relaxed clause matrix; column 0 is the truth direction.
template <typename T>
struct RelaxedClauseMatrix {
  Mat<T> entries;

  int m() const { return static_cast<int>(entries.rows()); }
  int n() const { return static_cast<int>(entries.cols()) - 1; }
};

/// Row i = (-1, s_i1, ..., s_in) / sqrt(4 L_i), L_i the literal count of clause i.
template <typename T = double>
RelaxedClauseMatrix<T> relax_clauses(const ClauseMatrix& s) {
  Mat<T> out = Mat<T>::Zero(s.m(), s.n() + 1);
  for (int i = 0; i < s.m(); ++i) {
    const T scale = T(1) / std::sqrt(T(4) * T(s.literal_count(i)));
    out(i, 0) = -scale;
    for (int j = 0; j < s.n(); ++j)
      if (s.at(i, j) != 0) out(i, j + 1) = T(s.at(i, j)) * scale;
  }
  return {std::move(out)};
}

/// k x (n+1) matrix of unit columns; column 0 is v_top.
template <typename T>
struct UnitEmbedding {
  Mat<T> columns;

  int k() const { return static_cast<int>(columns.rows()); }
  int n() const { return static_cast<int>(columns.cols()) - 1; }
  auto truth() const { return columns.col(0); }

  bool unit_columns(T tolerance) const {
    for (Eigen::Index j = 0; j < columns.cols(); ++j)
      if (std::abs(columns.col(j).norm() - T(1)) > tolerance) return false;
    return true;
  }
};

template <typename T>
UnitEmbedding<T> random_embedding(int k, int n, Rng& rng) {
  require(k >= 1 && n >= 0, "random_embedding: bad dimensions");
  Mat<T> v(k, n + 1);
  for (int j = 0; j <= n; ++j) v.col(j) = random_unit_vector<T>(k, rng);
  return {std::move(v)};
}

/// Assignment embedded at rank one: v_i = p_i * v_top.
template <typename T>
UnitEmbedding<T> rank_one_embedding(const Assignment& p, const Vec<T>& truth) {
  Mat<T> v(truth.size(), p.size() + 1);
  v.col(0) = truth;
  for (int j = 0; j < p.size(); ++j) v.col(j + 1) = T(p[j]) * truth;
  return {std::move(v)};
}

/// <V^T V, S'^T S'>; evaluated as ||S' V^T||_F^2.
template <typename T>
T sdp_objective(const UnitEmbedding<T>& v, const RelaxedClauseMatrix<T>& s) {
  require(v.columns.cols() == s.entries.cols(), "sdp_objective: column count mismatch");
  return (v.columns * s.entries.transpose()).squaredNorm();
}

/// Smallest integer strictly greater than sqrt(2n).
inline int min_embedding_dim(int n) {
  require(n >= 1, "min_embedding_dim: n must be >= 1");
  int k = static_cast<int>(std::floor(std::sqrt(2.0 * n)));
  while (static_cast<long long>(k) * k <= 2LL * n) ++k;
  return k;
}

inline int default_embedding_dim(int n) { return min_embedding_dim(n) + 1; }

struct MixingOptions {
  int max_sweeps = 100;
  double tol = 1e-6;
};

template <typename T>
struct MixingResult {
  UnitEmbedding<T> solution;
  /// Objective before the first sweep, then after every sweep.
  std::vector<T> objective_trace;
  int sweeps = 0;
  int degenerate_updates = 0;
  bool converged = false;
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Mixing method: Gauss-Seidel sweeps (ascending column index) replacing
/// each free column by the exact minimizer -g/||g|| of the objective with
/// the other columns fixed. Column 0 (v_top) is always frozen.
template <typename T>
MixingResult<T> mixing_solve(const RelaxedClauseMatrix<T>& s, UnitEmbedding<T> v0,
                             const std::set<int>& frozen, MixingOptions opts = {}) {
  const Mat<T>& S = s.entries;
  Mat<T>& V = v0.columns;
  require(V.cols() == S.cols(), "mixing_solve: column count mismatch");
  std::vector<char> is_frozen(V.cols(), 0);
  is_frozen[0] = 1;
  for (int f : frozen) {
    require(f >= 0 && f < V.cols(), "mixing_solve: frozen index out of range");
    is_frozen[f] = 1;
  }
  const Vec<T> col_sq = S.colwise().squaredNorm().transpose();
  Mat<T> omega = V * S.transpose();  // k x m

  MixingResult<T> result{UnitEmbedding<T>{}, {}, 0, 0, false};
  result.objective_trace.push_back(omega.squaredNorm());
  Vec<T> g(V.rows());
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
      if (is_frozen[j]) continue;
      g.noalias() = omega * S.col(j);
      g -= col_sq[j] * V.col(j);
      const T gnorm = g.norm();
      if (!(gnorm > T(kDegenerateNorm))) {
        ++result.degenerate_updates;
        continue;
      }
      const Vec<T> delta = -g / gnorm - V.col(j);
      V.col(j) += delta;
      omega.noalias() += delta * S.col(j).transpose();
    }
    ++result.sweeps;
    // Recompute from scratch so the trace carries no drift from rank-1 updates.
    omega.noalias() = V * S.transpose();
    const T obj = omega.squaredNorm();
    const T prev = result.objective_trace.back();
    result.objective_trace.push_back(obj);
    if (opts.tol > 0 && prev - obj < T(opts.tol)) {
      result.converged = true;
      break;
    }
  }
  result.solution = std::move(v0);
  return result;
}

struct RoundingDraw {
  int value;
  double prob_true;
};

/// P(p_i = +1) = arccos(-v_i . v_top) / pi, evaluated through atan2 so that
/// v_i = +-v_top gives exactly 1 or 0.
template <typename T>
double rounding_probability(const UnitEmbedding<T>& v, int var) {
  require(var >= 1 && var <= v.n(), "rounding_probability: index must name a variable column");
  const auto vi = v.columns.col(var).template cast<double>();
  const auto top = v.truth().template cast<double>();
  const double along = vi.dot(top);
  const double perp = (vi - along * top).norm();
  return std::clamp(std::atan2(perp, -along) / std::numbers::pi, 0.0, 1.0);
}

template <typename T>
RoundingDraw randomized_round(const UnitEmbedding<T>& v, int var, Rng& rng) {
  const double p = rounding_probability(v, var);
  const double u = rng.uniform();
  return {u < p ? 1 : -1, p};
}

/// Best of `rounds` independent roundings, scored by clause satisfaction.
template <typename T>
MaxsatOptimum best_rounding(const ClauseMatrix& s, const UnitEmbedding<T>& v, int rounds, Rng& rng) {
  std::vector<double> probs(s.n());
  for (int j = 0; j < s.n(); ++j) probs[j] = rounding_probability(v, j + 1);
  std::optional<MaxsatOptimum> best;
  std::vector<int> values(s.n());
  for (int r = 0; r < rounds; ++r) {
    for (int j = 0; j < s.n(); ++j) values[j] = rng.uniform() < probs[j] ? 1 : -1;
    Assignment a(values);
    const int sat = clause_satisfaction(s, a);
    if (!best || sat > best->opt) best = MaxsatOptimum{sat, std::move(a)};
  }
  require(best.has_value(), "best_rounding: rounds must be >= 1");
  return *best;
}

/// Seeded random k-CNF-ish instance: each clause has 1..max_width distinct literals.
inline ClauseMatrix random_formula(int n, int m, int max_width, Rng& rng) {
  std::vector<std::vector<int>> clauses(m);
  std::vector<int> vars(n);
  for (auto& c : clauses) {
    const int width = 1 + static_cast<int>(rng.index(std::min(max_width, n)));
    for (int j = 0; j < n; ++j) vars[j] = j + 1;
    rng.shuffle(vars.begin(), vars.end());
    for (int l = 0; l < width; ++l) c.push_back(rng.uniform() < 0.5 ? vars[l] : -vars[l]);
  }
  return ClauseMatrix::from_clauses(n, clauses);
}

}  // namespace satvq::maxsat
