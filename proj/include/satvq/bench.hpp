#pragma once

// Mixing method + randomized rounding against the brute-force optimum on
// seeded random formulas.

#include <chrono>
#include <vector>

#include "satvq/maxsat.hpp"

namespace satvq::bench {

struct BenchOptions {
  int instances = 200;
  int max_vars = 10;
  int max_clauses = 30;
  int max_width = 3;
  int rounds = 64;
  int max_sweeps = 100;
  double tol = 1e-6;
  std::uint64_t seed = 1;
};

struct BenchRow {
  int id = 0;
  int n = 0;
  int m = 0;
  int opt = 0;
  int achieved = 0;
  int sweeps = 0;
  bool monotone = true;
  int gap() const { return opt - achieved; }
};

struct BenchSummary {
  std::vector<BenchRow> rows;
  double match_rate = 0;
  int max_gap = 0;
  int monotonicity_violations = 0;
  double seconds = 0;
};

/// (x1 or x2), (not x1 or x2), (x1 or not x2), (not x1 or not x2): at most 3 of 4.
inline maxsat::ClauseMatrix four_clause_instance() {
  return maxsat::ClauseMatrix::from_clauses(2, {{1, 2}, {-1, 2}, {1, -2}, {-1, -2}});
}

/// Instance 0 is the four-clause formula; the rest are random.
inline std::vector<maxsat::ClauseMatrix> bench_instances(const BenchOptions& o) {
  require(o.instances >= 1 && o.max_vars >= 1 && o.max_clauses >= 1, "bench: sizes must be positive");
  require(o.max_vars <= maxsat::kBruteForceMaxVars, "bench: max_vars exceeds the brute-force guard");
  std::vector<maxsat::ClauseMatrix> out{four_clause_instance()};
  Rng rng(o.seed);
  while (static_cast<int>(out.size()) < o.instances) {
    const int n = 1 + static_cast<int>(rng.index(o.max_vars));
    const int m = 1 + static_cast<int>(rng.index(o.max_clauses));
    out.push_back(maxsat::random_formula(n, m, o.max_width, rng));
  }
  return out;
}

inline BenchSummary run(const BenchOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  BenchSummary sum;
  const auto instances = bench_instances(o);
  int matches = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& f = instances[i];
    Rng rng(derive_seed(o.seed, i, 0xbe9c));
    const auto relaxed = maxsat::relax_clauses<double>(f);
    auto v0 = maxsat::random_embedding<double>(maxsat::default_embedding_dim(f.n()), f.n(), rng);
    const auto mix = maxsat::mixing_solve(relaxed, std::move(v0), {}, {o.max_sweeps, o.tol});
    BenchRow row;
    row.id = static_cast<int>(i);
    row.n = f.n();
    row.m = f.m();
    row.opt = maxsat::brute_force_maxsat(f).opt;
    row.achieved = maxsat::best_rounding(f, mix.solution, o.rounds, rng).opt;
    row.sweeps = mix.sweeps;
    for (std::size_t t = 1; t < mix.objective_trace.size(); ++t)
      if (mix.objective_trace[t] > mix.objective_trace[t - 1] + 1e-9) row.monotone = false;
    sum.monotonicity_violations += !row.monotone;
    matches += row.gap() == 0;
    sum.max_gap = std::max(sum.max_gap, row.gap());
    sum.rows.push_back(row);
  }
  sum.match_rate = static_cast<double>(matches) / instances.size();
  sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sum;
}

}  // namespace satvq::bench
