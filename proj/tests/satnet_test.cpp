#include "satvq/satnet.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <bit>
#include <numeric>
#include <vector>

namespace satvq::satnet {
namespace {

ReasoningWeights<double> equivalence_layer() {
  // Variables: x (input), y (output); clauses (y or not x), (not y or x).
  const auto relaxed = maxsat::relax_clauses(maxsat::ClauseMatrix::from_clauses(2, {{2, -1}, {-2, 1}}));
  ReasoningWeights<double> w;
  w.S = relaxed.entries;
  w.n_in = 1;
  w.n_out = 1;
  w.k = 3;
  w.max_sweeps = 100;
  w.tol = 1e-10;
  return w;
}

TEST(InitWeights, FullScaleShape) {
  Rng rng(1);
  const auto w = init_weights<double>(1600, 200, 500, maxsat::default_embedding_dim(1800), rng);
  EXPECT_EQ(w.S.rows(), 500);
  EXPECT_EQ(w.S.cols(), 1801);
  EXPECT_EQ(w.n(), 1800);
}

TEST(InitWeights, DeterministicAndScaled) {
  Rng a(7), b(7);
  const auto wa = init_weights<double>(20, 10, 40, 9, a);
  const auto wb = init_weights<double>(20, 10, 40, 9, b);
  EXPECT_EQ(wa.S, wb.S);
  const double var = wa.S.squaredNorm() / static_cast<double>(wa.S.size());
  EXPECT_NEAR(var, 1.0 / 31.0, 0.25 / 31.0);
  EXPECT_NEAR(wa.S.mean(), 0.0, 0.02);
}

TEST(InitWeights, TinyShapeAndRankGuard) {
  Rng rng(2);
  const auto w = init_weights<double>(1, 1, 1, 3, rng);
  EXPECT_EQ(w.S.rows(), 1);
  EXPECT_EQ(w.S.cols(), 3);
  EXPECT_THROW(init_weights<double>(1, 1, 1, 2, rng), ContractError);
}

TEST(ClampInput, EndpointsAndRoundTrip) {
  Rng rng(3);
  const Vec<double> truth = random_unit_vector<double>(5, rng);
  const Vec<double> u = detail::orthogonal_direction<double>(truth, rng);
  EXPECT_LT((clamp_input(1.0, truth, u) - truth).norm(), 1e-15);
  EXPECT_NEAR(decode_probability<double>(clamp_input(1.0, truth, u), truth), 1.0, 1e-15);
  EXPECT_LT((clamp_input(0.0, truth, u) + truth).norm(), 1e-15);
  EXPECT_NEAR(decode_probability<double>(clamp_input(0.0, truth, u), truth), 0.0, 1e-15);
  EXPECT_NEAR(decode_probability<double>(clamp_input(0.3, truth, u), truth), 0.3, 1e-12);
  for (int i = 0; i <= 10000; ++i) {
    const double z = i / 10000.0;
    ASSERT_NEAR(decode_probability<double>(clamp_input(z, truth, u), truth), z, 1e-12) << z;
  }
}

TEST(Forward, EquivalenceClausesCopyInput) {
  const auto w = equivalence_layer();
  Rng rng(4);
  EXPECT_GE(forward(w, Vec<double>::Constant(1, 0.95), rng).z_out[0], 0.9);
  EXPECT_LE(forward(w, Vec<double>::Constant(1, 0.05), rng).z_out[0], 0.1);
}

TEST(Forward, InputColumnsAreClampedAndUntouched) {
  Rng init(5);
  auto w = init_weights<double>(4, 3, 8, 5, init);
  const Vec<double> z = (Vec<double>(4) << 0.1, 0.5, 0.0, 1.0).finished();
  Rng rng(6);
  const auto act = forward(w, z, rng);
  const Vec<double> truth = act.solution.columns.col(0);
  for (int i = 0; i < 4; ++i) {
    const Vec<double> expected = clamp_input<double>(z[i], truth, act.random_basis.col(i));
    EXPECT_EQ(act.solution.columns.col(1 + i), expected);
  }
  EXPECT_TRUE(act.solution.unit_columns(1e-7));
  for (std::size_t t = 1; t < act.objective_trace.size(); ++t)
    EXPECT_LE(act.objective_trace[t], act.objective_trace[t - 1] + 1e-9);
}

TEST(Forward, DeterministicGivenSeed) {
  Rng init(8);
  const auto w = init_weights<double>(6, 4, 10, 6, init);
  const Vec<double> z = Vec<double>::LinSpaced(6, 0.1, 0.9);
  Rng a(9), b(9);
  EXPECT_EQ(forward(w, z, a).z_out, forward(w, z, b).z_out);
}

TEST(Forward, NonConvergenceIsFlaggedNotThrown) {
  Rng init(10);
  auto w = init_weights<double>(6, 4, 10, 6, init);
  w.max_sweeps = 1;
  w.tol = 1e-300;
  Rng rng(11);
  const auto act = forward(w, Vec<double>::Constant(6, 0.3), rng);
  EXPECT_FALSE(act.converged);
  EXPECT_EQ(act.sweeps, 1);
  // Backward on a non-converged activation still differentiates the executed sweep.
  const auto g = backward(w, act, Vec<double>::Ones(4));
  EXPECT_TRUE(g.S.allFinite());
}

TEST(Forward, RejectsBadInput) {
  Rng init(12);
  const auto w = init_weights<double>(2, 1, 3, 3, init);
  Rng rng(13);
  EXPECT_THROW(forward(w, Vec<double>::Constant(3, 0.5), rng), ContractError);
  EXPECT_THROW(forward(w, Vec<double>::Constant(2, 1.5), rng), ContractError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng init(14);
  const auto w = init_weights<double>(3, 2, 5, 4, init);
  Rng rng(15);
  const auto act = forward(w, Vec<double>::Constant(3, 0.4), rng);
  const auto g = backward(w, act, Vec<double>::Zero(2));
  EXPECT_TRUE(g.S.isZero(0));
  EXPECT_TRUE(g.z_in.isZero(0));
}

TEST(Backward, DoublingUpstreamDoublesExactly) {
  Rng init(16);
  const auto w = init_weights<double>(3, 2, 5, 4, init);
  Rng rng(17);
  const auto act = forward(w, Vec<double>::Constant(3, 0.4), rng);
  const Vec<double> up = (Vec<double>(2) << 0.7, -1.3).finished();
  const auto g1 = backward(w, act, up);
  const auto g2 = backward(w, act, Vec<double>(2 * up));
  EXPECT_EQ(g2.S, Mat<double>(2 * g1.S));
  EXPECT_EQ(g2.z_in, Vec<double>(2 * g1.z_in));
}

// Central-difference oracle on the scalar loss sum_o c_o z_out_o.
struct FdResult {
  double worst = 0;
  int checked = 0;
};

void expect_relative(double analytic, double numeric, FdResult& r) {
  if (std::max(std::abs(analytic), std::abs(numeric)) <= 1e-6) return;
  const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
  r.worst = std::max(r.worst, rel);
  ++r.checked;
}

TEST(Backward, MatchesCentralDifferences) {
  constexpr double eps = 1e-4;
  FdResult result;
  for (int trial = 0; trial < 20; ++trial) {
    Rng init(derive_seed(100, trial));
    const int n_in = 1 + static_cast<int>(init.index(4));
    const int n_out = 1 + static_cast<int>(init.index(6 - n_in));
    const int m = 1 + static_cast<int>(init.index(8));
    auto w = init_weights<double>(n_in, n_out, m, 4, init);
    w.max_sweeps = 30;
    w.tol = 0;
    Vec<double> z(n_in), c(n_out);
    for (auto& x : z) x = 0.05 + 0.9 * init.uniform();
    for (auto& x : c) x = init.normal();
    const std::uint64_t seed = derive_seed(200, trial);
    auto loss = [&](const ReasoningWeights<double>& ww, const Vec<double>& zz) {
      Rng rng(seed);
      return forward(ww, zz, rng).z_out.dot(c);
    };
    Rng rng(seed);
    const auto act = forward(w, z, rng);
    const auto g = backward(w, act, c);
    for (Eigen::Index i = 0; i < w.S.size(); ++i) {
      auto plus = w, minus = w;
      plus.S.data()[i] += eps;
      minus.S.data()[i] -= eps;
      expect_relative(g.S.data()[i], (loss(plus, z) - loss(minus, z)) / (2 * eps), result);
    }
    for (int i = 0; i < n_in; ++i) {
      Vec<double> zp = z, zm = z;
      zp[i] += eps;
      zm[i] -= eps;
      expect_relative(g.z_in[i], (loss(w, zp) - loss(w, zm)) / (2 * eps), result);
    }
  }
  EXPECT_GT(result.checked, 100);
  EXPECT_LT(result.worst, 1e-3);
}

TEST(Forward, OutputLabelEquivariance) {
  for (int trial = 0; trial < 10; ++trial) {
    Rng init(derive_seed(300, trial));
    const int n_out = 2 + static_cast<int>(init.index(3));
    auto w = init_weights<double>(3, n_out, 6, 5, init);
    w.max_sweeps = 2000;
    w.tol = 1e-14;
    const Vec<double> z = (Vec<double>(3) << 0.2, 0.9, 0.6).finished();
    std::vector<int> perm(n_out);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      auto wp = w;
      for (int o = 0; o < n_out; ++o) wp.S.col(w.first_output() + o) = w.S.col(w.first_output() + perm[o]);
      Rng a(1), b(1);
      const auto base = forward(w, z, a).z_out;
      const auto permuted = forward(wp, z, b).z_out;
      for (int o = 0; o < n_out; ++o) ASSERT_NEAR(permuted[o], base[perm[o]], 1e-4);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

std::vector<TruthRow<double>> truth_table(int bits, auto fn) {
  std::vector<TruthRow<double>> rows;
  for (int r = 0; r < (1 << bits); ++r) {
    Vec<double> z(bits);
    for (int b = 0; b < bits; ++b) z[b] = (r >> b) & 1;
    rows.push_back({z, Vec<double>::Constant(1, fn(r) ? 1.0 : 0.0)});
  }
  return rows;
}

int rows_correct(const ReasoningWeights<double>& w, const std::vector<TruthRow<double>>& rows, std::uint64_t seed) {
  const auto pred = predict_rows(w, rows, seed);
  int ok = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) ok += (pred[r][0] > 0.5) == (rows[r].target[0] > 0.5);
  return ok;
}

TEST(FitTruthTable, LearnsAnd) {
  Rng init(21);
  auto w = init_weights<double>(2, 1, 4, 4, init, 1);
  const auto rows = truth_table(2, [](int r) { return r == 3; });
  w = fit_truth_table(w, rows, {.epochs = 200, .step_size = 0.05, .seed = 5});
  EXPECT_EQ(rows_correct(w, rows, 5), 4);
}

TEST(FitTruthTable, LearnsThreeBitParity) {
  Rng init(22);
  auto w = init_weights<double>(3, 1, 16, 6, init, 6);
  const auto rows = truth_table(3, [](int r) { return std::popcount(static_cast<unsigned>(r)) % 2 == 1; });
  w = fit_truth_table(w, rows, {.epochs = 500, .step_size = 0.05, .seed = 5});
  EXPECT_EQ(rows_correct(w, rows, 5), 8);
}

TEST(FitTruthTable, ZeroEpochsIsNoOp) {
  Rng init(23);
  const auto w = init_weights<double>(2, 1, 4, 4, init);
  const auto rows = truth_table(2, [](int r) { return r == 3; });
  EXPECT_EQ(fit_truth_table(w, rows, {.epochs = 0}).S, w.S);
}

}  // namespace
}  // namespace satvq::satnet
