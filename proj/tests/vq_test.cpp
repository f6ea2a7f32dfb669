#include "satvq/vq.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace satvq::vq {
namespace {

Codebook<double> two_codewords() {
  Codebook<double> cb{Mat<double>(2, 2)};
  cb.E << 0, 0, 1, 1;
  return cb;
}

Mat<double> row(double a, double b) { return (Mat<double>(1, 2) << a, b).finished(); }

TEST(Quantize, NearestCodeword) {
  const auto lat = quantize(row(0.9, 0.8), two_codewords());
  EXPECT_EQ(lat.s[0], 1);  // e_2 in 1-based terms
  EXPECT_EQ(lat.q, row(1, 1));
  EXPECT_EQ(lat.t, row(0, 1));
}

TEST(Quantize, ExactCodewordHasZeroResidual) {
  const auto lat = quantize(row(1, 1), two_codewords());
  EXPECT_EQ(lat.s[0], 1);
  EXPECT_EQ((lat.z - lat.q).norm(), 0.0);
}

TEST(Quantize, TieGoesToSmallestIndex) {
  EXPECT_EQ(quantize(row(1, 0), two_codewords()).s[0], 0);
}

TEST(Quantize, RejectsNonFiniteAndWidthMismatch) {
  EXPECT_THROW(quantize(row(NAN, 0), two_codewords()), ContractError);
  EXPECT_THROW(quantize(Mat<double>::Zero(1, 3), two_codewords()), ContractError);
}

TEST(Relax, SoftmaxOfNegativeDistances) {
  // Distances (2, 0) to the two codewords.
  Codebook<double> cb{Mat<double>(2, 1)};
  cb.E << 2, 0;
  const Mat<double> t = relax(Mat<double>::Zero(1, 1), cb);
  const double a = std::exp(-2.0) / (std::exp(-2.0) + 1.0);
  EXPECT_NEAR(t(0, 0), a, 1e-15);
  EXPECT_NEAR(t(0, 1), 1 - a, 1e-15);
  EXPECT_NEAR(t(0, 0), 0.1192, 1e-4);
  EXPECT_NEAR(t(0, 1), 0.8808, 1e-4);
}

TEST(Relax, EquidistantCodewordsGiveUniformRow) {
  Codebook<double> cb{Mat<double>(4, 2)};
  cb.E << 1, 0, -1, 0, 0, 1, 0, -1;
  const Mat<double> t = relax(Mat<double>::Zero(1, 2), cb);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(t(0, k), 0.25, 1e-15);
}

TEST(Embed, SelectionConvexCombinationAndConsistency) {
  const auto cb = two_codewords();
  EXPECT_EQ(embed(row(0, 1), cb), row(1, 1));
  EXPECT_EQ(embed(row(0.5, 0.5), cb), row(0.5, 0.5));
  Rng rng(1);
  const auto big = init_codebook<double>(8, 5, rng);
  const Mat<double> z = Mat<double>::Random(9, 5);
  const auto lat = quantize(z, big);
  EXPECT_EQ(embed(lat.t, big), lat.q);
}

TEST(StraightThrough, ForwardIsQBackwardIsIdentity) {
  const Mat<double> z = Mat<double>::Random(3, 4);
  const Mat<double> q = Mat<double>::Random(3, 4);
  EXPECT_EQ(StraightThrough<double>::forward(z, q), q);
  const Mat<double> g = Mat<double>::Random(3, 4);
  EXPECT_EQ(StraightThrough<double>::backward_to_z(g), g);
}

// The estimator is biased: the true derivative of q(z) w.r.t. z is zero away
// from Voronoi boundaries, while the estimator passes the gradient through.
TEST(StraightThrough, DisagreesWithFiniteDifferences) {
  const auto cb = two_codewords();
  const Mat<double> z = row(0.9, 0.8);
  const Mat<double> g = row(1.0, -0.5);
  auto loss = [&](const Mat<double>& zz) { return (quantize(zz, cb).q.array() * g.array()).sum(); };
  Mat<double> zp = z;
  zp(0, 0) += 1e-4;
  Mat<double> zm = z;
  zm(0, 0) -= 1e-4;
  const double fd = (loss(zp) - loss(zm)) / 2e-4;
  EXPECT_EQ(fd, 0.0);
  EXPECT_NE(StraightThrough<double>::backward_to_z(g)(0, 0), fd);
}

TEST(AbstractionLoss, ZeroResidualAndValueIdentity) {
  const auto cb = two_codewords();
  auto exact = quantize(row(1, 1), cb);
  EXPECT_EQ(abstraction_loss<double>({&exact}, cb).value, 0.0);
  EXPECT_EQ(kDefaultBeta, 0.25);
  auto off = quantize(row(0.9, 0.8), cb);
  const double delta_sq = 0.1 * 0.1 + 0.2 * 0.2;
  EXPECT_NEAR(abstraction_loss<double>({&off}, cb).value, 1.25 * delta_sq, 1e-15);
}

TEST(AbstractionLoss, GradientRouting) {
  const auto cb = two_codewords();
  auto lat = quantize(row(0.9, 0.8), cb);
  const auto l = abstraction_loss<double>({&lat}, cb, 0.25);
  // Commitment term only reaches z; codebook term only reaches E.
  EXPECT_TRUE(l.grad_z[0].isApprox(0.5 * (lat.z - lat.q)));
  EXPECT_TRUE(l.grad_E.row(0).isZero());
  EXPECT_TRUE(l.grad_E.row(1).isApprox(2.0 * (lat.q - lat.z)));
}

TEST(RelaxBackward, MatchesCentralDifferences) {
  Rng rng(3);
  auto cb = init_codebook<double>(5, 4, rng);
  const Mat<double> z = Mat<double>::Random(3, 4);
  const Mat<double> up = Mat<double>::Random(3, 5);
  auto loss = [&](const Mat<double>& zz, const Codebook<double>& c) { return (relax(zz, c).array() * up.array()).sum(); };
  const auto d = distances(z, cb);
  const auto g = relax_backward(z, cb, relax_from_distances<double>(d), d, up);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Mat<double> zp = z, zm = z;
    zp.data()[i] += eps;
    zm.data()[i] -= eps;
    EXPECT_NEAR(g.z.data()[i], (loss(zp, cb) - loss(zm, cb)) / (2 * eps), 1e-8);
  }
  for (Eigen::Index i = 0; i < cb.E.size(); ++i) {
    auto cp = cb, cm = cb;
    cp.E.data()[i] += eps;
    cm.E.data()[i] -= eps;
    EXPECT_NEAR(g.E.data()[i], (loss(z, cp) - loss(z, cm)) / (2 * eps), 1e-8);
  }
}

TEST(DetectCollapse, ReportsUnusedCodewords) {
  Rng rng(4);
  const auto cb = init_codebook<double>(8, 3, rng);
  EXPECT_TRUE(detect_collapse(cb, {1, 2, 3, 4, 5, 6, 7, 8}).empty());
  EXPECT_EQ(detect_collapse(cb, {1, 2, 0, 4, 5, 6, 7, 8}), std::vector<int>{2});
  std::vector<long long> counts(8, 0);
  for (int i = 0; i < 10000; ++i) ++counts[rng.index(8)];
  EXPECT_TRUE(detect_collapse(cb, counts).empty());
  EXPECT_THROW(detect_collapse(cb, {1, 2}), ContractError);
}

// Properties over random draws.
TEST(QuantizationLaws, HoldOnRandomDraws) {
  Rng rng(5);
  for (int draw = 0; draw < 1000; ++draw) {
    const int K = 2 + static_cast<int>(rng.index(9));
    const int D = 1 + static_cast<int>(rng.index(8));
    const int H = 1 + static_cast<int>(rng.index(6));
    const auto cb = init_codebook<double>(K, D, rng);
    Mat<double> z(H, D);
    for (auto& x : z.reshaped()) x = rng.normal();
    const auto lat = abstract_latent(z, cb);
    for (int h = 0; h < H; ++h) {
      for (int k = 0; k < K; ++k) ASSERT_LE((z.row(h) - lat.q.row(h)).norm(), (z.row(h) - cb.E.row(k)).norm());
      ASSERT_NEAR(lat.t_relaxed.row(h).sum(), 1.0, 1e-6);
      ASSERT_GE(lat.t_relaxed.row(h).minCoeff(), 0.0);
      ASSERT_LE(lat.t_relaxed.row(h).maxCoeff(), 1.0);
      Eigen::Index arg;
      lat.t_relaxed.row(h).maxCoeff(&arg);
      ASSERT_EQ(arg, lat.s[h]);
    }
    ASSERT_EQ(quantize(embed(lat.t, cb), cb).t, lat.t);
    const auto loss = abstraction_loss<double>({&lat}, cb, 0.25);
    ASSERT_NEAR(loss.value, 1.25 * (lat.z - lat.q).squaredNorm(), 1e-9);
  }
}

TEST(QuantizationLaws, ScaledDistancesApproachHardAssignment) {
  Rng rng(6);
  int checked = 0;
  for (int draw = 0; draw < 500; ++draw) {
    Mat<double> d(1, 6);
    for (auto& x : d.reshaped()) x = rng.uniform() * 3;
    Mat<double> sorted = d;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    if (sorted(0, 1) - sorted(0, 0) < 0.1) continue;
    ++checked;
    Eigen::Index arg;
    d.row(0).minCoeff(&arg);
    const Mat<double> t100 = relax_from_distances<double>(100.0 * d);
    const Mat<double> t10 = relax_from_distances<double>(10.0 * d);
    EXPECT_GE(t100(0, arg), 1 - 1e-3);
    EXPECT_GE(t100(0, arg), t10(0, arg) - 1e-15);
  }
  EXPECT_GT(checked, 100);
}

}  // namespace
}  // namespace satvq::vq
