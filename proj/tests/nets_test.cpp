#include "satvq/nets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace satvq::nets {
namespace {

Panel<double> random_panel(int side, Rng& rng) {
  Panel<double> p{Mat<double>(1, side * side), side};
  for (auto& x : p.data.reshaped()) x = rng.uniform();
  return p;
}

TEST(Encode, PresetShapes) {
  Rng rng(1);
  const auto desk = init_nets<double>(desk_architecture(), rng);
  const auto z = encode(desk, random_panel(24, rng)).z;
  EXPECT_EQ(z.rows(), 9);
  EXPECT_EQ(z.cols(), 32);

  const auto full = init_nets<float>(full_scale_architecture(), rng);
  Panel<float> x{Mat<float>::Constant(1, 80 * 80, 0.5f), 80};
  const auto zp = encode(full, x).z;
  EXPECT_EQ(zp.rows(), 25);
  EXPECT_EQ(zp.cols(), 192);

  const auto micro = init_nets<double>(micro_architecture(), rng);
  EXPECT_EQ(encode(micro, random_panel(6, rng)).z.rows(), 4);
}

TEST(Encode, DeterministicAndShapeChecked) {
  Rng rng(2);
  const auto p = init_nets<double>(desk_architecture(), rng);
  const auto x = random_panel(24, rng);
  EXPECT_EQ(encode(p, x).z, encode(p, x).z);
  EXPECT_TRUE(encode(p, x).z.allFinite());
  EXPECT_THROW(encode(p, random_panel(20, rng)), ContractError);
  EXPECT_THROW(decode(p, Mat<double>::Zero(4, 32)), ContractError);
}

TEST(Decode, ShapeAndRange) {
  Rng rng(3);
  const auto p = init_nets<double>(desk_architecture(), rng);
  Mat<double> q(9, 32);
  for (auto& v : q.reshaped()) v = 5 * rng.normal();
  const auto y = decode(p, q).panel;
  EXPECT_EQ(y.side, 24);
  EXPECT_EQ(y.data.size(), 24 * 24);
  EXPECT_GE(y.data.minCoeff(), 0.0);
  EXPECT_LE(y.data.maxCoeff(), 1.0);
}

TEST(InitNets, RejectsNonInvertibleStage) {
  Rng rng(4);
  EXPECT_THROW(init_nets<double>(Architecture{25, {{8, 4, 2, 1}}}, rng), ContractError);
}

TEST(ReconstructionLoss, Examples) {
  Rng rng(5);
  const auto a = random_panel(24, rng);
  const auto b = random_panel(24, rng);
  EXPECT_EQ(reconstruction_loss<double>({&a, &b}, {&a, &b}), 0.0);

  Panel<double> shifted = a;
  shifted.data.array() += 0.1;
  EXPECT_NEAR(reconstruction_loss<double>({&shifted}, {&a}), 24 * 24 * 0.01, 1e-9);

  const auto c = random_panel(24, rng);
  const auto d = random_panel(24, rng);
  EXPECT_DOUBLE_EQ(reconstruction_loss<double>({&a, &c}, {&b, &d}), reconstruction_loss<double>({&c, &a}, {&d, &b}));
}

TEST(ConvLayer, DeconvIsAdjointOfConv) {
  // <conv(x), y> = <x, deconv(y)> when both share the same weights and zero bias.
  Rng rng(6);
  const ConvStage st{3, 4, 2, 1};
  auto conv = init_conv<double>(2, st, false, rng);
  ConvLayer<double> deconv{conv.weight, Mat<double>::Zero(2, 1), {2, 4, 2, 1}, true};
  conv.bias.setZero();
  FeatureMap<double> x{Mat<double>::Random(2, 64), 8};
  FeatureMap<double> y{Mat<double>::Random(3, 16), 4};
  const double lhs = conv_forward(conv, x).data.cwiseProduct(y.data).sum();
  const double rhs = x.data.cwiseProduct(conv_forward(deconv, y).data).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

// Central differences on ||decode(encode(x)) - target||^2 over every parameter.
TEST(Gradcheck, EncodeDecodeChainMicro) {
  Rng rng(7);
  auto params = init_nets<double>(micro_architecture(), rng);
  const auto x = random_panel(6, rng);
  const auto target = random_panel(6, rng);
  auto loss = [&](const NetParams<double>& p) {
    const auto y = decode(p, encode(p, x).z).panel;
    return reconstruction_loss<double>({&y}, {&target});
  };
  auto grad = zeros_like(params);
  const auto enc = encode(params, x);
  const auto dec = decode(params, enc.z);
  const Mat<double> dq = decode_backward(params, dec, squared_error_grad(dec.panel, target), grad);
  encode_backward(params, enc, dq, grad);

  std::vector<Mat<double>*> values, grads;
  params.visit([&](const std::string&, Mat<double>& m) { values.push_back(&m); });
  grad.visit([&](const std::string&, Mat<double>& m) { grads.push_back(&m); });
  constexpr double eps = 1e-6;
  double worst = 0;
  int checked = 0;
  for (std::size_t t = 0; t < values.size(); ++t)
    for (Eigen::Index i = 0; i < values[t]->size(); ++i) {
      double& w = values[t]->data()[i];
      const double saved = w;
      w = saved + eps;
      const double up = loss(params);
      w = saved - eps;
      const double down = loss(params);
      w = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grads[t]->data()[i];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      if (scale <= 1e-6) continue;
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
      ++checked;
    }
  EXPECT_GT(checked, 100);
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
}  // namespace satvq::nets
