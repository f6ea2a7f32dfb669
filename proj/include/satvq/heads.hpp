#pragma once

// Black-box reasoning heads used as baselines: single-head query-key-value
// attention over the panel encodings, and a two-layer convolution over the
// panel encodings stacked as channels. Both map M encodings (H x C each) to
// one H x C output.

#include <cmath>
#include <string>
#include <vector>

#include "satvq/core.hpp"
#include "satvq/nets.hpp"

namespace satvq::heads {

template <typename T>
struct AttentionHead {
  Mat<T> pos;  // M x F, added to the flattened encodings
  Mat<T> Wq, Wk, Wv;  // d x F
  Mat<T> Wo;  // F x d
  Mat<T> bo;  // F x 1
  int rows = 0, width = 0;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".pos", pos);
    f(prefix + ".wq", Wq);
    f(prefix + ".wk", Wk);
    f(prefix + ".wv", Wv);
    f(prefix + ".wo", Wo);
    f(prefix + ".bo", bo);
  }
};

template <typename T>
void fill_normal(Mat<T>& m, Eigen::Index r, Eigen::Index c, double scale, Rng& rng) {
  m.resize(r, c);
  for (auto& x : m.reshaped()) x = static_cast<T>(rng.normal() * scale);
}

template <typename T>
AttentionHead<T> init_attention(int M, int rows, int width, int d, Rng& rng) {
  AttentionHead<T> h;
  h.rows = rows;
  h.width = width;
  const int F = rows * width;
  fill_normal(h.pos, M, F, 0.1, rng);
  fill_normal(h.Wq, d, F, 1.0 / std::sqrt(F), rng);
  fill_normal(h.Wk, d, F, 1.0 / std::sqrt(F), rng);
  fill_normal(h.Wv, d, F, 1.0 / std::sqrt(F), rng);
  fill_normal(h.Wo, F, d, 1.0 / std::sqrt(d), rng);
  h.bo = Mat<T>::Zero(F, 1);
  return h;
}

template <typename T>
struct AttentionTape {
  Mat<T> X;  // M x F with positions added
  Vec<T> mean, q, weights, context;
  Mat<T> keys, values;  // M x d
};

namespace detail {

template <typename T>
Vec<T> flatten_rows(const Mat<T>& m) {
  Vec<T> v(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) v.segment(r * m.cols(), m.cols()) = m.row(r).transpose();
  return v;
}

template <typename T>
Mat<T> unflatten_rows(const Vec<T>& v, int rows, int cols) {
  Mat<T> m(rows, cols);
  for (int r = 0; r < rows; ++r) m.row(r) = v.segment(r * cols, cols).transpose();
  return m;
}

}  // namespace detail

/// Returns the pre-activation output (rows x width).
template <typename T>
Mat<T> attention_forward(const AttentionHead<T>& h, const std::vector<Mat<T>>& inputs, AttentionTape<T>& tape) {
  const int M = static_cast<int>(inputs.size());
  require(M == h.pos.rows(), "attention: panel count mismatch");
  const int F = h.rows * h.width;
  tape.X.resize(M, F);
  for (int i = 0; i < M; ++i) {
    require(inputs[i].rows() == h.rows && inputs[i].cols() == h.width, "attention: encoding shape mismatch");
    tape.X.row(i) = detail::flatten_rows<T>(inputs[i]).transpose() + h.pos.row(i);
  }
  const T scale = T(1) / std::sqrt(T(h.Wq.rows()));
  tape.mean = tape.X.colwise().mean().transpose();
  tape.q = h.Wq * tape.mean;
  tape.keys = tape.X * h.Wk.transpose();
  tape.values = tape.X * h.Wv.transpose();
  Vec<T> scores = scale * (tape.keys * tape.q);
  scores.array() -= scores.maxCoeff();
  tape.weights = scores.array().exp();
  tape.weights /= tape.weights.sum();
  tape.context = tape.values.transpose() * tape.weights;
  const Vec<T> out = h.Wo * tape.context + h.bo.col(0);
  return detail::unflatten_rows<T>(out, h.rows, h.width);
}

/// Accumulates parameter gradients; returns one gradient per input.
template <typename T>
std::vector<Mat<T>> attention_backward(const AttentionHead<T>& h, const AttentionTape<T>& tape, const Mat<T>& dout,
                                       AttentionHead<T>& grad) {
  const int M = static_cast<int>(tape.X.rows());
  const T scale = T(1) / std::sqrt(T(h.Wq.rows()));
  const Vec<T> dy = detail::flatten_rows<T>(dout);
  grad.Wo.noalias() += dy * tape.context.transpose();
  grad.bo.col(0) += dy;
  const Vec<T> dctx = h.Wo.transpose() * dy;
  const Mat<T> dvalues = tape.weights * dctx.transpose();
  const Vec<T> dw = tape.values * dctx;
  Vec<T> dscores = tape.weights.array() * (dw.array() - tape.weights.dot(dw));
  dscores *= scale;
  const Mat<T> dkeys = dscores * tape.q.transpose();
  const Vec<T> dq = tape.keys.transpose() * dscores;
  grad.Wq.noalias() += dq * tape.mean.transpose();
  grad.Wk.noalias() += dkeys.transpose() * tape.X;
  grad.Wv.noalias() += dvalues.transpose() * tape.X;
  Mat<T> dX = dkeys * h.Wk + dvalues * h.Wv;
  dX.rowwise() += (h.Wq.transpose() * dq).transpose() / T(M);
  grad.pos += dX;
  std::vector<Mat<T>> out;
  for (int i = 0; i < M; ++i) out.push_back(detail::unflatten_rows<T>(dX.row(i).transpose(), h.rows, h.width));
  return out;
}

/// Two convolutions on the grid_side x grid_side position grid; input
/// channel i*C + c carries column c of panel i.
template <typename T>
struct ConvHead {
  nets::ConvStack<T> stack;
  int grid_side = 0;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    stack.visit(prefix, f);
  }
};

template <typename T>
ConvHead<T> init_conv_head(int M, int grid_side, int width, int kernel, int hidden, Rng& rng) {
  require(kernel % 2 == 1, "conv head: kernel must be odd");
  ConvHead<T> h;
  h.grid_side = grid_side;
  const int pad = kernel / 2;
  h.stack.layers.push_back(nets::init_conv<T>(M * width, {hidden, kernel, 1, pad}, false, rng));
  h.stack.layers.push_back(nets::init_conv<T>(hidden, {width, kernel, 1, pad}, false, rng));
  h.stack.hidden = nets::Activation::relu;
  h.stack.last = nets::Activation::none;
  return h;
}

template <typename T>
Mat<T> conv_head_forward(const ConvHead<T>& h, const std::vector<Mat<T>>& inputs, nets::StackTape<T>& tape) {
  const int M = static_cast<int>(inputs.size());
  const int C = static_cast<int>(inputs.front().cols());
  const int H = h.grid_side * h.grid_side;
  nets::FeatureMap<T> x{Mat<T>(M * C, H), h.grid_side};
  for (int i = 0; i < M; ++i) {
    require(inputs[i].rows() == H && inputs[i].cols() == C, "conv head: encoding shape mismatch");
    x.data.middleRows(i * C, C) = inputs[i].transpose();
  }
  require(x.data.rows() == h.stack.layers.front().weight.cols() / (h.stack.layers.front().stage.kernel *
                                                                    h.stack.layers.front().stage.kernel),
          "conv head: channel count mismatch");
  tape = nets::stack_forward(h.stack, x);
  return tape.output().data.transpose();
}

template <typename T>
std::vector<Mat<T>> conv_head_backward(const ConvHead<T>& h, const nets::StackTape<T>& tape, const Mat<T>& dout,
                                       ConvHead<T>& grad) {
  nets::FeatureMap<T> dy{dout.transpose(), h.grid_side};
  const auto dx = nets::stack_backward(h.stack, tape, std::move(dy), grad.stack);
  const int C = static_cast<int>(dout.cols());
  const int M = static_cast<int>(dx.data.rows()) / C;
  std::vector<Mat<T>> out;
  for (int i = 0; i < M; ++i) out.push_back(dx.data.middleRows(i * C, C).transpose());
  return out;
}

}  // namespace satvq::heads
