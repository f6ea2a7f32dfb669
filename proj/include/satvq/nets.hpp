#pragma once

// Convolutional encoder f and transposed-convolution decoder g with
// hand-written vector-Jacobian products. Feature maps are stored as
// channels x (height*width) matrices, spatial index y*width + x.

#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "satvq/core.hpp"

namespace satvq::nets {

/// One spatial feature map: rows = channels, cols = side*side pixels.
template <typename T>
struct FeatureMap {
  Mat<T> data;
  int side = 0;

  int channels() const { return static_cast<int>(data.rows()); }
};

/// Single-channel image with pixels in [0,1].
template <typename T>
using Panel = FeatureMap<T>;

template <typename T>
Panel<T> make_panel(int side, std::span<const float> pixels) {
  require(static_cast<int>(pixels.size()) == side * side, "make_panel: pixel count != side^2");
  Panel<T> p{Mat<T>(1, side * side), side};
  for (int i = 0; i < side * side; ++i) p.data(0, i) = static_cast<T>(pixels[i]);
  return p;
}

struct ConvStage {
  int channels;
  int kernel;
  int stride;
  int pad;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

constexpr int conv_out_side(int side, const ConvStage& s) { return (side + 2 * s.pad - s.kernel) / s.stride + 1; }
constexpr int deconv_out_side(int side, const ConvStage& s) { return (side - 1) * s.stride - 2 * s.pad + s.kernel; }

namespace detail {

/// (C*k*k) x (out*out) patch matrix.
template <typename T>
Mat<T> im2col(const FeatureMap<T>& x, int kernel, int stride, int pad, int out_side) {
  const int C = x.channels();
  Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(C) * kernel * kernel, out_side * out_side);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (c * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < out_side; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.side) continue;
          for (int ox = 0; ox < out_side; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= x.side) continue;
            cols(row, oy * out_side + ox) = x.data(c, iy * x.side + ix);
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatter-add patches back to a C x (side*side) map.
template <typename T>
FeatureMap<T> col2im(const Mat<T>& cols, int C, int side, int kernel, int stride, int pad, int out_side) {
  FeatureMap<T> x{Mat<T>::Zero(C, side * side), side};
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (c * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < out_side; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= side) continue;
          for (int ox = 0; ox < out_side; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= side) continue;
            x.data(c, iy * side + ix) += cols(row, oy * out_side + ox);
          }
        }
      }
  return x;
}

}  // namespace detail

/// Weight matrix plus bias for a convolution (or its transpose).
template <typename T>
struct ConvLayer {
  Mat<T> weight;  // conv: Cout x (Cin k k); transposed conv: Cin x (Cout k k)
  Mat<T> bias;    // Cout x 1
  ConvStage stage;
  bool transposed = false;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename T>
ConvLayer<T> init_conv(int in_channels, ConvStage stage, bool transposed, Rng& rng) {
  ConvLayer<T> layer;
  layer.stage = stage;
  layer.transposed = transposed;
  const int kk = stage.kernel * stage.kernel;
  const int fan_in = transposed ? in_channels * kk / std::max(1, stage.stride * stage.stride) : in_channels * kk;
  const T scale = std::sqrt(T(2) / T(std::max(1, fan_in)));
  if (transposed)
    layer.weight.resize(in_channels, stage.channels * kk);
  else
    layer.weight.resize(stage.channels, in_channels * kk);
  for (auto& w : layer.weight.reshaped()) w = static_cast<T>(rng.normal()) * scale;
  layer.bias = Mat<T>::Zero(stage.channels, 1);
  return layer;
}

template <typename T>
FeatureMap<T> conv_forward(const ConvLayer<T>& L, const FeatureMap<T>& x) {
  const auto& s = L.stage;
  if (!L.transposed) {
    const int out = conv_out_side(x.side, s);
    require(out >= 1 && L.weight.cols() == x.channels() * s.kernel * s.kernel, "conv: shape mismatch");
    FeatureMap<T> y{L.weight * detail::im2col(x, s.kernel, s.stride, s.pad, out), out};
    y.data.colwise() += L.bias.col(0);
    return y;
  }
  require(L.weight.rows() == x.channels(), "deconv: shape mismatch");
  const int out = deconv_out_side(x.side, s);
  const Mat<T> cols = L.weight.transpose() * x.data;
  FeatureMap<T> y = detail::col2im<T>(cols, s.channels, out, s.kernel, s.stride, s.pad, x.side);
  y.data.colwise() += L.bias.col(0);
  return y;
}

/// Accumulates weight/bias gradients into `grad` and returns d/dx.
template <typename T>
FeatureMap<T> conv_backward(const ConvLayer<T>& L, const FeatureMap<T>& x, const FeatureMap<T>& dy, ConvLayer<T>& grad) {
  const auto& s = L.stage;
  grad.bias.col(0) += dy.data.rowwise().sum();
  if (!L.transposed) {
    const Mat<T> cols = detail::im2col(x, s.kernel, s.stride, s.pad, dy.side);
    grad.weight.noalias() += dy.data * cols.transpose();
    const Mat<T> dcols = L.weight.transpose() * dy.data;
    return detail::col2im<T>(dcols, x.channels(), x.side, s.kernel, s.stride, s.pad, dy.side);
  }
  const Mat<T> dcols = detail::im2col(dy, s.kernel, s.stride, s.pad, x.side);
  grad.weight.noalias() += x.data * dcols.transpose();
  return {L.weight * dcols, x.side};
}

enum class Activation { none, relu, sigmoid };

/// When set, every ReLU appends its on/off pattern here. Gradient checks use
/// it to skip finite differences that straddle a kink.
inline std::vector<bool>*& relu_pattern_sink() {
  thread_local std::vector<bool>* sink = nullptr;
  return sink;
}

template <typename T>
void apply_activation(FeatureMap<T>& x, Activation a) {
  if (a == Activation::relu) {
    if (auto* sink = relu_pattern_sink())
      for (const T v : x.data.reshaped()) sink->push_back(v > T(0));
    x.data = x.data.cwiseMax(T(0));
  }
  if (a == Activation::sigmoid) x.data = (T(1) / (T(1) + (-x.data.array()).exp())).matrix();
}

/// Gradient through the activation given its output.
template <typename T>
void activation_backward(const FeatureMap<T>& out, Activation a, FeatureMap<T>& grad) {
  if (a == Activation::relu) grad.data = (out.data.array() > T(0)).select(grad.data, T(0));
  if (a == Activation::sigmoid) grad.data.array() *= out.data.array() * (T(1) - out.data.array());
}

/// Stack of conv layers with one activation between layers and one at the end.
template <typename T>
struct ConvStack {
  std::vector<ConvLayer<T>> layers;
  Activation hidden = Activation::relu;
  Activation last = Activation::none;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "." + std::to_string(i), f);
  }
};

/// Inputs of every layer plus the final output.
template <typename T>
struct StackTape {
  std::vector<FeatureMap<T>> acts;
  const FeatureMap<T>& output() const { return acts.back(); }
};

template <typename T>
StackTape<T> stack_forward(const ConvStack<T>& net, const FeatureMap<T>& x) {
  StackTape<T> tape;
  tape.acts.reserve(net.layers.size() + 1);
  tape.acts.push_back(x);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto y = conv_forward(net.layers[i], tape.acts.back());
    apply_activation(y, i + 1 == net.layers.size() ? net.last : net.hidden);
    tape.acts.push_back(std::move(y));
  }
  return tape;
}

template <typename T>
FeatureMap<T> stack_backward(const ConvStack<T>& net, const StackTape<T>& tape, FeatureMap<T> dy, ConvStack<T>& grad) {
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    activation_backward(tape.acts[i + 1], i + 1 == net.layers.size() ? net.last : net.hidden, dy);
    dy = conv_backward(net.layers[i], tape.acts[i], dy, grad.layers[i]);
  }
  return dy;
}

/// Zero-valued copy with the same shapes, used as a gradient buffer.
template <typename P>
P zeros_like(P p) {
  p.visit("", [](const std::string&, auto& m) { m.setZero(); });
  return p;
}

/// Encoder/decoder topology. The encoder maps a side x side panel to a
/// grid x grid map with D channels; each grid cell is one latent row.
struct Architecture {
  int side = 24;
  std::vector<ConvStage> encoder;

  int latent_dim() const { return encoder.back().channels; }
  int grid_side() const {
    int s = side;
    for (const auto& st : encoder) s = conv_out_side(s, st);
    return s;
  }
  int positions() const { return grid_side() * grid_side(); }
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// 6x6 panels -> 2x2 grid, D = 4. Used for gradient checks.
inline Architecture micro_architecture() { return {6, {{4, 3, 1, 1}, {4, 3, 3, 0}}}; }

/// 24x24 -> 12 -> 6 -> 3x3 grid (H = 9), D = 32.
inline Architecture desk_architecture() { return {24, {{16, 4, 2, 1}, {32, 4, 2, 1}, {32, 4, 2, 1}}}; }

/// 80x80 -> 40 -> 20 -> 10 -> 5x5 grid (H = 25), D = 192.
inline Architecture full_scale_architecture() {
  return {80, {{32, 4, 2, 1}, {64, 4, 2, 1}, {128, 4, 2, 1}, {192, 4, 2, 1}}};
}

template <typename T>
struct NetParams {
  Architecture arch;
  ConvStack<T> encoder;
  ConvStack<T> decoder;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    encoder.visit(prefix + "encoder", f);
    decoder.visit(prefix + "decoder", f);
  }
  template <typename F>
  void visit(F&& f) {
    visit("", f);
  }
};

template <typename T>
NetParams<T> init_nets(const Architecture& arch, Rng& rng) {
  require(!arch.encoder.empty(), "init_nets: empty encoder");
  int side = arch.side;
  for (const auto& st : arch.encoder) {
    const int next = conv_out_side(side, st);
    require(next >= 1 && deconv_out_side(next, st) == side,
            "init_nets: stage does not invert exactly under the transposed convolution");
    side = next;
  }
  NetParams<T> p;
  p.arch = arch;
  int in = 1;
  for (const auto& st : arch.encoder) {
    p.encoder.layers.push_back(init_conv<T>(in, st, false, rng));
    in = st.channels;
  }
  p.encoder.hidden = Activation::relu;
  p.encoder.last = Activation::none;
  for (std::size_t i = arch.encoder.size(); i-- > 0;) {
    ConvStage st = arch.encoder[i];
    st.channels = i == 0 ? 1 : arch.encoder[i - 1].channels;
    p.decoder.layers.push_back(init_conv<T>(in, st, true, rng));
    in = st.channels;
  }
  p.decoder.hidden = Activation::relu;
  p.decoder.last = Activation::sigmoid;
  return p;
}

template <typename T>
struct EncodeResult {
  Mat<T> z;  // positions x D
  StackTape<T> tape;
};

template <typename T>
EncodeResult<T> encode(const NetParams<T>& p, const Panel<T>& x) {
  require(x.side == p.arch.side && x.channels() == 1, "encode: panel shape does not match the architecture");
  auto tape = stack_forward(p.encoder, x);
  Mat<T> z = tape.output().data.transpose();
  return {std::move(z), std::move(tape)};
}

template <typename T>
void encode_backward(const NetParams<T>& p, const EncodeResult<T>& r, const Mat<T>& dz, NetParams<T>& grad) {
  FeatureMap<T> dy{dz.transpose(), p.arch.grid_side()};
  stack_backward(p.encoder, r.tape, std::move(dy), grad.encoder);
}

template <typename T>
struct DecodeResult {
  Panel<T> panel;
  StackTape<T> tape;
};

template <typename T>
DecodeResult<T> decode(const NetParams<T>& p, const std::type_identity_t<Mat<T>>& q) {
  require(q.rows() == p.arch.positions() && q.cols() == p.arch.latent_dim(), "decode: latent shape mismatch");
  FeatureMap<T> x{q.transpose(), p.arch.grid_side()};
  auto tape = stack_forward(p.decoder, x);
  Panel<T> out = tape.output();
  return {std::move(out), std::move(tape)};
}

/// Returns d/dq.
template <typename T>
Mat<T> decode_backward(const NetParams<T>& p, const DecodeResult<T>& r, const Panel<T>& dpanel, NetParams<T>& grad) {
  auto dx = stack_backward(p.decoder, r.tape, dpanel, grad.decoder);
  return dx.data.transpose();
}

/// Sum of squared pixel errors over all reconstructed/target pairs.
template <typename T>
T reconstruction_loss(const std::vector<const Panel<T>*>& decoded, const std::vector<const Panel<T>*>& targets) {
  require(decoded.size() == targets.size(), "reconstruction_loss: count mismatch");
  T total = 0;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    require(decoded[i]->data.cols() == targets[i]->data.cols(), "reconstruction_loss: shape mismatch");
    total += (decoded[i]->data - targets[i]->data).squaredNorm();
  }
  return total;
}

/// d/d(decoded) of ||decoded - target||^2.
template <typename T>
Panel<T> squared_error_grad(const Panel<T>& decoded, const Panel<T>& target) {
  return {T(2) * (decoded.data - target.data), decoded.side};
}

template <typename T>
T pixel_mse(const Panel<T>& a, const Panel<T>& b) {
  return (a.data - b.data).squaredNorm() / T(a.data.size());
}

}  // namespace satvq::nets
