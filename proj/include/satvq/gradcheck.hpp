#pragma once

// Finite-difference suites for the reasoning layer, the encoder/decoder
// chain and the micro pipeline, reporting the worst relative error of each.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "satvq/dataset.hpp"
#include "satvq/pipeline.hpp"
#include "satvq/satnet.hpp"

namespace satvq::gradcheck {

struct CheckResult {
  std::string name;
  double worst = 0;  // largest relative error seen
  int checked = 0;   // entries with |gradient| above the floor
  double tolerance = 0;
  int skipped = 0;   // entries whose perturbation flips a ReLU
  bool passed() const { return checked > 0 && worst < tolerance; }
};

inline constexpr double kFloor = 1e-6;

/// Relative error on entries where either value exceeds the floor.
inline void compare(double analytic, double numeric, CheckResult& r) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (!(scale > kFloor)) {
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) r.worst = INFINITY;
    return;
  }
  r.worst = std::max(r.worst, std::abs(analytic - numeric) / scale);
  ++r.checked;
}

/// Random small layers (n <= 6, m <= 8, k = 4, 30 sweeps), loss c . z_out.
inline CheckResult satnet_layer(int trials = 20, std::uint64_t seed = 100, double eps = 1e-4) {
  CheckResult r{"satnet-layer", 0, 0, 1e-3};
  for (int trial = 0; trial < trials; ++trial) {
    Rng init(derive_seed(seed, trial));
    const int n_in = 1 + static_cast<int>(init.index(4));
    const int n_out = 1 + static_cast<int>(init.index(6 - n_in));
    const int m = 1 + static_cast<int>(init.index(8));
    auto w = satnet::init_weights<double>(n_in, n_out, m, 4, init);
    w.max_sweeps = 30;
    w.tol = 0;
    Vec<double> z(n_in), c(n_out);
    for (auto& x : z) x = 0.05 + 0.9 * init.uniform();
    for (auto& x : c) x = init.normal();
    const std::uint64_t fseed = derive_seed(seed + 1, trial);
    auto loss = [&](const satnet::ReasoningWeights<double>& ww, const Vec<double>& zz) {
      Rng rng(fseed);
      return satnet::forward(ww, zz, rng).z_out.dot(c);
    };
    Rng rng(fseed);
    const auto g = satnet::backward(w, satnet::forward(w, z, rng), c);
    for (Eigen::Index i = 0; i < w.S.size(); ++i) {
      auto plus = w, minus = w;
      plus.S.data()[i] += eps;
      minus.S.data()[i] -= eps;
      compare(g.S.data()[i], (loss(plus, z) - loss(minus, z)) / (2 * eps), r);
    }
    for (int i = 0; i < n_in; ++i) {
      Vec<double> zp = z, zm = z;
      zp[i] += eps;
      zm[i] -= eps;
      compare(g.z_in[i], (loss(w, zp) - loss(w, zm)) / (2 * eps), r);
    }
  }
  return r;
}

inline pipeline::ModelConfig micro_model() {
  pipeline::ModelConfig c;
  c.arch = nets::micro_architecture();
  c.contexts = 3;
  c.codebook_size = 3;
  c.clauses = 16;
  c.train_sweeps = 10;
  c.eval_sweeps = 10;
  c.tol = 0;
  c.head_width = 8;
  return c;
}

namespace detail {

/// Central differences over every tensor accepted by `select`, skipping
/// entries where the two evaluations see different ReLU patterns.
inline void fd_tensors(pipeline::Model<double>& model, const pipeline::Model<double>& grad,
                       const std::function<double()>& loss, const std::function<bool(const std::string&)>& select,
                       double eps, CheckResult& r) {
  std::vector<Mat<double>*> ps;
  std::vector<const Mat<double>*> gs;
  std::vector<std::string> names;
  model.visit([&](const std::string& n, Mat<double>& m) {
    ps.push_back(&m);
    names.push_back(n);
  });
  grad.visit([&](const std::string&, const Mat<double>& m) { gs.push_back(&m); });
  for (std::size_t t = 0; t < ps.size(); ++t) {
    if (!select(names[t])) continue;
    for (Eigen::Index i = 0; i < ps[t]->size(); ++i) {
      double& w = ps[t]->data()[i];
      const double saved = w;
      std::vector<bool> up_pattern, down_pattern;
      nets::relu_pattern_sink() = &up_pattern;
      w = saved + eps;
      const double up = loss();
      nets::relu_pattern_sink() = &down_pattern;
      w = saved - eps;
      const double down = loss();
      nets::relu_pattern_sink() = nullptr;
      w = saved;
      if (up_pattern != down_pattern) {
        ++r.skipped;
        continue;
      }
      compare(gs[t]->data()[i], (up - down) / (2 * eps), r);
    }
  }
}

}  // namespace detail

/// ||decode(encode(x)) - target||^2 on 6x6 panels, all encoder/decoder weights.
inline CheckResult encode_decode(int trials = 5, std::uint64_t seed = 300, double eps = 1e-6) {
  CheckResult r{"encode-decode", 0, 0, 1e-4};
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, trial));
    auto model = pipeline::build_variant<double>(micro_model(), rng);
    nets::Panel<double> x{Mat<double>(1, 36), 6}, target{Mat<double>(1, 36), 6};
    for (auto& v : x.data.reshaped()) v = rng.uniform();
    for (auto& v : target.data.reshaped()) v = rng.uniform();
    auto loss = [&] {
      const auto y = nets::decode(model.nets, nets::encode(model.nets, x).z).panel;
      return (y.data - target.data).squaredNorm();
    };
    auto grad = pipeline::zero_like(model);
    const auto enc = nets::encode(model.nets, x);
    const auto dec = nets::decode(model.nets, enc.z);
    const Mat<double> dq = nets::decode_backward(model.nets, dec, nets::squared_error_grad(dec.panel, target), grad.nets);
    nets::encode_backward(model.nets, enc, dq, grad.nets);
    detail::fd_tensors(model, grad, loss, [](const std::string& n) { return n.rfind("encoder", 0) == 0 || n.rfind("decoder", 0) == 0; },
                       eps, r);
  }
  return r;
}

/// L_reason through the relaxed encodings (encoder, codebook, clause matrix)
/// and L_recon with respect to the decoder, on the micro pipeline.
inline CheckResult micro_pipeline(int trials = 20, std::uint64_t seed = 400, double eps = 1e-4) {
  CheckResult r{"pipeline-relaxed-path", 0, 0, 1e-3};
  const auto ds = data::generate(rpm::GenConfig{}, trials, seed, 6, 3);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, trial));
    auto model = pipeline::build_variant<double>(micro_model(), rng);
    const auto prob = pipeline::load_problem<double>(ds, trial);
    const std::uint64_t lseed = derive_seed(seed + 1, trial);
    auto value = [&](bool reason) {
      auto scratch = pipeline::zero_like(model);
      const auto rep = pipeline::problem_gradient(model, prob, lseed, scratch, 0.0, {false, false, false});
      return reason ? rep.reason : rep.recon;
    };
    auto grad = pipeline::zero_like(model);
    pipeline::problem_gradient(model, prob, lseed, grad, 1.0, {false, false, true});
    detail::fd_tensors(model, grad, [&] { return value(true); },
                       [](const std::string& n) { return n.rfind("decoder", 0) != 0; }, eps, r);
    auto grad_recon = pipeline::zero_like(model);
    pipeline::problem_gradient(model, prob, lseed, grad_recon, 1.0, {false, true, false});
    detail::fd_tensors(model, grad_recon, [&] { return value(false); },
                       [](const std::string& n) { return n.rfind("decoder", 0) == 0; }, eps, r);
  }
  return r;
}

}  // namespace satvq::gradcheck
