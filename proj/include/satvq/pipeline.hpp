#pragma once

// Abstraction -> reasoning -> reconstruction. Holds the assembled model for
// every variant, the three losses with their gradient routing, one optimizer
// step, discriminative selection and dataset evaluation.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "satvq/core.hpp"
#include "satvq/dataset.hpp"
#include "satvq/heads.hpp"
#include "satvq/maxsat.hpp"
#include "satvq/nets.hpp"
#include "satvq/optim.hpp"
#include "satvq/satnet.hpp"
#include "satvq/vq.hpp"

namespace satvq::pipeline {

enum class EncoderKind { vq, plain };
enum class ReasonerKind { satnet, attention, conv_k3, conv_k1 };

inline std::string to_string(EncoderKind k) { return k == EncoderKind::vq ? "vq" : "plain-autoencoder"; }

inline std::string to_string(ReasonerKind k) {
  switch (k) {
    case ReasonerKind::satnet: return "satnet";
    case ReasonerKind::attention: return "attention";
    case ReasonerKind::conv_k3: return "conv-k3";
    case ReasonerKind::conv_k1: return "conv-k1";
  }
  return "?";
}

inline EncoderKind parse_encoder(const std::string& s) {
  if (s == "vq") return EncoderKind::vq;
  if (s == "plain-autoencoder") return EncoderKind::plain;
  throw ContractError("unknown encoder kind '" + s + "' (expected vq or plain-autoencoder)");
}

inline ReasonerKind parse_reasoner(const std::string& s) {
  for (auto k : {ReasonerKind::satnet, ReasonerKind::attention, ReasonerKind::conv_k3, ReasonerKind::conv_k1})
    if (s == to_string(k)) return k;
  throw ContractError("unknown reasoner kind '" + s + "' (expected satnet, attention, conv-k3 or conv-k1)");
}

struct VariantSpec {
  EncoderKind encoder = EncoderKind::vq;
  ReasonerKind reasoner = ReasonerKind::satnet;

  std::string name() const { return to_string(encoder) + "+" + to_string(reasoner); }
  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

/// "vq+satnet" style names.
inline VariantSpec parse_variant(const std::string& s) {
  const auto plus = s.rfind('+');
  if (plus == std::string::npos) throw ContractError("variant must look like <encoder>+<reasoner>: '" + s + "'");
  return {parse_encoder(s.substr(0, plus)), parse_reasoner(s.substr(plus + 1))};
}

/// The five black-box comparison variants followed by the primary model.
inline std::vector<VariantSpec> comparison_variants() {
  return {{EncoderKind::plain, ReasonerKind::attention}, {EncoderKind::plain, ReasonerKind::conv_k3},
          {EncoderKind::plain, ReasonerKind::conv_k1},   {EncoderKind::vq, ReasonerKind::attention},
          {EncoderKind::vq, ReasonerKind::conv_k3},      {EncoderKind::vq, ReasonerKind::satnet}};
}

struct ModelConfig {
  nets::Architecture arch = nets::desk_architecture();
  int contexts = 8;
  int codebook_size = 8;
  int clauses = 128;
  int embed_dim = 0;  // 0 selects min_embedding_dim(n) + 1
  int aux = 0;
  int train_sweeps = 40;
  int eval_sweeps = 100;
  double tol = 1e-6;
  double beta = vq::kDefaultBeta;
  int head_width = 64;
  VariantSpec variant;

  int positions() const { return arch.positions(); }
  /// Width of one encoding row fed to the reasoner.
  int code_width() const { return variant.encoder == EncoderKind::vq ? codebook_size : arch.latent_dim(); }
  int reasoner_inputs() const { return contexts * positions() * codebook_size; }
  int reasoner_outputs() const { return positions() * codebook_size; }
  int layer_variables() const { return reasoner_inputs() + reasoner_outputs() + aux; }
  int layer_rank() const {
    return embed_dim > 0 ? embed_dim : maxsat::default_embedding_dim(layer_variables());
  }
};

template <typename T>
struct Model {
  ModelConfig cfg;
  nets::NetParams<T> nets;
  vq::Codebook<T> codebook;
  satnet::ReasoningWeights<T> layer;
  heads::AttentionHead<T> attention;
  heads::ConvHead<T> conv;

  bool quantized() const { return cfg.variant.encoder == EncoderKind::vq; }

  /// Every trainable tensor, in a fixed order, with a stable name.
  template <typename F>
  void visit(F&& f) {
    nets.visit(f);
    if (quantized()) f("codebook", codebook.E);
    switch (cfg.variant.reasoner) {
      case ReasonerKind::satnet: f("reasoner.S", layer.S); break;
      case ReasonerKind::attention: attention.visit("reasoner", f); break;
      default: conv.visit("reasoner", f); break;
    }
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<Model*>(this)->visit([&](const std::string& name, Mat<T>& m) { f(name, static_cast<const Mat<T>&>(m)); });
  }
};

template <typename T>
Model<T> build_variant(const ModelConfig& cfg, Rng& rng) {
  require(cfg.contexts >= 1, "build_variant: need at least one context panel");
  if (cfg.variant.encoder == EncoderKind::plain && cfg.variant.reasoner == ReasonerKind::satnet)
    throw ContractError("build_variant: the satnet reasoner needs the vq encoder (it consumes probabilities)");
  Model<T> m;
  m.cfg = cfg;
  m.nets = nets::init_nets<T>(cfg.arch, rng);
  if (m.quantized()) m.codebook = vq::init_codebook<T>(cfg.codebook_size, cfg.arch.latent_dim(), rng);
  const int H = cfg.positions();
  switch (cfg.variant.reasoner) {
    case ReasonerKind::satnet:
      m.layer = satnet::init_weights<T>(cfg.reasoner_inputs(), cfg.reasoner_outputs(), cfg.clauses, cfg.layer_rank(),
                                        rng, cfg.aux);
      m.layer.max_sweeps = cfg.train_sweeps;
      m.layer.tol = cfg.tol;
      break;
    case ReasonerKind::attention:
      m.attention = heads::init_attention<T>(cfg.contexts, H, cfg.code_width(), cfg.head_width, rng);
      break;
    case ReasonerKind::conv_k3:
    case ReasonerKind::conv_k1:
      m.conv = heads::init_conv_head<T>(cfg.contexts, cfg.arch.grid_side(), cfg.code_width(),
                                        cfg.variant.reasoner == ReasonerKind::conv_k3 ? 3 : 1, cfg.head_width, rng);
      break;
  }
  return m;
}

/// Same shapes, all zeros.
template <typename T>
Model<T> zero_like(Model<T> m) {
  m.visit([](const std::string&, Mat<T>& x) { x.setZero(); });
  return m;
}

template <typename To, typename From>
Model<To> cast_model(const Model<From>& src) {
  Rng rng(0);
  Model<To> dst = build_variant<To>(src.cfg, rng);
  std::vector<const Mat<From>*> from;
  src.visit([&](const std::string&, const Mat<From>& x) { from.push_back(&x); });
  std::size_t i = 0;
  dst.visit([&](const std::string&, Mat<To>& x) { x = from[i++]->template cast<To>(); });
  return dst;
}

// ------------------------------------------------------------------ problems

template <typename T>
struct Problem {
  std::vector<nets::Panel<T>> contexts;
  nets::Panel<T> answer;
  std::vector<nets::Panel<T>> candidates;
  int answer_index = -1;
};

template <typename T>
Problem<T> load_problem(const data::Dataset& ds, std::size_t i) {
  Problem<T> p;
  for (int c = 0; c < ds.contexts; ++c) p.contexts.push_back(nets::make_panel<T>(ds.side, ds.context(i, c)));
  p.answer = nets::make_panel<T>(ds.side, ds.answer(i));
  for (int c = 0; c < data::kCandidates; ++c) p.candidates.push_back(nets::make_panel<T>(ds.side, ds.candidate(i, c)));
  p.answer_index = ds.records[i].candidates.answer_index;
  return p;
}

// -------------------------------------------------------------------- losses

struct LossReport {
  double abst = 0;
  double recon = 0;
  double reason = 0;
  double total = 0;

  LossReport& operator+=(const LossReport& o) {
    abst += o.abst;
    recon += o.recon;
    reason += o.reason;
    total += o.total;
    return *this;
  }
};

inline LossReport total_loss(double abst, double recon, double reason) {
  return {abst, recon, reason, abst + recon + reason};
}

inline constexpr double kBceEps = 1e-7;

/// Elementwise BCE summed over the H x K entries.
template <typename T>
T reasoning_loss(const Mat<T>& t_hat, const Mat<T>& target) {
  require(t_hat.rows() == target.rows() && t_hat.cols() == target.cols(), "reasoning_loss: shape mismatch");
  T sum = 0;
  for (Eigen::Index i = 0; i < t_hat.size(); ++i) sum += satnet::bce<T>(t_hat.data()[i], target.data()[i], T(kBceEps));
  return sum;
}

template <typename T>
Mat<T> reasoning_loss_grad(const Mat<T>& t_hat, const Mat<T>& target) {
  Mat<T> g(t_hat.rows(), t_hat.cols());
  for (Eigen::Index i = 0; i < t_hat.size(); ++i)
    g.data()[i] = satnet::bce_slope<T>(t_hat.data()[i], target.data()[i], T(kBceEps));
  return g;
}

// ----------------------------------------------------------------- inference

/// Encode then quantize and relax every panel.
template <typename T>
std::vector<vq::PanelLatent<T>> abstract_context(const Model<T>& model, const std::vector<nets::Panel<T>>& panels) {
  std::vector<vq::PanelLatent<T>> out;
  for (const auto& p : panels) {
    const Mat<T> z = nets::encode(model.nets, p).z;
    if (model.quantized())
      out.push_back(vq::abstract_latent<T>(z, model.codebook));
    else
      out.push_back({z, z, {}, {}, {}, {}});
  }
  return out;
}

/// Reasoner state needed by the backward pass.
template <typename T>
struct ReasonTape {
  satnet::LayerActivation<T> layer;
  heads::AttentionTape<T> attention;
  nets::StackTape<T> conv;
  Mat<T> output;  // probabilities for vq variants, latent rows for plain ones
};

template <typename T>
Vec<T> flatten_encodings(const std::vector<Mat<T>>& inputs) {
  const Eigen::Index H = inputs.front().rows(), C = inputs.front().cols();
  Vec<T> v(static_cast<Eigen::Index>(inputs.size()) * H * C);
  Eigen::Index at = 0;
  for (const auto& m : inputs)
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index c = 0; c < C; ++c) v[at++] = m(h, c);
  return v;
}

/// t_hat = S_psi(t_1..t_M). `sweeps` = 0 uses the training budget.
template <typename T>
Mat<T> reason(const Model<T>& model, const std::vector<Mat<T>>& inputs, std::uint64_t seed, ReasonTape<T>& tape,
              int sweeps = 0) {
  const auto& cfg = model.cfg;
  require(static_cast<int>(inputs.size()) == cfg.contexts, "reason: expected one encoding per context panel");
  const int H = cfg.positions(), C = cfg.code_width();
  for (const auto& m : inputs) require(m.rows() == H && m.cols() == C, "reason: encoding shape mismatch");
  Mat<T> pre;
  switch (cfg.variant.reasoner) {
    case ReasonerKind::satnet: {
      Rng rng(seed);
      Vec<T> z = flatten_encodings(inputs).cwiseMax(T(0)).cwiseMin(T(1));
      tape.layer = satnet::forward(model.layer, z, rng, sweeps);
      tape.output = heads::detail::unflatten_rows<T>(tape.layer.z_out, H, C);
      return tape.output;
    }
    case ReasonerKind::attention:
      pre = heads::attention_forward(model.attention, inputs, tape.attention);
      break;
    default:
      pre = heads::conv_head_forward(model.conv, inputs, tape.conv);
      break;
  }
  if (model.quantized())
    tape.output = (T(1) / (T(1) + (-pre.array()).exp())).matrix();
  else
    tape.output = pre;
  return tape.output;
}

/// Gradient with respect to each reasoner input; accumulates parameter gradients.
template <typename T>
std::vector<Mat<T>> reason_backward(const Model<T>& model, const ReasonTape<T>& tape, const Mat<T>& dout,
                                    Model<T>& grad) {
  const auto& cfg = model.cfg;
  const int H = cfg.positions(), C = cfg.code_width();
  if (cfg.variant.reasoner == ReasonerKind::satnet) {
    const auto g = satnet::backward(model.layer, tape.layer, heads::detail::flatten_rows<T>(dout));
    grad.layer.S += g.S;
    std::vector<Mat<T>> out;
    for (int i = 0; i < cfg.contexts; ++i)
      out.push_back(heads::detail::unflatten_rows<T>(g.z_in.segment(static_cast<Eigen::Index>(i) * H * C, H * C), H, C));
    return out;
  }
  Mat<T> dpre = dout;
  if (model.quantized()) dpre.array() *= tape.output.array() * (T(1) - tape.output.array());
  if (cfg.variant.reasoner == ReasonerKind::attention)
    return heads::attention_backward(model.attention, tape.attention, dpre, grad.attention);
  return heads::conv_head_backward(model.conv, tape.conv, dpre, grad.conv);
}

/// q_hat = t_hat E then decode (vq); decode the predicted latent directly otherwise.
template <typename T>
nets::Panel<T> reconstruct_answer(const Model<T>& model, const Mat<T>& t_hat) {
  if (!model.quantized()) return nets::decode(model.nets, t_hat).panel;
  return nets::decode(model.nets, vq::embed<T>(t_hat, model.codebook)).panel;
}

template <typename T>
struct Inference {
  Mat<T> t_hat;
  nets::Panel<T> generated;
};

/// Evaluation path: hard encodings in, evaluation sweep budget.
template <typename T>
Inference<T> infer(const Model<T>& model, const std::vector<nets::Panel<T>>& contexts, std::uint64_t seed) {
  const auto lat = abstract_context(model, contexts);
  std::vector<Mat<T>> inputs;
  for (const auto& l : lat) inputs.push_back(model.quantized() ? l.t : l.z);
  ReasonTape<T> tape;
  Inference<T> out;
  out.t_hat = reason(model, inputs, seed, tape, model.cfg.eval_sweeps);
  out.generated = reconstruct_answer(model, out.t_hat);
  return out;
}

// ------------------------------------------------------------------ training

/// Which loss terms contribute gradient (values are always reported).
struct LossMask {
  bool abst = true;
  bool recon = true;
  bool reason = true;
};

/// Loss of one problem; adds scale * gradient into `grad`.
///
/// Routing: the reconstruction gradient reaches z through the straight-through
/// estimator; the abstraction loss uses its stop-gradient split; the reasoning
/// loss reaches the codebook and encoder through the relaxed inputs t'; the
/// target t* (hard encoding of the answer) is a constant.
template <typename T>
LossReport problem_gradient(const Model<T>& model, const Problem<T>& prob, std::uint64_t seed, Model<T>& grad, T scale,
                            LossMask mask = {}) {
  const auto& cfg = model.cfg;
  const int M = cfg.contexts;
  require(static_cast<int>(prob.contexts.size()) == M, "problem_gradient: context count mismatch");
  std::vector<const nets::Panel<T>*> panels;
  for (const auto& c : prob.contexts) panels.push_back(&c);
  panels.push_back(&prob.answer);

  std::vector<nets::EncodeResult<T>> enc;
  std::vector<vq::PanelLatent<T>> lat;
  for (const auto* p : panels) {
    enc.push_back(nets::encode(model.nets, *p));
    if (!enc.back().z.allFinite()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return total_loss(nan, nan, nan);
    }
    if (model.quantized())
      lat.push_back(vq::abstract_latent<T>(enc.back().z, model.codebook));
    else
      lat.push_back({enc.back().z, enc.back().z, {}, {}, {}, {}});
  }
  std::vector<Mat<T>> dz;
  for (const auto& e : enc) dz.push_back(Mat<T>::Zero(e.z.rows(), e.z.cols()));

  // Reconstruction of every panel from its (quantized) latent.
  T recon = 0;
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto dec = nets::decode(model.nets, lat[i].q);
    recon += (dec.panel.data - panels[i]->data).squaredNorm();
    if (mask.recon) {
      nets::Panel<T> dy{scale * T(2) * (dec.panel.data - panels[i]->data), dec.panel.side};
      dz[i] += vq::StraightThrough<T>::backward_to_z(nets::decode_backward(model.nets, dec, dy, grad.nets));
    }
  }

  T abst = 0;
  if (model.quantized()) {
    std::vector<const vq::PanelLatent<T>*> ptrs;
    for (const auto& l : lat) ptrs.push_back(&l);
    const auto a = vq::abstraction_loss(ptrs, model.codebook, T(cfg.beta));
    abst = a.value;
    if (mask.abst) {
      for (std::size_t i = 0; i < lat.size(); ++i) dz[i] += scale * a.grad_z[i];
      grad.codebook.E += scale * a.grad_E;
    }
  }

  // Reasoning.
  std::vector<Mat<T>> inputs;
  for (int i = 0; i < M; ++i) inputs.push_back(model.quantized() ? lat[i].t_relaxed : lat[i].z);
  ReasonTape<T> tape;
  const Mat<T> out = reason(model, inputs, seed, tape);
  T reason_value = 0;
  std::vector<Mat<T>> dinputs;
  if (model.quantized()) {
    reason_value = reasoning_loss<T>(out, lat[M].t);
    if (mask.reason) dinputs = reason_backward(model, tape, Mat<T>(scale * reasoning_loss_grad<T>(out, lat[M].t)), grad);
  } else {
    // Continuous bottleneck: the head is trained through the decoded answer.
    const auto dec = nets::decode(model.nets, out);
    recon += (dec.panel.data - prob.answer.data).squaredNorm();
    if (mask.recon) {
      nets::Panel<T> dy{scale * T(2) * (dec.panel.data - prob.answer.data), dec.panel.side};
      dinputs = reason_backward(model, tape, nets::decode_backward(model.nets, dec, dy, grad.nets), grad);
    }
  }
  for (std::size_t i = 0; i < dinputs.size(); ++i) {
    if (model.quantized()) {
      const auto g = vq::relax_backward<T>(lat[i].z, model.codebook, lat[i].t_relaxed, lat[i].distances, dinputs[i]);
      dz[i] += g.z;
      grad.codebook.E += g.E;
    } else {
      dz[i] += dinputs[i];
    }
  }
  for (std::size_t i = 0; i < enc.size(); ++i)
    if (!dz[i].isZero(0)) nets::encode_backward(model.nets, enc[i], dz[i], grad.nets);
  return total_loss(abst, recon, reason_value);
}

/// Adam with one moment slot per model tensor (visit order).
template <typename T>
struct Optimizer {
  Adam<T> adam;
  std::vector<AdamSlot<T>> slots;

  explicit Optimizer(AdamOptions opts = {}) : adam(opts) {}

  void step(Model<T>& model, const Model<T>& grad) {
    std::vector<const Mat<T>*> gs;
    grad.visit([&](const std::string&, const Mat<T>& g) { gs.push_back(&g); });
    slots.resize(gs.size());
    adam.begin_step();
    std::size_t i = 0;
    model.visit([&](const std::string&, Mat<T>& p) {
      adam.update(slots[i], flat(p), flat(*gs[i]));
      ++i;
    });
  }
};

struct StepResult {
  LossReport loss;  // batch mean
  bool accepted = true;
  std::string diagnostic;
};

template <typename T>
bool all_finite(const Model<T>& m) {
  bool ok = true;
  m.visit([&](const std::string&, const Mat<T>& x) { ok = ok && x.allFinite(); });
  return ok;
}

/// One optimizer step on the batch mean of L_total. `seeds[b]` drives the
/// layer's random initialization for problem b.
template <typename T>
StepResult train_step(Model<T>& model, Optimizer<T>& opt, const std::vector<const Problem<T>*>& batch,
                      const std::vector<std::uint64_t>& seeds) {
  require(!batch.empty() && batch.size() == seeds.size(), "train_step: need one seed per problem");
  Model<T> grad = zero_like(model);
  const T scale = T(1) / T(batch.size());
  StepResult r;
  for (std::size_t b = 0; b < batch.size(); ++b) r.loss += problem_gradient(model, *batch[b], seeds[b], grad, scale);
  r.loss.abst /= batch.size();
  r.loss.recon /= batch.size();
  r.loss.reason /= batch.size();
  r.loss.total = r.loss.abst + r.loss.recon + r.loss.reason;
  if (!std::isfinite(r.loss.total) || !all_finite(grad)) {
    r.accepted = false;
    r.diagnostic = "non-finite loss or gradient; step skipped";
    return r;
  }
  opt.step(model, grad);
  return r;
}

// ---------------------------------------------------------------- evaluation

/// Index of the candidate with the smallest per-pixel MSE (ties -> first).
template <typename T>
int discriminative_select(const nets::Panel<T>& generated, const std::vector<nets::Panel<T>>& candidates) {
  require(!candidates.empty(), "discriminative_select: no candidates");
  int best = 0;
  T best_err = std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const T err = nets::pixel_mse(generated, candidates[i]);
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(i);
    }
  }
  return best;
}

/// Row-wise argmax agreement between t_hat and a one-hot target.
template <typename T>
double bit_accuracy(const Mat<T>& t_hat, const Mat<T>& target) {
  int hits = 0;
  for (Eigen::Index h = 0; h < t_hat.rows(); ++h) {
    Eigen::Index a = 0, b = 0;
    t_hat.row(h).maxCoeff(&a);
    target.row(h).maxCoeff(&b);
    hits += a == b;
  }
  return static_cast<double>(hits) / static_cast<double>(t_hat.rows());
}

struct Metrics {
  std::size_t problems = 0;
  double generation_mse = 0;
  double bit_accuracy = std::numeric_limits<double>::quiet_NaN();  // vq variants only
  double discriminative_accuracy = 0;
};

inline std::uint64_t eval_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index, 0x5eed); }

/// Aggregates over problems [first, first + count). With `oracle` set, the
/// reasoner is bypassed and t_hat := t* (hard encoding of the true answer).
template <typename T>
Metrics evaluate(const Model<T>& model, const data::Dataset& ds, std::size_t first, std::size_t count,
                 std::uint64_t seed, bool oracle = false) {
  require(first + count <= ds.size(), "evaluate: range exceeds the dataset");
  require(ds.side == model.cfg.arch.side && ds.contexts == model.cfg.contexts,
          "evaluate: dataset panel size or context count does not match the model");
  require(!oracle || model.quantized(), "evaluate: oracle mode needs a vq model");
  Metrics m;
  double bits = 0;
  int correct = 0;
  for (std::size_t i = first; i < first + count; ++i) {
    const auto prob = load_problem<T>(ds, i);
    Inference<T> inf;
    const Mat<T> target = model.quantized() ? abstract_context(model, {prob.answer})[0].t : Mat<T>();
    if (oracle) {
      inf.t_hat = target;
      inf.generated = reconstruct_answer(model, target);
    } else {
      inf = infer(model, prob.contexts, eval_seed(seed, i));
    }
    m.generation_mse += nets::pixel_mse(inf.generated, prob.answer);
    if (model.quantized()) bits += bit_accuracy<T>(inf.t_hat, target);
    correct += discriminative_select(inf.generated, prob.candidates) == prob.answer_index;
  }
  m.problems = count;
  if (count > 0) {
    m.generation_mse /= count;
    m.discriminative_accuracy = static_cast<double>(correct) / count;
    if (model.quantized()) m.bit_accuracy = bits / count;
  }
  return m;
}

}  // namespace satvq::pipeline
