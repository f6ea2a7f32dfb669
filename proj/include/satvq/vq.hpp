#pragma once

// Codebook quantization: hard nearest-codeword assignment (one-hot
// propositional variables), the softmax relaxation over negative distances,
// the embedding map t -> tE, the straight-through estimator and the
// abstraction loss with its stop-gradient routing.

#include <cmath>
#include <type_traits>
#include <vector>

#include "satvq/core.hpp"

namespace satvq::vq {

/// K x D codewords, one per row.
template <typename T>
struct Codebook {
  Mat<T> E;

  int K() const { return static_cast<int>(E.rows()); }
  int D() const { return static_cast<int>(E.cols()); }
};

/// i.i.d. N(0, 1/D) entries.
template <typename T>
Codebook<T> init_codebook(int K, int D, Rng& rng) {
  require(K >= 2 && D >= 1, "init_codebook: need K >= 2 and D >= 1");
  Codebook<T> cb{Mat<T>(K, D)};
  const T scale = T(1) / std::sqrt(T(D));
  for (int d = 0; d < D; ++d)
    for (int k = 0; k < K; ++k) cb.E(k, d) = static_cast<T>(rng.normal()) * scale;
  return cb;
}

template <typename T>
struct PanelLatent {
  Mat<T> z;               // H x D encoder output
  Mat<T> q;               // H x D quantized
  std::vector<int> s;     // H codeword indices
  Mat<T> t;               // H x K one-hot
  Mat<T> t_relaxed;       // H x K simplex rows
  Mat<T> distances;       // H x K Euclidean distances
  int H() const { return static_cast<int>(z.rows()); }
};

/// H x K matrix of ||z_h - e_k||.
template <typename T>
Mat<T> distances(const std::type_identity_t<Mat<T>>& z, const Codebook<T>& cb) {
  require(z.cols() == cb.D(), "vq: latent width != codeword dimension");
  Mat<T> d(z.rows(), cb.K());
  for (int k = 0; k < cb.K(); ++k)
    d.col(k) = (z.rowwise() - cb.E.row(k)).rowwise().norm();
  return d;
}

/// Nearest codeword per row (ties -> smallest index), with q and one-hot t.
template <typename T>
PanelLatent<T> quantize(const std::type_identity_t<Mat<T>>& z, const Codebook<T>& cb) {
  require(z.allFinite(), "quantize: non-finite latent");
  PanelLatent<T> out;
  out.z = z;
  out.distances = distances(z, cb);
  const int H = static_cast<int>(z.rows());
  out.s.resize(H);
  out.q.resize(H, cb.D());
  out.t = Mat<T>::Zero(H, cb.K());
  for (int h = 0; h < H; ++h) {
    int best = 0;
    for (int k = 1; k < cb.K(); ++k)
      if (out.distances(h, k) < out.distances(h, best)) best = k;
    out.s[h] = best;
    out.q.row(h) = cb.E.row(best);
    out.t(h, best) = T(1);
  }
  return out;
}

/// Row-wise softmax of negative distances.
template <typename T>
Mat<T> relax_from_distances(const Mat<T>& d) {
  Mat<T> t(d.rows(), d.cols());
  for (Eigen::Index h = 0; h < d.rows(); ++h) {
    const T shift = d.row(h).minCoeff();
    t.row(h) = (-(d.row(h).array() - shift)).exp();
    t.row(h) /= t.row(h).sum();
  }
  return t;
}

template <typename T>
Mat<T> relax(const std::type_identity_t<Mat<T>>& z, const Codebook<T>& cb) {
  return relax_from_distances<T>(distances(z, cb));
}

/// Quantize and relax in one pass.
template <typename T>
PanelLatent<T> abstract_latent(const std::type_identity_t<Mat<T>>& z, const Codebook<T>& cb) {
  auto lat = quantize(z, cb);
  lat.t_relaxed = relax_from_distances<T>(lat.distances);
  return lat;
}

template <typename T>
struct RelaxGrad {
  Mat<T> z;  // H x D
  Mat<T> E;  // K x D
};

/// Vector-Jacobian product of relax() given upstream gradient on t'.
template <typename T>
RelaxGrad<T> relax_backward(const Mat<T>& z, const Codebook<T>& cb, const Mat<T>& t_relaxed,
                            const Mat<T>& dist, const Mat<T>& upstream) {
  const int H = static_cast<int>(z.rows());
  RelaxGrad<T> g{Mat<T>::Zero(H, cb.D()), Mat<T>::Zero(cb.K(), cb.D())};
  for (int h = 0; h < H; ++h) {
    const T mean = t_relaxed.row(h).dot(upstream.row(h));
    for (int k = 0; k < cb.K(); ++k) {
      // t' = softmax(-d): d t'_k / d d_k' = -t'_k (delta - t'_k')
      const T dd = -t_relaxed(h, k) * (upstream(h, k) - mean);
      const T d = dist(h, k);
      if (!(d > T(0)) || dd == T(0)) continue;
      const auto dir = (z.row(h) - cb.E.row(k)) / d;
      g.z.row(h) += dd * dir;
      g.E.row(k) -= dd * dir;
    }
  }
  return g;
}

/// q_hat = t E (rows of t may be one-hot, simplex, or any weights).
template <typename T>
Mat<T> embed(const std::type_identity_t<Mat<T>>& t, const Codebook<T>& cb) {
  require(t.cols() == cb.K(), "embed: t must have K columns");
  return t * cb.E;
}

template <typename T>
struct EmbedGrad {
  Mat<T> t;
  Mat<T> E;
};

template <typename T>
EmbedGrad<T> embed_backward(const Mat<T>& t, const Codebook<T>& cb, const Mat<T>& upstream) {
  return {upstream * cb.E.transpose(), t.transpose() * upstream};
}

/// Straight-through estimator: the forward value is q, and the gradient that
/// reaches this node is handed to z unchanged (nothing flows to q's producer).
template <typename T>
struct StraightThrough {
  static Mat<T> forward(const Mat<T>& z, const Mat<T>& q) {
    require(z.rows() == q.rows() && z.cols() == q.cols(), "straight_through: shape mismatch");
    return q;
  }
  static Mat<T> backward_to_z(const Mat<T>& upstream) { return upstream; }
};

inline constexpr double kDefaultBeta = 0.25;

template <typename T>
struct AbstractionLoss {
  T value = 0;
  std::vector<Mat<T>> grad_z;  // one per panel
  Mat<T> grad_E;
};

/// sum_panels ||sg(z) - q||^2 + beta ||z - sg(q)||^2. The first term trains
/// the codebook, the second (commitment) the encoder.
template <typename T>
AbstractionLoss<T> abstraction_loss(const std::vector<const PanelLatent<T>*>& panels, const Codebook<T>& cb,
                                    T beta = T(kDefaultBeta)) {
  AbstractionLoss<T> out;
  out.grad_E = Mat<T>::Zero(cb.K(), cb.D());
  for (const auto* p : panels) {
    const Mat<T> diff = p->z - p->q;
    out.value += (T(1) + beta) * diff.squaredNorm();
    out.grad_z.push_back(T(2) * beta * diff);
    for (int h = 0; h < p->H(); ++h) out.grad_E.row(p->s[h]) -= T(2) * diff.row(h);
  }
  return out;
}

/// Indices of codewords with zero usage. Reporting only.
template <typename T>
std::vector<int> detect_collapse(const Codebook<T>& cb, const std::vector<long long>& usage_counts) {
  require(static_cast<int>(usage_counts.size()) == cb.K(), "detect_collapse: one count per codeword");
  std::vector<int> dead;
  for (std::size_t k = 0; k < usage_counts.size(); ++k)
    if (usage_counts[k] == 0) dead.push_back(static_cast<int>(k));
  return dead;
}

template <typename T>
void accumulate_usage(const PanelLatent<T>& lat, std::vector<long long>& counts) {
  for (int s : lat.s) ++counts.at(s);
}

}  // namespace satvq::vq
