#pragma once

// Differentiable MAXSAT layer. The learnable weight is a relaxed clause
// matrix S (m x (n+1)); the forward pass clamps input variables to unit
// vectors encoding their probabilities, solves the SDP relaxation for the
// remaining columns with the mixing method, and decodes output
// probabilities. The backward pass is exact reverse-mode differentiation of
// the executed coordinate updates.
//
// Column layout of S and V: 0 = truth direction, then n_in inputs, then
// n_out outputs, then n_aux auxiliary (free, undecoded) variables.

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "satvq/core.hpp"
#include "satvq/maxsat.hpp"
#include "satvq/optim.hpp"

namespace satvq::satnet {

template <typename T>
struct ReasoningWeights {
  Mat<T> S;
  int n_in = 0;
  int n_out = 0;
  int n_aux = 0;
  int k = 0;
  int max_sweeps = 40;
  double tol = 1e-6;

  int n() const { return n_in + n_out + n_aux; }
  int m() const { return static_cast<int>(S.rows()); }
  int first_output() const { return 1 + n_in; }
  int first_free() const { return 1 + n_in; }
  int columns() const { return n() + 1; }
};

/// S entries i.i.d. N(0, 1/(n+1)).
template <typename T>
ReasoningWeights<T> init_weights(int n_in, int n_out, int m, int k, Rng& rng, int n_aux = 0) {
  require(n_in >= 1 && n_out >= 1 && m >= 1 && n_aux >= 0, "init_weights: dimensions must be positive");
  ReasoningWeights<T> w;
  w.n_in = n_in;
  w.n_out = n_out;
  w.n_aux = n_aux;
  w.k = k;
  require(k >= maxsat::min_embedding_dim(w.n()), "init_weights: need k > sqrt(2n)");
  const int cols = w.n() + 1;
  const T scale = T(1) / std::sqrt(T(cols));
  w.S.resize(m, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < m; ++i) w.S(i, j) = static_cast<T>(rng.normal()) * scale;
  return w;
}

/// v = -cos(pi z) v_top + sin(pi z) u, with u a unit vector orthogonal to v_top.
template <typename T>
Vec<T> clamp_input(T z, const Vec<T>& truth, const Vec<T>& u) {
  require(z >= T(0) && z <= T(1), "clamp_input: z must lie in [0,1]");
  return -std::cos(pi_v<T> * z) * truth + std::sin(pi_v<T> * z) * u;
}

/// arccos(-v . v_top) / pi, the probability that the variable is true.
/// Evaluated as atan2(|v_perp|, -v . v_top) / pi, which equals the arccos form
/// on unit vectors and stays accurate near 0 and 1.
template <typename T>
T decode_probability(const Vec<T>& v, const Vec<T>& truth) {
  const T along = v.dot(truth);
  const T perp = (v - along * truth).norm();
  return std::atan2(perp, -along) / pi_v<T>;
}

/// Bound for the arccos argument when differentiating.
template <typename T>
constexpr T arccos_margin() {
  return std::max(T(1e-12), T(16) * std::numeric_limits<T>::epsilon());
}

/// d decode / d v = v_top / (pi sqrt(1 - x^2)), x = -v . v_top clamped away from +-1.
template <typename T>
T decode_slope(const Vec<T>& v, const Vec<T>& truth) {
  const T lim = T(1) - arccos_margin<T>();
  const T x = std::clamp(T(-v.dot(truth)), -lim, lim);
  return T(1) / (pi_v<T> * std::sqrt(T(1) - x * x));
}

template <typename T>
struct UpdateRecord {
  int column;
  T gnorm;
};

/// Everything the backward pass needs from one forward call.
template <typename T>
struct LayerActivation {
  Vec<T> z_in;
  Vec<T> z_out;
  maxsat::UnitEmbedding<T> solution;
  /// k x n_in orthonormal-to-truth directions used for clamping.
  Mat<T> random_basis;
  bool converged = false;
  int sweeps = 0;
  int degenerate_updates = 0;
  std::vector<T> objective_trace;

  // Tape: free-column values before the first sweep, then one record and one
  // value per executed update.
  Mat<T> initial_free;
  std::vector<UpdateRecord<T>> updates;
  Mat<T> update_values;
  std::vector<int> sweep_begin;
  std::vector<Mat<T>> sweep_start;
};

namespace detail {

template <typename T>
Vec<T> orthogonal_direction(const Vec<T>& truth, Rng& rng) {
  for (;;) {
    Vec<T> u = random_unit_vector<T>(truth.size(), rng);
    u -= u.dot(truth) * truth;
    const T norm = u.norm();
    if (norm > T(1e-6)) return u / norm;
  }
}

}  // namespace detail

/// Forward pass. Draws v_top, the clamping directions and the initial free
/// columns from `rng`, in that order.
template <typename T>
LayerActivation<T> forward(const ReasoningWeights<T>& w, const std::type_identity_t<Vec<T>>& z_in, Rng& rng,
                           int sweep_budget = 0) {
  const int max_sweeps = sweep_budget > 0 ? sweep_budget : w.max_sweeps;
  require(z_in.size() == w.n_in, "satnet::forward: z_in length != n_in");
  require(w.S.cols() == w.columns(), "satnet::forward: weight shape inconsistent");
  const int k = w.k;
  const int first_free = w.first_free();
  const int cols = w.columns();
  const Mat<T>& S = w.S;

  LayerActivation<T> act;
  act.z_in = z_in;
  Mat<T> V(k, cols);
  V.col(0) = random_unit_vector<T>(k, rng);
  const Vec<T> truth = V.col(0);
  act.random_basis.resize(k, w.n_in);
  for (int i = 0; i < w.n_in; ++i) {
    act.random_basis.col(i) = detail::orthogonal_direction<T>(truth, rng);
    const T z = z_in[i];
    require(z >= T(0) && z <= T(1), "satnet::forward: inputs must be probabilities");
    V.col(1 + i) = clamp_input<T>(z, truth, act.random_basis.col(i));
  }
  for (int j = first_free; j < cols; ++j) V.col(j) = random_unit_vector<T>(k, rng);
  act.initial_free = V.rightCols(cols - first_free);

  const Vec<T> col_sq = S.colwise().squaredNorm().transpose();
  const int n_free = cols - first_free;
  const Mat<T> omega_fixed = V.leftCols(first_free) * S.leftCols(first_free).transpose();
  Mat<T> omega = omega_fixed;
  omega.noalias() += V.rightCols(n_free) * S.rightCols(n_free).transpose();
  act.objective_trace.push_back(omega.squaredNorm());
  std::vector<Vec<T>> values;
  Vec<T> g(k);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    act.sweep_begin.push_back(static_cast<int>(act.updates.size()));
    act.sweep_start.push_back(V.rightCols(n_free));
    for (int j = first_free; j < cols; ++j) {
      g.noalias() = omega * S.col(j);
      g -= col_sq[j] * V.col(j);
      const T gnorm = g.norm();
      if (!(gnorm > T(maxsat::kDegenerateNorm))) {
        ++act.degenerate_updates;
        continue;
      }
      Vec<T> fresh = -g / gnorm;
      omega.noalias() += (fresh - V.col(j)) * S.col(j).transpose();
      V.col(j) = fresh;
      act.updates.push_back({j, gnorm});
      values.push_back(std::move(fresh));
    }
    ++act.sweeps;
    // Rebuild from the free block so rank-1 drift does not accumulate.
    omega = omega_fixed;
    omega.noalias() += V.rightCols(n_free) * S.rightCols(n_free).transpose();
    const T obj = omega.squaredNorm();
    const T prev = act.objective_trace.back();
    act.objective_trace.push_back(obj);
    if (w.tol > 0 && prev - obj < T(w.tol)) {
      act.converged = true;
      break;
    }
  }
  act.update_values.resize(k, static_cast<Eigen::Index>(values.size()));
  for (std::size_t t = 0; t < values.size(); ++t) act.update_values.col(t) = values[t];

  act.z_out.resize(w.n_out);
  for (int o = 0; o < w.n_out; ++o) act.z_out[o] = decode_probability<T>(V.col(w.first_output() + o), truth);
  act.solution.columns = std::move(V);
  return act;
}

template <typename T>
struct LayerGradients {
  Vec<T> z_in;
  Mat<T> S;
};

/// Test hook: when set, backward scales its weight gradient by this factor.
/// Used only to verify that gradient checks catch a corrupted backward.
inline double& backward_corruption() {
  static double factor = 1.0;
  return factor;
}

/// Reverse-mode pass through the recorded updates and the decode map.
///
/// The free-column update is v_j <- -g/|g| with g = sum_{i != j} v_i (s_i . s_j).
/// Contributions to the adjoints of fixed columns, and to S through the
/// `s_j (v_i . g~)` term, are accumulated lazily in psi = sum_t g~_t s_{j_t}^T.
template <typename T>
LayerGradients<T> backward(const ReasoningWeights<T>& w, const LayerActivation<T>& act,
                            const std::type_identity_t<Vec<T>>& upstream) {
  require(upstream.size() == w.n_out, "satnet::backward: upstream length != n_out");
  const int k = w.k;
  const int m = w.m();
  const int cols = w.columns();
  const int first_free = w.first_free();
  const int n_free = cols - first_free;
  const Mat<T>& S = w.S;
  const Mat<T>& V = act.solution.columns;
  const Vec<T> truth = V.col(0);

  LayerGradients<T> grads{Vec<T>::Zero(w.n_in), Mat<T>::Zero(m, cols)};
  if (upstream.isZero(0)) return grads;

  // Direct adjoints of the final free-column values (only outputs are decoded).
  Mat<T> direct = Mat<T>::Zero(k, n_free);
  for (int o = 0; o < w.n_out; ++o) {
    const auto v = V.col(w.first_output() + o);
    direct.col(w.first_output() - first_free + o) = upstream[o] * decode_slope<T>(v, truth) * truth;
  }

  const int total = static_cast<int>(act.updates.size());
  // Value of each column before update t.
  std::vector<int> previous(total, -1);
  {
    std::vector<int> last(n_free, -1);
    for (int t = 0; t < total; ++t) {
      const int f = act.updates[t].column - first_free;
      previous[t] = last[f];
      last[f] = t;
    }
  }
  auto value_before = [&](int t) -> Vec<T> {
    const int f = act.updates[t].column - first_free;
    return previous[t] < 0 ? Vec<T>(act.initial_free.col(f)) : Vec<T>(act.update_values.col(previous[t]));
  };

  Mat<T> psi = Mat<T>::Zero(k, m);
  // Snapshots of psi at the later update of each free column, kept as the two
  // products the earlier update needs: snap * s_j (k) and snap^T * v (m).
  Mat<T> snap_s = Mat<T>::Zero(k, n_free);
  Mat<T> snap_v = Mat<T>::Zero(m, n_free);
  std::vector<char> has_snap(n_free, 0);

  // Omega before each update, replayed one sweep at a time from the
  // recorded sweep-start state with the same arithmetic as the forward pass.
  const Mat<T> omega_fixed = V.leftCols(first_free) * S.leftCols(first_free).transpose();
  Mat<T> v_free(k, n_free);
  std::vector<Mat<T>> omega_at;
  Vec<T> a(k), gt(k);
  const int n_sweeps = static_cast<int>(act.sweep_begin.size());
  for (int sw = n_sweeps - 1; sw >= 0; --sw) {
    const int begin = act.sweep_begin[sw];
    const int end = sw + 1 < n_sweeps ? act.sweep_begin[sw + 1] : total;
    if (begin == end) continue;
    v_free = act.sweep_start[sw];
    omega_at.resize(end - begin);
    Mat<T> omega = omega_fixed;
    omega.noalias() += v_free * S.rightCols(n_free).transpose();
    for (int t = begin; t < end; ++t) {
      omega_at[t - begin] = omega;
      const int j = act.updates[t].column;
      const int f = j - first_free;
      omega.noalias() += (act.update_values.col(t) - v_free.col(f)) * S.col(j).transpose();
      v_free.col(f) = act.update_values.col(t);
    }

    for (int t = end - 1; t >= begin; --t) {
      const int j = act.updates[t].column;
      const int f = j - first_free;
      const auto s_j = S.col(j);
      const auto v_new = act.update_values.col(t);
      // Adjoint of the value written at t: direct part plus the steps that read it.
      a = direct.col(f);
      a.noalias() += psi * s_j;
      if (has_snap[f]) a -= snap_s.col(f);
      // Steps between t and the next update of j read v_new through s_j . s_i.
      Vec<T> sv = psi.transpose() * v_new;
      if (has_snap[f]) sv -= snap_v.col(f);
      grads.S.col(j) += sv;

      gt = -(a - v_new * v_new.dot(a)) / act.updates[t].gnorm;
      const Vec<T> v_old = value_before(t);
      grads.S.col(j).noalias() += omega_at[t - begin].transpose() * gt;
      grads.S.col(j) -= s_j * v_old.dot(gt);
      psi.noalias() += gt * s_j.transpose();

      direct.col(f).setZero();
      snap_s.col(f) = psi * s_j;
      snap_v.col(f) = psi.transpose() * v_old;
      has_snap[f] = 1;
    }
  }

  // Initial free values feed the steps before each column's first update.
  for (int f = 0; f < n_free; ++f) {
    Vec<T> sv = psi.transpose() * act.initial_free.col(f);
    if (has_snap[f]) sv -= snap_v.col(f);
    grads.S.col(first_free + f) += sv;
  }
  // Fixed columns (truth and clamped inputs) are read by every step.
  grads.S.leftCols(first_free).noalias() += psi.transpose() * V.leftCols(first_free);
  const Mat<T> input_adj = psi * S.middleCols(1, w.n_in);
  for (int i = 0; i < w.n_in; ++i) {
    const T z = act.z_in[i];
    const Vec<T> dv = pi_v<T> * (std::sin(pi_v<T> * z) * truth + std::cos(pi_v<T> * z) * act.random_basis.col(i));
    grads.z_in[i] = input_adj.col(i).dot(dv);
  }
  if (backward_corruption() != 1.0) grads.S *= T(backward_corruption());
  return grads;
}

/// Binary cross-entropy with the layer's probability clamp.
template <typename T>
T bce(T p, T target, T eps = T(1e-7)) {
  const T q = std::clamp(p, eps, T(1) - eps);
  return -(target * std::log(q) + (T(1) - target) * std::log(T(1) - q));
}

template <typename T>
T bce_slope(T p, T target, T eps = T(1e-7)) {
  if (p < eps || p > T(1) - eps) return T(0);
  return -target / p + (T(1) - target) / (T(1) - p);
}

template <typename T>
struct TruthRow {
  Vec<T> z_in;
  Vec<T> target;
};

struct FitOptions {
  int epochs = 500;
  double step_size = 0.05;
  std::uint64_t seed = 0;
};

/// Trains S on the rows by full-batch adaptive gradient descent on BCE.
/// Each row uses a fixed per-row random stream so the objective is a
/// deterministic function of S.
template <typename T>
ReasoningWeights<T> fit_truth_table(ReasoningWeights<T> w, const std::vector<TruthRow<T>>& rows, FitOptions opts) {
  for (const auto& r : rows)
    require(r.z_in.size() == w.n_in && r.target.size() == w.n_out, "fit_truth_table: row shape mismatch");
  Adam<T> adam(AdamOptions{.lr = opts.step_size});
  AdamSlot<T> slot;
  Mat<T> grad(w.S.rows(), w.S.cols());
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    grad.setZero();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Rng rng(derive_seed(opts.seed, r));
      const auto act = forward(w, rows[r].z_in, rng);
      Vec<T> up(w.n_out);
      for (int o = 0; o < w.n_out; ++o) up[o] = bce_slope(act.z_out[o], rows[r].target[o]);
      grad += backward(w, act, up).S;
    }
    adam.begin_step();
    adam.update(slot, flat(w.S), flat(static_cast<const Mat<T>&>(grad)));
  }
  return w;
}

/// Evaluates the layer on each row with the same per-row streams fit_truth_table uses.
template <typename T>
std::vector<Vec<T>> predict_rows(const ReasoningWeights<T>& w, const std::vector<TruthRow<T>>& rows,
                                 std::uint64_t seed) {
  std::vector<Vec<T>> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Rng rng(derive_seed(seed, r));
    out.push_back(forward(w, rows[r].z_in, rng).z_out);
  }
  return out;
}

}  // namespace satvq::satnet
