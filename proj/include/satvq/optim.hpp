#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "satvq/core.hpp"

namespace satvq {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment state for one flat parameter buffer.
template <typename T>
struct AdamSlot {
  std::vector<T> m;
  std::vector<T> v;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t s) { step_ = s; }

  /// Call once per optimizer step, before the `update` calls of that step.
  void begin_step() { ++step_; }

  void update(AdamSlot<T>& slot, std::span<T> param, std::span<const T> grad, double lr_scale = 1.0) const {
    require(param.size() == grad.size(), "Adam: param/grad size mismatch");
    if (slot.m.size() != param.size()) {
      slot.m.assign(param.size(), T(0));
      slot.v.assign(param.size(), T(0));
    }
    const double lr = opts_.lr * lr_scale;
    if (lr == 0.0) return;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    const T b1 = T(opts_.beta1), b2 = T(opts_.beta2);
    const T step_size = T(lr / bc1);
    const T inv_bc2 = T(1.0 / bc2);
    for (std::size_t i = 0; i < param.size(); ++i) {
      slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * grad[i];
      slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * grad[i] * grad[i];
      param[i] -= step_size * slot.m[i] / (std::sqrt(slot.v[i] * inv_bc2) + T(opts_.eps));
    }
  }

 private:
  AdamOptions opts_;
  std::int64_t step_ = 0;
};

template <typename Derived>
std::span<typename Derived::Scalar> flat(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename Derived>
std::span<const typename Derived::Scalar> flat(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace satvq
