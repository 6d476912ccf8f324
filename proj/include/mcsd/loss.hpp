#pragma once

#include <cmath>
#include <cstdint>

#include "mcsd/common.hpp"
#include "mcsd/ops_core.hpp"
#include "mcsd/tape.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

struct FocalLossConfig {
  double gamma = 2.0;
  double clamp = 1e-7;

  void validate() const {
    if (gamma < 0.0) throw ConfigError("gamma_focal must be nonnegative");
    if (!(clamp > 0.0 && clamp < 0.5)) throw ConfigError("probability clamp must lie in (0, 0.5)");
  }
};

// Mean over all elements of -(1-p_t)^gamma * ln(p_t), with p_t = p for
// positive targets and 1-p otherwise, clamped away from {0,1}. Fused op:
// the gradient is computed in closed form and is zero where the clamp is
// active. Gradient flows to the probabilities only.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probabilities, const Tensor<T>& targets, const FocalLossConfig& cfg = {}) {
  cfg.validate();
  check(probabilities.defined() && targets.defined(), "focal_loss inputs must be defined");
  check(probabilities.shape() == targets.shape(), "focal_loss shape mismatch: " + shape_str(probabilities.shape()) +
                                                      " vs " + shape_str(targets.shape()));
  check(probabilities.numel() > 0, "focal_loss of empty tensor");
  const int64_t n = probabilities.numel();
  const T* p = probabilities.data();
  const T* y = targets.data();
  const T lo = static_cast<T>(cfg.clamp), hi = T(1) - static_cast<T>(cfg.clamp);
  const T g = static_cast<T>(cfg.gamma);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (y[i] != T(0) && y[i] != T(1))
      throw DataError("focal_loss target at flat index " + std::to_string(i) + " is not binary");
    const T pt = y[i] == T(1) ? p[i] : T(1) - p[i];
    const T ptc = pt < lo ? lo : (pt > hi ? hi : pt);
    acc += static_cast<double>(-std::pow(T(1) - ptc, g) * std::log(ptc));
  }
  Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  loss.check_finite("focal_loss");

  if (detail::grad_enabled<T>({probabilities})) {
    Tensor<T> pc = probabilities, yc = targets, lc = loss;
    const FocalLossConfig cfgc = cfg;
    detail::record(lc, [pc, yc, lc, cfgc, n]() mutable {
      if (!lc.has_grad()) return;
      const T go = lc.grad_data()[0];
      const T* pv = pc.data();
      const T* yv = yc.data();
      const T lo = static_cast<T>(cfgc.clamp), hi = T(1) - static_cast<T>(cfgc.clamp);
      const T g = static_cast<T>(cfgc.gamma);
      const T scale = go / static_cast<T>(n);
      pc.ensure_grad();
      T* gp = pc.grad_data();
      for (int64_t i = 0; i < n; ++i) {
        const T pt = yv[i] == T(1) ? pv[i] : T(1) - pv[i];
        if (pt < lo || pt > hi) continue;
        const T one_m = T(1) - pt;
        const T dpt = (g > T(0) ? g * std::pow(one_m, g - T(1)) * std::log(pt) : T(0)) - std::pow(one_m, g) / pt;
        gp[i] += scale * (yv[i] == T(1) ? dpt : -dpt);
      }
    });
  }
  return loss;
}

// Reference objective used in tests and verification: mean binary
// cross-entropy with the same clamping rule. Not recorded on the tape.
template <typename T>
T binary_cross_entropy_value(const Tensor<T>& probabilities, const Tensor<T>& targets, double clamp = 1e-7) {
  check(probabilities.shape() == targets.shape(), "bce shape mismatch");
  const T lo = static_cast<T>(clamp), hi = T(1) - static_cast<T>(clamp);
  const T* p = probabilities.data();
  const T* y = targets.data();
  double acc = 0.0;
  for (int64_t i = 0; i < probabilities.numel(); ++i) {
    const T pt = y[i] == T(1) ? p[i] : T(1) - p[i];
    const T ptc = pt < lo ? lo : (pt > hi ? hi : pt);
    acc += static_cast<double>(-std::log(ptc));
  }
  return static_cast<T>(acc / static_cast<double>(probabilities.numel()));
}

}  // namespace mcsd
