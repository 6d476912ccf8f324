#pragma once

#include <cmath>
#include <vector>

#include "mcsd/tape.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

// Central-difference gradient check. f must be a deterministic closure over
// `inputs` returning a scalar tensor. Returns the worst elementwise
// discrepancy between the taped gradient and (f(x+eps)-f(x-eps))/(2 eps),
// scaled by max(1, |grad|): callers assert it is below their tolerance.
template <typename T, typename F>
T grad_check(F&& f, std::vector<Tensor<T>> inputs, T eps) {
  for (Tensor<T>& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  std::vector<std::vector<T>> ad(inputs.size());
  {
    Tape<T> tape;
    Tensor<T> loss = f();
    tape.backward(loss);
  }
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].has_grad()) {
      ad[i].assign(inputs[i].grad_data(), inputs[i].grad_data() + inputs[i].numel());
    } else {
      ad[i].assign(static_cast<size_t>(inputs[i].numel()), T(0));
    }
    inputs[i].clear_grad();
    inputs[i].set_requires_grad(false);
  }

  T worst = T(0);
  for (size_t i = 0; i < inputs.size(); ++i) {
    T* p = inputs[i].data();
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      const T orig = p[j];
      p[j] = orig + eps;
      const T lp = f().item();
      p[j] = orig - eps;
      const T lm = f().item();
      p[j] = orig;
      const T fd = (lp - lm) / (T(2) * eps);
      const T a = ad[i][static_cast<size_t>(j)];
      const T denom = std::max(T(1), std::max(std::abs(a), std::abs(fd)));
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

}  // namespace mcsd
