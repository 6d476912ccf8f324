#pragma once

#include <cstdint>
#include <vector>

#include "mcsd/gemm.hpp"
#include "mcsd/ops_core.hpp"

namespace mcsd {

// matmul supports two input arrangements:
//   a [..., M, K] x b [K, N]        every leading row block hits one GEMM
//   a [..., M, K] x b [..., K, N]   equal leading axes, one GEMM per batch
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() >= 2 && b.rank() >= 2, "matmul needs rank >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t K = a.shape()[a.shape().size() - 1];
  const int64_t M = a.shape()[a.shape().size() - 2];
  const bool flat = b.rank() == 2;
  if (!flat) {
    check(a.rank() == b.rank(), "matmul rank mismatch: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    for (size_t i = 0; i + 2 < a.shape().size(); ++i) {
      check(a.shape()[i] == b.shape()[i], "matmul batch mismatch: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
  }
  check(b.shape()[b.shape().size() - 2] == K,
        "matmul inner axes disagree: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t N = b.shape()[b.shape().size() - 1];

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(N);
  Tensor<T> y = Tensor<T>::zeros(out_shape);

  const int64_t batch = a.numel() / (M * K);
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  if (flat) {
    detail::gemm_nn(batch * M, N, K, pa, K, pb, N, py, N);
  } else {
    for (int64_t s = 0; s < batch; ++s) {
      detail::gemm_nn(M, N, K, pa + s * M * K, K, pb + s * K * N, N, py + s * M * N, N);
    }
  }
  y.check_finite("matmul");

  if (detail::grad_enabled<T>({a, b})) {
    const bool na = detail::tracked(a);
    const bool nb = detail::tracked(b);
    Tensor<T> ac = a, bc = b, yc = y;
    detail::record(yc, [ac, bc, yc, na, nb, M, N, K, batch, flat]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      if (na) {
        ac.ensure_grad();
        T* ga = ac.grad_data();
        const T* pb = bc.data();
        if (flat) {
          detail::gemm_nt(batch * M, K, N, g, N, pb, N, ga, K);
        } else {
          for (int64_t s = 0; s < batch; ++s) {
            detail::gemm_nt(M, K, N, g + s * M * N, N, pb + s * K * N, N, ga + s * M * K, K);
          }
        }
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        const T* pa = ac.data();
        if (flat) {
          detail::gemm_tn(K, N, batch * M, pa, K, g, N, gb, N);
        } else {
          for (int64_t s = 0; s < batch; ++s) {
            detail::gemm_tn(K, N, M, pa + s * M * K, K, g + s * M * N, N, gb + s * K * N, N);
          }
        }
      }
    });
  }
  return y;
}

// y = x W + b with x [..., Din], W [Din, Dout], b [Dout] (or undefined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  if (b.defined()) y = add(y, b);
  return y;
}

}  // namespace mcsd
