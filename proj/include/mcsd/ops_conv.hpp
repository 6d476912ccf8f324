#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mcsd/gemm.hpp"
#include "mcsd/ops_core.hpp"

namespace mcsd {

namespace detail {

// Patch matrices are laid out [C*kH*kW, Ho*Wo] so a convolution is one GEMM
// against the flattened kernel. Out-of-image taps read as zero.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW, int64_t stride, int64_t pad,
            int64_t dil, int64_t Ho, int64_t Wo, T* cols) {
  for (int64_t c = 0; c < C; ++c) {
    const T* src = x + c * H * W;
    for (int64_t ki = 0; ki < kH; ++ki) {
      for (int64_t kj = 0; kj < kW; ++kj) {
        T* dst = cols + ((c * kH + ki) * kW + kj) * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t ii = i * stride - pad + ki * dil;
          T* drow = dst + i * Wo;
          if (ii < 0 || ii >= H) {
            std::fill(drow, drow + Wo, T(0));
            continue;
          }
          const T* srow = src + ii * W;
          for (int64_t j = 0; j < Wo; ++j) {
            const int64_t jj = j * stride - pad + kj * dil;
            drow[j] = (jj >= 0 && jj < W) ? srow[jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW, int64_t stride, int64_t pad,
            int64_t dil, int64_t Ho, int64_t Wo, T* x) {
  for (int64_t c = 0; c < C; ++c) {
    T* dst = x + c * H * W;
    for (int64_t ki = 0; ki < kH; ++ki) {
      for (int64_t kj = 0; kj < kW; ++kj) {
        const T* src = cols + ((c * kH + ki) * kW + kj) * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i) {
          const int64_t ii = i * stride - pad + ki * dil;
          if (ii < 0 || ii >= H) continue;
          const T* srow = src + i * Wo;
          T* drow = dst + ii * W;
          for (int64_t j = 0; j < Wo; ++j) {
            const int64_t jj = j * stride - pad + kj * dil;
            if (jj >= 0 && jj < W) drow[jj] += srow[j];
          }
        }
      }
    }
  }
}

template <typename T>
void im2col3d(const T* x, int64_t C, int64_t D, int64_t H, int64_t W, int64_t kD, int64_t kH, int64_t kW,
              int64_t stride, int64_t pad, int64_t Do, int64_t Ho, int64_t Wo, T* cols) {
  const int64_t patches = Do * Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    const T* src = x + c * D * H * W;
    for (int64_t kd = 0; kd < kD; ++kd) {
      for (int64_t ki = 0; ki < kH; ++ki) {
        for (int64_t kj = 0; kj < kW; ++kj) {
          T* dst = cols + (((c * kD + kd) * kH + ki) * kW + kj) * patches;
          for (int64_t d = 0; d < Do; ++d) {
            const int64_t dd = d * stride - pad + kd;
            for (int64_t i = 0; i < Ho; ++i) {
              const int64_t ii = i * stride - pad + ki;
              T* drow = dst + (d * Ho + i) * Wo;
              if (dd < 0 || dd >= D || ii < 0 || ii >= H) {
                std::fill(drow, drow + Wo, T(0));
                continue;
              }
              const T* srow = src + (dd * H + ii) * W;
              for (int64_t j = 0; j < Wo; ++j) {
                const int64_t jj = j * stride - pad + kj;
                drow[j] = (jj >= 0 && jj < W) ? srow[jj] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3d(const T* cols, int64_t C, int64_t D, int64_t H, int64_t W, int64_t kD, int64_t kH, int64_t kW,
              int64_t stride, int64_t pad, int64_t Do, int64_t Ho, int64_t Wo, T* x) {
  const int64_t patches = Do * Ho * Wo;
  for (int64_t c = 0; c < C; ++c) {
    T* dst = x + c * D * H * W;
    for (int64_t kd = 0; kd < kD; ++kd) {
      for (int64_t ki = 0; ki < kH; ++ki) {
        for (int64_t kj = 0; kj < kW; ++kj) {
          const T* src = cols + (((c * kD + kd) * kH + ki) * kW + kj) * patches;
          for (int64_t d = 0; d < Do; ++d) {
            const int64_t dd = d * stride - pad + kd;
            if (dd < 0 || dd >= D) continue;
            for (int64_t i = 0; i < Ho; ++i) {
              const int64_t ii = i * stride - pad + ki;
              if (ii < 0 || ii >= H) continue;
              const T* srow = src + (d * Ho + i) * Wo;
              T* drow = dst + (dd * H + ii) * W;
              for (int64_t j = 0; j < Wo; ++j) {
                const int64_t jj = j * stride - pad + kj;
                if (jj >= 0 && jj < W) drow[jj] += srow[j];
              }
            }
          }
        }
      }
    }
  }
}

inline int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad, int64_t dil = 1) {
  const int64_t kspan = (k - 1) * dil + 1;
  const int64_t span = in + 2 * pad - kspan;
  check(span >= 0, "kernel span " + std::to_string(kspan) + " exceeds padded extent " + std::to_string(in + 2 * pad));
  return span / stride + 1;
}

}  // namespace detail

// x [B,Cin,H,W], w [Cout,Cin,kH,kW], b [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1, int64_t pad = 0,
                 int64_t dil = 1) {
  check(x.rank() == 4, "conv2d input must be rank 4, got " + shape_str(x.shape()));
  check(w.rank() == 4, "conv2d kernel must be rank 4, got " + shape_str(w.shape()));
  const int64_t B = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Cout = w.size(0), kH = w.size(2), kW = w.size(3);
  check(w.size(1) == Cin, "conv2d kernel expects " + std::to_string(w.size(1)) + " input channels, got " + std::to_string(Cin));
  if (b.defined()) check(b.rank() == 1 && b.size(0) == Cout, "conv2d bias shape " + shape_str(b.shape()));
  const int64_t Ho = detail::conv_out(H, kH, stride, pad, dil);
  const int64_t Wo = detail::conv_out(W, kW, stride, pad, dil);
  const int64_t K = Cin * kH * kW;
  const int64_t P = Ho * Wo;

  Tensor<T> y = Tensor<T>::zeros({B, Cout, Ho, Wo});
  {
    std::vector<T> cols(static_cast<size_t>(K) * P);
    const T* px = x.data();
    const T* pw = w.data();
    T* py = y.data();
    for (int64_t s = 0; s < B; ++s) {
      detail::im2col(px + s * Cin * H * W, Cin, H, W, kH, kW, stride, pad, dil, Ho, Wo, cols.data());
      detail::gemm_nn(Cout, P, K, pw, K, cols.data(), P, py + s * Cout * P, P);
    }
    if (b.defined()) {
      const T* pb = b.data();
      for (int64_t s = 0; s < B; ++s) {
        for (int64_t co = 0; co < Cout; ++co) {
          T* row = py + (s * Cout + co) * P;
          const T bv = pb[co];
          for (int64_t i = 0; i < P; ++i) row[i] += bv;
        }
      }
    }
  }
  y.check_finite("conv2d");

  if (detail::grad_enabled<T>({x, w, b.defined() ? b : x})) {
    const bool nx = detail::tracked(x);
    const bool nw = detail::tracked(w);
    const bool nb = b.defined() && detail::tracked(b);
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    detail::record(yc, [xc, wc, bc, yc, nx, nw, nb, B, Cin, H, W, Cout, kH, kW, stride, pad, dil, Ho, Wo, K, P]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      std::vector<T> cols;
      std::vector<T> gcols;
      if (nw) {
        wc.ensure_grad();
        cols.resize(static_cast<size_t>(K) * P);
      }
      if (nx) {
        xc.ensure_grad();
        gcols.resize(static_cast<size_t>(K) * P);
      }
      for (int64_t s = 0; s < B; ++s) {
        const T* gs = g + s * Cout * P;
        if (nw) {
          detail::im2col(xc.data() + s * Cin * H * W, Cin, H, W, kH, kW, stride, pad, dil, Ho, Wo, cols.data());
          detail::gemm_nt(Cout, K, P, gs, P, cols.data(), P, wc.grad_data(), K);
        }
        if (nx) {
          std::fill(gcols.begin(), gcols.end(), T(0));
          detail::gemm_tn(K, P, Cout, wc.data(), K, gs, P, gcols.data(), P);
          detail::col2im(gcols.data(), Cin, H, W, kH, kW, stride, pad, dil, Ho, Wo, xc.grad_data() + s * Cin * H * W);
        }
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        for (int64_t s = 0; s < B; ++s) {
          for (int64_t co = 0; co < Cout; ++co) {
            const T* row = g + (s * Cout + co) * P;
            T acc = T(0);
            for (int64_t i = 0; i < P; ++i) acc += row[i];
            gb[co] += acc;
          }
        }
      }
    });
  }
  return y;
}

// x [B,Cin,H,W], w [Cin,Cout,kH,kW], output [B,Cout,(H-1)*stride+kH,(W-1)*stride+kW].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1) {
  check(x.rank() == 4, "conv_transpose2d input must be rank 4, got " + shape_str(x.shape()));
  check(w.rank() == 4, "conv_transpose2d kernel must be rank 4, got " + shape_str(w.shape()));
  const int64_t B = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t Cout = w.size(1), kH = w.size(2), kW = w.size(3);
  check(w.size(0) == Cin,
        "conv_transpose2d kernel expects " + std::to_string(w.size(0)) + " input channels, got " + std::to_string(Cin));
  if (b.defined()) check(b.rank() == 1 && b.size(0) == Cout, "conv_transpose2d bias shape " + shape_str(b.shape()));
  const int64_t Ho = (H - 1) * stride + kH;
  const int64_t Wo = (W - 1) * stride + kW;
  const int64_t K = Cout * kH * kW;
  const int64_t P = H * W;

  Tensor<T> y = Tensor<T>::zeros({B, Cout, Ho, Wo});
  {
    std::vector<T> cols(static_cast<size_t>(K) * P);
    const T* px = x.data();
    const T* pw = w.data();
    T* py = y.data();
    for (int64_t s = 0; s < B; ++s) {
      std::fill(cols.begin(), cols.end(), T(0));
      detail::gemm_tn(K, P, Cin, pw, K, px + s * Cin * P, P, cols.data(), P);
      detail::col2im(cols.data(), Cout, Ho, Wo, kH, kW, stride, 0, 1, H, W, py + s * Cout * Ho * Wo);
    }
    if (b.defined()) {
      const T* pb = b.data();
      const int64_t Po = Ho * Wo;
      for (int64_t s = 0; s < B; ++s) {
        for (int64_t co = 0; co < Cout; ++co) {
          T* row = py + (s * Cout + co) * Po;
          const T bv = pb[co];
          for (int64_t i = 0; i < Po; ++i) row[i] += bv;
        }
      }
    }
  }
  y.check_finite("conv_transpose2d");

  if (detail::grad_enabled<T>({x, w, b.defined() ? b : x})) {
    const bool nx = detail::tracked(x);
    const bool nw = detail::tracked(w);
    const bool nb = b.defined() && detail::tracked(b);
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    detail::record(yc, [xc, wc, bc, yc, nx, nw, nb, B, Cin, H, W, Cout, kH, kW, stride, Ho, Wo, K, P]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      std::vector<T> gcols(static_cast<size_t>(K) * P);
      if (nx) xc.ensure_grad();
      if (nw) wc.ensure_grad();
      for (int64_t s = 0; s < B; ++s) {
        detail::im2col(g + s * Cout * Ho * Wo, Cout, Ho, Wo, kH, kW, stride, 0, 1, H, W, gcols.data());
        if (nx) {
          detail::gemm_nn(Cin, P, K, wc.data(), K, gcols.data(), P, xc.grad_data() + s * Cin * P, P);
        }
        if (nw) {
          detail::gemm_nt(Cin, K, P, xc.data() + s * Cin * P, P, gcols.data(), P, wc.grad_data(), K);
        }
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        const int64_t Po = Ho * Wo;
        for (int64_t s = 0; s < B; ++s) {
          for (int64_t co = 0; co < Cout; ++co) {
            const T* row = g + (s * Cout + co) * Po;
            T acc = T(0);
            for (int64_t i = 0; i < Po; ++i) acc += row[i];
            gb[co] += acc;
          }
        }
      }
    });
  }
  return y;
}

// x [B,Cin,D,H,W], w [Cout,Cin,kD,kH,kW], b [Cout] or undefined.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1, int64_t pad = 0) {
  check(x.rank() == 5, "conv3d input must be rank 5, got " + shape_str(x.shape()));
  check(w.rank() == 5, "conv3d kernel must be rank 5, got " + shape_str(w.shape()));
  const int64_t B = x.size(0), Cin = x.size(1), D = x.size(2), H = x.size(3), W = x.size(4);
  const int64_t Cout = w.size(0), kD = w.size(2), kH = w.size(3), kW = w.size(4);
  check(w.size(1) == Cin, "conv3d kernel expects " + std::to_string(w.size(1)) + " input channels, got " + std::to_string(Cin));
  if (b.defined()) check(b.rank() == 1 && b.size(0) == Cout, "conv3d bias shape " + shape_str(b.shape()));
  const int64_t Do = detail::conv_out(D, kD, stride, pad);
  const int64_t Ho = detail::conv_out(H, kH, stride, pad);
  const int64_t Wo = detail::conv_out(W, kW, stride, pad);
  const int64_t K = Cin * kD * kH * kW;
  const int64_t P = Do * Ho * Wo;

  Tensor<T> y = Tensor<T>::zeros({B, Cout, Do, Ho, Wo});
  {
    std::vector<T> cols(static_cast<size_t>(K) * P);
    const T* px = x.data();
    const T* pw = w.data();
    T* py = y.data();
    for (int64_t s = 0; s < B; ++s) {
      detail::im2col3d(px + s * Cin * D * H * W, Cin, D, H, W, kD, kH, kW, stride, pad, Do, Ho, Wo, cols.data());
      detail::gemm_nn(Cout, P, K, pw, K, cols.data(), P, py + s * Cout * P, P);
    }
    if (b.defined()) {
      const T* pb = b.data();
      for (int64_t s = 0; s < B; ++s) {
        for (int64_t co = 0; co < Cout; ++co) {
          T* row = py + (s * Cout + co) * P;
          const T bv = pb[co];
          for (int64_t i = 0; i < P; ++i) row[i] += bv;
        }
      }
    }
  }
  y.check_finite("conv3d");

  if (detail::grad_enabled<T>({x, w, b.defined() ? b : x})) {
    const bool nx = detail::tracked(x);
    const bool nw = detail::tracked(w);
    const bool nb = b.defined() && detail::tracked(b);
    Tensor<T> xc = x, wc = w, bc = b, yc = y;
    detail::record(yc, [xc, wc, bc, yc, nx, nw, nb, B, Cin, D, H, W, Cout, kD, kH, kW, stride, pad, Do, Ho, Wo, K,
                        P]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      std::vector<T> cols;
      std::vector<T> gcols;
      if (nw) {
        wc.ensure_grad();
        cols.resize(static_cast<size_t>(K) * P);
      }
      if (nx) {
        xc.ensure_grad();
        gcols.resize(static_cast<size_t>(K) * P);
      }
      const int64_t in_plane = Cin * D * H * W;
      for (int64_t s = 0; s < B; ++s) {
        const T* gs = g + s * Cout * P;
        if (nw) {
          detail::im2col3d(xc.data() + s * in_plane, Cin, D, H, W, kD, kH, kW, stride, pad, Do, Ho, Wo, cols.data());
          detail::gemm_nt(Cout, K, P, gs, P, cols.data(), P, wc.grad_data(), K);
        }
        if (nx) {
          std::fill(gcols.begin(), gcols.end(), T(0));
          detail::gemm_tn(K, P, Cout, wc.data(), K, gs, P, gcols.data(), P);
          detail::col2im3d(gcols.data(), Cin, D, H, W, kD, kH, kW, stride, pad, Do, Ho, Wo, xc.grad_data() + s * in_plane);
        }
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        for (int64_t s = 0; s < B; ++s) {
          for (int64_t co = 0; co < Cout; ++co) {
            const T* row = g + (s * Cout + co) * P;
            T acc = T(0);
            for (int64_t i = 0; i < P; ++i) acc += row[i];
            gb[co] += acc;
          }
        }
      }
    });
  }
  return y;
}

// Non-overlapping windows of size factor; spatial dims must divide evenly.
// Ties go to the first maximum in scan order, matching the argmax the
// backward pass routes gradient to.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int64_t factor = 2) {
  check(x.rank() == 4, "maxpool2d input must be rank 4, got " + shape_str(x.shape()));
  check(factor >= 1, "maxpool2d factor must be positive");
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  check(H % factor == 0 && W % factor == 0,
        "maxpool2d factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
  const int64_t k = factor, stride = factor;
  const int64_t Ho = H / factor;
  const int64_t Wo = W / factor;

  Tensor<T> y = Tensor<T>::zeros({B, C, Ho, Wo});
  std::vector<int64_t> argmax(static_cast<size_t>(y.numel()));
  const T* px = x.data();
  T* py = y.data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* plane = px + bc * H * W;
    for (int64_t i = 0; i < Ho; ++i) {
      for (int64_t j = 0; j < Wo; ++j) {
        int64_t best = (i * stride) * W + (j * stride);
        T bv = plane[best];
        for (int64_t di = 0; di < k; ++di) {
          for (int64_t dj = 0; dj < k; ++dj) {
            const int64_t idx = (i * stride + di) * W + (j * stride + dj);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        }
        const int64_t out_idx = bc * Ho * Wo + i * Wo + j;
        py[out_idx] = bv;
        argmax[static_cast<size_t>(out_idx)] = bc * H * W + best;
      }
    }
  }
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, argmax = std::move(argmax)]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < yc.numel(); ++i) gx[argmax[static_cast<size_t>(i)]] += g[i];
    });
  }
  return y;
}

// Output cell (i,j) averages rows [floor(i*H/outH), ceil((i+1)*H/outH)) and
// the matching column range, so cells tile the input exactly.
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int64_t outH, int64_t outW) {
  check(x.rank() == 4, "adaptive_avg_pool2d input must be rank 4, got " + shape_str(x.shape()));
  check(outH >= 1 && outW >= 1, "adaptive_avg_pool2d target must be positive");
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);

  Tensor<T> y = Tensor<T>::zeros({B, C, outH, outW});
  const T* px = x.data();
  T* py = y.data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* plane = px + bc * H * W;
    T* out = py + bc * outH * outW;
    for (int64_t i = 0; i < outH; ++i) {
      const int64_t r0 = i * H / outH;
      const int64_t r1 = ((i + 1) * H + outH - 1) / outH;
      for (int64_t j = 0; j < outW; ++j) {
        const int64_t c0 = j * W / outW;
        const int64_t c1 = ((j + 1) * W + outW - 1) / outW;
        T acc = T(0);
        for (int64_t r = r0; r < r1; ++r) {
          for (int64_t c = c0; c < c1; ++c) acc += plane[r * W + c];
        }
        out[i * outW + j] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
      }
    }
  }
  y.check_finite("adaptive_avg_pool2d");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, B, C, H, W, outH, outW]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      for (int64_t bc = 0; bc < B * C; ++bc) {
        T* plane = gx + bc * H * W;
        const T* gout = g + bc * outH * outW;
        for (int64_t i = 0; i < outH; ++i) {
          const int64_t r0 = i * H / outH;
          const int64_t r1 = ((i + 1) * H + outH - 1) / outH;
          for (int64_t j = 0; j < outW; ++j) {
            const int64_t c0 = j * W / outW;
            const int64_t c1 = ((j + 1) * W + outW - 1) / outW;
            const T gv = gout[i * outW + j] / static_cast<T>((r1 - r0) * (c1 - c0));
            for (int64_t r = r0; r < r1; ++r) {
              for (int64_t c = c0; c < c1; ++c) plane[r * W + c] += gv;
            }
          }
        }
      }
    });
  }
  return y;
}

}  // namespace mcsd
