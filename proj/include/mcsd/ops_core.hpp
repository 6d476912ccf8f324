#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/tape.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

namespace detail {

inline std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

template <typename T>
void axpy(T* dst, const T* src, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

// b may either match a exactly or be a trailing slice of a's shape (a row
// vector against the last axes), in which case it tiles with this period.
template <typename T>
int64_t tile_period(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return a.numel();
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sb.size() <= sa.size(), "operand shape " + shape_str(sb) + " does not broadcast to " + shape_str(sa));
  for (size_t i = 0; i < sb.size(); ++i) {
    check(sb[sb.size() - 1 - i] == sa[sa.size() - 1 - i],
          "operand shape " + shape_str(sb) + " does not broadcast to " + shape_str(sa));
  }
  return b.numel() == 0 ? 1 : b.numel();
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t period = detail::tile_period(a, b);
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  const int64_t n = a.numel();
  if (period == n) {
    for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  } else {
    for (int64_t o = 0; o < n; o += period) {
      for (int64_t i = 0; i < period; ++i) py[o + i] = pa[o + i] + pb[i];
    }
  }
  y.check_finite("add");
  if (detail::grad_enabled<T>({a, b})) {
    const bool na = detail::tracked(a);
    const bool nb = detail::tracked(b);
    Tensor<T> ac = a, bc = b, yc = y;
    detail::record(yc, [ac, bc, yc, na, nb, period]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      const int64_t n = yc.numel();
      if (na) {
        ac.ensure_grad();
        detail::axpy(ac.grad_data(), g, n);
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        for (int64_t o = 0; o < n; o += period) {
          for (int64_t i = 0; i < period; ++i) gb[i] += g[o + i];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "sub between shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < a.numel(); ++i) py[i] = pa[i] - pb[i];
  y.check_finite("sub");
  if (detail::grad_enabled<T>({a, b})) {
    const bool na = detail::tracked(a);
    const bool nb = detail::tracked(b);
    Tensor<T> ac = a, bc = b, yc = y;
    detail::record(yc, [ac, bc, yc, na, nb]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      const int64_t n = yc.numel();
      if (na) {
        ac.ensure_grad();
        detail::axpy(ac.grad_data(), g, n);
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "mul between shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < a.numel(); ++i) py[i] = pa[i] * pb[i];
  y.check_finite("mul");
  if (detail::grad_enabled<T>({a, b})) {
    const bool na = detail::tracked(a);
    const bool nb = detail::tracked(b);
    Tensor<T> ac = a, bc = b, yc = y;
    detail::record(yc, [ac, bc, yc, na, nb]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      const int64_t n = yc.numel();
      if (na) {
        ac.ensure_grad();
        T* ga = ac.grad_data();
        const T* pb = bc.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
      }
      if (nb) {
        bc.ensure_grad();
        T* gb = bc.grad_data();
        const T* pa = ac.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  T* py = y.data();
  for (int64_t i = 0; i < a.numel(); ++i) py[i] = pa[i] * c;
  y.check_finite("scale");
  if (detail::grad_enabled<T>({a})) {
    Tensor<T> ac = a, yc = y;
    detail::record(yc, [ac, yc, c]() mutable {
      if (!yc.has_grad()) return;
      ac.ensure_grad();
      const T* g = yc.grad_data();
      T* ga = ac.grad_data();
      for (int64_t i = 0; i < yc.numel(); ++i) ga[i] += g[i] * c;
    });
  }
  return y;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  T* py = y.data();
  for (int64_t i = 0; i < a.numel(); ++i) py[i] = pa[i] + c;
  y.check_finite("add_scalar");
  if (detail::grad_enabled<T>({a})) {
    Tensor<T> ac = a, yc = y;
    detail::record(yc, [ac, yc]() mutable {
      if (!yc.has_grad()) return;
      ac.ensure_grad();
      detail::axpy(ac.grad_data(), yc.grad_data(), yc.numel());
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
  y.check_finite("relu");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      const T* px = xc.data();
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < yc.numel(); ++i) {
        if (px[i] > T(0)) gx[i] += g[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = px[i];
    if (v >= T(0)) {
      py[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      py[i] = e / (T(1) + e);
    }
  }
  y.check_finite("sigmoid");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      const T* py = yc.data();
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < yc.numel(); ++i) gx[i] += g[i] * py[i] * (T(1) - py[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) py[i] = std::tanh(px[i]);
  y.check_finite("tanh");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      const T* py = yc.data();
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < yc.numel(); ++i) gx[i] += g[i] * (T(1) - py[i] * py[i]);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  Tensor<T> y = Tensor<T>::scalar(acc);
  y.check_finite("sum");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T g = yc.grad_data()[0];
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < xc.numel(); ++i) gx[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check(x.numel() > 0, "mean of empty tensor");
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> y = Tensor<T>::scalar(acc * inv);
  y.check_finite("mean");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, inv]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T g = yc.grad_data()[0] * inv;
      T* gx = xc.grad_data();
      for (int64_t i = 0; i < xc.numel(); ++i) gx[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  int64_t known = 1;
  int64_t infer = -1;
  for (size_t i = 0; i < new_shape.size(); ++i) {
    if (new_shape[i] == -1) {
      check(infer == -1, "more than one -1 in reshape target");
      infer = static_cast<int64_t>(i);
    } else {
      known *= new_shape[i];
    }
  }
  if (infer >= 0) {
    check(known > 0 && x.numel() % known == 0,
          "cannot infer axis reshaping " + shape_str(x.shape()) + " to " + shape_str(new_shape));
    new_shape[static_cast<size_t>(infer)] = x.numel() / known;
  }
  check(numel_of(new_shape) == x.numel(), "reshape " + shape_str(x.shape()) + " to " + shape_str(new_shape));
  Tensor<T> y = Tensor<T>::zeros(new_shape);
  std::memcpy(y.data(), x.data(), static_cast<size_t>(x.numel()) * sizeof(T));
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      detail::axpy(xc.grad_data(), yc.grad_data(), yc.numel());
    });
  }
  return y;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& perm) {
  const size_t r = x.shape().size();
  check(perm.size() == r, "permute order rank mismatch on shape " + shape_str(x.shape()));
  std::vector<char> seen(r, 0);
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) {
    check(perm[i] >= 0 && perm[i] < static_cast<int64_t>(r) && !seen[static_cast<size_t>(perm[i])],
          "permute order is not a permutation");
    seen[static_cast<size_t>(perm[i])] = 1;
    out_shape[i] = x.shape()[static_cast<size_t>(perm[i])];
  }
  const std::vector<int64_t> in_strides = detail::row_strides(x.shape());
  std::vector<int64_t> gather(r);
  for (size_t i = 0; i < r; ++i) gather[i] = in_strides[static_cast<size_t>(perm[i])];

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data();
  T* py = y.data();
  const int64_t n = x.numel();
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    py[lin] = px[src];
    for (size_t a = r; a-- > 0;) {
      idx[a]++;
      src += gather[a];
      if (idx[a] < out_shape[a]) break;
      src -= gather[a] * out_shape[a];
      idx[a] = 0;
    }
  }
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, gather, out_shape]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      const size_t r = out_shape.size();
      std::vector<int64_t> idx(r, 0);
      int64_t src = 0;
      for (int64_t lin = 0; lin < yc.numel(); ++lin) {
        gx[src] += g[lin];
        for (size_t a = r; a-- > 0;) {
          idx[a]++;
          src += gather[a];
          if (idx[a] < out_shape[a]) break;
          src -= gather[a] * out_shape[a];
          idx[a] = 0;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& target) {
  const size_t r = x.shape().size();
  check(target.size() == r, "expand rank mismatch: " + shape_str(x.shape()) + " to " + shape_str(target));
  const std::vector<int64_t> in_strides = detail::row_strides(x.shape());
  std::vector<int64_t> gather(r);
  for (size_t a = 0; a < r; ++a) {
    if (x.shape()[a] == target[a]) {
      gather[a] = in_strides[a];
    } else {
      check(x.shape()[a] == 1, "expand " + shape_str(x.shape()) + " to " + shape_str(target));
      gather[a] = 0;
    }
  }
  Tensor<T> y = Tensor<T>::zeros(target);
  const T* px = x.data();
  T* py = y.data();
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  for (int64_t lin = 0; lin < y.numel(); ++lin) {
    py[lin] = px[src];
    for (size_t a = r; a-- > 0;) {
      idx[a]++;
      src += gather[a];
      if (idx[a] < target[a]) break;
      src -= gather[a] * target[a];
      idx[a] = 0;
    }
  }
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    Shape tgt = target;
    detail::record(yc, [xc, yc, gather, tgt]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      const size_t r = tgt.size();
      std::vector<int64_t> idx(r, 0);
      int64_t src = 0;
      for (int64_t lin = 0; lin < yc.numel(); ++lin) {
        gx[src] += g[lin];
        for (size_t a = r; a-- > 0;) {
          idx[a]++;
          src += gather[a];
          if (idx[a] < tgt[a]) break;
          src -= gather[a] * tgt[a];
          idx[a] = 0;
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis) {
  check(!parts.empty(), "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  const size_t r = s0.size();
  check(axis >= 0 && axis < static_cast<int64_t>(r), "concat axis out of range for shape " + shape_str(s0));
  int64_t axis_total = 0;
  for (const Tensor<T>& p : parts) {
    check(p.shape().size() == r, "concat rank mismatch");
    for (size_t a = 0; a < r; ++a) {
      check(a == static_cast<size_t>(axis) || p.shape()[a] == s0[a],
            "concat shapes " + shape_str(p.shape()) + " and " + shape_str(s0) + " differ off axis");
    }
    axis_total += p.shape()[static_cast<size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1;
  for (size_t a = 0; a < static_cast<size_t>(axis); ++a) outer *= s0[a];
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < r; ++a) inner *= s0[a];

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  T* py = y.data();
  const int64_t out_row = axis_total * inner;
  int64_t col = 0;
  for (const Tensor<T>& p : parts) {
    const int64_t block = p.shape()[static_cast<size_t>(axis)] * inner;
    const T* pp = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(py + o * out_row + col, pp + o * block, static_cast<size_t>(block) * sizeof(T));
    }
    col += block;
  }
  bool any = false;
  for (const Tensor<T>& p : parts) any = any || detail::grad_enabled<T>({p});
  if (any) {
    std::vector<Tensor<T>> pc = parts;
    std::vector<char> need(parts.size());
    std::vector<int64_t> blocks(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
      need[i] = detail::tracked(parts[i]) ? 1 : 0;
      blocks[i] = parts[i].shape()[static_cast<size_t>(axis)] * inner;
    }
    Tensor<T> yc = y;
    detail::record(yc, [pc, need, blocks, yc, outer, out_row]() mutable {
      if (!yc.has_grad()) return;
      const T* g = yc.grad_data();
      int64_t col = 0;
      for (size_t i = 0; i < pc.size(); ++i) {
        if (need[i]) {
          pc[i].ensure_grad();
          T* gp = pc[i].grad_data();
          for (int64_t o = 0; o < outer; ++o) detail::axpy(gp + o * blocks[i], g + o * out_row + col, blocks[i]);
        }
        col += blocks[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int64_t axis, int64_t start, int64_t length) {
  const Shape& s = x.shape();
  const size_t r = s.size();
  check(axis >= 0 && axis < static_cast<int64_t>(r), "narrow axis out of range for shape " + shape_str(s));
  check(start >= 0 && length >= 0 && start + length <= s[static_cast<size_t>(axis)],
        "narrow window [" + std::to_string(start) + "," + std::to_string(start + length) + ") out of range for shape " +
            shape_str(s));
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = length;

  int64_t outer = 1;
  for (size_t a = 0; a < static_cast<size_t>(axis); ++a) outer *= s[a];
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < r; ++a) inner *= s[a];
  const int64_t in_row = s[static_cast<size_t>(axis)] * inner;
  const int64_t out_block = length * inner;
  const int64_t off = start * inner;

  Tensor<T> y = Tensor<T>::zeros(out_shape);
  const T* px = x.data();
  T* py = y.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(py + o * out_block, px + o * in_row + off, static_cast<size_t>(out_block) * sizeof(T));
  }
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, outer, in_row, out_block, off]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      for (int64_t o = 0; o < outer; ++o) detail::axpy(gx + o * in_row + off, g + o * out_block, out_block);
    });
  }
  return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
  const Shape& s = x.shape();
  const size_t r = s.size();
  check(axis >= 0 && axis < static_cast<int64_t>(r), "softmax axis out of range for shape " + shape_str(s));
  const int64_t L = s[static_cast<size_t>(axis)];
  int64_t outer = 1;
  for (size_t a = 0; a < static_cast<size_t>(axis); ++a) outer *= s[a];
  int64_t inner = 1;
  for (size_t a = static_cast<size_t>(axis) + 1; a < r; ++a) inner *= s[a];

  Tensor<T> y = Tensor<T>::zeros(s);
  const T* px = x.data();
  T* py = y.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const T* xs = px + o * L * inner + in;
      T* ys = py + o * L * inner + in;
      T m = xs[0];
      for (int64_t l = 1; l < L; ++l) m = std::max(m, xs[l * inner]);
      T z = T(0);
      for (int64_t l = 0; l < L; ++l) {
        const T e = std::exp(xs[l * inner] - m);
        ys[l * inner] = e;
        z += e;
      }
      const T invz = T(1) / z;
      for (int64_t l = 0; l < L; ++l) ys[l * inner] *= invz;
    }
  }
  y.check_finite("softmax");
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, outer, inner, L]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      const T* py = yc.data();
      T* gx = xc.grad_data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * L * inner + in;
          T dot = T(0);
          for (int64_t l = 0; l < L; ++l) dot += g[base + l * inner] * py[base + l * inner];
          for (int64_t l = 0; l < L; ++l) {
            gx[base + l * inner] += py[base + l * inner] * (g[base + l * inner] - dot);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, int64_t factor) {
  check(x.rank() == 4, "upsample expects a rank-4 input, got " + shape_str(x.shape()));
  check(factor >= 1, "upsample factor must be positive");
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  Tensor<T> y = Tensor<T>::zeros({B, C, H * factor, W * factor});
  const T* px = x.data();
  T* py = y.data();
  const int64_t Ho = H * factor, Wo = W * factor;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* xs = px + bc * H * W;
    T* ys = py + bc * Ho * Wo;
    for (int64_t i = 0; i < Ho; ++i) {
      const T* row = xs + (i / factor) * W;
      for (int64_t j = 0; j < Wo; ++j) ys[i * Wo + j] = row[j / factor];
    }
  }
  if (detail::grad_enabled<T>({x})) {
    Tensor<T> xc = x, yc = y;
    detail::record(yc, [xc, yc, B, C, H, W, factor]() mutable {
      if (!yc.has_grad()) return;
      xc.ensure_grad();
      const T* g = yc.grad_data();
      T* gx = xc.grad_data();
      const int64_t Ho = H * factor, Wo = W * factor;
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* gs = g + bc * Ho * Wo;
        T* xs = gx + bc * H * W;
        for (int64_t i = 0; i < Ho; ++i) {
          T* row = xs + (i / factor) * W;
          for (int64_t j = 0; j < Wo; ++j) row[j / factor] += gs[i * Wo + j];
        }
      }
    });
  }
  return y;
}

}  // namespace mcsd
