#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mcsd/ops.hpp"
#include "mcsd/rng.hpp"
#include "mcsd/tape.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

template <typename T>
using Params = std::vector<std::pair<std::string, Tensor<T>>>;

namespace detail {

template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  const T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
  Tensor<T> t = Tensor<T>::uniform(std::move(shape), rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

}  // namespace detail

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int64_t din, int64_t dout, Rng& rng)
      : w_(detail::fan_in_uniform<T>({din, dout}, din, rng)), b_(detail::fan_in_uniform<T>({dout}, din, rng)) {}

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w_, b_); }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".w", w_);
    out.emplace_back(prefix + ".b", b_);
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }

 private:
  Tensor<T> w_, b_;
};

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng, int64_t dil = 1)
      : stride_(stride),
        pad_(pad),
        dil_(dil),
        w_(detail::fan_in_uniform<T>({cout, cin, k, k}, cin * k * k, rng)),
        b_(detail::fan_in_uniform<T>({cout}, cin * k * k, rng)) {}

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w_, b_, stride_, pad_, dil_); }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".w", w_);
    out.emplace_back(prefix + ".b", b_);
  }

  Tensor<T>& weight() { return w_; }
  Tensor<T>& bias() { return b_; }

 private:
  int64_t stride_ = 1, pad_ = 0, dil_ = 1;
  Tensor<T> w_, b_;
};

template <typename T>
class ConvTranspose2dLayer {
 public:
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, Rng& rng)
      : stride_(stride),
        w_(detail::fan_in_uniform<T>({cin, cout, k, k}, cin * k * k, rng)),
        b_(detail::fan_in_uniform<T>({cout}, cin * k * k, rng)) {}

  Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose2d(x, w_, b_, stride_); }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".w", w_);
    out.emplace_back(prefix + ".b", b_);
  }

 private:
  int64_t stride_ = 1;
  Tensor<T> w_, b_;
};

template <typename T>
class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng)
      : stride_(stride),
        pad_(pad),
        w_(detail::fan_in_uniform<T>({cout, cin, k, k, k}, cin * k * k * k, rng)),
        b_(detail::fan_in_uniform<T>({cout}, cin * k * k * k, rng)) {}

  Tensor<T> forward(const Tensor<T>& x) const { return conv3d(x, w_, b_, stride_, pad_); }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".w", w_);
    out.emplace_back(prefix + ".b", b_);
  }

 private:
  int64_t stride_ = 1, pad_ = 0;
  Tensor<T> w_, b_;
};

// Normalizes each (sample, channel group) slab of a [B,C,H,W] map to zero
// mean and unit population variance, then applies per-channel gamma/beta.
// Forward and backward are fused by hand; the gradient identity is
//   dx = (1/sigma) * (gh - mean(gh) - xhat * mean(gh*xhat))
// over the slab, with gh = g * gamma[c] folded in per channel.
template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(int64_t channels, int64_t groups = 4, T eps = T(1e-5)) : channels_(channels), groups_(groups), eps_(eps) {
    check(groups >= 1 && channels % groups == 0,
          std::to_string(channels) + " channels do not split into " + std::to_string(groups) + " groups");
    gamma_ = Tensor<T>::full({channels}, T(1));
    gamma_.set_requires_grad(true);
    beta_ = Tensor<T>::zeros({channels});
    beta_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 4, "group_norm input must be rank 4, got " + shape_str(x.shape()));
    check(x.size(1) == channels_,
          "group_norm built for " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
    const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const int64_t gc = C / groups_;
    const int64_t hw = H * W;
    const int64_t m = gc * hw;

    Tensor<T> y = Tensor<T>::zeros(x.shape());
    std::vector<T> mean(static_cast<size_t>(B * groups_));
    std::vector<T> invstd(static_cast<size_t>(B * groups_));
    const T* px = x.data();
    const T* pg = gamma_.data();
    const T* pb = beta_.data();
    T* py = y.data();
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t g = 0; g < groups_; ++g) {
        const T* slab = px + (b * C + g * gc) * hw;
        double s1 = 0, s2 = 0;
        for (int64_t i = 0; i < m; ++i) {
          s1 += slab[i];
          s2 += static_cast<double>(slab[i]) * slab[i];
        }
        const double mu = s1 / m;
        const double var = s2 / m - mu * mu;
        const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        mean[static_cast<size_t>(b * groups_ + g)] = static_cast<T>(mu);
        invstd[static_cast<size_t>(b * groups_ + g)] = is;
        for (int64_t c = 0; c < gc; ++c) {
          const T ga = pg[g * gc + c];
          const T be = pb[g * gc + c];
          const T* row = slab + c * hw;
          T* orow = py + ((b * C + g * gc) + c) * hw;
          for (int64_t i = 0; i < hw; ++i) orow[i] = ga * (row[i] - static_cast<T>(mu)) * is + be;
        }
      }
    }
    y.check_finite("group_norm");

    if (detail::grad_enabled<T>({x, gamma_, beta_})) {
      const bool nx = detail::tracked(x);
      const bool ng = detail::tracked(gamma_);
      const bool nb = detail::tracked(beta_);
      Tensor<T> xc = x, gc_t = gamma_, bc = beta_, yc = y;
      const int64_t G = groups_;
      detail::record(yc, [xc, gc_t, bc, yc, nx, ng, nb, B, C, hw, gc, m, G, mean = std::move(mean),
                          invstd = std::move(invstd)]() mutable {
        if (!yc.has_grad()) return;
        const T* g = yc.grad_data();
        const T* px = xc.data();
        const T* pg = gc_t.data();
        if (nx) xc.ensure_grad();
        if (ng) gc_t.ensure_grad();
        if (nb) bc.ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t gi = 0; gi < G; ++gi) {
            const T mu = mean[static_cast<size_t>(b * G + gi)];
            const T is = invstd[static_cast<size_t>(b * G + gi)];
            const int64_t base = (b * C + gi * gc) * hw;
            double sg = 0, sgx = 0;
            for (int64_t c = 0; c < gc; ++c) {
              const T ga = pg[gi * gc + c];
              const T* grow = g + base + c * hw;
              const T* xrow = px + base + c * hw;
              for (int64_t i = 0; i < hw; ++i) {
                const T gh = grow[i] * ga;
                sg += gh;
                sgx += gh * (xrow[i] - mu) * is;
              }
            }
            const T mg = static_cast<T>(sg / m);
            const T mgx = static_cast<T>(sgx / m);
            for (int64_t c = 0; c < gc; ++c) {
              const T ga = pg[gi * gc + c];
              const T* grow = g + base + c * hw;
              const T* xrow = px + base + c * hw;
              double dga = 0, dbe = 0;
              T* dxrow = nx ? xc.grad_data() + base + c * hw : nullptr;
              for (int64_t i = 0; i < hw; ++i) {
                const T xh = (xrow[i] - mu) * is;
                if (nx) dxrow[i] += is * (grow[i] * ga - mg - xh * mgx);
                dga += grow[i] * xh;
                dbe += grow[i];
              }
              if (ng) gc_t.grad_data()[gi * gc + c] += static_cast<T>(dga);
              if (nb) bc.grad_data()[gi * gc + c] += static_cast<T>(dbe);
            }
          }
        }
      });
    }
    return y;
  }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".gamma", gamma_);
    out.emplace_back(prefix + ".beta", beta_);
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

 private:
  int64_t channels_ = 0, groups_ = 1;
  T eps_ = T(1e-5);
  Tensor<T> gamma_, beta_;
};

// Normalizes each sample of a [B,T,C,H,W] sequence over its entire T*C*H*W
// extent, with learnable gamma/beta of that full extent. Same fused gradient
// as GroupNorm with the slab widened to the whole sample.
template <typename T>
class SequenceNorm {
 public:
  SequenceNorm() = default;
  SequenceNorm(int64_t t, int64_t c, int64_t h, int64_t w, T eps = T(1e-5)) : eps_(eps) {
    extent_ = {t, c, h, w};
    gamma_ = Tensor<T>::full(extent_, T(1));
    gamma_.set_requires_grad(true);
    beta_ = Tensor<T>::zeros(extent_);
    beta_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 5, "sequence_norm input must be rank 5, got " + shape_str(x.shape()));
    check(Shape(x.shape().begin() + 1, x.shape().end()) == extent_,
          "sequence_norm built for extent " + shape_str(extent_) + ", got " + shape_str(x.shape()));
    const int64_t B = x.size(0);
    const int64_t m = x.numel() / B;

    Tensor<T> y = Tensor<T>::zeros(x.shape());
    std::vector<T> mean(static_cast<size_t>(B));
    std::vector<T> invstd(static_cast<size_t>(B));
    const T* px = x.data();
    const T* pg = gamma_.data();
    const T* pb = beta_.data();
    T* py = y.data();
    for (int64_t b = 0; b < B; ++b) {
      const T* s = px + b * m;
      double s1 = 0, s2 = 0;
      for (int64_t i = 0; i < m; ++i) {
        s1 += s[i];
        s2 += static_cast<double>(s[i]) * s[i];
      }
      const double mu = s1 / m;
      const double var = s2 / m - mu * mu;
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
      mean[static_cast<size_t>(b)] = static_cast<T>(mu);
      invstd[static_cast<size_t>(b)] = is;
      T* o = py + b * m;
      for (int64_t i = 0; i < m; ++i) o[i] = pg[i] * (s[i] - static_cast<T>(mu)) * is + pb[i];
    }
    y.check_finite("sequence_norm");

    if (detail::grad_enabled<T>({x, gamma_, beta_})) {
      const bool nx = detail::tracked(x);
      const bool ng = detail::tracked(gamma_);
      const bool nb = detail::tracked(beta_);
      Tensor<T> xc = x, gc = gamma_, bc = beta_, yc = y;
      detail::record(yc, [xc, gc, bc, yc, nx, ng, nb, B, m, mean = std::move(mean), invstd = std::move(invstd)]() mutable {
        if (!yc.has_grad()) return;
        const T* g = yc.grad_data();
        const T* px = xc.data();
        const T* pg = gc.data();
        if (nx) xc.ensure_grad();
        if (ng) gc.ensure_grad();
        if (nb) bc.ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          const T mu = mean[static_cast<size_t>(b)];
          const T is = invstd[static_cast<size_t>(b)];
          const T* gs = g + b * m;
          const T* xs = px + b * m;
          double sg = 0, sgx = 0;
          for (int64_t i = 0; i < m; ++i) {
            const T gh = gs[i] * pg[i];
            sg += gh;
            sgx += gh * (xs[i] - mu) * is;
          }
          const T mg = static_cast<T>(sg / m);
          const T mgx = static_cast<T>(sgx / m);
          if (nx) {
            T* dx = xc.grad_data() + b * m;
            for (int64_t i = 0; i < m; ++i) {
              const T xh = (xs[i] - mu) * is;
              dx[i] += is * (gs[i] * pg[i] - mg - xh * mgx);
            }
          }
          if (ng) {
            T* dg = gc.grad_data();
            for (int64_t i = 0; i < m; ++i) dg[i] += gs[i] * (xs[i] - mu) * is;
          }
          if (nb) {
            T* db = bc.grad_data();
            for (int64_t i = 0; i < m; ++i) db[i] += gs[i];
          }
        }
      });
    }
    return y;
  }

  void collect(const std::string& prefix, Params<T>& out) {
    out.emplace_back(prefix + ".gamma", gamma_);
    out.emplace_back(prefix + ".beta", beta_);
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }

 private:
  Shape extent_;
  T eps_ = T(1e-5);
  Tensor<T> gamma_, beta_;
};

// Multi-head self-attention over [B,N,D] token sequences. No positional
// encoding anywhere: callers that need order sensitivity encode it in the
// tokens themselves, and permuting tokens permutes the output identically.
template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(int64_t dim, int64_t heads, Rng& rng)
      : dim_(dim), heads_(heads), wq_(dim, dim, rng), wk_(dim, dim, rng), wv_(dim, dim, rng), wo_(dim, dim, rng) {
    check(heads >= 1 && dim % heads == 0,
          "attention dim " + std::to_string(dim) + " does not split into " + std::to_string(heads) + " heads");
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 3, "attention input must be rank 3, got " + shape_str(x.shape()));
    check(x.size(2) == dim_, "attention built for dim " + std::to_string(dim_) + ", got " + shape_str(x.shape()));
    const int64_t B = x.size(0), N = x.size(1);
    const int64_t dh = dim_ / heads_;

    auto split = [&](const Tensor<T>& t) {
      return permute(reshape(t, {B, N, heads_, dh}), {0, 2, 1, 3});
    };
    Tensor<T> q = split(wq_.forward(x));
    Tensor<T> k = split(wk_.forward(x));
    Tensor<T> v = split(wv_.forward(x));

    q = scale(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    Tensor<T> attn = softmax(matmul(q, permute(k, {0, 1, 3, 2})), 3);
    Tensor<T> ctx = matmul(attn, v);
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {B, N, dim_});
    return wo_.forward(ctx);
  }

  void collect(const std::string& prefix, Params<T>& out) {
    wq_.collect(prefix + ".wq", out);
    wk_.collect(prefix + ".wk", out);
    wv_.collect(prefix + ".wv", out);
    wo_.collect(prefix + ".wo", out);
  }

 private:
  int64_t dim_ = 0, heads_ = 1;
  Linear<T> wq_, wk_, wv_, wo_;
};

// Conv2d(3x3, stride 1, pad 1) + GroupNorm + ReLU, the encoder work block.
template <typename T>
class ConvNormReLU {
 public:
  ConvNormReLU() = default;
  ConvNormReLU(int64_t cin, int64_t cout, Rng& rng, int64_t groups = 4) : conv_(cin, cout, 3, 1, 1, rng), norm_(cout, groups) {}

  Tensor<T> forward(const Tensor<T>& x) const { return relu(norm_.forward(conv_.forward(x))); }

  void collect(const std::string& prefix, Params<T>& out) {
    conv_.collect(prefix + ".conv", out);
    norm_.collect(prefix + ".norm", out);
  }

 private:
  Conv2dLayer<T> conv_;
  GroupNorm<T> norm_;
};

}  // namespace mcsd
