#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mcsd/layers.hpp"
#include "mcsd/ops.hpp"

namespace mcsd {

enum class StmuKind { Identity, Conv3d, ConvLstm, Tformer, Dsta };

inline const char* stmu_kind_name(StmuKind kind) {
  switch (kind) {
    case StmuKind::Identity: return "identity";
    case StmuKind::Conv3d: return "conv3d";
    case StmuKind::ConvLstm: return "convlstm";
    case StmuKind::Tformer: return "tformer";
    case StmuKind::Dsta: return "dsta";
  }
  return "identity";
}

inline StmuKind parse_stmu_kind(const std::string& name) {
  if (name == "identity") return StmuKind::Identity;
  if (name == "conv3d") return StmuKind::Conv3d;
  if (name == "convlstm") return StmuKind::ConvLstm;
  if (name == "tformer") return StmuKind::Tformer;
  if (name == "dsta") return StmuKind::Dsta;
  throw ConfigError("unknown stmu kind '" + name + "' (expected identity|conv3d|convlstm|tformer|dsta)");
}

// Every mix unit maps [B,T,C,h,w] to the same shape, so units stack freely.
template <typename T>
class StmuBase {
 public:
  virtual ~StmuBase() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) const = 0;
  virtual void collect(const std::string& prefix, Params<T>& out) = 0;
};

template <typename T>
class IdentityStmu final : public StmuBase<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return x; }
  void collect(const std::string&, Params<T>&) override {}
};

template <typename T>
class Conv3dStmu final : public StmuBase<T> {
 public:
  Conv3dStmu(int64_t channels, Rng& rng) : channels_(channels), conv_(channels, channels, 3, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    check(x.rank() == 5 && x.size(2) == channels_,
          "conv3d unit built for " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
    Tensor<T> y = permute(x, {0, 2, 1, 3, 4});
    y = conv_.forward(y);
    return permute(y, {0, 2, 1, 3, 4});
  }

  void collect(const std::string& prefix, Params<T>& out) override { conv_.collect(prefix + ".conv", out); }

 private:
  int64_t channels_;
  Conv3dLayer<T> conv_;
};

// Convolutional LSTM over the frame axis. One 3x3 convolution on [x_t | h]
// emits all four gates (input, forget, cell, output in that channel order),
// no peephole terms, zero initial state. The per-step hidden state is the
// output sequence.
template <typename T>
class ConvLstmStmu final : public StmuBase<T> {
 public:
  ConvLstmStmu(int64_t channels, Rng& rng) : channels_(channels), gates_(2 * channels, 4 * channels, 3, 1, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    check(x.rank() == 5 && x.size(2) == channels_,
          "convlstm unit built for " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
    const int64_t B = x.size(0), Tn = x.size(1), C = channels_, H = x.size(3), W = x.size(4);
    Tensor<T> h = Tensor<T>::zeros({B, C, H, W});
    Tensor<T> c = Tensor<T>::zeros({B, C, H, W});
    std::vector<Tensor<T>> steps;
    steps.reserve(static_cast<size_t>(Tn));
    for (int64_t t = 0; t < Tn; ++t) {
      Tensor<T> xt = reshape(narrow(x, 1, t, 1), {B, C, H, W});
      Tensor<T> z = gates_.forward(concat<T>({xt, h}, 1));
      Tensor<T> gi = sigmoid(narrow(z, 1, 0, C));
      Tensor<T> gf = sigmoid(narrow(z, 1, C, C));
      Tensor<T> gg = tanh(narrow(z, 1, 2 * C, C));
      Tensor<T> go = sigmoid(narrow(z, 1, 3 * C, C));
      c = add(mul(gf, c), mul(gi, gg));
      h = mul(go, tanh(c));
      steps.push_back(reshape(h, {B, 1, C, H, W}));
    }
    return concat(steps, 1);
  }

  void collect(const std::string& prefix, Params<T>& out) override { gates_.collect(prefix + ".gates", out); }

  Conv2dLayer<T>& gates() { return gates_; }

 private:
  int64_t channels_;
  Conv2dLayer<T> gates_;
};

// x + T-MSA(SequenceNorm(x)): attention over the T*C token axis with h*w
// embeddings, added back residually.
template <typename T>
class TformerStmu final : public StmuBase<T> {
 public:
  TformerStmu(int64_t t, int64_t c, int64_t h, int64_t w, int64_t heads, Rng& rng)
      : t_(t), c_(c), h_(h), w_(w), norm_(t, c, h, w), attn_(h * w, heads, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const override {
    check(x.rank() == 5 && x.size(1) == t_ && x.size(2) == c_ && x.size(3) == h_ && x.size(4) == w_,
          "tformer unit extent mismatch on " + shape_str(x.shape()));
    const int64_t B = x.size(0);
    Tensor<T> n = norm_.forward(x);
    Tensor<T> tok = reshape(n, {B, t_ * c_, h_ * w_});
    Tensor<T> a = attn_.forward(tok);
    return add(x, reshape(a, {B, t_, c_, h_, w_}));
  }

  void collect(const std::string& prefix, Params<T>& out) override {
    norm_.collect(prefix + ".norm", out);
    attn_.collect(prefix + ".t_msa", out);
  }

 private:
  int64_t t_, c_, h_, w_;
  SequenceNorm<T> norm_;
  MultiHeadSelfAttention<T> attn_;
};

// Dual attention: one normalization, then temporal attention over T*C tokens
// of dim h*w and spatial attention over h*w tokens of dim T*C, concatenated
// on channels, fused by a per-frame 1x1 convolution back to C, plus the
// residual. Either branch can be switched off, leaving the fuse conv at C in.
template <typename T>
class DstaStmu final : public StmuBase<T> {
 public:
  DstaStmu(int64_t t, int64_t c, int64_t h, int64_t w, int64_t heads, bool use_temporal, bool use_spatial, Rng& rng)
      : t_(t), c_(c), h_(h), w_(w), use_t_(use_temporal), use_s_(use_spatial), norm_(t, c, h, w) {
    if (!use_temporal && !use_spatial) throw ConfigError("dsta needs at least one of its attention branches enabled");
    if (use_t_) t_msa_ = MultiHeadSelfAttention<T>(h * w, heads, rng);
    if (use_s_) s_msa_ = MultiHeadSelfAttention<T>(t * c, heads, rng);
    const int64_t branches = (use_t_ ? 1 : 0) + (use_s_ ? 1 : 0);
    fuse_ = Conv2dLayer<T>(branches * c, c, 1, 1, 0, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const override {
    check(x.rank() == 5 && x.size(1) == t_ && x.size(2) == c_ && x.size(3) == h_ && x.size(4) == w_,
          "dsta unit extent mismatch on " + shape_str(x.shape()));
    const int64_t B = x.size(0);
    Tensor<T> n = norm_.forward(x);
    Tensor<T> flat = reshape(n, {B, t_ * c_, h_ * w_});
    std::vector<Tensor<T>> parts;
    if (use_t_) {
      parts.push_back(reshape(t_msa_.forward(flat), {B, t_, c_, h_, w_}));
    }
    if (use_s_) {
      Tensor<T> tok = permute(flat, {0, 2, 1});
      Tensor<T> a = s_msa_.forward(tok);
      parts.push_back(reshape(permute(a, {0, 2, 1}), {B, t_, c_, h_, w_}));
    }
    Tensor<T> cat = parts.size() == 1 ? parts[0] : concat(parts, 2);
    const int64_t bc = cat.size(2);
    Tensor<T> fused = fuse_.forward(reshape(cat, {B * t_, bc, h_, w_}));
    return add(x, reshape(fused, {B, t_, c_, h_, w_}));
  }

  void collect(const std::string& prefix, Params<T>& out) override {
    norm_.collect(prefix + ".norm", out);
    if (use_t_) t_msa_.collect(prefix + ".t_msa", out);
    if (use_s_) s_msa_.collect(prefix + ".s_msa", out);
    fuse_.collect(prefix + ".fuse", out);
  }

  Conv2dLayer<T>& fuse() { return fuse_; }

 private:
  int64_t t_, c_, h_, w_;
  bool use_t_ = true, use_s_ = true;
  SequenceNorm<T> norm_;
  MultiHeadSelfAttention<T> t_msa_, s_msa_;
  Conv2dLayer<T> fuse_;
};

template <typename T>
std::unique_ptr<StmuBase<T>> make_stmu(StmuKind kind, int64_t t, int64_t c, int64_t h, int64_t w, int64_t heads,
                                       bool dsta_temporal, bool dsta_spatial, Rng& rng) {
  switch (kind) {
    case StmuKind::Identity: return std::make_unique<IdentityStmu<T>>();
    case StmuKind::Conv3d: return std::make_unique<Conv3dStmu<T>>(c, rng);
    case StmuKind::ConvLstm: return std::make_unique<ConvLstmStmu<T>>(c, rng);
    case StmuKind::Tformer: return std::make_unique<TformerStmu<T>>(t, c, h, w, heads, rng);
    case StmuKind::Dsta: return std::make_unique<DstaStmu<T>>(t, c, h, w, heads, dsta_temporal, dsta_spatial, rng);
  }
  throw ConfigError("unknown stmu kind");
}

}  // namespace mcsd
