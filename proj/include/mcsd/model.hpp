#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/layers.hpp"
#include "mcsd/ops.hpp"
#include "mcsd/rng.hpp"
#include "mcsd/stmu.hpp"

namespace mcsd {

// Architecture hyperparameters. The extent fields (seq_len, input_height,
// input_width) size the sequence-normalization and attention parameters, so
// STMU kinds that own such parameters only accept inputs of exactly that
// extent; the purely convolutional kinds accept any divisible spatial size.
struct ModelConfig {
  int64_t levels = 4;
  std::vector<int64_t> channels = {16, 32, 64, 128};
  int64_t input_channels = 1;
  StmuKind stmu_kind = StmuKind::Dsta;
  int64_t stmu_depth = 2;
  std::vector<int64_t> atrous_rates = {1, 2, 4};
  int64_t heads = 4;
  double threshold = 0.5;
  int64_t seq_len = 6;
  int64_t input_height = 64;
  int64_t input_width = 64;
  bool multiscale = true;
  bool use_decoder = true;
  bool dsta_temporal = true;
  bool dsta_spatial = true;

  int64_t scale() const { return int64_t(1) << (levels - 1); }
  int64_t bottleneck_channels() const { return channels.back(); }
  int64_t bottleneck_height() const { return input_height / scale(); }
  int64_t bottleneck_width() const { return input_width / scale(); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (levels < 1) fail("levels must be positive");
    if (levels > 16) fail("levels must be at most 16");
    if (static_cast<int64_t>(channels.size()) != levels)
      fail("channels list has " + std::to_string(channels.size()) + " entries for " + std::to_string(levels) +
           " levels");
    for (int64_t c : channels) {
      if (c <= 0) fail("channel counts must be positive");
      if (c % 4 != 0) fail("channel count " + std::to_string(c) + " is not divisible by the 4 norm groups");
    }
    if (input_channels <= 0) fail("input_channels must be positive");
    if (stmu_depth < 1 || stmu_depth > 8) fail("stmu_depth must be in [1,8]");
    if (heads <= 0) fail("heads must be positive");
    if (seq_len <= 0) fail("seq_len must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must lie strictly inside (0,1)");
    if (input_height <= 0 || input_width <= 0) fail("input extent must be positive");
    if (input_height % scale() != 0 || input_width % scale() != 0)
      fail("input " + std::to_string(input_height) + "x" + std::to_string(input_width) + " not divisible by " +
           std::to_string(scale()));
    if (atrous_rates.empty()) fail("atrous_rates must be nonempty");
    int64_t prev = 0;
    for (int64_t r : atrous_rates) {
      if (r <= prev) fail("atrous_rates must be strictly increasing and positive");
      prev = r;
    }
    if (multiscale) {
      const int64_t extent = std::min(bottleneck_height(), bottleneck_width());
      if (2 * atrous_rates.back() > extent)
        fail("atrous rate " + std::to_string(atrous_rates.back()) + " too large for " +
             std::to_string(bottleneck_height()) + "x" + std::to_string(bottleneck_width()) + " bottleneck");
    }
    const int64_t cl = bottleneck_channels();
    const bool temporal_attention =
        stmu_kind == StmuKind::Tformer || (stmu_kind == StmuKind::Dsta && dsta_temporal);
    if (temporal_attention && (bottleneck_height() * bottleneck_width()) % heads != 0)
      fail("heads must divide the bottleneck spatial extent " +
           std::to_string(bottleneck_height() * bottleneck_width()));
    if (stmu_kind == StmuKind::Dsta) {
      if (!dsta_temporal && !dsta_spatial) fail("dsta requires at least one attention branch");
      if (dsta_spatial && (seq_len * cl) % heads != 0)
        fail("heads must divide seq_len*channels = " + std::to_string(seq_len * cl));
    }
  }

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.levels == b.levels && a.channels == b.channels && a.input_channels == b.input_channels &&
           a.stmu_kind == b.stmu_kind && a.stmu_depth == b.stmu_depth && a.atrous_rates == b.atrous_rates &&
           a.heads == b.heads && a.threshold == b.threshold && a.seq_len == b.seq_len &&
           a.input_height == b.input_height && a.input_width == b.input_width && a.multiscale == b.multiscale &&
           a.use_decoder == b.use_decoder && a.dsta_temporal == b.dsta_temporal && a.dsta_spatial == b.dsta_spatial;
  }
};

// Shared per-frame encoder, multi-scale fusion with pyramid pooling, an STMU
// stack over the bottleneck sequence, and a skip-connected decoder. Parameter
// construction order is fixed: encoder blocks shallow to deep, fusion
// projections then the fusion conv, pyramid branches in rate order then the
// global branch then the merge conv, STMU units in stack order, decoder pairs
// deep to shallow (upsampler before block), head last. Reconstructing the
// layers in this order from the same seed reproduces the model exactly.
template <typename T>
class McsdNet {
 public:
  explicit McsdNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const int64_t L = cfg_.levels;
    const auto& ch = cfg_.channels;
    const int64_t cl = cfg_.bottleneck_channels();
    for (int64_t i = 0; i < L; ++i)
      encoder_.emplace_back(i == 0 ? cfg_.input_channels : ch[i - 1], ch[i], rng);
    if (cfg_.multiscale) {
      for (int64_t i = 0; i + 1 < L; ++i) level_proj_.emplace_back(ch[i], cl, 1, 1, 0, rng);
      fuse_ = Conv2dLayer<T>(L * cl, cl, 1, 1, 0, rng);
      for (int64_t r : cfg_.atrous_rates) branch_.emplace_back(cl, cl, 3, 1, r, rng, r);
      global_ = Conv2dLayer<T>(cl, cl, 1, 1, 0, rng);
      merge_ = Conv2dLayer<T>((static_cast<int64_t>(cfg_.atrous_rates.size()) + 1) * cl, cl, 1, 1, 0, rng);
    }
    for (int64_t d = 0; d < cfg_.stmu_depth; ++d)
      stmu_.push_back(make_stmu<T>(cfg_.stmu_kind, cfg_.seq_len, cl, cfg_.bottleneck_height(),
                                   cfg_.bottleneck_width(), cfg_.heads, cfg_.dsta_temporal, cfg_.dsta_spatial,
                                   rng));
    if (cfg_.use_decoder) {
      for (int64_t i = L - 1; i >= 1; --i) {
        up_.emplace_back(ch[i], ch[i - 1], 2, 2, rng);
        dec_.emplace_back(2 * ch[i - 1], ch[i - 1], rng);
      }
      head_ = Conv2dLayer<T>(ch[0], 1, 1, 1, 0, rng);
    } else {
      head_ = Conv2dLayer<T>(cl, 1, 1, 1, 0, rng);
    }
    register_params();
  }

  const ModelConfig& config() const { return cfg_; }

  // Shared-weight pyramid over a batch of frames: level 1 at full resolution,
  // each deeper level pools by 2 first.
  std::vector<Tensor<T>> encode(const Tensor<T>& frames) const {
    check(frames.rank() == 4, "encode expects [N,C,H,W], got " + shape_str(frames.shape()));
    check(frames.size(1) == cfg_.input_channels, "encode expects " + std::to_string(cfg_.input_channels) +
                                                     " input channels, got " + std::to_string(frames.size(1)));
    check(frames.size(2) % cfg_.scale() == 0 && frames.size(3) % cfg_.scale() == 0,
          "spatial extent " + shape_str(frames.shape()) + " not divisible by " + std::to_string(cfg_.scale()));
    std::vector<Tensor<T>> pyramid;
    pyramid.reserve(encoder_.size());
    Tensor<T> h = frames;
    for (size_t i = 0; i < encoder_.size(); ++i) {
      if (i > 0) h = maxpool2d(h, 2);
      h = encoder_[i].forward(h);
      pyramid.push_back(h);
    }
    return pyramid;
  }

  // Pools every shallower level to the deepest spatial size, projects each to
  // the bottleneck width, concatenates with the deepest map, fuses with a 1x1
  // conv, and finishes with pyramid pooling.
  Tensor<T> msst_fuse(const std::vector<Tensor<T>>& pyramid) const {
    check(cfg_.multiscale, "multi-scale fusion is disabled in this config");
    check(static_cast<int64_t>(pyramid.size()) == cfg_.levels,
          "pyramid has " + std::to_string(pyramid.size()) + " levels, config wants " + std::to_string(cfg_.levels));
    const Tensor<T>& deepest = pyramid.back();
    const int64_t h = deepest.size(2), w = deepest.size(3);
    std::vector<Tensor<T>> maps;
    maps.reserve(pyramid.size());
    for (size_t i = 0; i + 1 < pyramid.size(); ++i)
      maps.push_back(level_proj_[i].forward(adaptive_avg_pool2d(pyramid[i], h, w)));
    maps.push_back(deepest);
    return pyramid_pool(fuse_.forward(concat(maps, 1)));
  }

  // Parallel shape-preserving atrous branches plus a broadcast global-average
  // branch, concatenated and merged back to the input width.
  Tensor<T> pyramid_pool(const Tensor<T>& feature) const {
    check(cfg_.multiscale, "pyramid pooling is disabled in this config");
    check(feature.rank() == 4, "pyramid_pool expects [N,C,h,w], got " + shape_str(feature.shape()));
    const int64_t h = feature.size(2), w = feature.size(3);
    check(2 * cfg_.atrous_rates.back() <= std::min(h, w),
          "atrous rate " + std::to_string(cfg_.atrous_rates.back()) + " too large for " + shape_str(feature.shape()));
    std::vector<Tensor<T>> outs;
    outs.reserve(branch_.size() + 1);
    for (const auto& b : branch_) outs.push_back(b.forward(feature));
    auto g = global_.forward(adaptive_avg_pool2d(feature, 1, 1));
    outs.push_back(expand(g, {feature.size(0), g.size(1), h, w}));
    return merge_.forward(concat(outs, 1));
  }

  // Doubles resolution per step with a learned upsampler, concatenates the
  // matching encoder skip, refines, and emits single-channel logits.
  Tensor<T> decode(const Tensor<T>& bottleneck, const std::vector<Tensor<T>>& pyramid) const {
    check(cfg_.use_decoder, "decoder is disabled in this config");
    check(static_cast<int64_t>(pyramid.size()) == cfg_.levels,
          "pyramid has " + std::to_string(pyramid.size()) + " levels, config wants " + std::to_string(cfg_.levels));
    Tensor<T> h = bottleneck;
    for (size_t k = 0; k < up_.size(); ++k) {
      std::vector<Tensor<T>> joined = {pyramid[pyramid.size() - 2 - k], up_[k].forward(h)};
      h = dec_[k].forward(concat(joined, 1));
    }
    return head_.forward(h);
  }

  // [B,T,Cin,H,W] -> per-pixel probabilities of the same extent.
  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 5, "forward expects [B,T,C,H,W], got " + shape_str(x.shape()));
    const int64_t B = x.size(0), t = x.size(1), cin = x.size(2), H = x.size(3), W = x.size(4);
    check(t >= 1, "sequence length must be positive");
    check(cin == cfg_.input_channels,
          "expected " + std::to_string(cfg_.input_channels) + " input channels, got " + std::to_string(cin));
    if (cfg_.stmu_kind == StmuKind::Tformer || cfg_.stmu_kind == StmuKind::Dsta)
      check(t == cfg_.seq_len && H == cfg_.input_height && W == cfg_.input_width,
            "attention parameters are sized for [" + std::to_string(cfg_.seq_len) + ",*," +
                std::to_string(cfg_.input_height) + "," + std::to_string(cfg_.input_width) + "], got " +
                shape_str(x.shape()));
    auto frames = reshape(x, {B * t, cin, H, W});
    auto pyramid = encode(frames);
    auto z = cfg_.multiscale ? msst_fuse(pyramid) : pyramid.back();
    auto seq = reshape(z, {B, t, z.size(1), z.size(2), z.size(3)});
    for (const auto& unit : stmu_) seq = unit->forward(seq);
    auto flat = reshape(seq, {B * t, z.size(1), z.size(2), z.size(3)});
    Tensor<T> logits = cfg_.use_decoder ? decode(flat, pyramid)
                                        : upsample_nearest2d(head_.forward(flat), cfg_.scale());
    return reshape(sigmoid(logits), {B, t, 1, H, W});
  }

  Params<T>& params() { return params_; }
  const Params<T>& params() const { return params_; }

  Tensor<T> param(const std::string& name) const {
    for (const auto& [key, value] : params_)
      if (key == name) return value;
    throw ConfigError("no parameter named " + name);
  }

 private:
  void register_params() {
    for (size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("enc" + std::to_string(i + 1), params_);
    if (cfg_.multiscale) {
      for (size_t i = 0; i < level_proj_.size(); ++i)
        level_proj_[i].collect("msst.proj" + std::to_string(i + 1), params_);
      fuse_.collect("msst.fuse", params_);
      for (size_t k = 0; k < branch_.size(); ++k)
        branch_[k].collect("msst.rate" + std::to_string(cfg_.atrous_rates[k]), params_);
      global_.collect("msst.global", params_);
      merge_.collect("msst.merge", params_);
    }
    for (size_t d = 0; d < stmu_.size(); ++d) stmu_[d]->collect("stmu" + std::to_string(d + 1), params_);
    if (cfg_.use_decoder) {
      for (size_t k = 0; k < up_.size(); ++k) {
        const std::string level = std::to_string(cfg_.levels - 1 - static_cast<int64_t>(k));
        up_[k].collect("dec" + level + ".up", params_);
        dec_[k].collect("dec" + level + ".block", params_);
      }
    }
    head_.collect("head", params_);
  }

  ModelConfig cfg_;
  std::vector<ConvNormReLU<T>> encoder_;
  std::vector<Conv2dLayer<T>> level_proj_;
  Conv2dLayer<T> fuse_;
  std::vector<Conv2dLayer<T>> branch_;
  Conv2dLayer<T> global_;
  Conv2dLayer<T> merge_;
  std::vector<std::unique_ptr<StmuBase<T>>> stmu_;
  std::vector<ConvTranspose2dLayer<T>> up_;
  std::vector<ConvNormReLU<T>> dec_;
  Conv2dLayer<T> head_;
  Params<T> params_;
};

// p >= threshold maps to 1, everything else to 0. Not recorded on the tape.
template <typename T>
Tensor<T> predict_mask(const Tensor<T>& probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie strictly inside (0,1)");
  auto mask = Tensor<T>::zeros(probabilities.shape());
  const T* p = probabilities.data();
  T* m = mask.data();
  const T th = static_cast<T>(threshold);
  for (int64_t i = 0; i < probabilities.numel(); ++i) m[i] = p[i] >= th ? T(1) : T(0);
  return mask;
}

}  // namespace mcsd
