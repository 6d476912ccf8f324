#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "mcsd/grad_check.hpp"
#include "mcsd/model.hpp"

using mcsd::McsdNet;
using mcsd::ModelConfig;
using mcsd::Rng;
using mcsd::Shape;
using mcsd::StmuKind;
using mcsd::Tensor;

namespace {

ModelConfig tiny_config(StmuKind kind) {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.channels = {4, 8};
  cfg.stmu_kind = kind;
  cfg.stmu_depth = 1;
  cfg.atrous_rates = {1, 2};
  cfg.heads = 1;
  cfg.seq_len = 2;
  cfg.input_height = 8;
  cfg.input_width = 8;
  return cfg;
}

template <typename T>
void zero_params_with_prefix(McsdNet<T>& model, const std::string& prefix) {
  for (auto& [name, tensor] : model.params()) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::fill(tensor.data(), tensor.data() + tensor.numel(), T(0));
  }
}

// Layer-by-layer replay of the documented construction order; used to verify
// that member operations compose into exactly the published forward pass.
template <typename T>
struct ReplayTiny {
  mcsd::ConvNormReLU<T> enc1, enc2;
  mcsd::Conv2dLayer<T> proj, fuse, rate1, rate2, global_conv, merge;
  std::unique_ptr<mcsd::StmuBase<T>> stmu;
  mcsd::ConvTranspose2dLayer<T> up;
  mcsd::ConvNormReLU<T> dec;
  mcsd::Conv2dLayer<T> head;

  ReplayTiny(StmuKind kind, uint64_t seed) {
    Rng rng(seed);
    enc1 = mcsd::ConvNormReLU<T>(1, 4, rng);
    enc2 = mcsd::ConvNormReLU<T>(4, 8, rng);
    proj = mcsd::Conv2dLayer<T>(4, 8, 1, 1, 0, rng);
    fuse = mcsd::Conv2dLayer<T>(16, 8, 1, 1, 0, rng);
    rate1 = mcsd::Conv2dLayer<T>(8, 8, 3, 1, 1, rng, 1);
    rate2 = mcsd::Conv2dLayer<T>(8, 8, 3, 1, 2, rng, 2);
    global_conv = mcsd::Conv2dLayer<T>(8, 8, 1, 1, 0, rng);
    merge = mcsd::Conv2dLayer<T>(24, 8, 1, 1, 0, rng);
    stmu = mcsd::make_stmu<T>(kind, 2, 8, 4, 4, 1, true, true, rng);
    up = mcsd::ConvTranspose2dLayer<T>(8, 4, 2, 2, rng);
    dec = mcsd::ConvNormReLU<T>(8, 4, rng);
    head = mcsd::Conv2dLayer<T>(4, 1, 1, 1, 0, rng);
  }

  Tensor<T> fuse_by_hand(const std::vector<Tensor<T>>& pyr) const {
    auto p1 = proj.forward(mcsd::adaptive_avg_pool2d(pyr[0], 4, 4));
    std::vector<Tensor<T>> stacked = {p1, pyr[1]};
    auto fused = fuse.forward(mcsd::concat(stacked, 1));
    auto b1 = rate1.forward(fused);
    auto b2 = rate2.forward(fused);
    auto g = global_conv.forward(mcsd::adaptive_avg_pool2d(fused, 1, 1));
    auto gb = mcsd::expand(g, {fused.size(0), g.size(1), fused.size(2), fused.size(3)});
    std::vector<Tensor<T>> branches = {b1, b2, gb};
    return merge.forward(mcsd::concat(branches, 1));
  }

  Tensor<T> decode_by_hand(const Tensor<T>& z, const std::vector<Tensor<T>>& pyr) const {
    auto u = up.forward(z);
    std::vector<Tensor<T>> joined = {pyr[0], u};
    return head.forward(dec.forward(mcsd::concat(joined, 1)));
  }

  Tensor<T> forward_by_hand(const Tensor<T>& x) const {
    const int64_t B = x.size(0), t = x.size(1);
    auto frames = mcsd::reshape(x, {B * t, x.size(2), x.size(3), x.size(4)});
    auto e1 = enc1.forward(frames);
    auto e2 = enc2.forward(mcsd::maxpool2d(e1, 2));
    auto z = fuse_by_hand({e1, e2});
    auto seq = stmu->forward(mcsd::reshape(z, {B, t, 8, 4, 4}));
    auto flat = mcsd::reshape(seq, {B * t, 8, 4, 4});
    auto logits = decode_by_hand(flat, {e1, e2});
    return mcsd::reshape(mcsd::sigmoid(logits), {B, t, 1, 8, 8});
  }
};

}  // namespace

TEST(ModelConfigTest, DefaultsValidate) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.scale(), 8);
  EXPECT_EQ(cfg.bottleneck_channels(), 128);
  EXPECT_EQ(cfg.bottleneck_height(), 8);
}

TEST(ModelConfigTest, RejectsInconsistentFields) {
  {
    ModelConfig cfg;
    cfg.channels = {16, 32};
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.input_height = 60;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.threshold = 1.0;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
    cfg.threshold = 0.0;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.atrous_rates = {2, 2};
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
    cfg.atrous_rates = {};
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
    cfg.atrous_rates = {1, 5};
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.dsta_temporal = false;
    cfg.dsta_spatial = false;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.channels = {16, 32, 64, 126};
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
  {
    ModelConfig cfg;
    cfg.stmu_depth = 0;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
    cfg.stmu_depth = 9;
    EXPECT_THROW(cfg.validate(), mcsd::ConfigError);
  }
}

TEST(ModelTest, ForwardShapeAndRangeWithDefaults) {
  ModelConfig cfg;
  cfg.seq_len = 6;
  McsdNet<float> model(cfg, 11);
  Rng rng(3);
  auto x = Tensor<float>::uniform({2, 6, 1, 64, 64}, rng, 0.f, 1.f);
  auto y = model.forward(x);
  ASSERT_EQ(y.shape(), (Shape{2, 6, 1, 64, 64}));
  const float* p = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) {
    ASSERT_GT(p[i], 0.f);
    ASSERT_LT(p[i], 1.f);
  }
}

TEST(ModelTest, EncoderDeepestLevelShape) {
  ModelConfig cfg;
  McsdNet<float> model(cfg, 11);
  Rng rng(4);
  auto frames = Tensor<float>::uniform({12, 1, 64, 64}, rng, 0.f, 1.f);
  auto pyr = model.encode(frames);
  ASSERT_EQ(pyr.size(), 4u);
  EXPECT_EQ(pyr[0].shape(), (Shape{12, 16, 64, 64}));
  EXPECT_EQ(pyr[1].shape(), (Shape{12, 32, 32, 32}));
  EXPECT_EQ(pyr[2].shape(), (Shape{12, 64, 16, 16}));
  EXPECT_EQ(pyr[3].shape(), (Shape{12, 128, 8, 8}));
}

TEST(ModelTest, EncodeBatchingMatchesPerFrame) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 21);
  Rng rng(5);
  auto frames = Tensor<double>::uniform({3, 1, 8, 8}, rng, -1.0, 1.0);
  auto pyr = model.encode(frames);
  for (int64_t f = 0; f < 3; ++f) {
    auto one = mcsd::narrow(frames, 0, f, 1);
    auto solo = model.encode(one);
    for (size_t lvl = 0; lvl < pyr.size(); ++lvl) {
      auto slice = mcsd::narrow(pyr[lvl], 0, f, 1);
      EXPECT_EQ(mcsd::max_abs_diff(slice, solo[lvl]), 0.0) << "frame " << f << " level " << lvl;
    }
  }
}

TEST(ModelTest, IdenticalFramesGiveIdenticalPyramids) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 21);
  Rng rng(6);
  auto one = Tensor<double>::uniform({1, 1, 8, 8}, rng, -1.0, 1.0);
  std::vector<Tensor<double>> pair = {one, one};
  auto two = mcsd::concat(pair, 0);
  auto pyr = model.encode(two);
  for (size_t lvl = 0; lvl < pyr.size(); ++lvl) {
    auto a = mcsd::narrow(pyr[lvl], 0, 0, 1);
    auto b = mcsd::narrow(pyr[lvl], 0, 1, 1);
    EXPECT_EQ(mcsd::max_abs_diff(a, b), 0.0) << "level " << lvl;
  }
}

TEST(ModelTest, FusionZeroWeightsGiveZeroMap) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 33);
  zero_params_with_prefix(model, "msst.");
  Rng rng(7);
  auto frames = Tensor<double>::uniform({2, 1, 8, 8}, rng, -1.0, 1.0);
  auto out = model.msst_fuse(model.encode(frames));
  ASSERT_EQ(out.shape(), (Shape{2, 8, 4, 4}));
  for (int64_t i = 0; i < out.numel(); ++i) ASSERT_EQ(out.data()[i], 0.0);
}

TEST(ModelTest, FusionMatchesHandComposition) {
  const uint64_t seed = 99;
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, seed);
  ReplayTiny<double> replay(StmuKind::Identity, seed);
  Rng rng(8);
  auto frames = Tensor<double>::uniform({3, 1, 8, 8}, rng, -1.0, 1.0);
  auto pyr = model.encode(frames);
  auto got = model.msst_fuse(pyr);
  auto want = replay.fuse_by_hand(pyr);
  EXPECT_EQ(mcsd::max_abs_diff(got, want), 0.0);
}

TEST(ModelTest, PyramidPoolSingleRateBranchIsolation) {
  auto cfg = tiny_config(StmuKind::Identity);
  cfg.atrous_rates = {1};
  McsdNet<double> model(cfg, 55);
  auto merge_w = model.param("msst.merge.w");
  auto merge_b = model.param("msst.merge.b");
  ASSERT_EQ(merge_w.shape(), (Shape{8, 16, 1, 1}));
  std::fill(merge_w.data(), merge_w.data() + merge_w.numel(), 0.0);
  std::fill(merge_b.data(), merge_b.data() + merge_b.numel(), 0.0);
  for (int64_t o = 0; o < 8; ++o) merge_w.at(o, o, 0, 0) = 1.0;

  Rng rng(9);
  auto f = Tensor<double>::uniform({2, 8, 4, 4}, rng, -1.0, 1.0);
  auto got = model.pyramid_pool(f);
  auto want = mcsd::conv2d(f, model.param("msst.rate1.w"), model.param("msst.rate1.b"), 1, 1, 1);
  EXPECT_EQ(mcsd::max_abs_diff(got, want), 0.0);
}

TEST(ModelTest, PyramidPoolRejectsOversizedRate) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 55);
  auto f = Tensor<double>::zeros({1, 8, 3, 3});
  EXPECT_THROW(model.pyramid_pool(f), mcsd::ShapeError);
}

TEST(ModelTest, DecoderZeroWeightsGiveZeroLogits) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 77);
  zero_params_with_prefix(model, "dec");
  zero_params_with_prefix(model, "head");
  Rng rng(10);
  auto frames = Tensor<double>::uniform({2, 1, 8, 8}, rng, -1.0, 1.0);
  auto pyr = model.encode(frames);
  auto z = Tensor<double>::uniform({2, 8, 4, 4}, rng, -1.0, 1.0);
  auto logits = model.decode(z, pyr);
  ASSERT_EQ(logits.shape(), (Shape{2, 1, 8, 8}));
  for (int64_t i = 0; i < logits.numel(); ++i) ASSERT_EQ(logits.data()[i], 0.0);
}

TEST(ModelTest, DecodeMatchesHandComposition) {
  const uint64_t seed = 123;
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, seed);
  ReplayTiny<double> replay(StmuKind::Identity, seed);
  Rng rng(11);
  auto frames = Tensor<double>::uniform({3, 1, 8, 8}, rng, -1.0, 1.0);
  auto pyr = model.encode(frames);
  auto z = Tensor<double>::uniform({3, 8, 4, 4}, rng, -1.0, 1.0);
  auto got = model.decode(z, pyr);
  auto want = replay.decode_by_hand(z, pyr);
  EXPECT_EQ(mcsd::max_abs_diff(got, want), 0.0);
}

TEST(ModelTest, ForwardMatchesStraightLineRecompositionIdentity) {
  const uint64_t seed = 2024;
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, seed);
  ReplayTiny<double> replay(StmuKind::Identity, seed);
  Rng rng(12);
  auto x = Tensor<double>::uniform({2, 2, 1, 8, 8}, rng, -1.0, 1.0);
  EXPECT_EQ(mcsd::max_abs_diff(model.forward(x), replay.forward_by_hand(x)), 0.0);
}

TEST(ModelTest, ForwardMatchesStraightLineRecompositionDsta) {
  const uint64_t seed = 4096;
  auto cfg = tiny_config(StmuKind::Dsta);
  McsdNet<double> model(cfg, seed);
  ReplayTiny<double> replay(StmuKind::Dsta, seed);
  Rng rng(13);
  auto x = Tensor<double>::uniform({1, 2, 1, 8, 8}, rng, -1.0, 1.0);
  EXPECT_EQ(mcsd::max_abs_diff(model.forward(x), replay.forward_by_hand(x)), 0.0);
}

TEST(ModelTest, IdentityStmuForwardInvariantToFrameOrder) {
  auto cfg = tiny_config(StmuKind::Identity);
  cfg.seq_len = 3;
  McsdNet<double> model(cfg, 314);
  Rng rng(14);
  auto x = Tensor<double>::uniform({1, 3, 1, 8, 8}, rng, -1.0, 1.0);
  std::vector<Tensor<double>> rev;
  for (int64_t t = 2; t >= 0; --t) rev.push_back(mcsd::narrow(x, 1, t, 1));
  auto xr = mcsd::concat(rev, 1);
  auto y = model.forward(x);
  auto yr = model.forward(xr);
  for (int64_t t = 0; t < 3; ++t) {
    auto a = mcsd::narrow(y, 1, t, 1);
    auto b = mcsd::narrow(yr, 1, 2 - t, 1);
    EXPECT_EQ(mcsd::max_abs_diff(a, b), 0.0) << "frame " << t;
  }
}

TEST(ModelTest, FusionIsEquivariantToFramePermutation) {
  auto cfg = tiny_config(StmuKind::Identity);
  McsdNet<double> model(cfg, 271);
  Rng rng(15);
  auto frames = Tensor<double>::uniform({4, 1, 8, 8}, rng, -1.0, 1.0);
  const std::vector<int64_t> perm = {2, 0, 3, 1};
  std::vector<Tensor<double>> parts;
  for (int64_t s : perm) parts.push_back(mcsd::narrow(frames, 0, s, 1));
  auto permuted = mcsd::concat(parts, 0);
  auto base = model.msst_fuse(model.encode(frames));
  auto swapped = model.msst_fuse(model.encode(permuted));
  for (size_t i = 0; i < perm.size(); ++i) {
    auto a = mcsd::narrow(swapped, 0, static_cast<int64_t>(i), 1);
    auto b = mcsd::narrow(base, 0, perm[i], 1);
    EXPECT_EQ(mcsd::max_abs_diff(a, b), 0.0) << "slot " << i;
  }
}

TEST(ModelTest, EndToEndGradCheckTinyConfig) {
  auto cfg = tiny_config(StmuKind::Dsta);
  McsdNet<double> model(cfg, 888);
  Rng rng(16);
  auto x = Tensor<double>::uniform({1, 2, 1, 8, 8}, rng, -1.0, 1.0);
  std::vector<Tensor<double>> inputs = {x};
  for (auto& [name, tensor] : model.params()) inputs.push_back(tensor);
  const double err = mcsd::grad_check<double>([&] { return mcsd::mean(model.forward(x)); }, inputs, 1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST(ModelTest, PredictMaskBoundaryAndLoopOracle) {
  auto p = Tensor<double>::from({1, 1, 1, 1, 2}, {0.5, 0.49999});
  auto m = mcsd::predict_mask(p, 0.5);
  EXPECT_EQ(m.at(0, 0, 0, 0, 0), 1.0);
  EXPECT_EQ(m.at(0, 0, 0, 0, 1), 0.0);

  auto low = Tensor<double>::full({2, 3}, 0.2);
  auto zeros = mcsd::predict_mask(low, 0.7);
  for (int64_t i = 0; i < zeros.numel(); ++i) ASSERT_EQ(zeros.data()[i], 0.0);

  Rng rng(17);
  auto probs = Tensor<double>::uniform({2, 3, 1, 4, 4}, rng, 0.0, 1.0);
  auto mask = mcsd::predict_mask(probs, 0.37);
  for (int64_t i = 0; i < probs.numel(); ++i)
    ASSERT_EQ(mask.data()[i], probs.data()[i] >= 0.37 ? 1.0 : 0.0) << "index " << i;

  EXPECT_THROW(mcsd::predict_mask(probs, 0.0), mcsd::ConfigError);
  EXPECT_THROW(mcsd::predict_mask(probs, 1.0), mcsd::ConfigError);
  EXPECT_THROW(mcsd::predict_mask(probs, -0.3), mcsd::ConfigError);
}

TEST(ModelTest, DecoderDisabledStillMatchesInputExtent) {
  auto cfg = tiny_config(StmuKind::Identity);
  cfg.use_decoder = false;
  McsdNet<double> model(cfg, 404);
  for (const auto& [name, tensor] : model.params()) EXPECT_TRUE(name.rfind("dec", 0) != 0) << name;
  Rng rng(18);
  auto x = Tensor<double>::uniform({2, 2, 1, 8, 8}, rng, -1.0, 1.0);
  auto y = model.forward(x);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 1, 8, 8}));
  auto z = Tensor<double>::zeros({2, 8, 4, 4});
  EXPECT_THROW(model.decode(z, model.encode(mcsd::reshape(x, {4, 1, 8, 8}))), mcsd::ShapeError);
}

TEST(ModelTest, MultiscaleDisabledFeedsDeepestLevel) {
  auto cfg = tiny_config(StmuKind::Identity);
  cfg.multiscale = false;
  McsdNet<double> model(cfg, 505);
  for (const auto& [name, tensor] : model.params()) EXPECT_TRUE(name.rfind("msst", 0) != 0) << name;
  Rng rng(19);
  auto x = Tensor<double>::uniform({1, 2, 1, 8, 8}, rng, -1.0, 1.0);
  auto y = model.forward(x);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 1, 8, 8}));
  auto frames = mcsd::reshape(x, {2, 1, 8, 8});
  EXPECT_THROW(model.msst_fuse(model.encode(frames)), mcsd::ShapeError);
}

TEST(ModelTest, ParamsRegisteredExactlyOnce) {
  auto cfg = tiny_config(StmuKind::Dsta);
  McsdNet<double> model(cfg, 606);
  std::unordered_set<std::string> names;
  std::unordered_set<const void*> storages;
  for (const auto& [name, tensor] : model.params()) {
    EXPECT_TRUE(names.insert(name).second) << "duplicate name " << name;
    EXPECT_TRUE(storages.insert(static_cast<const void*>(tensor.impl_ptr().get())).second) << "duplicate storage " << name;
    EXPECT_TRUE(tensor.requires_grad()) << name;
  }
  EXPECT_FALSE(names.empty());
  EXPECT_TRUE(names.count("enc1.conv.w"));
  EXPECT_TRUE(names.count("msst.merge.b"));
  EXPECT_TRUE(names.count("stmu1.fuse.w"));
  EXPECT_TRUE(names.count("dec1.block.norm.gamma"));
  EXPECT_TRUE(names.count("head.w"));
}

TEST(ModelTest, ForwardRejectsMismatchedInputs) {
  auto cfg = tiny_config(StmuKind::Dsta);
  McsdNet<double> model(cfg, 707);
  EXPECT_THROW(model.forward(Tensor<double>::zeros({2, 1, 8, 8})), mcsd::ShapeError);
  EXPECT_THROW(model.forward(Tensor<double>::zeros({1, 2, 3, 8, 8})), mcsd::ShapeError);
  EXPECT_THROW(model.forward(Tensor<double>::zeros({1, 3, 1, 8, 8})), mcsd::ShapeError);
  EXPECT_THROW(model.forward(Tensor<double>::zeros({1, 2, 1, 16, 16})), mcsd::ShapeError);
}
