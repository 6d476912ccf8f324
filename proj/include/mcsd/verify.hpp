#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/grad_check.hpp"
#include "mcsd/layers.hpp"
#include "mcsd/loss.hpp"
#include "mcsd/metrics.hpp"
#include "mcsd/model.hpp"
#include "mcsd/ops.hpp"
#include "mcsd/rng.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

// Knobs for deliberately breaking a verification check, to prove the harness
// can fail. focal_grad_scale multiplies the analytic focal gradient before it
// is compared against finite differences; anything but 1.0 must fail.
struct VerifyHooks {
  double focal_grad_scale = 1.0;
};

struct VerifyResult {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(3);
  os << v;
  return os.str();
}

inline Tensor<double> random_binary(const Shape& shape, Rng& rng, double rate) {
  Tensor<double> t = Tensor<double>::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform() < rate ? 1.0 : 0.0;
  return t;
}

inline void verify_grad(std::vector<VerifyResult>& out, const VerifyHooks& hooks) {
  const double kTol = 1e-6;
  const double kEps = 1e-5;
  Rng rng(301);
  auto report = [&out, kTol](const std::string& name, double worst) {
    out.push_back({"grad", name, worst < kTol,
                   "max rel err " + sci(worst) + " (tol " + sci(kTol) + ")"});
  };

  {
    Tensor<double> x = Tensor<double>::uniform({1, 2, 5, 5}, rng, -1.0, 1.0);
    Tensor<double> w = Tensor<double>::uniform({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor<double> b = Tensor<double>::uniform({3}, rng, -0.1, 0.1);
    report("conv2d", grad_check<double>([&] { return mean(conv2d(x, w, b, 1, 1)); }, {x, w, b}, kEps));
  }
  {
    Tensor<double> a = Tensor<double>::uniform({3, 4}, rng, -1.0, 1.0);
    Tensor<double> b = Tensor<double>::uniform({4, 2}, rng, -1.0, 1.0);
    report("matmul", grad_check<double>([&] { return mean(matmul(a, b)); }, {a, b}, kEps));
  }
  {
    Tensor<double> x = Tensor<double>::uniform({2, 6}, rng, -2.0, 2.0);
    report("sigmoid", grad_check<double>([&] { return mean(sigmoid(x)); }, {x}, kEps));
  }
  {
    Tensor<double> x = Tensor<double>::uniform({3, 4}, rng, -1.0, 1.0);
    Tensor<double> w = Tensor<double>::uniform({4, 5}, rng, -0.5, 0.5);
    Tensor<double> b = Tensor<double>::uniform({5}, rng, -0.1, 0.1);
    report("linear_sigmoid",
           grad_check<double>([&] { return mean(sigmoid(linear(x, w, b))); }, {x, w, b}, kEps));
  }

  {
    Tensor<double> p = Tensor<double>::uniform({3, 4}, rng, 0.05, 0.95);
    Tensor<double> y = random_binary({3, 4}, rng, 0.5);
    FocalLossConfig cfg;
    p.set_requires_grad(true);
    p.clear_grad();
    {
      Tape<double> tape;
      Tensor<double> loss = focal_loss(p, y, cfg);
      tape.backward(loss);
    }
    std::vector<double> analytic(p.grad_data(), p.grad_data() + p.numel());
    p.clear_grad();
    p.set_requires_grad(false);
    double worst = 0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double orig = p.data()[i];
      p.data()[i] = orig + kEps;
      const double lp = focal_loss(p, y, cfg).item();
      p.data()[i] = orig - kEps;
      const double lm = focal_loss(p, y, cfg).item();
      p.data()[i] = orig;
      const double fd = (lp - lm) / (2 * kEps);
      const double a = analytic[static_cast<size_t>(i)] * hooks.focal_grad_scale;
      const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
    report("focal_loss", worst);
  }
}

inline void verify_norm(std::vector<VerifyResult>& out) {
  const double kMeanTol = 1e-6;
  const double kVarTol = 1e-3;
  Rng rng(302);
  double worst_mean = 0, worst_var = 0;

  GroupNorm<double> gn(8, 4);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = Tensor<double>::uniform({2, 8, 5, 7}, rng, -2.0, 3.0);
    Tensor<double> y = gn.forward(x);
    const int64_t gc = 2, hw = 35, m = gc * hw;
    for (int64_t b = 0; b < 2; ++b) {
      for (int64_t g = 0; g < 4; ++g) {
        const double* slab = y.data() + (b * 8 + g * gc) * hw;
        double s1 = 0, s2 = 0;
        for (int64_t i = 0; i < m; ++i) {
          s1 += slab[i];
          s2 += slab[i] * slab[i];
        }
        const double mu = s1 / m;
        const double var = s2 / m - mu * mu;
        worst_mean = std::max(worst_mean, std::abs(mu));
        worst_var = std::max(worst_var, std::abs(var - 1.0));
      }
    }
  }
  out.push_back({"norm", "group_norm", worst_mean < kMeanTol && worst_var < kVarTol,
                 "max |mean| " + sci(worst_mean) + ", max |var-1| " + sci(worst_var)});

  worst_mean = 0;
  worst_var = 0;
  SequenceNorm<double> sn(2, 3, 4, 5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = Tensor<double>::uniform({2, 2, 3, 4, 5}, rng, -1.0, 4.0);
    Tensor<double> y = sn.forward(x);
    const int64_t m = 2 * 3 * 4 * 5;
    for (int64_t b = 0; b < 2; ++b) {
      const double* s = y.data() + b * m;
      double s1 = 0, s2 = 0;
      for (int64_t i = 0; i < m; ++i) {
        s1 += s[i];
        s2 += s[i] * s[i];
      }
      const double mu = s1 / m;
      const double var = s2 / m - mu * mu;
      worst_mean = std::max(worst_mean, std::abs(mu));
      worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
  }
  out.push_back({"norm", "sequence_norm", worst_mean < kMeanTol && worst_var < kVarTol,
                 "max |mean| " + sci(worst_mean) + ", max |var-1| " + sci(worst_var)});
}

inline void verify_metrics(std::vector<VerifyResult>& out) {
  {
    Tensor<double> gt = Tensor<double>::from({4}, {1, 1, 1, 0});
    Tensor<double> pred = Tensor<double>::from({4}, {1, 1, 0, 1});
    ConfusionCounts c = confusion(pred, gt);
    const bool pass = c.tp == 2 && c.fp == 1 && c.fn == 1 && c.tn == 0 &&
                      pod(c) == 2.0 / 3.0 && far(c) == 1.0 / 3.0 && csi(c) == 0.5;
    out.push_back({"metrics", "hand_example", pass,
                   "tp=" + std::to_string(c.tp) + " fp=" + std::to_string(c.fp) +
                       " fn=" + std::to_string(c.fn)});
  }
  {
    Rng rng(303);
    bool pass = true;
    for (int trial = 0; trial < 50 && pass; ++trial) {
      Tensor<double> pred = random_binary({32, 32}, rng, 0.3);
      Tensor<double> gt = random_binary({32, 32}, rng, 0.3);
      ConfusionCounts c = confusion(pred, gt);
      ConfusionCounts loop;
      for (int64_t i = 0; i < 32 * 32; ++i) {
        const bool p = pred.data()[i] == 1.0;
        const bool g = gt.data()[i] == 1.0;
        if (p && g)
          ++loop.tp;
        else if (p && !g)
          ++loop.fp;
        else if (!p && g)
          ++loop.fn;
        else
          ++loop.tn;
      }
      pass = c == loop;
    }
    out.push_back({"metrics", "loop_oracle", pass, "50 random 32x32 pairs"});
  }
  {
    Rng rng(304);
    int checked = 0;
    bool pass = true;
    for (int trial = 0; trial < 1000; ++trial) {
      ConfusionCounts c;
      c.tp = static_cast<int64_t>(rng.below(20));
      c.fp = static_cast<int64_t>(rng.below(20));
      c.fn = static_cast<int64_t>(rng.below(20));
      const auto p = pod(c), f = far(c), s = csi(c);
      if (p && s && *s > *p + 1e-12) pass = false;
      if (f && s && *s > 1.0 - *f + 1e-12) pass = false;
      if (p && f && s) ++checked;
    }
    pass = pass && checked > 800;
    out.push_back({"metrics", "ratio_bounds", pass,
                   std::to_string(checked) + " of 1000 triples fully defined"});
  }
}

inline void verify_shape(std::vector<VerifyResult>& out) {
  const StmuKind kinds[] = {StmuKind::Identity, StmuKind::Conv3d, StmuKind::ConvLstm,
                            StmuKind::Tformer, StmuKind::Dsta};
  for (StmuKind kind : kinds) {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.channels = {4, 8};
    cfg.input_channels = 1;
    cfg.stmu_kind = kind;
    cfg.stmu_depth = 1;
    cfg.atrous_rates = {1, 2};
    cfg.heads = 1;
    cfg.threshold = 0.5;
    cfg.seq_len = 2;
    cfg.input_height = 8;
    cfg.input_width = 8;
    McsdNet<float> model(cfg, 305);
    Rng rng(306);
    Tensor<float> x = Tensor<float>::uniform({2, 2, 1, 8, 8}, rng, 0.0f, 1.0f);
    Tensor<float> probs = model.forward(x);
    const Shape want = {2, 2, 1, 8, 8};
    bool pass = probs.shape() == want;
    float lo = 1, hi = 0;
    for (int64_t i = 0; i < probs.numel(); ++i) {
      lo = std::min(lo, probs.data()[i]);
      hi = std::max(hi, probs.data()[i]);
    }
    pass = pass && lo >= 0.0f && hi <= 1.0f;
    out.push_back({"shape", stmu_kind_name(kind), pass,
                   "output " + shape_str(probs.shape()) + ", probs in [" + sci(lo) + ", " +
                       sci(hi) + "]"});
  }
}

}  // namespace detail

inline std::vector<VerifyResult> run_verification(const std::string& suite,
                                                  const VerifyHooks& hooks = {}) {
  std::vector<VerifyResult> out;
  bool known = false;
  if (suite == "grad" || suite == "all") {
    detail::verify_grad(out, hooks);
    known = true;
  }
  if (suite == "norm" || suite == "all") {
    detail::verify_norm(out);
    known = true;
  }
  if (suite == "metrics" || suite == "all") {
    detail::verify_metrics(out);
    known = true;
  }
  if (suite == "shape" || suite == "all") {
    detail::verify_shape(out);
    known = true;
  }
  if (!known)
    throw ConfigError("unknown verify suite '" + suite + "' (expected grad|norm|metrics|shape|all)");
  return out;
}

inline bool all_passed(const std::vector<VerifyResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const VerifyResult& r) { return r.pass; });
}

inline std::string format_verify_line(const VerifyResult& r) {
  return std::string(r.pass ? "[PASS] " : "[FAIL] ") + r.suite + "/" + r.name + ": " + r.detail;
}

}  // namespace mcsd
