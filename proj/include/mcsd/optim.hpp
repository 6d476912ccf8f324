#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/layers.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  }
};

// Standard Adam with bias correction. Parameters are shared handles into the
// model; moment buffers are owned here and serialized with checkpoints.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(Params<T> params, AdamConfig cfg = {}) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, p] : params_) {
      m_.push_back(Tensor<T>::zeros(p.shape()));
      v_.push_back(Tensor<T>::zeros(p.shape()));
    }
  }

  void step() {
    ++step_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(step_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(step_)));
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& [name, p] = params_[i];
      if (!p.has_grad()) throw NumericError("missing gradient for parameter " + name);
      const T* g = p.grad_data();
      T* pm = m_[i].data();
      T* pv = v_[i].data();
      T* pd = p.data();
      for (int64_t j = 0; j < p.numel(); ++j) {
        pm[j] = b1 * pm[j] + (T(1) - b1) * g[j];
        pv[j] = b2 * pv[j] + (T(1) - b2) * g[j] * g[j];
        pd[j] -= lr * (pm[j] / bc1) / (std::sqrt(pv[j] / bc2) + eps);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.clear_grad();
  }

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    cfg_.lr = lr;
  }
  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_; }
  const Params<T>& params() const { return params_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  void restore(int64_t step, double lr, const std::vector<Tensor<T>>& m, const std::vector<Tensor<T>>& v) {
    check(m.size() == params_.size() && v.size() == params_.size(), "moment count mismatch on restore");
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].copy_values_from(m[i]);
      v_[i].copy_values_from(v[i]);
    }
    step_ = step;
    set_lr(lr);
  }

 private:
  AdamConfig cfg_;
  Params<T> params_;
  std::vector<Tensor<T>> m_, v_;
  int64_t step_ = 0;
};

struct PlateauConfig {
  double factor = 0.5;
  int64_t patience = 3;
  double min_lr = 1e-6;
  double threshold = 1e-4;

  void validate() const {
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0,1)");
    if (patience < 1) throw ConfigError("patience must be positive");
    if (!(min_lr >= 0.0)) throw ConfigError("min_lr must be nonnegative");
    if (!(threshold >= 0.0)) throw ConfigError("plateau threshold must be nonnegative");
  }
};

// Halves (by `factor`) the learning rate once the monitored value has gone
// `patience` consecutive observations without improving the best by more
// than `threshold`. Never raises the rate; never drops below min_lr.
class PlateauScheduler {
 public:
  PlateauScheduler() { cfg_.validate(); }
  explicit PlateauScheduler(PlateauConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  double step(double monitored, double lr) {
    if (!std::isfinite(monitored)) throw NumericError("plateau scheduler fed non-finite value");
    if (monitored < best_ - cfg_.threshold) {
      best_ = monitored;
      bad_ = 0;
      return lr;
    }
    if (++bad_ >= cfg_.patience) {
      bad_ = 0;
      if (lr > cfg_.min_lr) lr = std::max(lr * cfg_.factor, cfg_.min_lr);
    }
    return lr;
  }

  const PlateauConfig& config() const { return cfg_; }
  double best() const { return best_; }
  int64_t bad_count() const { return bad_; }

  void restore(double best, int64_t bad) {
    best_ = best;
    bad_ = bad;
  }

 private:
  PlateauConfig cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  int64_t bad_ = 0;
};

}  // namespace mcsd
