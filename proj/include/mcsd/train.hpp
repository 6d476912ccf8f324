#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mcsd/checkpoint.hpp"
#include "mcsd/data.hpp"
#include "mcsd/loss.hpp"
#include "mcsd/model.hpp"
#include "mcsd/optim.hpp"
#include "mcsd/rng.hpp"
#include "mcsd/tape.hpp"

namespace mcsd {

struct EpochLog {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

inline const char* epoch_log_header() { return "epoch,train_loss,val_loss,lr,seconds"; }

inline void write_epoch_log_row(std::ostream& out, const EpochLog& rec) {
  out << rec.epoch << ',' << format_full(rec.train_loss) << ',' << format_full(rec.val_loss) << ','
      << format_full(rec.lr) << ',' << format_full(rec.seconds) << '\n';
}

// Stacks the selected sequences into one [B,T,C,H,W] image tensor and one
// matching mask tensor. All sequences in a batch must agree on shape.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> stack_batch(const std::vector<SequenceSample<T>>& data,
                                            const std::vector<int64_t>& order, int64_t begin, int64_t end) {
  check(begin >= 0 && end > begin && end <= static_cast<int64_t>(order.size()), "bad batch range");
  const Shape& one = data[static_cast<size_t>(order[static_cast<size_t>(begin)])].images.shape();
  check(one.size() == 4, "sequence images must be rank 4, got " + shape_str(one));
  const int64_t b = end - begin;
  const int64_t per = numel_of(one);
  Tensor<T> images = Tensor<T>::zeros({b, one[0], one[1], one[2], one[3]});
  Tensor<T> masks = Tensor<T>::zeros({b, one[0], one[1], one[2], one[3]});
  for (int64_t k = 0; k < b; ++k) {
    const auto& sample = data[static_cast<size_t>(order[static_cast<size_t>(begin + k)])];
    check(sample.images.shape() == one && sample.masks.shape() == one,
          "sequence shape mismatch inside batch: " + shape_str(sample.images.shape()) + " vs " + shape_str(one));
    std::memcpy(images.data() + k * per, sample.images.data(), sizeof(T) * static_cast<size_t>(per));
    std::memcpy(masks.data() + k * per, sample.masks.data(), sizeof(T) * static_cast<size_t>(per));
  }
  return {images, masks};
}

struct FitOptions {
  int64_t epochs = 1;
  int64_t batch_size = 2;
  std::string best_path;          // written on validation improvement; empty skips
  std::string last_path;          // written after every epoch; empty skips
  std::ostream* log = nullptr;    // CSV epoch records
};

// Owns the optimization loop around a model: shuffled focal-loss epochs with
// Adam, a validation pass per epoch, plateau-driven learning rate decay and
// checkpoints. The full trainer state round-trips through snapshot/restore,
// so a resumed run replays the exact step sequence of an uninterrupted one.
template <typename T>
class Trainer {
 public:
  Trainer(McsdNet<T>& model, FocalLossConfig loss_cfg, AdamConfig adam_cfg, PlateauConfig sched_cfg, uint64_t seed)
      : model_(model),
        loss_cfg_(loss_cfg),
        sched_cfg_(sched_cfg),
        adam_(model.params(), adam_cfg),
        sched_(sched_cfg),
        rng_(seed) {
    loss_cfg_.validate();
  }

  std::vector<EpochLog> fit(const std::vector<SequenceSample<T>>& train, const std::vector<SequenceSample<T>>& val,
                            const FitOptions& opts) {
    if (opts.epochs < 1) throw ConfigError("epochs must be at least 1, got " + std::to_string(opts.epochs));
    if (opts.batch_size < 1) throw ConfigError("batch_size must be at least 1, got " + std::to_string(opts.batch_size));
    if (train.empty()) throw DataError("no training sequences");
    if (val.empty()) throw DataError("no validation sequences");
    const int64_t n = static_cast<int64_t>(train.size());
    std::vector<EpochLog> out;
    out.reserve(static_cast<size_t>(opts.epochs));
    if (opts.log != nullptr) *opts.log << epoch_log_header() << '\n';
    for (int64_t e = 0; e < opts.epochs; ++e) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<int64_t> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      rng_.shuffle(order.begin(), order.end());
      double loss_sum = 0.0;
      int64_t batch_index = 0;
      for (int64_t begin = 0; begin < n; begin += opts.batch_size, ++batch_index) {
        const int64_t end = std::min(n, begin + opts.batch_size);
        auto [images, masks] = stack_batch(train, order, begin, end);
        adam_.zero_grad();
        try {
          Tape<T> tape;
          Tensor<T> probs = model_.forward(images);
          Tensor<T> loss = focal_loss(probs, masks, loss_cfg_);
          const double value = static_cast<double>(loss.item());
          if (!std::isfinite(value))
            throw NumericError("loss is not finite");
          loss_sum += value * static_cast<double>(end - begin);
          tape.backward(loss);
        } catch (const NumericError& err) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch_ + 1) + ", batch " +
                             std::to_string(batch_index) + ": " + err.what());
        }
        adam_.step();
      }
      const double train_loss = loss_sum / static_cast<double>(n);
      const double val_loss = evaluate_loss(val, opts.batch_size);
      const bool improved = val_loss < sched_.best() - sched_cfg_.threshold;
      adam_.set_lr(sched_.step(val_loss, adam_.lr()));
      ++epoch_;
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      EpochLog rec{epoch_, train_loss, val_loss, adam_.lr(), seconds};
      out.push_back(rec);
      if (opts.log != nullptr) write_epoch_log_row(*opts.log, rec);
      if (!opts.last_path.empty()) save_checkpoint(opts.last_path, snapshot());
      if (improved && !opts.best_path.empty()) save_checkpoint(opts.best_path, snapshot());
    }
    return out;
  }

  // Mean focal loss over a dataset, no tape, no parameter updates.
  double evaluate_loss(const std::vector<SequenceSample<T>>& data, int64_t batch_size) {
    if (data.empty()) throw DataError("no sequences to evaluate");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1, got " + std::to_string(batch_size));
    const int64_t n = static_cast<int64_t>(data.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    double loss_sum = 0.0;
    for (int64_t begin = 0; begin < n; begin += batch_size) {
      const int64_t end = std::min(n, begin + batch_size);
      auto [images, masks] = stack_batch(data, order, begin, end);
      Tensor<T> probs = model_.forward(images);
      Tensor<T> loss = focal_loss(probs, masks, loss_cfg_);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - begin);
    }
    return loss_sum / static_cast<double>(n);
  }

  Checkpoint<T> snapshot() const {
    Checkpoint<T> ckpt;
    ckpt.model = model_.config();
    ckpt.params.reserve(model_.params().size());
    for (const auto& [name, p] : model_.params()) ckpt.params.emplace_back(name, p.clone());
    ckpt.adam = adam_.config();
    ckpt.adam.lr = adam_.lr();
    ckpt.adam_steps = adam_.step_count();
    ckpt.m.reserve(adam_.first_moments().size());
    ckpt.v.reserve(adam_.second_moments().size());
    for (const auto& t : adam_.first_moments()) ckpt.m.push_back(t.clone());
    for (const auto& t : adam_.second_moments()) ckpt.v.push_back(t.clone());
    ckpt.sched = sched_cfg_;
    ckpt.sched_best = sched_.best();
    ckpt.sched_bad = sched_.bad_count();
    ckpt.epoch = epoch_;
    ckpt.rng_state = rng_.state();
    return ckpt;
  }

  void restore(const Checkpoint<T>& ckpt) {
    if (!(ckpt.model == model_.config()))
      throw ConfigError("checkpoint was written for a different model configuration");
    restore_model(ckpt, model_);
    adam_.restore(ckpt.adam_steps, ckpt.adam.lr, ckpt.m, ckpt.v);
    sched_.restore(ckpt.sched_best, ckpt.sched_bad);
    epoch_ = ckpt.epoch;
    rng_.set_state(ckpt.rng_state);
  }

  Adam<T>& optimizer() { return adam_; }
  PlateauScheduler& scheduler() { return sched_; }
  int64_t epoch() const { return epoch_; }
  const FocalLossConfig& loss_config() const { return loss_cfg_; }

 private:
  McsdNet<T>& model_;
  FocalLossConfig loss_cfg_;
  PlateauConfig sched_cfg_;
  Adam<T> adam_;
  PlateauScheduler sched_;
  Rng rng_;
  int64_t epoch_ = 0;
};

}  // namespace mcsd
