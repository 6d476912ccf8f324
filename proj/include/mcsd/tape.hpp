#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

// Reverse-mode tape. Construction makes the tape active for the current
// thread; every differentiable op that sees an active tape and at least one
// tracked input appends a backward closure. backward() replays closures in
// exact reverse order, accumulating into .grad of tracked tensors, and frees
// intermediate gradients as soon as their producing record has run. A tape
// is single-shot: a second backward() on it is an error, start a new tape
// for a new graph.
template <typename T>
class Tape {
 public:
  Tape() {
    if (active_ != nullptr) throw NumericError("a tape is already active on this thread");
    id_ = next_id_.fetch_add(1, std::memory_order_relaxed);
    active_ = this;
  }

  ~Tape() {
    if (active_ == this) active_ = nullptr;
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  uint64_t id() const { return id_; }
  size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  void push(std::function<void()> fn, std::shared_ptr<detail::TensorImpl<T>> out) {
    records_.push_back({std::move(fn), std::move(out)});
  }

  void backward(const Tensor<T>& loss) {
    if (consumed_) throw NumericError("backward already ran on this tape");
    if (loss.numel() != 1) throw NumericError("backward root must be a scalar, got shape " + shape_str(loss.shape()));
    if (loss.tape_id() != id_) throw NumericError("backward root was not computed under this tape");
    consumed_ = true;
    {
      Tensor<T> root = loss;
      root.ensure_grad();
      root.grad_data()[0] = T(1);
    }
    for (size_t i = records_.size(); i-- > 0;) {
      Record& r = records_[i];
      r.fn();
      if (!r.out->requires_grad) {
        r.out->grad.clear();
        r.out->grad.shrink_to_fit();
      }
      r.fn = nullptr;
      r.out.reset();
    }
    records_.clear();
  }

 private:
  struct Record {
    std::function<void()> fn;
    std::shared_ptr<detail::TensorImpl<T>> out;
  };

  std::vector<Record> records_;
  uint64_t id_ = 0;
  bool consumed_ = false;

  static inline thread_local Tape* active_ = nullptr;
  static inline std::atomic<uint64_t> next_id_{1};
};

namespace detail {

// A tensor is tracked when it is a gradient leaf or was produced under the
// currently active tape. Values from an older, finished tape are constants.
template <typename T>
bool tracked(const Tensor<T>& t) {
  Tape<T>* tp = Tape<T>::active();
  return t.requires_grad() || (tp != nullptr && t.tape_id() == tp->id());
}

template <typename T>
bool grad_enabled(std::initializer_list<Tensor<T>> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>& t : inputs) {
    if (tracked(t)) return true;
  }
  return false;
}

template <typename T>
void record(Tensor<T>& out, std::function<void()> fn) {
  Tape<T>* tp = Tape<T>::active();
  out.set_tape_id(tp->id());
  tp->push(std::move(fn), out.impl_ptr());
}

}  // namespace detail

}  // namespace mcsd
