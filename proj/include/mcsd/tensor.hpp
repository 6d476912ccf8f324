#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "mcsd/common.hpp"
#include "mcsd/rng.hpp"

namespace mcsd {

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same numel as data when present
  bool requires_grad = false;
  uint64_t tape_id = 0;  // id of the tape that produced this value, 0 = none
};

}  // namespace detail

// Dense row-major tensor of float or double. Copying a Tensor copies a
// handle: two copies see the same storage. Use clone() for a deep copy.
template <typename T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);

 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T value) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    const int64_t n = numel_of(shape);
    check(n >= 0, "negative axis length in " + shape_str(shape));
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(n), value);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    const int64_t n = numel_of(shape);
    check(n == static_cast<int64_t>(values.size()),
          "value count " + std::to_string(values.size()) + " does not fill shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.check_finite("tensor literal");
    return t;
  }

  static Tensor scalar(T value) { return full({}, value); }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t = zeros(std::move(shape));
    for (T& v : t.impl_->data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, T mean, T stddev) {
    Tensor t = zeros(std::move(shape));
    for (T& v : t.impl_->data) v = static_cast<T>(rng.normal(mean, stddev));
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t size(int64_t axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  T* grad_data() { return impl_->grad.data(); }
  const T* grad_data() const { return impl_->grad.data(); }

  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }

  void clear_grad() {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }

  uint64_t tape_id() const { return impl_->tape_id; }
  void set_tape_id(uint64_t id) { impl_->tape_id = id; }

  T item() const {
    check(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  template <typename... Ix>
  T at(Ix... ix) const {
    return impl_->data[offset_of(ix...)];
  }

  template <typename... Ix>
  T& at(Ix... ix) {
    return impl_->data[offset_of(ix...)];
  }

  template <typename... Ix>
  T grad_at(Ix... ix) const {
    check(has_grad(), "grad_at on tensor without gradient");
    return impl_->grad[offset_of(ix...)];
  }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  void copy_values_from(const Tensor& other) {
    check(other.shape() == shape(), "copy between shapes " + shape_str(other.shape()) + " and " + shape_str(shape()));
    impl_->data = other.impl_->data;
  }

  void check_finite(const char* what) const {
    for (const T v : impl_->data) {
      if (!(v - v == T(0))) throw NumericError(std::string("non-finite value in ") + what);
    }
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl<T>* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl<T>> impl_ptr() const { return impl_; }

 private:
  template <typename... Ix>
  size_t offset_of(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    constexpr size_t k = sizeof...(Ix);
    check(k == impl_->shape.size(), "index rank mismatch on shape " + shape_str(shape()));
    int64_t off = 0;
    for (size_t a = 0; a < k; ++a) {
      check(idx[a] >= 0 && idx[a] < impl_->shape[a], "index out of range on shape " + shape_str(shape()));
      off = off * impl_->shape[a] + idx[a];
    }
    return static_cast<size_t>(off);
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "max_abs_diff between shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  T m = T(0);
  const T* pa = a.data();
  const T* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
  return m;
}

// Binary tensor layout: "TNSR", dtype byte, u32 rank, u64 axis lengths,
// raw element bytes. Everything little-endian regardless of host order.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write("TNSR", 4);
  const uint8_t dt = static_cast<uint8_t>(dtype_of<T>());
  os.write(reinterpret_cast<const char*>(&dt), 1);
  detail::write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) detail::write_le<uint64_t>(os, static_cast<uint64_t>(d));
  const T* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      uint32_t bits;
      std::memcpy(&bits, &p[i], 4);
      detail::write_le<uint32_t>(os, bits);
    } else {
      detail::write_f64(os, p[i]);
    }
  }
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0) throw DataError("bad tensor magic");
  uint8_t dt;
  is.read(reinterpret_cast<char*>(&dt), 1);
  if (!is) throw DataError("unexpected end of stream");
  if (dt != static_cast<uint8_t>(dtype_of<T>())) throw DataError("tensor dtype mismatch");
  const uint32_t rank = detail::read_le<uint32_t>(is);
  if (rank > 16) throw DataError("tensor rank out of range");
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(detail::read_le<uint64_t>(is));
  Tensor<T> t = Tensor<T>::zeros(shape);
  T* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      const uint32_t bits = detail::read_le<uint32_t>(is);
      std::memcpy(&p[i], &bits, 4);
    } else {
      p[i] = detail::read_f64(is);
    }
  }
  return t;
}

}  // namespace mcsd
