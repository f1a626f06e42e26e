#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace docir::ad {

using Shape = std::vector<int>;

/// Allocator returning 64-byte aligned storage. Vectorized Eigen kernels peel
/// a data-dependent prefix on unaligned input, which changes summation order
/// from one allocation to the next; a fixed alignment keeps results bitwise
/// reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t n) { ::operator delete(p, n * sizeof(T), kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer of the same shape.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<T> grad();
  std::span<const T> grad() const { return grad_; }
  void zero_grad();

  /// Shape-preserving reinterpretation; sizes must agree.
  void reshape(Shape shape);

 private:
  Shape shape_;
  Buffer<T> data_;
  bool requires_grad_ = false;
  Buffer<T> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace docir::ad
