#pragma once

#include <deque>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "docir/autodiff/tensor.hpp"

namespace docir::ad {

/// Named learnable tensors in insertion order. References stay valid as
/// entries are added.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T>& add(std::string name, Tensor<T> tensor);
  Tensor<T>& get(std::string_view name);
  const Tensor<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  void zero_grad();
  /// Copies values (not gradients) from a store with identical names/shapes.
  void copy_values_from(const ParamStore& other);

 private:
  std::deque<Entry> entries_;
};

/// Checkpoint layout: one line of compact JSON
///   {"format":"docir-params","dtype":"f32"|"f64","tensors":[{"name","shape","offset","bytes"}]}
/// then the little-endian IEEE-754 payloads concatenated in header order;
/// offsets count from the first payload byte.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store);
/// Loads into an existing store whose names and shapes must match.
template <class T>
void load_checkpoint(const std::filesystem::path& path, ParamStore<T>& store);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace docir::ad
