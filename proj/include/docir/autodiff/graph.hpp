// Tape of operation records for reverse-mode differentiation.
#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "docir/autodiff/tensor.hpp"

namespace docir::ad {

template <class T>
class Graph;

/// Handle to a node of a Graph.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/// Nodes are appended in creation order, which is a topological order of the
/// computation; backward visits them in exact reverse.
///
/// Parameters are bound by pointer: their values are read in place and their
/// gradients accumulate into Tensor::grad(). A graph is single-threaded;
/// separate graphs share nothing but the bound parameters' values.
template <class T>
class Graph {
 public:
  /// Receives the graph and the node id whose output gradient is complete.
  using BackwardFn = std::function<void(Graph&, int)>;

  /// With `record = false` ops keep values only, for inference.
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Binds an external parameter; binding the same tensor twice returns the
  /// same node.
  Var<T> parameter(Tensor<T>& param);

  const Tensor<T>& value(Var<T> v) const;
  /// Gradient of the last backward() loss w.r.t. an interior node; empty once
  /// the node has been processed and released, or if it never received one.
  std::span<const T> grad(Var<T> v) const { return nodes_.at(v.id).grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws if loss is not scalar.
  void backward(Var<T> loss, bool keep_interior_grads = false);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // --- op author interface
  Var<T> record(Tensor<T> value, std::vector<int> inputs, BackwardFn backward);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Tensor<T>& value(int id) const;
  /// Output gradient of a node, as seen from its backward function.
  std::span<const T> out_grad(int id) const { return nodes_[id].grad; }
  /// Gradient accumulator of an input node, allocated zeroed on first use.
  std::span<T> in_grad(int id);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T>* external = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    Buffer<T> grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, int> bound_;
  bool record_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace docir::ad
