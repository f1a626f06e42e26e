#include "docir/autodiff/graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace docir::ad {

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var<T> Graph<T>::parameter(Tensor<T>& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return {this, it->second};
  Node node;
  node.external = &param;
  node.needs_grad = record_ && param.requires_grad();
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  bound_[&param] = id;
  return {this, id};
}

template <class T>
const Tensor<T>& Graph<T>::value(Var<T> v) const {
  if (v.graph != this) throw std::invalid_argument("Graph: variable belongs to another graph");
  return value(v.id);
}

template <class T>
const Tensor<T>& Graph<T>::value(int id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<int> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](int i) { return nodes_[i].needs_grad; });
    if (node.needs_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
std::span<T> Graph<T>::in_grad(int id) {
  Node& n = nodes_[id];
  const std::size_t size = value(id).size();
  if (n.grad.size() != size) n.grad.assign(size, T(0));
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> loss, bool keep_interior_grads) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(value(loss.id).shape()));
  }
  if (!record_) throw std::logic_error("backward: graph was built without recording");
  in_grad(loss.id)[0] = T(1);

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.external) {
      auto g = n.external->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
    if (!keep_interior_grads || n.external) Buffer<T>().swap(n.grad);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace docir::ad
