#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mswap/parameter.hpp"
#include "mswap/tensor.hpp"

namespace mswap {

template <typename T>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Graph<T>* graph() const noexcept { return g_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return g_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : g_(g), id_(id) {}

  Graph<T>* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape. Nodes are appended in evaluation order, so node ids are
/// a topological order and backward() is a single reverse sweep.
template <typename T>
class Graph {
 public:
  /// Receives the gradient flowing into the node's output and must accumulate
  /// into the gradient buffers of the inputs that need one. `out` is the
  /// node's own forward value.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& out, const Tensor<T>& dout)>;

  Graph() = default;
  /// A graph built with track_grad = false records values only (inference).
  explicit Graph(bool track_grad) : track_grad_(track_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf that receives a gradient readable through grad().
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a parameter; backward() adds into p.grad when
  /// p.requires_grad is set, otherwise the leaf behaves as a constant.
  /// Binding the same parameter twice returns the same leaf.
  Var<T> param(Parameter<T>& p);

  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);
  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var<T> v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient accumulated at a node; throws if the node never received one.
  const Tensor<T>& grad(Var<T> v) const;
  /// Mutable gradient buffer, allocated (zero-filled) on first use.
  Tensor<T>& grad_buffer(Var<T> v);

  std::string_view op(Var<T> v) const { return nodes_[v.id()].op; }
  std::span<const std::size_t> inputs(Var<T> v) const { return nodes_[v.id()].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a single-element root. Intermediate gradients are
  /// reset first; leaf gradients (variables and parameters) accumulate across
  /// calls.
  void backward(Var<T> root);

  void check_owner(Var<T> v, std::string_view op) const;

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Node n);

  bool track_grad_ = true;
  std::deque<Node> nodes_;  // deque keeps value references stable while recording
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Var<float>;
extern template class Var<double>;

}  // namespace mswap
