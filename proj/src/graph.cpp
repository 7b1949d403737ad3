#include "mswap/graph.hpp"

#include <string>

namespace mswap {

template <typename T>
const Tensor<T>& Var<T>::value() const {
  if (!g_) throw ContractError("use of an unbound Var");
  return g_->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return g_ && g_->needs_grad(*this);
}

template <typename T>
Var<T> Graph<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.is_leaf = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::variable(Tensor<T> value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = track_grad_;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end() && nodes_[it->second].requires_grad == (track_grad_ && p.requires_grad))
    return Var<T>(this, it->second);
  Node n;
  n.op = "param";
  n.value = p.value;
  n.is_leaf = true;
  n.requires_grad = track_grad_ && p.requires_grad;
  n.param = n.requires_grad ? &p : nullptr;
  Var<T> v = push(std::move(n));
  bound_[&p] = v.id();
  return v;
}

template <typename T>
void Graph<T>::check_owner(Var<T> v, std::string_view op) const {
  if (v.graph() != this)
    throw ContractError(std::string(op) + ": operand belongs to a different graph");
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                        BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                        BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owner(in, op);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) throw ContractError("node '" + std::string(n.op) + "' has no gradient");
  return n.grad;
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(Var<T> v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape(), T(0));
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> root) {
  check_owner(root, "backward");
  if (nodes_[root.id()].value.numel() != 1)
    throw ContractError("backward requires a scalar root, got shape " +
                        shape_str(nodes_[root.id()].value.shape()));
  for (auto& n : nodes_) {
    if (!n.is_leaf && n.has_grad) n.grad.fill(T(0));
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root)[0] += T(1);

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    if (n.backward) {
      // The closure may allocate input grads, which never reallocates nodes_.
      n.backward(*this, n.value, n.grad);
    }
    if (n.param) {
      auto& dst = n.param->grad;
      for (std::size_t k = 0; k < dst.numel(); ++k) dst[k] += n.grad[k];
      n.grad.fill(T(0));
    }
  }
}

template class Graph<float>;
template class Graph<double>;
template class Var<float>;
template class Var<double>;

}  // namespace mswap
