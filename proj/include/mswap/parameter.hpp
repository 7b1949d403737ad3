#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>

#include "mswap/tensor.hpp"

namespace mswap {

/// A named trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = true;

  void zero_grad() { grad.fill(T(0)); }
};

/// Ordered collection of parameters with stable addresses. Iteration order is
/// insertion order, which fixes checkpoint layout and optimizer traversal.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter<T>& add(std::string name, Tensor<T> init);

  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  void zero_grad();
  void set_requires_grad(bool on);

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic initializers keyed by (seed, parameter name), so that two
/// models sharing a parameter name start from the same values.
template <typename T>
Tensor<T> init_normal(const Shape& shape, double stddev, std::uint64_t seed, std::string_view name);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace mswap
