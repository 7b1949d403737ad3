#include "mswap/parameter.hpp"

#include "mswap/rng.hpp"

namespace mswap {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> init) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor<T> grad(init.shape(), T(0));
  params_.push_back(Parameter<T>{std::move(name), std::move(init), std::move(grad), true});
  return params_.back();
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void ParameterStore<T>::set_requires_grad(bool on) {
  for (auto& p : params_) p.requires_grad = on;
}

template <typename T>
Tensor<T> init_normal(const Shape& shape, double stddev, std::uint64_t seed, std::string_view name) {
  CounterRng rng(derive_seed(seed, fnv1a64(name)));
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> init_normal<float>(const Shape&, double, std::uint64_t, std::string_view);
template Tensor<double> init_normal<double>(const Shape&, double, std::uint64_t, std::string_view);

}  // namespace mswap
