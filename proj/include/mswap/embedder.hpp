#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mswap/ops.hpp"

namespace mswap {

struct EmbedderConfig {
  std::size_t image_size = 32;
  std::size_t id_dim = 64;
  std::vector<std::size_t> widths{16, 32, 64};
  double leaky_slope = 0.2;

  void validate() const;
};

/// Identity extractor: strided conv stack, linear projection, L2
/// normalization. Frozen once pretrained.
template <typename T>
class Embedder {
 public:
  Embedder(const EmbedderConfig& cfg, std::uint64_t seed);

  const EmbedderConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& params() noexcept { return params_; }
  const ParameterStore<T>& params() const noexcept { return params_; }

  void freeze() { params_.set_requires_grad(false); }
  bool frozen() const;

  /// [3,s,s] -> unit-norm [id_dim]. Gradients flow to the image even when frozen.
  Var<T> forward(Var<T> image) const;
  Tensor<T> embed(const Tensor<T>& image) const;

 private:
  struct Conv {
    Parameter<T>* w;
    Parameter<T>* b;
  };
  EmbedderConfig cfg_;
  ParameterStore<T> params_;
  std::vector<Conv> convs_;
  Parameter<T>* proj_w_ = nullptr;
  Parameter<T>* proj_b_ = nullptr;
};

extern template class Embedder<float>;
extern template class Embedder<double>;

}  // namespace mswap
