#pragma once

#include <cstdint>
#include <vector>

#include "mswap/ops.hpp"

namespace mswap {

struct DiscriminatorConfig {
  std::size_t image_size = 32;
  std::size_t n_scales = 2;
  std::size_t n_layers = 3;
  std::size_t base_channels = 16;
  double leaky_slope = 0.2;

  void validate() const;
  /// Each layer is a 4x4 stride-2 conv, so scale j (input s / 2^j) yields a
  /// score map of side floor(s / 2^(j + n_layers)).
  std::size_t score_size(std::size_t scale) const;
};

template <typename T>
struct DiscriminatorOutput {
  std::vector<Var<T>> scores;  // one [1,h_j,w_j] raw score map per scale
  std::vector<Var<T>> feats;   // n_scales * n_layers activations, scale-major
};

/// Multi-scale patch discriminator: independent conv stacks at full and
/// successively 2x average-pooled resolution.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& params() noexcept { return params_; }
  const ParameterStore<T>& params() const noexcept { return params_; }

  DiscriminatorOutput<T> forward(Var<T> image) const;

 private:
  struct Conv {
    Parameter<T>* w;
    Parameter<T>* b;
    std::size_t stride, pad;
  };
  Var<T> apply(const Conv& c, Var<T> x) const;

  DiscriminatorConfig cfg_;
  ParameterStore<T> params_;
  std::vector<std::vector<Conv>> layers_;  // [scale][layer]
  std::vector<Conv> heads_;
};

extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace mswap
