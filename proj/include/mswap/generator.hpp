#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mswap/attention.hpp"

namespace mswap {

struct GeneratorConfig {
  std::size_t image_size = 32;
  std::size_t base_channels = 16;
  std::size_t n_downsamples = 2;
  std::size_t n_res_blocks = 4;
  bool use_self_attention = true;
  bool use_cross_attention = true;
  std::size_t id_dim = 64;
  /// 0 selects bottleneck_channels / 2.
  std::size_t d_k = 0;
  bool attention_output_projection = true;
  bool attention_residual = true;
  double leaky_slope = 0.2;
  double norm_eps = 1e-5;

  /// Throws ContractError on inconsistent settings.
  void validate() const;
  std::size_t channels_at(std::size_t level) const { return base_channels << level; }
  std::size_t bottleneck_channels() const { return channels_at(n_downsamples); }
  /// Index of the res block after which the attention blocks sit (1-based, ceil(n/2)).
  std::size_t attention_after_block() const { return (n_res_blocks + 1) / 2; }
  AttentionConfig attention_config() const;
};

/// Closed-form parameter count for a config; the Generator constructor must
/// agree with it.
std::size_t generator_parameter_count(const GeneratorConfig& cfg);

/// Embedding-conditioned per-channel affine modulation:
/// scale = 1 + W_s e + b_s, shift = W_b e + b_b. All four start at zero so the
/// initial modulation is the identity.
template <typename T>
struct IdInjectionParams {
  Parameter<T>* scale_w = nullptr;  // [c, id_dim]
  Parameter<T>* scale_b = nullptr;  // [c]
  Parameter<T>* shift_w = nullptr;  // [c, id_dim]
  Parameter<T>* shift_b = nullptr;  // [c]
};

template <typename T>
IdInjectionParams<T> make_injection_params(ParameterStore<T>& store, const std::string& prefix,
                                           std::size_t channels, std::size_t id_dim);

/// scale(e) * instance_norm(feat) + shift(e), per channel.
template <typename T>
Var<T> inject_identity(Var<T> feat, Var<T> id_embed, const IdInjectionParams<T>& p, double eps = 1e-5);

/// The per-channel (scale, shift) pair the injection applies for an embedding.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> injection_modulation(const Tensor<T>& id_embed, const IdInjectionParams<T>& p);

/// Encoder -> identity-injected residual blocks (+ self/cross attention at
/// the bottleneck) -> decoder with a tanh head.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& params() noexcept { return params_; }
  const ParameterStore<T>& params() const noexcept { return params_; }

  /// i_s, i_t: [3,s,s] in [-1,1]; id_embed: [id_dim]. Returns [3,s,s].
  Var<T> forward(Var<T> i_s, Var<T> i_t, Var<T> id_embed) const;

  /// Value-only convenience wrapper.
  Tensor<T> swap(const Tensor<T>& i_s, const Tensor<T>& i_t, const Tensor<T>& id_embed) const;

 private:
  struct Conv {
    Parameter<T>* w;
    Parameter<T>* b;  // null for bias-free convs
    std::size_t stride, pad;
  };
  struct ResBlock {
    Conv conv0, conv1;
    IdInjectionParams<T> inj0, inj1;
  };

  Conv add_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                std::size_t pad, double gain = 1.0, bool bias = true);
  Var<T> apply(const Conv& c, Var<T> x) const;
  Var<T> encode(Var<T> img) const;

  GeneratorConfig cfg_;
  std::uint64_t seed_;
  ParameterStore<T> params_;
  Conv stem_;
  std::vector<Conv> down_;
  std::vector<ResBlock> res_;
  std::optional<AttentionParams<T>> self_attn_;
  std::optional<AttentionParams<T>> cross_attn_;
  std::vector<Conv> up_;
  Conv head_;
};

extern template class Generator<float>;
extern template class Generator<double>;

}  // namespace mswap
