#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mswap/ops.hpp"

namespace mswap {

struct AttentionConfig {
  std::size_t channels = 0;
  /// Query/key width; 0 selects channels / 2 (at least 1).
  std::size_t d_k = 0;
  bool output_projection = true;
  /// out = x + gamma * attn when set, otherwise the raw attention map output.
  bool residual = true;

  std::size_t key_dim() const noexcept { return d_k ? d_k : (channels / 2 ? channels / 2 : 1); }
  std::size_t value_dim() const noexcept { return output_projection ? key_dim() : channels; }
};

/// Single-head projections for one attention block. Pointers refer into the
/// owning ParameterStore.
template <typename T>
struct AttentionParams {
  AttentionConfig cfg;
  Parameter<T>* w_q = nullptr;    // [d_k, c]
  Parameter<T>* w_k = nullptr;    // [d_k, c]
  Parameter<T>* w_v = nullptr;    // [d_v, c]
  Parameter<T>* w_out = nullptr;  // [c, d_v], absent without output projection
  Parameter<T>* gamma = nullptr;  // scalar gate, starts at exactly 0

  static std::size_t parameter_count(const AttentionConfig& cfg);
};

/// Registers `<prefix>.w_q`, `.w_k`, `.w_v`, `.w_out`, `.gamma` in the store.
template <typename T>
AttentionParams<T> make_attention_params(ParameterStore<T>& store, const std::string& prefix,
                                         const AttentionConfig& cfg, std::uint64_t seed);

/// Softmax(Q K^T / sqrt(d_k)) over positions of a [c,h,w] map.
template <typename T>
Var<T> self_attention(Var<T> x, const AttentionParams<T>& p, Var<T>* weights_out = nullptr);

/// Queries from the target map, keys and values from the source map. The
/// result keeps the target's spatial shape.
template <typename T>
Var<T> cross_attention(Var<T> x_t, Var<T> x_s, const AttentionParams<T>& p, Var<T>* weights_out = nullptr);

}  // namespace mswap
