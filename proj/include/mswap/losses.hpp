#pragma once

#include <vector>

#include "mswap/ops.hpp"

namespace mswap {

struct LossWeights {
  double lambda_id = 40.0;
  double lambda_feat = 10.0;
  double lambda_rec = 2.0;

  /// Throws ContractError on negative or non-finite weights.
  void validate() const;
};

/// Scalar summary of one generator/discriminator step.
struct LossBundle {
  double adv_g = 0, id = 0, feat = 0, rec = 0, total = 0;
  double adv_d_real = 0, adv_d_fake = 0;
};

/// 1 - cos(e_src, e_swap), in [0, 2].
template <typename T> Var<T> identity_loss(Var<T> e_src, Var<T> e_swap);

/// Mean absolute difference between target and self-swap output.
template <typename T> Var<T> reconstruction_loss(Var<T> i_t, Var<T> i_tt);

/// Sum over layers of the per-layer mean absolute difference. feats_real
/// should come from a gradient-free branch.
template <typename T>
Var<T> feature_matching_loss(const std::vector<Var<T>>& feats_real, const std::vector<Var<T>>& feats_fake);

template <typename T>
struct HingeDParts {
  Var<T> real;   // mean over all patches of max(0, 1 - D(real))
  Var<T> fake;   // mean over all patches of max(0, 1 + D(fake))
  Var<T> total;  // real + fake
};

/// Patches of every scale are pooled into one mean per term.
template <typename T>
HingeDParts<T> hinge_d_loss(const std::vector<Var<T>>& scores_real, const std::vector<Var<T>>& scores_fake);

/// -mean of every fake patch score across scales.
template <typename T> Var<T> hinge_g_loss(const std::vector<Var<T>>& scores_fake);

template <typename T>
struct GeneratorLossParts {
  Var<T> adv_g, id, feat, rec;  // rec may be unbound
};

template <typename T>
struct GeneratorLoss {
  Var<T> total;
  LossBundle bundle;
};

/// adv + lambda_id id + lambda_feat feat (+ lambda_rec rec on self-swap batches).
template <typename T>
GeneratorLoss<T> total_generator_loss(const GeneratorLossParts<T>& parts, const LossWeights& w, bool is_self_swap);

}  // namespace mswap
