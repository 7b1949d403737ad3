#include "mswap/losses.hpp"

#include <cmath>
#include <string>

namespace mswap {

void LossWeights::validate() const {
  for (double w : {lambda_id, lambda_feat, lambda_rec})
    if (!std::isfinite(w) || w < 0.0) throw ContractError("loss weights must be finite and >= 0");
}

template <typename T>
Var<T> identity_loss(Var<T> e_src, Var<T> e_swap) {
  return scale(add_scalar(cosine_similarity(e_src, e_swap), -1.0), -1.0);
}

template <typename T>
Var<T> reconstruction_loss(Var<T> i_t, Var<T> i_tt) {
  return mean_abs_diff(i_t, i_tt);
}

template <typename T>
Var<T> feature_matching_loss(const std::vector<Var<T>>& feats_real, const std::vector<Var<T>>& feats_fake) {
  if (feats_real.size() != feats_fake.size() || feats_real.empty())
    throw ShapeError("feature_matching_loss: " + std::to_string(feats_real.size()) + " real vs " +
                     std::to_string(feats_fake.size()) + " fake layers");
  Var<T> sum = mean_abs_diff(feats_real[0], feats_fake[0]);
  for (std::size_t i = 1; i < feats_real.size(); ++i) sum = add(sum, mean_abs_diff(feats_real[i], feats_fake[i]));
  return sum;
}

namespace {

template <typename T>
Var<T> flatten_all(const std::vector<Var<T>>& maps, std::string_view what) {
  if (maps.empty()) throw ContractError(std::string(what) + ": no score maps");
  std::vector<Var<T>> flat;
  flat.reserve(maps.size());
  for (const auto& m : maps) flat.push_back(reshape(m, Shape{m.numel()}));
  return flat.size() == 1 ? flat[0] : concat(flat, 0);
}

}  // namespace

template <typename T>
HingeDParts<T> hinge_d_loss(const std::vector<Var<T>>& scores_real, const std::vector<Var<T>>& scores_fake) {
  const Var<T> real = flatten_all(scores_real, "hinge_d_loss");
  const Var<T> fake = flatten_all(scores_fake, "hinge_d_loss");
  HingeDParts<T> parts;
  parts.real = reduce_mean(relu(add_scalar(scale(real, -1.0), 1.0)));
  parts.fake = reduce_mean(relu(add_scalar(fake, 1.0)));
  parts.total = add(parts.real, parts.fake);
  return parts;
}

template <typename T>
Var<T> hinge_g_loss(const std::vector<Var<T>>& scores_fake) {
  return scale(reduce_mean(flatten_all(scores_fake, "hinge_g_loss")), -1.0);
}

template <typename T>
GeneratorLoss<T> total_generator_loss(const GeneratorLossParts<T>& parts, const LossWeights& w, bool is_self_swap) {
  w.validate();
  GeneratorLoss<T> out;
  Var<T> total = add(add(parts.adv_g, scale(parts.id, w.lambda_id)), scale(parts.feat, w.lambda_feat));
  out.bundle.adv_g = parts.adv_g.value().item();
  out.bundle.id = parts.id.value().item();
  out.bundle.feat = parts.feat.value().item();
  if (is_self_swap) {
    if (!parts.rec.valid()) throw ContractError("total_generator_loss: self-swap batch without reconstruction term");
    total = add(total, scale(parts.rec, w.lambda_rec));
    out.bundle.rec = parts.rec.value().item();
  }
  out.total = total;
  // Recomputed in double so the bundle identity holds exactly for float graphs too.
  out.bundle.total = out.bundle.adv_g + w.lambda_id * out.bundle.id + w.lambda_feat * out.bundle.feat +
                     (is_self_swap ? w.lambda_rec * out.bundle.rec : 0.0);
  return out;
}

#define MSWAP_INSTANTIATE_LOSSES(T)                                                                        \
  template Var<T> identity_loss(Var<T>, Var<T>);                                                           \
  template Var<T> reconstruction_loss(Var<T>, Var<T>);                                                     \
  template Var<T> feature_matching_loss(const std::vector<Var<T>>&, const std::vector<Var<T>>&);           \
  template HingeDParts<T> hinge_d_loss(const std::vector<Var<T>>&, const std::vector<Var<T>>&);            \
  template Var<T> hinge_g_loss(const std::vector<Var<T>>&);                                                \
  template GeneratorLoss<T> total_generator_loss(const GeneratorLossParts<T>&, const LossWeights&, bool);

MSWAP_INSTANTIATE_LOSSES(float)
MSWAP_INSTANTIATE_LOSSES(double)

}  // namespace mswap
