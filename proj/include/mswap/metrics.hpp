#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mswap/datasynth.hpp"
#include "mswap/embedder.hpp"

namespace mswap {

struct EvalReport {
  double identity_similarity = 0;     // mean cos(E(I_s), E(I_swap))
  double attribute_consistency = 0;   // probe agreement of I_swap with the target's attributes
  double frechet_distance = 0;        // toy-FID between swaps and real held-out images
  std::size_t n_samples = 0;
  // Reference points for reading the three numbers above.
  double identity_similarity_target = 0;     // mean cos(E(I_s), E(I_t))
  double attribute_consistency_source = 0;   // probe agreement of I_swap with the source's attributes
};

/// Mean cosine similarity between embeddings of each pair. Throws
/// ContractError on an empty list.
template <typename T>
double identity_similarity(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs, const Embedder<T>& embedder);

/// Linear ridge regressor from block-averaged pixels to the attribute vector.
/// Fitted once on clean renders, then frozen.
class AttributeProbe {
 public:
  static constexpr std::size_t kGrid = 8;  // pooled grid side

  /// Fits on the given images and their attribute vectors.
  void fit(const std::vector<Tensor<double>>& images, const std::vector<std::array<double, kAttributeFactors>>& attrs,
           double ridge = 1e-3);
  bool fitted() const noexcept { return !weights_.empty(); }

  std::array<double, kAttributeFactors> predict(const Tensor<double>& image) const;

  /// clamp(1 - SSE / SST, 0, 1): SSE is the squared prediction error against
  /// `truth`, SST the squared spread of `truth` around the training mean.
  double consistency(const std::vector<Tensor<double>>& images,
                     const std::vector<std::array<double, kAttributeFactors>>& truth) const;

  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::array<double, kAttributeFactors>& train_mean() const noexcept { return mean_; }
  void set_state(std::vector<double> weights, std::array<double, kAttributeFactors> mean);

  static std::vector<double> features(const Tensor<double>& image);

 private:
  std::vector<double> weights_;  // [n_features + 1, kAttributeFactors] row-major, last row is the bias
  std::array<double, kAttributeFactors> mean_{};
};

/// Throws ContractError if the probe was never fitted.
double attribute_consistency(const AttributeProbe& probe, const std::vector<Tensor<double>>& images,
                             const std::vector<std::array<double, kAttributeFactors>>& truth);

/// Feature rows: one sample per row.
using FeatureSet = std::vector<std::vector<double>>;

/// |mu_a - mu_b|^2 + tr(A + B - 2 (A^1/2 B A^1/2)^1/2), sample covariances
/// regularized by 1e-6 I, clamped at 0. Needs >= 2 samples per set.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

/// frechet_distance over embedder features of two image sets.
template <typename T>
double frechet_distance(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b, const Embedder<T>& embedder);

}  // namespace mswap
