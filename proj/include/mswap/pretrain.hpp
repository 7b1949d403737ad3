#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mswap/datasynth.hpp"
#include "mswap/embedder.hpp"

namespace mswap {

/// Renders every sample of a dataset once, in sample order.
std::vector<Tensor<float>> render_dataset(const Dataset& ds, std::size_t size);

struct PretrainConfig {
  std::size_t steps = 2000;
  /// Images per step, drawn as batch/2 identities with two images each.
  std::size_t batch = 8;
  double lr = 1e-3;
  /// Cross-identity pairs are penalized only above this cosine.
  double margin = 0.2;
  /// Required held-out separation; checked only when steps > 0.
  double min_separation = 0.3;
};

struct Separation {
  double same = 0;   // mean cosine over same-identity pairs
  double cross = 0;  // mean cosine over cross-identity pairs
  double gap() const { return same - cross; }
};

/// Mean same-identity minus cross-identity cosine over every pair of images
/// whose labels are in `ids`.
Separation embedding_separation(const Embedder<float>& e, const Dataset& ds, const std::vector<Tensor<float>>& images,
                                const std::vector<std::size_t>& ids);

class PretrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contrastive training on the dataset's training identities: 1 - cos for
/// same-identity pairs, max(0, cos - margin) for the rest, both averaged.
/// Freezes the embedder afterwards and returns the held-out separation.
/// Throws PretrainingError if steps > 0 and the gap is below min_separation.
Separation pretrain_embedder(Embedder<float>& e, const Dataset& ds, const std::vector<Tensor<float>>& images,
                             const PretrainConfig& cfg, std::uint64_t seed);

}  // namespace mswap
