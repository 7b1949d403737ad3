#include "mswap/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mswap/rng.hpp"
#include "mswap/schedules.hpp"

namespace mswap {

std::vector<Tensor<float>> render_dataset(const Dataset& ds, std::size_t size) {
  std::vector<Tensor<float>> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(render(s.spec, size).cast<float>());
  return out;
}

Separation embedding_separation(const Embedder<float>& e, const Dataset& ds, const std::vector<Tensor<float>>& images,
                                const std::vector<std::size_t>& ids) {
  std::vector<std::size_t> idx;
  for (std::size_t id : ids)
    for (std::size_t k = 0; k < ds.n_per_id; ++k) idx.push_back(id * ds.n_per_id + k);
  std::vector<Tensor<float>> emb;
  emb.reserve(idx.size());
  for (std::size_t i : idx) emb.push_back(e.embed(images.at(i)));
  double same = 0, cross = 0;
  std::size_t n_same = 0, n_cross = 0;
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < emb[a].numel(); ++j) dot += static_cast<double>(emb[a][j]) * emb[b][j];
      if (ds.samples[idx[a]].label == ds.samples[idx[b]].label) {
        same += dot;
        ++n_same;
      } else {
        cross += dot;
        ++n_cross;
      }
    }
  if (n_same == 0 || n_cross == 0)
    throw ContractError("embedding_separation: need two identities with at least two images each");
  return {same / static_cast<double>(n_same), cross / static_cast<double>(n_cross)};
}

Separation pretrain_embedder(Embedder<float>& e, const Dataset& ds, const std::vector<Tensor<float>>& images,
                             const PretrainConfig& cfg, std::uint64_t seed) {
  const std::size_t groups = cfg.batch / 2;
  if (cfg.batch < 4 || cfg.batch % 2 != 0) throw ContractError("pretrain_embedder: batch must be even and >= 4");
  if (ds.train_ids.size() < groups) throw ContractError("pretrain_embedder: fewer training identities than batch/2");
  if (ds.n_per_id < 2) throw ContractError("pretrain_embedder: need at least two images per identity");
  if (images.size() != ds.samples.size()) throw ContractError("pretrain_embedder: image cache does not match dataset");

  AdamState<float> adam;
  adam.cfg.beta1 = 0.9;
  CounterRng rng(derive_seed(seed, 0xE3B));
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> chosen;
    while (chosen.size() < groups) {
      const std::size_t id = ds.train_ids[rng.below(ds.train_ids.size())];
      if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) chosen.push_back(id);
    }
    Graph<float> g;
    std::vector<Var<float>> emb;
    std::vector<std::size_t> label;
    for (std::size_t id : chosen) {
      const std::size_t k0 = rng.below(ds.n_per_id);
      const std::size_t k1 = (k0 + 1 + rng.below(ds.n_per_id - 1)) % ds.n_per_id;
      for (std::size_t k : {k0, k1}) {
        emb.push_back(e.forward(g.constant(images[id * ds.n_per_id + k])));
        label.push_back(id);
      }
    }
    std::vector<Var<float>> pos, neg;
    for (std::size_t a = 0; a < emb.size(); ++a)
      for (std::size_t b = a + 1; b < emb.size(); ++b) {
        const Var<float> c = cosine_similarity(emb[a], emb[b]);
        if (label[a] == label[b])
          pos.push_back(reshape(scale(add_scalar(c, -1.0), -1.0), Shape{1}));
        else
          neg.push_back(reshape(relu(add_scalar(c, -cfg.margin)), Shape{1}));
      }
    const Var<float> loss = add(reduce_mean(concat(pos)), reduce_mean(concat(neg)));
    if (!std::isfinite(loss.value().item()))
      throw NumericalError("pretrain_embedder: non-finite loss at step " + std::to_string(step));
    e.params().zero_grad();
    g.backward(loss);
    adam_step(e.params(), adam, cfg.lr);
  }
  e.freeze();
  e.params().zero_grad();
  const Separation sep = embedding_separation(e, ds, images, ds.heldout_ids);
  if (cfg.steps > 0 && sep.gap() < cfg.min_separation) {
    std::ostringstream msg;
    msg << "embedder pretraining failed: held-out separation " << sep.gap() << " (same " << sep.same << ", cross "
        << sep.cross << ") is below " << cfg.min_separation;
    throw PretrainingError(msg.str());
  }
  return sep;
}

}  // namespace mswap
