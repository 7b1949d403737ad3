#include "mswap/embedder.hpp"

#include <cmath>
#include <string>

namespace mswap {

void EmbedderConfig::validate() const {
  if (id_dim < 2) throw ContractError("embedder: id_dim must be >= 2");
  if (widths.empty()) throw ContractError("embedder: at least one conv layer is required");
  const std::size_t factor = std::size_t{1} << widths.size();
  if (image_size < factor || image_size % factor != 0)
    throw ShapeError("embedder: image size " + std::to_string(image_size) + " incompatible with " +
                     std::to_string(widths.size()) + " stride-2 layers");
}

template <typename T>
Embedder<T>::Embedder(const EmbedderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::size_t cin = 3;
  for (std::size_t l = 0; l < cfg_.widths.size(); ++l) {
    const std::string name = "emb.conv" + std::to_string(l);
    const std::size_t cout = cfg_.widths[l];
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin * 16));
    Conv c;
    c.w = &params_.add(name + ".w", init_normal<T>(Shape{cout, cin, 4, 4}, stddev, seed, name + ".w"));
    c.b = &params_.add(name + ".b", Tensor<T>(Shape{cout}, T(0)));
    convs_.push_back(c);
    cin = cout;
  }
  const std::size_t side = cfg_.image_size >> cfg_.widths.size();
  const std::size_t flat = cin * side * side;
  proj_w_ = &params_.add("emb.proj.w", init_normal<T>(Shape{cfg_.id_dim, flat},
                                                      1.0 / std::sqrt(static_cast<double>(flat)), seed, "emb.proj.w"));
  proj_b_ = &params_.add("emb.proj.b", Tensor<T>(Shape{cfg_.id_dim}, T(0)));
}

template <typename T>
bool Embedder<T>::frozen() const {
  for (const auto& p : params_)
    if (p.requires_grad) return false;
  return true;
}

template <typename T>
Var<T> Embedder<T>::forward(Var<T> image) const {
  const Shape want{3, cfg_.image_size, cfg_.image_size};
  if (image.shape() != want)
    throw ShapeError("embedder: expected " + shape_str(want) + ", got " + shape_str(image.shape()));
  auto& g = *image.graph();
  Var<T> h = image;
  for (const auto& c : convs_)
    h = leaky_relu(add_channel_bias(conv2d(h, g.param(*c.w), 2, 1), g.param(*c.b)), cfg_.leaky_slope);
  const Var<T> flat = reshape(h, Shape{h.numel(), 1});
  const Var<T> z = add(reshape(matmul(g.param(*proj_w_), flat), Shape{cfg_.id_dim}), g.param(*proj_b_));
  return l2_normalize(z);
}

template <typename T>
Tensor<T> Embedder<T>::embed(const Tensor<T>& image) const {
  Graph<T> g(false);
  return forward(g.constant(image)).value();
}

template class Embedder<float>;
template class Embedder<double>;

}  // namespace mswap
