#include "mswap/discriminator.hpp"

#include <cmath>
#include <string>

namespace mswap {

void DiscriminatorConfig::validate() const {
  if (n_scales < 1 || n_layers < 1 || base_channels < 1)
    throw ContractError("discriminator: n_scales, n_layers and base_channels must be >= 1");
  for (std::size_t j = 0; j < n_scales; ++j) {
    if (image_size % (std::size_t{1} << j) != 0)
      throw ShapeError("discriminator: image size " + std::to_string(image_size) + " cannot be halved " +
                       std::to_string(j) + " times");
    if (score_size(j) < 1)
      throw ShapeError("discriminator: image size " + std::to_string(image_size) +
                       " is below the receptive-field minimum for scale " + std::to_string(j) + " (needs " +
                       std::to_string(std::size_t{1} << (j + n_layers)) + ")");
  }
}

std::size_t DiscriminatorConfig::score_size(std::size_t scale) const {
  std::size_t s = image_size >> scale;
  for (std::size_t l = 0; l < n_layers; ++l) s /= 2;
  return s;
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                  std::size_t pad) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    Conv c;
    c.w = &params_.add(name + ".w", init_normal<T>(Shape{cout, cin, k, k}, stddev, seed, name + ".w"));
    c.b = &params_.add(name + ".b", Tensor<T>(Shape{cout}, T(0)));
    c.stride = stride;
    c.pad = pad;
    return c;
  };
  for (std::size_t j = 0; j < cfg_.n_scales; ++j) {
    std::vector<Conv> stack;
    std::size_t cin = 3;
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::size_t cout = cfg_.base_channels << l;
      stack.push_back(conv("d" + std::to_string(j) + ".layer" + std::to_string(l), cin, cout, 4, 2, 1));
      cin = cout;
    }
    layers_.push_back(std::move(stack));
    heads_.push_back(conv("d" + std::to_string(j) + ".head", cin, 1, 3, 1, 1));
  }
}

template <typename T>
Var<T> Discriminator<T>::apply(const Conv& c, Var<T> x) const {
  auto& g = *x.graph();
  return add_channel_bias(conv2d(x, g.param(*c.w), c.stride, c.pad), g.param(*c.b));
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(Var<T> image) const {
  const Shape want{3, cfg_.image_size, cfg_.image_size};
  if (image.shape() != want)
    throw ShapeError("discriminator: expected " + shape_str(want) + ", got " + shape_str(image.shape()));
  DiscriminatorOutput<T> out;
  Var<T> input = image;
  for (std::size_t j = 0; j < cfg_.n_scales; ++j) {
    if (j > 0) input = avg_pool2d(input, 2);
    Var<T> h = input;
    for (const auto& c : layers_[j]) {
      h = leaky_relu(apply(c, h), cfg_.leaky_slope);
      out.feats.push_back(h);
    }
    out.scores.push_back(apply(heads_[j], h));
  }
  return out;
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace mswap
