#include "mswap/generator.hpp"

#include <cmath>

namespace mswap {

void GeneratorConfig::validate() const {
  if (image_size == 0 || base_channels == 0 || id_dim == 0)
    throw ContractError("generator: image_size, base_channels and id_dim must be positive");
  const std::size_t factor = std::size_t{1} << n_downsamples;
  if (image_size % factor != 0)
    throw ContractError("generator: image_size " + std::to_string(image_size) + " not divisible by 2^" +
                        std::to_string(n_downsamples));
  if ((use_self_attention || use_cross_attention) && n_res_blocks == 0)
    throw ContractError("generator: attention requires at least one residual block");
}

AttentionConfig GeneratorConfig::attention_config() const {
  AttentionConfig a;
  a.channels = bottleneck_channels();
  a.d_k = d_k;
  a.output_projection = attention_output_projection;
  a.residual = attention_residual;
  return a;
}

std::size_t generator_parameter_count(const GeneratorConfig& cfg) {
  cfg.validate();
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
  const std::size_t cb = cfg.bottleneck_channels();
  std::size_t n = conv(3, cfg.channels_at(0), 3);
  for (std::size_t i = 0; i < cfg.n_downsamples; ++i) n += conv(cfg.channels_at(i), cfg.channels_at(i + 1), 4);
  const std::size_t injection = 2 * (cb * cfg.id_dim + cb);
  // Res-block convs feed instance norm, so they carry no bias.
  n += cfg.n_res_blocks * (2 * (conv(cb, cb, 3) - cb) + 2 * injection);
  const std::size_t attn = AttentionParams<double>::parameter_count(cfg.attention_config());
  if (cfg.use_self_attention) n += attn;
  if (cfg.use_cross_attention) n += attn;
  for (std::size_t i = cfg.n_downsamples; i-- > 0;) n += conv(cfg.channels_at(i + 1), cfg.channels_at(i), 3);
  n += conv(cfg.channels_at(0), 3, 3);
  return n;
}

template <typename T>
IdInjectionParams<T> make_injection_params(ParameterStore<T>& store, const std::string& prefix,
                                           std::size_t channels, std::size_t id_dim) {
  IdInjectionParams<T> p;
  p.scale_w = &store.add(prefix + ".scale_w", Tensor<T>(Shape{channels, id_dim}, T(0)));
  p.scale_b = &store.add(prefix + ".scale_b", Tensor<T>(Shape{channels}, T(0)));
  p.shift_w = &store.add(prefix + ".shift_w", Tensor<T>(Shape{channels, id_dim}, T(0)));
  p.shift_b = &store.add(prefix + ".shift_b", Tensor<T>(Shape{channels}, T(0)));
  return p;
}

namespace {

template <typename T>
std::pair<Var<T>, Var<T>> modulation(Var<T> id_embed, const IdInjectionParams<T>& p) {
  auto& g = *id_embed.graph();
  const std::size_t c = p.scale_b->value.numel();
  const std::size_t d = p.scale_w->value.dim(1);
  if (id_embed.numel() != d)
    throw ShapeError("inject_identity: embedding " + shape_str(id_embed.shape()) + " vs projection " +
                     shape_str(p.scale_w->value.shape()));
  const Var<T> e = reshape(id_embed, Shape{d, 1});
  Var<T> sc = add(reshape(matmul(g.param(*p.scale_w), e), Shape{c}), g.param(*p.scale_b));
  sc = add_scalar(sc, 1.0);
  const Var<T> sh = add(reshape(matmul(g.param(*p.shift_w), e), Shape{c}), g.param(*p.shift_b));
  return {sc, sh};
}

}  // namespace

template <typename T>
Var<T> inject_identity(Var<T> feat, Var<T> id_embed, const IdInjectionParams<T>& p, double eps) {
  if (feat.shape().size() != 3 || feat.shape()[0] != p.scale_b->value.numel())
    throw ShapeError("inject_identity: feature map " + shape_str(feat.shape()) + " vs " +
                     std::to_string(p.scale_b->value.numel()) + " modulated channels");
  auto [sc, sh] = modulation(id_embed, p);
  return channel_affine(instance_norm(feat, eps), sc, sh);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> injection_modulation(const Tensor<T>& id_embed, const IdInjectionParams<T>& p) {
  Graph<T> g(false);
  auto [sc, sh] = modulation(g.constant(id_embed), p);
  return {sc.value(), sh.value()};
}

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  const std::size_t cb = cfg_.bottleneck_channels();
  stem_ = add_conv("enc.stem", 3, cfg_.channels_at(0), 3, 1, 1);
  for (std::size_t i = 0; i < cfg_.n_downsamples; ++i)
    down_.push_back(add_conv("enc.down" + std::to_string(i), cfg_.channels_at(i), cfg_.channels_at(i + 1), 4, 2, 1));
  for (std::size_t b = 0; b < cfg_.n_res_blocks; ++b) {
    const std::string pre = "res" + std::to_string(b);
    ResBlock rb;
    rb.conv0 = add_conv(pre + ".conv0", cb, cb, 3, 1, 1, 1.0, false);
    rb.inj0 = make_injection_params(params_, pre + ".inj0", cb, cfg_.id_dim);
    rb.conv1 = add_conv(pre + ".conv1", cb, cb, 3, 1, 1, 1.0, false);
    rb.inj1 = make_injection_params(params_, pre + ".inj1", cb, cfg_.id_dim);
    res_.push_back(rb);
    if (b + 1 == cfg_.attention_after_block()) {
      if (cfg_.use_self_attention)
        self_attn_ = make_attention_params(params_, "self_attn", cfg_.attention_config(), seed_);
      if (cfg_.use_cross_attention)
        cross_attn_ = make_attention_params(params_, "cross_attn", cfg_.attention_config(), seed_);
    }
  }
  for (std::size_t i = cfg_.n_downsamples; i-- > 0;)
    up_.push_back(add_conv("dec.up" + std::to_string(i), cfg_.channels_at(i + 1), cfg_.channels_at(i), 3, 1, 1));
  head_ = add_conv("dec.head", cfg_.channels_at(0), 3, 3, 1, 1, std::sqrt(0.5));
  if (params_.scalar_count() != generator_parameter_count(cfg_))
    throw ContractError("generator: parameter count disagrees with the closed form");
}

template <typename T>
typename Generator<T>::Conv Generator<T>::add_conv(const std::string& name, std::size_t cin, std::size_t cout,
                                                   std::size_t k, std::size_t stride, std::size_t pad, double gain,
                                                   bool bias) {
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(cin * k * k));
  Conv c;
  c.w = &params_.add(name + ".w", init_normal<T>(Shape{cout, cin, k, k}, stddev, seed_, name + ".w"));
  c.b = bias ? &params_.add(name + ".b", Tensor<T>(Shape{cout}, T(0))) : nullptr;
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
Var<T> Generator<T>::apply(const Conv& c, Var<T> x) const {
  auto& g = *x.graph();
  Var<T> y = conv2d(x, g.param(*c.w), c.stride, c.pad);
  return c.b ? add_channel_bias(y, g.param(*c.b)) : y;
}

template <typename T>
Var<T> Generator<T>::encode(Var<T> img) const {
  Var<T> h = leaky_relu(apply(stem_, img), cfg_.leaky_slope);
  for (const auto& d : down_) h = leaky_relu(apply(d, h), cfg_.leaky_slope);
  return h;
}

template <typename T>
Var<T> Generator<T>::forward(Var<T> i_s, Var<T> i_t, Var<T> id_embed) const {
  const Shape want{3, cfg_.image_size, cfg_.image_size};
  if (i_t.shape() != want || i_s.shape() != want)
    throw ShapeError("generator: expected images " + shape_str(want) + ", got " + shape_str(i_s.shape()) +
                     " and " + shape_str(i_t.shape()));
  if (id_embed.numel() != cfg_.id_dim)
    throw ShapeError("generator: embedding " + shape_str(id_embed.shape()) + " vs id_dim " +
                     std::to_string(cfg_.id_dim));

  Var<T> h = encode(i_t);
  Var<T> src_feat;
  if (cross_attn_) src_feat = encode(i_s);

  for (std::size_t b = 0; b < res_.size(); ++b) {
    const ResBlock& rb = res_[b];
    Var<T> r = inject_identity(apply(rb.conv0, h), id_embed, rb.inj0, cfg_.norm_eps);
    r = leaky_relu(r, cfg_.leaky_slope);
    r = inject_identity(apply(rb.conv1, r), id_embed, rb.inj1, cfg_.norm_eps);
    h = add(h, r);
    if (b + 1 == cfg_.attention_after_block()) {
      if (self_attn_) h = self_attention(h, *self_attn_);
      if (cross_attn_) h = cross_attention(h, src_feat, *cross_attn_);
    }
  }
  for (const auto& u : up_) h = leaky_relu(apply(u, upsample_nearest(h, 2)), cfg_.leaky_slope);
  return tanh(apply(head_, h));
}

template <typename T>
Tensor<T> Generator<T>::swap(const Tensor<T>& i_s, const Tensor<T>& i_t, const Tensor<T>& id_embed) const {
  Graph<T> g(false);
  return forward(g.constant(i_s), g.constant(i_t), g.constant(id_embed)).value();
}

#define MSWAP_INSTANTIATE_GEN(T)                                                                              \
  template struct IdInjectionParams<T>;                                                                       \
  template IdInjectionParams<T> make_injection_params(ParameterStore<T>&, const std::string&, std::size_t,     \
                                                      std::size_t);                                           \
  template Var<T> inject_identity(Var<T>, Var<T>, const IdInjectionParams<T>&, double);                       \
  template std::pair<Tensor<T>, Tensor<T>> injection_modulation(const Tensor<T>&, const IdInjectionParams<T>&); \
  template class Generator<T>;

MSWAP_INSTANTIATE_GEN(float)
MSWAP_INSTANTIATE_GEN(double)

}  // namespace mswap
