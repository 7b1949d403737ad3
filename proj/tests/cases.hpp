#pragma once

// Gradient-check instances and naive-loop oracles shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mswap/attention.hpp"
#include "mswap/gradcheck.hpp"
#include "mswap/losses.hpp"
#include "test_util.hpp"

namespace mswap::testing {

// ---- oracles ----------------------------------------------------------------

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<double> c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride,
                                 std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Tensor<double> out(Shape{co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double s = 0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              s += x[(c * h + iy) * w + ix] * k[((o * ci + c) * kh + i) * kw + j];
            }
        out[(o * oh + y) * ow + xx] = s;
      }
  return out;
}

/// Row softmax in long double.
inline Tensor<double> naive_softmax(const Tensor<double>& x) {
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    long double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<long double>(x[i * c + j]));
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = static_cast<double>(std::exp(static_cast<long double>(x[i * c + j])) / z);
  }
  return out;
}

// Brute force over every (query, key) pair, position by position.
inline Tensor<double> attention_oracle(const Tensor<double>& xt, const Tensor<double>& xs,
                                       const AttentionParams<double>& p) {
  const std::size_t c = xt.dim(0), nt = xt.dim(1) * xt.dim(2), ns = xs.dim(1) * xs.dim(2);
  const Tensor<double>& wq = p.w_q->value;
  const Tensor<double>& wk = p.w_k->value;
  const Tensor<double>& wv = p.w_v->value;
  const std::size_t dk = wq.dim(0), dv = wv.dim(0);
  auto at = [](const Tensor<double>& m, std::size_t r, std::size_t col) { return m[r * m.dim(1) + col]; };
  auto proj = [&](const Tensor<double>& w, const Tensor<double>& x, std::size_t n, std::size_t pos, std::size_t r) {
    double s = 0;
    for (std::size_t ch = 0; ch < c; ++ch) s += at(w, r, ch) * x[ch * n + pos];
    return s;
  };
  Tensor<double> out(xt.shape());
  for (std::size_t i = 0; i < nt; ++i) {
    std::vector<double> score(ns);
    for (std::size_t j = 0; j < ns; ++j) {
      double s = 0;
      for (std::size_t r = 0; r < dk; ++r) s += proj(wq, xt, nt, i, r) * proj(wk, xs, ns, j, r);
      score[j] = s / std::sqrt(static_cast<double>(dk));
    }
    const double mx = *std::max_element(score.begin(), score.end());
    double z = 0;
    for (double s : score) z += std::exp(s - mx);
    std::vector<double> o(dv, 0.0);
    for (std::size_t j = 0; j < ns; ++j) {
      const double a = std::exp(score[j] - mx) / z;
      for (std::size_t r = 0; r < dv; ++r) o[r] += a * proj(wv, xs, ns, j, r);
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double v = 0;
      if (p.w_out) {
        for (std::size_t r = 0; r < dv; ++r) v += at(p.w_out->value, ch, r) * o[r];
      } else {
        v = o[ch];
      }
      out[ch * nt + i] = xt[ch * nt + i] + p.gamma->value[0] * v;
    }
  }
  return out;
}

struct AttnFixture {
  ParameterStore<double> store;
  AttentionParams<double> p;
  AttnFixture(std::size_t c, std::uint64_t seed, double gamma, bool projection = true) {
    AttentionConfig cfg;
    cfg.channels = c;
    cfg.output_projection = projection;
    p = make_attention_params(store, "a", cfg, seed);
    p.gamma->value[0] = gamma;
  }
};

struct OracleCase {
  std::string name;
  double error;  // max |fast - oracle|
};

/// Six randomized comparisons per seed: matmul, conv2d at two strides,
/// softmax, self- and cross-attention.
inline std::vector<OracleCase> oracle_cases(std::uint64_t seed) {
  std::vector<OracleCase> out;
  CounterRng rng(derive_seed(seed, 0x0AC1E));
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  {
    const auto a = random_tensor(Shape{dim(1, 6), dim(1, 6)}, seed + 1);
    const auto b = random_tensor(Shape{a.dim(1), dim(1, 6)}, seed + 2);
    Graph<double> g;
    out.push_back({"matmul", max_abs_diff(matmul(g.constant(a), g.constant(b)).value(), naive_matmul(a, b))});
  }
  for (std::size_t stride : {1u, 2u}) {
    const auto x = random_tensor(Shape{dim(1, 3), dim(4, 7), dim(4, 7)}, seed + 3);
    const std::size_t ks = dim(1, 3);
    const auto k = random_tensor(Shape{dim(1, 4), x.dim(0), ks, ks}, seed + 4);
    const std::size_t pad = rng.below(2);
    Graph<double> g;
    out.push_back({"conv2d_stride" + std::to_string(stride),
                   max_abs_diff(conv2d(g.constant(x), g.constant(k), stride, pad).value(), naive_conv(x, k, stride, pad))});
  }
  {
    const auto x = random_tensor(Shape{dim(1, 5), dim(1, 8)}, seed + 5, -4, 4);
    Graph<double> g;
    out.push_back({"softmax_rows", max_abs_diff(softmax_rows(g.constant(x)).value(), naive_softmax(x))});
  }
  {
    const std::size_t c = dim(2, 6);
    AttnFixture f(c, seed + 6, rng.uniform(-1, 1), seed % 2 == 0);
    const auto xt = random_tensor(Shape{c, dim(1, 4), dim(1, 4)}, seed + 7);
    const auto xs = random_tensor(Shape{c, dim(1, 4), dim(1, 4)}, seed + 8);
    Graph<double> g;
    out.push_back({"self_attention", max_abs_diff(self_attention(g.constant(xt), f.p).value(), attention_oracle(xt, xt, f.p))});
    out.push_back({"cross_attention", max_abs_diff(cross_attention(g.constant(xt), g.constant(xs), f.p).value(),
                                                   attention_oracle(xt, xs, f.p))});
  }
  return out;
}

// ---- gradient cases -----------------------------------------------------------

struct GradCase {
  std::string name;
  Tensor<double> x;  // point at which the gradient is checked
  ScalarFn f;
};

/// Every differentiable op, one instance per seed.
inline std::vector<GradCase> op_gradient_cases(std::uint64_t s) {
  const auto b34 = random_tensor(Shape{3, 4}, s + 1);
  const auto k = random_tensor(Shape{3, 2, 3, 3}, s + 2);
  const auto vec = random_tensor(Shape{6}, s + 3);
  const auto chan = random_tensor(Shape{2}, s + 4);
  const auto img = random_tensor(Shape{2, 5, 5}, s + 5);
  const auto img2 = random_tensor(Shape{2, 3, 3}, s + 6);
  const auto chan2 = random_tensor(Shape{2}, s + 7);
  const auto img3 = random_tensor(Shape{2, 3, 3}, s + 8);
  auto x = [&](Shape shape) { return random_tensor(shape, s + 100); };
  using G = Graph<double>;
  using V = Var<double>;
  return {
      {"add", x({3, 4}), [=](G& g, V v) { return probe_sum(add(v, g.constant(b34)), s); }},
      {"sub", x({3, 4}), [=](G& g, V v) { return probe_sum(sub(g.constant(b34), v), s); }},
      {"mul", x({3, 4}), [=](G& g, V v) { return probe_sum(mul(v, g.constant(b34)), s); }},
      {"mul_scalar", x({1}), [=](G& g, V v) { return probe_sum(mul(g.constant(b34), v), s); }},
      {"scale_add_scalar", x({3, 4}), [=](G&, V v) { return probe_sum(scale(add_scalar(v, 0.3), -1.7), s); }},
      {"leaky_relu", x({3, 4}), [=](G&, V v) { return probe_sum(leaky_relu(v, 0.2), s); }},
      {"relu", x({3, 4}), [=](G&, V v) { return probe_sum(relu(v), s); }},
      {"tanh", x({3, 4}), [=](G&, V v) { return probe_sum(tanh(v), s); }},
      {"matmul_lhs", x({2, 3}), [=](G& g, V v) { return probe_sum(matmul(v, g.constant(b34)), s); }},
      {"matmul_rhs", x({4, 5}), [=](G& g, V v) { return probe_sum(matmul(g.constant(b34), v), s); }},
      {"transpose", x({3, 5}), [=](G&, V v) { return probe_sum(transpose(v), s); }},
      {"reshape", x({3, 4}), [=](G&, V v) { return probe_sum(reshape(v, Shape{2, 6}), s); }},
      {"concat", x({2, 4}), [=](G& g, V v) { return probe_sum(concat<double>({v, g.constant(b34), v}, 0), s); }},
      {"concat_axis1", x({3, 2}), [=](G& g, V v) { return probe_sum(concat<double>({g.constant(b34), v}, 1), s); }},
      {"conv2d_input", x({2, 5, 5}), [=](G& g, V v) { return probe_sum(conv2d(v, g.constant(k), 2, 1), s); }},
      {"conv2d_kernel", x({3, 2, 3, 3}), [=](G& g, V v) { return probe_sum(conv2d(g.constant(img), v, 1, 1), s); }},
      {"add_channel_bias", x({2, 3, 3}), [=](G& g, V v) { return probe_sum(add_channel_bias(v, g.constant(chan)), s); }},
      {"add_channel_bias_bias", x({2}), [=](G& g, V v) { return probe_sum(add_channel_bias(g.constant(img2), v), s); }},
      {"channel_affine", x({2, 3, 3}),
       [=](G& g, V v) { return probe_sum(channel_affine(v, g.constant(chan), g.constant(chan2)), s); }},
      {"channel_affine_scale", x({2}),
       [=](G& g, V v) { return probe_sum(channel_affine(g.constant(img3), v, g.constant(chan)), s); }},
      {"channel_affine_shift", x({2}),
       [=](G& g, V v) { return probe_sum(channel_affine(g.constant(img3), g.constant(chan), v), s); }},
      {"upsample_nearest", x({2, 2, 3}), [=](G&, V v) { return probe_sum(upsample_nearest(v, 2), s); }},
      {"avg_pool2d", x({2, 4, 6}), [=](G&, V v) { return probe_sum(avg_pool2d(v, 2), s); }},
      {"softmax_rows", x({3, 5}), [=](G&, V v) { return probe_sum(softmax_rows(v), s); }},
      {"instance_norm", x({2, 3, 4}), [=](G&, V v) { return probe_sum(instance_norm(v, 1e-5), s); }},
      {"reduce_sum", x({3, 4}), [=](G&, V v) { return scale(reduce_sum(mul(v, v)), 0.5); }},
      {"reduce_mean", x({3, 4}), [=](G&, V v) { return scale(reduce_mean(mul(v, v)), 3.0); }},
      {"l1_norm", x({3, 4}), [=](G& g, V v) { return l1_norm(v, g.constant(b34)); }},
      {"mean_abs_diff", x({3, 4}), [=](G& g, V v) { return mean_abs_diff(g.constant(b34), v); }},
      {"cosine_similarity", x({6}), [=](G& g, V v) { return cosine_similarity(v, g.constant(vec)); }},
      {"l2_normalize", x({6}), [=](G&, V v) { return probe_sum(l2_normalize(v), s); }},
  };
}

/// The loss terms and their weighted total, with inputs kept away from the
/// kinks of |.| and the hinges so central differences are valid.
inline std::vector<GradCase> loss_gradient_cases(std::uint64_t seed) {
  using G = Graph<double>;
  using V = Var<double>;
  const auto other = random_tensor({6}, seed + 1);
  const auto target = random_tensor({2, 3, 3}, seed + 2);
  auto away = random_tensor({2, 3, 3}, seed + 3);
  for (std::size_t i = 0; i < away.numel(); ++i)
    if (std::abs(away[i] - target[i]) < 1e-3) away[i] += 0.01;
  auto scores = random_tensor({1, 3, 3}, seed + 4, -2.5, 2.5);
  for (auto& v : scores.data())
    if (std::abs(std::abs(v) - 1.0) < 1e-3) v += 0.01;
  const auto emb = random_tensor({9}, seed + 5);
  const Tensor<double> tiny(Shape{1, 1, 1}, 0.3);
  return {
      {"identity_loss", random_tensor({6}, seed), [=](G& g, V x) { return identity_loss(g.constant(other), x); }},
      {"reconstruction_loss", away, [=](G& g, V x) { return reconstruction_loss(g.constant(target), x); }},
      {"feature_matching_loss", away,
       [=](G& g, V x) { return feature_matching_loss<double>({g.constant(target), g.constant(away)}, {x, scale(x, 0.5)}); }},
      {"hinge_d_loss", scores,
       [=](G& g, V x) { return hinge_d_loss<double>({x, g.constant(tiny)}, {scale(x, -1.0)}).total; }},
      {"hinge_g_loss", scores, [=](G&, V x) { return hinge_g_loss<double>({x}); }},
      {"total_generator_loss", scores,
       [=](G& g, V x) {
         GeneratorLossParts<double> p;
         p.adv_g = hinge_g_loss<double>({x});
         p.id = identity_loss(g.constant(emb), reshape(x, Shape{9}));
         p.feat = feature_matching_loss<double>({g.constant(scores)}, {scale(x, 0.3)});
         p.rec = reconstruction_loss(g.constant(scores), scale(x, 2.0));
         return total_generator_loss(p, LossWeights{}, true).total;
       }},
  };
}

/// Self- and cross-attention with respect to their inputs.
inline std::vector<GradCase> attention_gradient_cases(std::uint64_t seed) {
  auto f = std::make_shared<AttnFixture>(4, seed, 0.6);
  const auto xt = random_tensor({4, 2, 3}, seed + 10);
  const auto xs = random_tensor({4, 2, 2}, seed + 11);
  return {
      {"self_attention", xt, [=](Graph<double>&, Var<double> x) { return probe_sum(self_attention(x, f->p), seed); }},
      {"cross_attention_source", xs,
       [=](Graph<double>& g, Var<double> x) { return probe_sum(cross_attention(g.constant(xt), x, f->p), seed); }},
      {"cross_attention_target", xt,
       [=](Graph<double>& g, Var<double> x) { return probe_sum(cross_attention(x, g.constant(xs), f->p), seed); }},
  };
}

/// Attention projections and gate, through a self- then cross-attention stack.
inline GradCheckResult attention_parameter_check(std::uint64_t seed) {
  AttnFixture f(4, seed, 0.6);
  const auto xt = random_tensor({4, 2, 3}, seed + 10);
  const auto xs = random_tensor({4, 2, 2}, seed + 11);
  return grad_check_params(
      [&](Graph<double>& g) {
        return probe_sum(cross_attention(self_attention(g.constant(xt), f.p), g.constant(xs), f.p), seed);
      },
      f.store);
}

}  // namespace mswap::testing
