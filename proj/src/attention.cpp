#include "mswap/attention.hpp"

#include <cmath>

namespace mswap {

template <typename T>
std::size_t AttentionParams<T>::parameter_count(const AttentionConfig& cfg) {
  const std::size_t c = cfg.channels, dk = cfg.key_dim(), dv = cfg.value_dim();
  return 2 * dk * c + dv * c + (cfg.output_projection ? c * dv : 0) + 1;
}

template <typename T>
AttentionParams<T> make_attention_params(ParameterStore<T>& store, const std::string& prefix,
                                         const AttentionConfig& cfg, std::uint64_t seed) {
  if (cfg.channels == 0) throw ContractError("attention: channel count must be positive");
  const std::size_t c = cfg.channels, dk = cfg.key_dim(), dv = cfg.value_dim();
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  AttentionParams<T> p;
  p.cfg = cfg;
  auto add = [&](const std::string& name, Shape shape, double stddev) {
    const std::string full = prefix + "." + name;
    return &store.add(full, init_normal<T>(shape, stddev, seed, full));
  };
  p.w_q = add("w_q", {dk, c}, s);
  p.w_k = add("w_k", {dk, c}, s);
  p.w_v = add("w_v", {dv, c}, s);
  if (cfg.output_projection) p.w_out = add("w_out", {c, dv}, 1.0 / std::sqrt(static_cast<double>(dv)));
  p.gamma = &store.add(prefix + ".gamma", Tensor<T>::scalar(T(0)));
  return p;
}

namespace {

template <typename T>
Var<T> attend(Var<T> x_t, Var<T> x_s, const AttentionParams<T>& p, Var<T>* weights_out) {
  auto& g = *x_t.graph();
  const Shape& st = x_t.shape();
  const Shape& ss = x_s.shape();
  if (st.size() != 3 || ss.size() != 3)
    throw ShapeError("attention: expected [c,h,w] maps, got " + shape_str(st) + " and " + shape_str(ss));
  const std::size_t c = p.cfg.channels;
  if (st[0] != c || ss[0] != c)
    throw ShapeError("attention: channel mismatch, block expects " + std::to_string(c) + " but got " +
                     shape_str(st) + " and " + shape_str(ss));
  const std::size_t nt = st[1] * st[2], ns = ss[1] * ss[2];
  const Var<T> xt = reshape(x_t, Shape{c, nt});
  const Var<T> xs = x_s.id() == x_t.id() ? xt : reshape(x_s, Shape{c, ns});

  const Var<T> q = matmul(g.param(*p.w_q), xt);  // [d_k, nt]
  const Var<T> k = matmul(g.param(*p.w_k), xs);  // [d_k, ns]
  const Var<T> v = matmul(g.param(*p.w_v), xs);  // [d_v, ns]
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.cfg.key_dim()));
  const Var<T> scores = scale(matmul(transpose(q), k), inv_sqrt_dk);  // [nt, ns]
  const Var<T> weights = softmax_rows(scores);
  if (weights_out) *weights_out = weights;
  Var<T> out = matmul(v, transpose(weights));  // [d_v, nt]
  if (p.w_out) out = matmul(g.param(*p.w_out), out);
  if (out.shape()[0] != c)
    throw ShapeError("attention: value width " + shape_str(out.shape()) + " cannot map back to " +
                     std::to_string(c) + " channels without an output projection");
  out = reshape(out, st);
  if (!p.cfg.residual) return out;
  return add(x_t, mul(out, g.param(*p.gamma)));
}

}  // namespace

template <typename T>
Var<T> self_attention(Var<T> x, const AttentionParams<T>& p, Var<T>* weights_out) {
  return attend(x, x, p, weights_out);
}

template <typename T>
Var<T> cross_attention(Var<T> x_t, Var<T> x_s, const AttentionParams<T>& p, Var<T>* weights_out) {
  if (x_t.graph() != x_s.graph()) throw ContractError("cross_attention: operands on different graphs");
  return attend(x_t, x_s, p, weights_out);
}

#define MSWAP_INSTANTIATE_ATTN(T)                                                                      \
  template struct AttentionParams<T>;                                                                  \
  template AttentionParams<T> make_attention_params(ParameterStore<T>&, const std::string&,            \
                                                    const AttentionConfig&, std::uint64_t);            \
  template Var<T> self_attention(Var<T>, const AttentionParams<T>&, Var<T>*);                          \
  template Var<T> cross_attention(Var<T>, Var<T>, const AttentionParams<T>&, Var<T>*);

MSWAP_INSTANTIATE_ATTN(float)
MSWAP_INSTANTIATE_ATTN(double)

}  // namespace mswap
