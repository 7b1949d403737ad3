#pragma once

#include <vector>

#include "mswap/graph.hpp"

/// Differentiable tensor operations. Every op records its gradient rule on
/// the operands' graph. Shapes must match exactly; the only broadcast is a
/// single-element operand against a tensor.
namespace mswap {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, double s);
template <typename T> Var<T> add_scalar(Var<T> a, double s);

template <typename T> Var<T> leaky_relu(Var<T> x, double slope);
/// max(0, x); the subgradient at exactly 0 is 0.
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> tanh(Var<T> x);

/// [m,k] x [k,n] -> [m,n]
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// Rank-2 transpose.
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
/// Concatenation along `axis`; all other dimensions must agree.
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis = 0);

/// input [c_in,h,w], kernel [c_out,c_in,kh,kw] -> [c_out,h',w'] with zero padding,
/// h' = (h + 2 pad - kh) / stride + 1.
template <typename T> Var<T> conv2d(Var<T> input, Var<T> kernel, std::size_t stride, std::size_t pad);
/// x [c,h,w] + b[c] per channel.
template <typename T> Var<T> add_channel_bias(Var<T> x, Var<T> bias);
/// scale[c] * x[c,h,w] + shift[c] per channel.
template <typename T> Var<T> channel_affine(Var<T> x, Var<T> scale, Var<T> shift);
template <typename T> Var<T> upsample_nearest(Var<T> x, std::size_t factor);
template <typename T> Var<T> avg_pool2d(Var<T> x, std::size_t factor);

/// Row-wise softmax of a rank-2 tensor with per-row max subtraction.
template <typename T> Var<T> softmax_rows(Var<T> x);
/// Per-channel normalization of [c,h,w] with biased variance.
template <typename T> Var<T> instance_norm(Var<T> x, double eps);

template <typename T> Var<T> reduce_sum(Var<T> x);
template <typename T> Var<T> reduce_mean(Var<T> x);
/// sum |a - b|
template <typename T> Var<T> l1_norm(Var<T> a, Var<T> b);
/// mean |a - b|
template <typename T> Var<T> mean_abs_diff(Var<T> a, Var<T> b);
/// Throws DegenerateInputError when either operand has zero norm.
template <typename T> Var<T> cosine_similarity(Var<T> a, Var<T> b);
template <typename T> Var<T> l2_normalize(Var<T> a);

namespace kernels {
/// C[m,n] += A[m,k] * B[k,n]
template <typename T> void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
/// C[m,n] += A[k,m]^T * B[k,n]
template <typename T> void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
}  // namespace kernels

}  // namespace mswap
