#include "mswap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace mswap {

namespace kernels {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

namespace {

template <typename T>
Graph<T>& graph_of(Var<T> v, std::string_view op) {
  if (!v.valid()) throw ContractError(std::string(op) + ": unbound operand");
  return *v.graph();
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

void require_rank(const Shape& s, std::size_t r, std::string_view op) {
  if (s.size() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(s));
}

enum class Bcast { None, Left, Right };

Bcast broadcast_mode(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return Bcast::None;
  if (shape_numel(b) == 1) return Bcast::Right;
  if (shape_numel(a) == 1) return Bcast::Left;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

enum class BinOp { Add, Sub, Mul };

template <typename T>
Var<T> binary(Var<T> a, Var<T> b, BinOp kind, std::string_view name) {
  auto& g = graph_of(a, name);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Bcast mode = broadcast_mode(av.shape(), bv.shape(), name);
  const Shape& out_shape = mode == Bcast::Left ? bv.shape() : av.shape();
  Tensor<T> out(out_shape);
  const std::size_t n = out.numel();
  const std::size_t sa = mode == Bcast::Left ? 0 : 1;
  const std::size_t sb = mode == Bcast::Right ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i * sa];
    const T y = bv[i * sb];
    out[i] = kind == BinOp::Add ? x + y : kind == BinOp::Sub ? x - y : x * y;
  }
  return g.record(name, std::move(out), {a, b}, [a, b, kind, sa, sb, n](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    if (g.needs_grad(a)) {
      auto& ga = g.grad_buffer(a);
      const auto& bv = g.value(b);
      for (std::size_t i = 0; i < n; ++i) ga[i * sa] += kind == BinOp::Mul ? d[i] * bv[i * sb] : d[i];
    }
    if (g.needs_grad(b)) {
      auto& gb = g.grad_buffer(b);
      const auto& av = g.value(a);
      for (std::size_t i = 0; i < n; ++i) {
        const T v = kind == BinOp::Add ? d[i] : kind == BinOp::Sub ? -d[i] : d[i] * av[i * sa];
        gb[i * sb] += v;
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Add, "add");
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Sub, "sub");
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, BinOp::Mul, "mul");
}

template <typename T>
Var<T> scale(Var<T> a, double s) {
  auto& g = graph_of(a, "scale");
  const auto& av = a.value();
  const T st = static_cast<T>(s);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * st;
  return g.record("scale", std::move(out), {a}, [a, st](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i] * st;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, double s) {
  auto& g = graph_of(a, "add_scalar");
  const auto& av = a.value();
  const T st = static_cast<T>(s);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + st;
  return g.record("add_scalar", std::move(out), {a}, [a](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i];
  });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, double slope) {
  auto& g = graph_of(x, "leaky_relu");
  const auto& xv = x.value();
  const T s = static_cast<T>(slope);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : s * xv[i];
  return g.record("leaky_relu", std::move(out), {x}, [x, s](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    const auto& xv = g.value(x);
    for (std::size_t i = 0; i < d.numel(); ++i) gx[i] += xv[i] > T(0) ? d[i] : s * d[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  auto& g = graph_of(x, "relu");
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return g.record("relu", std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    const auto& xv = g.value(x);
    for (std::size_t i = 0; i < d.numel(); ++i)
      if (xv[i] > T(0)) gx[i] += d[i];
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  auto& g = graph_of(x, "tanh");
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::tanh(xv[i]);
  return g.record("tanh", std::move(out), {x}, [x](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < d.numel(); ++i) gx[i] += d[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: cannot multiply " + shape_str(av.shape()) + " by " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr());
  return g.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    if (g.needs_grad(a)) {
      const auto bt = transposed(g.value(b).ptr(), k, n);
      kernels::gemm_nn(m, k, n, d.ptr(), bt.data(), g.grad_buffer(a).ptr());
    }
    if (g.needs_grad(b)) kernels::gemm_tn(k, n, m, g.value(a).ptr(), d.ptr(), g.grad_buffer(b).ptr());
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  auto& g = graph_of(a, "transpose");
  const auto& av = a.value();
  require_rank(av.shape(), 2, "transpose");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor<T> out(Shape{c, r}, transposed(av.ptr(), r, c));
  return g.record("transpose", std::move(out), {a}, [a, r, c](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += d[j * r + i];
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  auto& g = graph_of(a, "reshape");
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return g.record("reshape", std::move(out), {a}, [a](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& ga = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += d[i];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  auto& g = graph_of(parts.front(), "concat");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  Tensor<T> out(out_shape);
  const std::size_t row = total_axis * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.ptr() + o * widths[k], widths[k], out.ptr() + o * row + offset);
    offset += widths[k];
  }
  return g.record("concat", std::move(out), parts,
                  [parts, widths, outer, row](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < parts.size(); ++k) {
                      if (g.needs_grad(parts[k])) {
                        auto& gp = g.grad_buffer(parts[k]);
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t j = 0; j < widths[k]; ++j)
                            gp[o * widths[k] + j] += d[o * row + off + j];
                      }
                      off += widths[k];
                    }
                  });
}

namespace {

struct ConvGeom {
  std::size_t ci, h, w, co, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return ci * kh * kw; }
  std::size_t positions() const { return oh * ow; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& c, T* cols) {
  const std::size_t npos = c.positions();
  for (std::size_t ch = 0; ch < c.ci; ++ch)
    for (std::size_t ki = 0; ki < c.kh; ++ki)
      for (std::size_t kj = 0; kj < c.kw; ++kj) {
        T* row = cols + ((ch * c.kh + ki) * c.kw + kj) * npos;
        for (std::size_t oy = 0; oy < c.oh; ++oy) {
          const long iy = static_cast<long>(oy * c.stride + ki) - static_cast<long>(c.pad);
          T* dst = row + oy * c.ow;
          if (iy < 0 || iy >= static_cast<long>(c.h)) {
            std::fill_n(dst, c.ow, T(0));
            continue;
          }
          const T* src = x + (ch * c.h + static_cast<std::size_t>(iy)) * c.w;
          for (std::size_t ox = 0; ox < c.ow; ++ox) {
            const long ix = static_cast<long>(ox * c.stride + kj) - static_cast<long>(c.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(c.w)) ? T(0) : src[ix];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& c, T* dx) {
  const std::size_t npos = c.positions();
  for (std::size_t ch = 0; ch < c.ci; ++ch)
    for (std::size_t ki = 0; ki < c.kh; ++ki)
      for (std::size_t kj = 0; kj < c.kw; ++kj) {
        const T* row = cols + ((ch * c.kh + ki) * c.kw + kj) * npos;
        for (std::size_t oy = 0; oy < c.oh; ++oy) {
          const long iy = static_cast<long>(oy * c.stride + ki) - static_cast<long>(c.pad);
          if (iy < 0 || iy >= static_cast<long>(c.h)) continue;
          T* dst = dx + (ch * c.h + static_cast<std::size_t>(iy)) * c.w;
          for (std::size_t ox = 0; ox < c.ow; ++ox) {
            const long ix = static_cast<long>(ox * c.stride + kj) - static_cast<long>(c.pad);
            if (ix >= 0 && ix < static_cast<long>(c.w)) dst[ix] += row[oy * c.ow + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, std::size_t stride, std::size_t pad) {
  auto& g = graph_of(input, "conv2d");
  const auto& xv = input.value();
  const auto& kv = kernel.value();
  require_rank(xv.shape(), 3, "conv2d input");
  require_rank(kv.shape(), 4, "conv2d kernel");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (kv.dim(1) != xv.dim(0))
    throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " does not match input " + shape_str(xv.shape()));
  ConvGeom c{xv.dim(0), xv.dim(1), xv.dim(2), kv.dim(0), kv.dim(2), kv.dim(3), stride, pad, 0, 0};
  if (c.kh > c.h + 2 * pad || c.kw > c.w + 2 * pad)
    throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " larger than padded input " +
                     shape_str(xv.shape()) + " (pad " + std::to_string(pad) + ")");
  c.oh = (c.h + 2 * pad - c.kh) / stride + 1;
  c.ow = (c.w + 2 * pad - c.kw) / stride + 1;

  auto cols = std::make_shared<std::vector<T>>(c.patch() * c.positions());
  im2col(xv.ptr(), c, cols->data());
  Tensor<T> out(Shape{c.co, c.oh, c.ow});
  kernels::gemm_nn(c.co, c.positions(), c.patch(), kv.ptr(), cols->data(), out.ptr());

  return g.record("conv2d", std::move(out), {input, kernel},
                  [input, kernel, c, cols](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    if (g.needs_grad(kernel)) {
                      const auto colsT = transposed(cols->data(), c.patch(), c.positions());
                      kernels::gemm_nn(c.co, c.patch(), c.positions(), d.ptr(), colsT.data(),
                                       g.grad_buffer(kernel).ptr());
                    }
                    if (g.needs_grad(input)) {
                      std::vector<T> dcols(c.patch() * c.positions(), T(0));
                      kernels::gemm_tn(c.patch(), c.positions(), c.co, g.value(kernel).ptr(), d.ptr(),
                                       dcols.data());
                      col2im_add(dcols.data(), c, g.grad_buffer(input).ptr());
                    }
                  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  auto& g = graph_of(x, "add_channel_bias");
  const auto& xv = x.value();
  const auto& bv = bias.value();
  require_rank(xv.shape(), 3, "add_channel_bias");
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  if (bv.numel() != c)
    throw ShapeError("add_channel_bias: bias " + shape_str(bv.shape()) + " vs input " + shape_str(xv.shape()));
  Tensor<T> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] + bv[ch];
  return g.record("add_channel_bias", std::move(out), {x, bias}, [x, bias, c, hw](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    if (g.needs_grad(x)) {
      auto& gx = g.grad_buffer(x);
      for (std::size_t i = 0; i < c * hw; ++i) gx[i] += d[i];
    }
    if (g.needs_grad(bias)) {
      auto& gb = g.grad_buffer(bias);
      for (std::size_t ch = 0; ch < c; ++ch) {
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += d[ch * hw + i];
        gb[ch] += s;
      }
    }
  });
}

template <typename T>
Var<T> channel_affine(Var<T> x, Var<T> scale_v, Var<T> shift_v) {
  auto& g = graph_of(x, "channel_affine");
  const auto& xv = x.value();
  const auto& sv = scale_v.value();
  const auto& tv = shift_v.value();
  require_rank(xv.shape(), 3, "channel_affine");
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  if (sv.numel() != c || tv.numel() != c)
    throw ShapeError("channel_affine: scale " + shape_str(sv.shape()) + " / shift " + shape_str(tv.shape()) +
                     " vs input " + shape_str(xv.shape()));
  Tensor<T> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = sv[ch] * xv[ch * hw + i] + tv[ch];
  return g.record("channel_affine", std::move(out), {x, scale_v, shift_v},
                  [x, scale_v, shift_v, c, hw](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    const auto& xv = g.value(x);
                    const auto& sv = g.value(scale_v);
                    if (g.needs_grad(x)) {
                      auto& gx = g.grad_buffer(x);
                      for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] += sv[ch] * d[ch * hw + i];
                    }
                    if (g.needs_grad(scale_v)) {
                      auto& gs = g.grad_buffer(scale_v);
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        T s = 0;
                        for (std::size_t i = 0; i < hw; ++i) s += d[ch * hw + i] * xv[ch * hw + i];
                        gs[ch] += s;
                      }
                    }
                    if (g.needs_grad(shift_v)) {
                      auto& gt = g.grad_buffer(shift_v);
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        T s = 0;
                        for (std::size_t i = 0; i < hw; ++i) s += d[ch * hw + i];
                        gt[ch] += s;
                      }
                    }
                  });
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  auto& g = graph_of(x, "upsample_nearest");
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2), H = h * factor, W = w * factor;
  Tensor<T> out(Shape{c, H, W});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) out[(ch * H + y) * W + xx] = xv[(ch * h + y / factor) * w + xx / factor];
  return g.record("upsample_nearest", std::move(out), {x}, [x, c, h, w, H, W, factor](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) gx[(ch * h + y / factor) * w + xx / factor] += d[(ch * H + y) * W + xx];
  });
}

template <typename T>
Var<T> avg_pool2d(Var<T> x, std::size_t factor) {
  auto& g = graph_of(x, "avg_pool2d");
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "avg_pool2d");
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (factor < 1 || h % factor || w % factor)
    throw ShapeError("avg_pool2d: factor " + std::to_string(factor) + " does not divide " + shape_str(xv.shape()));
  const std::size_t H = h / factor, W = w / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  Tensor<T> out(Shape{c, H, W});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        T s = 0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) s += xv[(ch * h + y * factor + dy) * w + xx * factor + dx];
        out[(ch * H + y) * W + xx] = s * inv;
      }
  return g.record("avg_pool2d", std::move(out), {x}, [x, c, h, w, H, W, factor, inv](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) gx[(ch * h + y) * w + xx] += d[(ch * H + y / factor) * W + xx / factor] * inv;
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  auto& g = graph_of(x, "softmax_rows");
  const auto& xv = x.value();
  require_rank(xv.shape(), 2, "softmax_rows");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = xv.ptr() + i * c;
    T* o = out.ptr() + i * c;
    const T mx = *std::max_element(row, row + c);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(row[j] - mx);
      s += o[j];
    }
    const T inv = T(1) / s;
    for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
  }
  return g.record("softmax_rows", std::move(out), {x}, [x, r, c](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i) {
      const T* yr = y.ptr() + i * c;
      const T* dr = d.ptr() + i * c;
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += yr[j] * dr[j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yr[j] * (dr[j] - dot);
    }
  });
}

template <typename T>
Var<T> instance_norm(Var<T> x, double eps) {
  auto& g = graph_of(x, "instance_norm");
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "instance_norm");
  const std::size_t c = xv.dim(0), n = xv.dim(1) * xv.dim(2);
  Tensor<T> out(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = xv.ptr() + ch * n;
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[ch] = is;
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = (src[i] - mean) * is;
  }
  return g.record("instance_norm", std::move(out), {x}, [x, c, n, inv_std](Graph<T>& g, const Tensor<T>& xhat, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    const T fn = static_cast<T>(n);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* dy = d.ptr() + ch * n;
      const T* xh = xhat.ptr() + ch * n;
      T sum_d = 0, sum_dx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_d += dy[i];
        sum_dx += dy[i] * xh[i];
      }
      const T k = (*inv_std)[ch] / fn;
      for (std::size_t i = 0; i < n; ++i) gx[ch * n + i] += k * (fn * dy[i] - sum_d - xh[i] * sum_dx);
    }
  });
}

template <typename T>
Var<T> reduce_sum(Var<T> x) {
  auto& g = graph_of(x, "reduce_sum");
  const auto& xv = x.value();
  T s = 0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  return g.record("reduce_sum", Tensor<T>::scalar(s), {x}, [x](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += d[0];
  });
}

template <typename T>
Var<T> reduce_mean(Var<T> x) {
  auto& g = graph_of(x, "reduce_mean");
  const auto& xv = x.value();
  T s = 0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const T inv = T(1) / static_cast<T>(xv.numel());
  return g.record("reduce_mean", Tensor<T>::scalar(s * inv), {x}, [x, inv](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    auto& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += d[0] * inv;
  });
}

namespace {

template <typename T>
Var<T> abs_diff_reduce(Var<T> a, Var<T> b, bool mean, std::string_view name) {
  auto& g = graph_of(a, name);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape())
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  T s = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += std::abs(av[i] - bv[i]);
  const T k = mean ? T(1) / static_cast<T>(av.numel()) : T(1);
  return g.record(name, Tensor<T>::scalar(s * k), {a, b}, [a, b, k](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    const T dk = d[0] * k;
    const bool ga = g.needs_grad(a), gb = g.needs_grad(b);
    Tensor<T>* pa = ga ? &g.grad_buffer(a) : nullptr;
    Tensor<T>* pb = gb ? &g.grad_buffer(b) : nullptr;
    for (std::size_t i = 0; i < av.numel(); ++i) {
      const T diff = av[i] - bv[i];
      const T sgn = diff > T(0) ? T(1) : diff < T(0) ? T(-1) : T(0);
      if (pa) (*pa)[i] += dk * sgn;
      if (pb) (*pb)[i] -= dk * sgn;
    }
  });
}

template <typename T>
T norm2(const Tensor<T>& v) {
  T s = 0;
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

template <typename T>
Var<T> l1_norm(Var<T> a, Var<T> b) {
  return abs_diff_reduce(a, b, false, "l1_norm");
}

template <typename T>
Var<T> mean_abs_diff(Var<T> a, Var<T> b) {
  return abs_diff_reduce(a, b, true, "mean_abs_diff");
}

template <typename T>
Var<T> cosine_similarity(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, "cosine_similarity");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape())
    throw ShapeError("cosine_similarity: shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const T na = norm2(av), nb = norm2(bv);
  if (!(na > T(0)) || !(nb > T(0))) throw DegenerateInputError("cosine_similarity: zero-norm input");
  T dot = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) dot += av[i] * bv[i];
  const T cosv = dot / (na * nb);
  return g.record("cosine_similarity", Tensor<T>::scalar(cosv), {a, b},
                  [a, b, na, nb, cosv](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    const auto& av = g.value(a);
                    const auto& bv = g.value(b);
                    const T inv = T(1) / (na * nb);
                    if (g.needs_grad(a)) {
                      auto& ga = g.grad_buffer(a);
                      for (std::size_t i = 0; i < av.numel(); ++i)
                        ga[i] += d[0] * (bv[i] * inv - cosv * av[i] / (na * na));
                    }
                    if (g.needs_grad(b)) {
                      auto& gb = g.grad_buffer(b);
                      for (std::size_t i = 0; i < bv.numel(); ++i)
                        gb[i] += d[0] * (av[i] * inv - cosv * bv[i] / (nb * nb));
                    }
                  });
}

template <typename T>
Var<T> l2_normalize(Var<T> a) {
  auto& g = graph_of(a, "l2_normalize");
  const auto& av = a.value();
  const T n = norm2(av);
  if (!(n > T(0))) throw DegenerateInputError("l2_normalize: zero-norm input");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] / n;
  return g.record("l2_normalize", std::move(out), {a}, [a, n](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
    auto& ga = g.grad_buffer(a);
    T dot = 0;
    for (std::size_t i = 0; i < d.numel(); ++i) dot += y[i] * d[i];
    for (std::size_t i = 0; i < d.numel(); ++i) ga[i] += (d[i] - y[i] * dot) / n;
  });
}

#define MSWAP_INSTANTIATE_OPS(T)                                                       \
  template Var<T> add(Var<T>, Var<T>);                                                 \
  template Var<T> sub(Var<T>, Var<T>);                                                 \
  template Var<T> mul(Var<T>, Var<T>);                                                 \
  template Var<T> scale(Var<T>, double);                                               \
  template Var<T> add_scalar(Var<T>, double);                                          \
  template Var<T> leaky_relu(Var<T>, double);                                          \
  template Var<T> relu(Var<T>);                                                        \
  template Var<T> tanh(Var<T>);                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                              \
  template Var<T> transpose(Var<T>);                                                   \
  template Var<T> reshape(Var<T>, Shape);                                              \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                     \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, std::size_t);                    \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                                    \
  template Var<T> channel_affine(Var<T>, Var<T>, Var<T>);                              \
  template Var<T> upsample_nearest(Var<T>, std::size_t);                               \
  template Var<T> avg_pool2d(Var<T>, std::size_t);                                     \
  template Var<T> softmax_rows(Var<T>);                                                \
  template Var<T> instance_norm(Var<T>, double);                                       \
  template Var<T> reduce_sum(Var<T>);                                                  \
  template Var<T> reduce_mean(Var<T>);                                                 \
  template Var<T> l1_norm(Var<T>, Var<T>);                                             \
  template Var<T> mean_abs_diff(Var<T>, Var<T>);                                       \
  template Var<T> cosine_similarity(Var<T>, Var<T>);                                   \
  template Var<T> l2_normalize(Var<T>);                                                \
  template void kernels::gemm_nn(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void kernels::gemm_tn(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);

MSWAP_INSTANTIATE_OPS(float)
MSWAP_INSTANTIATE_OPS(double)

}  // namespace mswap
