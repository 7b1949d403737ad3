#include "mswap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mswap {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double grad_check(const ScalarFn& f, const Tensor<double>& x, double h) {
  Tensor<double> analytic;
  {
    Graph<double> g;
    Var<double> xv = g.variable(x);
    g.backward(f(g, xv));
    analytic = g.grad_buffer(xv);
  }
  auto eval = [&](const Tensor<double>& at) {
    Graph<double> g;
    return f(g, g.constant(at)).value().item();
  };
  double worst = 0.0;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe[i] = x[i] + h;
    const double fp = eval(probe);
    probe[i] = x[i] - h;
    const double fm = eval(probe);
    probe[i] = x[i];
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

GradCheckResult grad_check_params(const GraphFn& f, ParameterStore<double>& params, double h,
                                  std::size_t max_per_param) {
  params.zero_grad();
  {
    Graph<double> g;
    g.backward(f(g));
  }
  auto eval = [&] {
    Graph<double> g;
    return f(g).value().item();
  };
  GradCheckResult result;
  for (auto& p : params) {
    if (!p.requires_grad) continue;
    const std::size_t n = p.value.numel();
    const std::size_t stride = n <= max_per_param ? 1 : (n + max_per_param - 1) / max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = eval();
      p.value[i] = orig - h;
      const double fm = eval();
      p.value[i] = orig;
      const double err = relative_error(p.grad[i], (fp - fm) / (2.0 * h));
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace mswap
