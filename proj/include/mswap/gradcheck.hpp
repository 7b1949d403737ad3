#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include "mswap/graph.hpp"

namespace mswap {

/// |a - b| / max(1, |a|, |b|)
double relative_error(double a, double b);

using ScalarFn = std::function<Var<double>(Graph<double>&, Var<double>)>;
using GraphFn = std::function<Var<double>(Graph<double>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index]" of the worst entry
  std::size_t checked = 0;
};

/// Compares the reverse-mode gradient of scalar f at x against central
/// differences with step h; returns the largest relative error.
double grad_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-5);

/// Same check against every parameter of `params`. At most `max_per_param`
/// entries per tensor are probed, evenly strided, so large models stay cheap.
GradCheckResult grad_check_params(const GraphFn& f, ParameterStore<double>& params, double h = 1e-5,
                                  std::size_t max_per_param = std::numeric_limits<std::size_t>::max());

}  // namespace mswap
