#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mswap/parameter.hpp"

namespace mswap {

enum class LrPolicy { Constant, StepDecay, Cosine };
std::string_view to_string(LrPolicy p);
LrPolicy lr_policy_from_string(std::string_view s);

/// Everything needed to evaluate the loss-weight and learning-rate schedules
/// at step t.
struct ScheduleState {
  std::uint64_t t = 0;
  std::uint64_t total_steps = 2000;
  double gamma = 1.0;
  double lambda_id_max = 40.0;
  double lambda_rec_max = 2.0;
  /// When false the weights stay at their maxima ("static weights").
  bool dynamic_weights = true;
  double eta_max = 2e-4;
  double eta_min = 2e-6;
  std::uint64_t t_cycle = 2000;
  LrPolicy lr_policy = LrPolicy::Cosine;

  void validate() const;
  ScheduleState at(std::uint64_t step) const {
    ScheduleState s = *this;
    s.t = step;
    return s;
  }
};

/// lambda_id_max * (1 - t / T_total)^gamma
double lambda_id_at(const ScheduleState& s);
/// lambda_rec_max * (1 - t / T_total)^gamma
double lambda_rec_at(const ScheduleState& s);

/// eta_min + (eta_max - eta_min) (1 + cos(pi t' / T_cycle)) / 2, where t' is t
/// folded into (0, T_cycle] (t' = 0 only at t = 0), so the last step of every
/// cycle reaches eta_min and the next step restarts near eta_max.
double cosine_lr(const ScheduleState& s);

/// Dispatches on s.lr_policy: constant eta_max, step decay (x0.1 at 50% and
/// again at 75% of total_steps) or cosine annealing.
double lr_at(const ScheduleState& s);

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;  // one per parameter, store order
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update of every parameter with requires_grad set,
/// using p.grad. Moment buffers are created on first use. Throws
/// NumericalError naming the parameter if any gradient is non-finite; in
/// that case nothing is modified.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& st, double lr);

}  // namespace mswap
