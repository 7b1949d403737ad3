#include "mswap/schedules.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mswap {

std::string_view to_string(LrPolicy p) {
  switch (p) {
    case LrPolicy::Constant: return "constant";
    case LrPolicy::StepDecay: return "step";
    case LrPolicy::Cosine: return "cosine";
  }
  return "?";
}

LrPolicy lr_policy_from_string(std::string_view s) {
  if (s == "constant") return LrPolicy::Constant;
  if (s == "step") return LrPolicy::StepDecay;
  if (s == "cosine") return LrPolicy::Cosine;
  throw ContractError("unknown lr policy '" + std::string(s) + "' (expected constant, step or cosine)");
}

void ScheduleState::validate() const {
  if (total_steps == 0) throw ContractError("schedule: total_steps must be > 0");
  if (t_cycle == 0) throw ContractError("schedule: t_cycle must be > 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("schedule: gamma must be > 0");
  if (lambda_id_max < 0.0 || lambda_rec_max < 0.0) throw ContractError("schedule: negative loss weight");
  if (!(eta_max > 0.0) || eta_min < 0.0 || eta_min > eta_max)
    throw ContractError("schedule: need 0 <= eta_min <= eta_max, eta_max > 0");
}

namespace {

double decay(const ScheduleState& s, double max) {
  s.validate();
  if (s.t > s.total_steps)
    throw ContractError("schedule: step " + std::to_string(s.t) + " is past total_steps " +
                        std::to_string(s.total_steps));
  if (!s.dynamic_weights) return max;
  const double frac = 1.0 - static_cast<double>(s.t) / static_cast<double>(s.total_steps);
  return max * std::pow(frac, s.gamma);
}

}  // namespace

double lambda_id_at(const ScheduleState& s) { return decay(s, s.lambda_id_max); }
double lambda_rec_at(const ScheduleState& s) { return decay(s, s.lambda_rec_max); }

double cosine_lr(const ScheduleState& s) {
  s.validate();
  const std::uint64_t tp = s.t == 0 ? 0 : (s.t - 1) % s.t_cycle + 1;
  const double c = std::cos(std::numbers::pi * static_cast<double>(tp) / static_cast<double>(s.t_cycle));
  return s.eta_min + (s.eta_max - s.eta_min) * 0.5 * (1.0 + c);
}

double lr_at(const ScheduleState& s) {
  s.validate();
  switch (s.lr_policy) {
    case LrPolicy::Constant: return s.eta_max;
    case LrPolicy::StepDecay: {
      double lr = s.eta_max;
      if (2 * s.t >= s.total_steps) lr *= 0.1;
      if (4 * s.t >= 3 * s.total_steps) lr *= 0.1;
      return lr;
    }
    case LrPolicy::Cosine: return cosine_lr(s);
  }
  throw ContractError("lr_at: bad policy");
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& st, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("adam_step: learning rate must be finite and >= 0");
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.value.shape());
      st.v.emplace_back(p.value.shape());
    }
  }
  if (st.m.size() != params.size() || st.v.size() != params.size())
    throw ContractError("adam_step: moment buffers do not match the parameter store");
  std::size_t i = 0;
  for (const auto& p : params) {
    if (st.m[i].shape() != p.value.shape() || st.v[i].shape() != p.value.shape())
      throw ShapeError("adam_step: moment shape mismatch for " + p.name);
    if (p.requires_grad && !p.grad.all_finite()) throw NumericalError("non-finite gradient in parameter " + p.name);
    ++i;
  }

  ++st.step;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  i = 0;
  for (auto& p : params) {
    if (p.requires_grad) {
      T* w = p.value.ptr();
      const T* g = p.grad.ptr();
      T* m = st.m[i].ptr();
      T* v = st.v[i].ptr();
      for (std::size_t k = 0; k < p.value.numel(); ++k) {
        const double gk = g[k];
        const double mk = b1 * m[k] + (1.0 - b1) * gk;
        const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        w[k] = static_cast<T>(w[k] - lr * (mk / bc1) / (std::sqrt(vk / bc2) + st.cfg.eps));
      }
    }
    ++i;
  }
}

template void adam_step(ParameterStore<float>&, AdamState<float>&, double);
template void adam_step(ParameterStore<double>&, AdamState<double>&, double);

}  // namespace mswap
