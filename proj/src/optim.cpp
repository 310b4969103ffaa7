#include "loglab/optim.hpp"

#include <cmath>
#include <numbers>

#include "loglab/error.hpp"

namespace loglab::nn {

void adamw_step(ParamStore& store, double lr, const AdamWConfig& config) {
  for (const auto& p : store.params())
    if (p.grad.size() != p.value.size()) throw NumericError("adamw_step: missing gradient for " + p.name);

  store.step_count += 1;
  const double t = static_cast<double>(store.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : store.params()) {
    p.value *= 1.0 - lr * config.weight_decay;
    p.first_moment = config.beta1 * p.first_moment + (1.0 - config.beta1) * p.grad;
    p.second_moment =
        config.beta2 * p.second_moment + (1.0 - config.beta2) * p.grad.cwiseProduct(p.grad);
    const auto m_hat = p.first_moment.array() / correction1;
    const auto v_hat = p.second_moment.array() / correction2;
    p.value.array() -= lr * m_hat / (v_hat.sqrt() + config.eps);
  }
}

void OneCycleSchedule::validate() const {
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw ConfigError("onecycle: pct_start must lie in (0,1)");
  if (total_steps < 2) throw ConfigError("onecycle: total_steps must be >= 2");
  if (!(max_lr >= 0.0)) throw ConfigError("onecycle: max_lr must be >= 0");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) throw ConfigError("onecycle: divisors must be > 0");
}

namespace {

double cosine_anneal(double start, double end, double fraction) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * fraction));
}

}  // namespace

double onecycle_lr(const OneCycleSchedule& s, long step) {
  s.validate();
  if (step < 0 || step >= s.total_steps)
    throw ConfigError("onecycle: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(s.total_steps) + ")");
  const double initial = s.max_lr / s.div_factor;
  const double final_lr = s.max_lr / s.final_div_factor;
  const double peak_step = std::max(1.0, s.pct_start * static_cast<double>(s.total_steps) - 1.0);
  const double last_step = static_cast<double>(s.total_steps - 1);
  const auto x = static_cast<double>(step);
  if (x <= peak_step) return cosine_anneal(initial, s.max_lr, x / peak_step);
  if (last_step <= peak_step) return final_lr;
  return cosine_anneal(s.max_lr, final_lr, (x - peak_step) / (last_step - peak_step));
}

}  // namespace loglab::nn
