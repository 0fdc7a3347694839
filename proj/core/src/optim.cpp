#include "odgcnn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace odgcnn {

double cyclic_lr(std::size_t step, std::size_t total_steps, double lr_initial, double lr_peak, double lr_final,
                 double warmup_fraction) {
  if (step > total_steps) {
    throw std::out_of_range("cyclic_lr: step " + std::to_string(step) + " beyond total " + std::to_string(total_steps));
  }
  if (lr_initial <= 0 || lr_peak <= 0 || lr_final <= 0) throw std::invalid_argument("cyclic_lr: rates must be positive");
  if (step == 0) return lr_initial;
  if (step == total_steps) return lr_final;
  const double s = static_cast<double>(step);
  const double boundary = warmup_fraction * static_cast<double>(total_steps);
  if (s == boundary) return lr_peak;
  const auto log_lerp = [](double a, double b, double t) { return std::exp(std::log(a) + t * (std::log(b) - std::log(a))); };
  if (s < boundary) return log_lerp(lr_initial, lr_peak, s / boundary);
  return log_lerp(lr_peak, lr_final, (s - boundary) / (static_cast<double>(total_steps) - boundary));
}

void AdamW::step(ParamRegistry& params, double lr) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw std::invalid_argument("adamw: parameter " + name + " has no gradient");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, p] : params) {
    Moments& mom = moments_[name];
    if (mom.m.empty()) {
      mom.m.assign(p.numel(), 0.0);
      mom.v.assign(p.numel(), 0.0);
    }
    auto value = p.mutable_data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = mom.m[i] / bias1;
      const double v_hat = mom.v[i] / bias2;
      value[i] -= lr * config_.weight_decay * value[i];
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    p.clear_grad();
  }
}

}  // namespace odgcnn
