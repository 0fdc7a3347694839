#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "odgcnn/params.hpp"

namespace odgcnn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct CyclicSchedule {
  double lr_initial = 1e-4;
  double lr_peak = 1e-3;
  double lr_final = 1e-8;
  double warmup_fraction = 0.4;
};

// Log-linear ramp lr_initial -> lr_peak over the first warmup_fraction of the
// steps, then log-linear decay to lr_final at step == total_steps.
double cyclic_lr(std::size_t step, std::size_t total_steps, double lr_initial, double lr_peak, double lr_final,
                 double warmup_fraction = 0.4);
inline double cyclic_lr(std::size_t step, std::size_t total_steps, const CyclicSchedule& s) {
  return cyclic_lr(step, total_steps, s.lr_initial, s.lr_peak, s.lr_final, s.warmup_fraction);
}

class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Applies one decoupled-weight-decay Adam update to every parameter and
  // clears the gradients. Throws if a parameter has no gradient.
  void step(ParamRegistry& params, double lr);

  std::size_t step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<double>& first_moment(const std::string& name) const { return moments_.at(name).m; }
  const std::vector<double>& second_moment(const std::string& name) const { return moments_.at(name).v; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace odgcnn
