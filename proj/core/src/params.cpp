#include "odgcnn/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odgcnn {

Tensor& ParamRegistry::add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  return params_.emplace(name, std::move(value)).first->second;
}

const Tensor& ParamRegistry::get(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamRegistry::get(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : params_) total += t.numel();
  return total;
}

std::vector<std::string> ParamRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

void ParamRegistry::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

ParamRegistry ParamRegistry::clone() const {
  ParamRegistry out;
  for (const auto& [name, t] : params_) out.add(name, t.clone(true));
  return out;
}

void ParamRegistry::copy_values_from(const ParamRegistry& other) {
  for (auto& [name, t] : params_) {
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw std::invalid_argument("parameter " + name + " has shape " + shape_string(t.shape()) + ", source has " +
                                  shape_string(src.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out, double gain) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

}  // namespace odgcnn
