#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "odgcnn/rng.hpp"
#include "odgcnn/tensor.hpp"

namespace odgcnn {

// Named trainable tensors. std::map keeps iteration lexicographic by name,
// which fixes the order of optimizer updates and checkpoint entries.
class ParamRegistry {
 public:
  Tensor& add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // Independent leaves with copied values; grads are not copied.
  ParamRegistry clone() const;
  void copy_values_from(const ParamRegistry& other);

 private:
  std::map<std::string, Tensor> params_;
};

// He-style uniform initialisation for a [fan_in, fan_out] weight.
Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out, double gain = 1.0);

}  // namespace odgcnn
