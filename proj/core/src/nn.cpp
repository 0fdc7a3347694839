#include "odgcnn/nn.hpp"

namespace odgcnn::nn {

void register_linear(ParamRegistry& params, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                     double gain, double bias) {
  params.add(name + ".w", init_weight(rng, in, out, gain));
  params.add(name + ".b", Tensor::full({out}, bias, true));
}

Tensor linear(const ParamRegistry& params, const std::string& name, const Tensor& x) {
  return ops::add_bias(ops::matmul(x, params.get(name + ".w")), params.get(name + ".b"));
}

Tensor constant(Shape shape, std::vector<double> values) { return Tensor::from(std::move(shape), std::move(values), false); }

}  // namespace odgcnn::nn
