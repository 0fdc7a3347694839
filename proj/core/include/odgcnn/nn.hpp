#pragma once

#include <cstddef>
#include <string>

#include "odgcnn/ops.hpp"
#include "odgcnn/params.hpp"

namespace odgcnn::nn {

// Registers "<name>.w" [in, out] and "<name>.b" [out].
void register_linear(ParamRegistry& params, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                     double gain = 1.0, double bias = 0.0);

// x @ W + b using the tensors registered under name.
Tensor linear(const ParamRegistry& params, const std::string& name, const Tensor& x);

// Constant (non-differentiable) tensor view of a plain vector.
Tensor constant(Shape shape, std::vector<double> values);

}  // namespace odgcnn::nn
