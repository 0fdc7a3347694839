#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "odgcnn/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// at least one operand requires a gradient. Matrices are row-major; ops that
// talk about "rows" treat a tensor as [numel / last_dim, last_dim].
namespace odgcnn::ops {

inline constexpr double kProbClamp = 1e-12;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x: [n, m], bias: [m]; adds bias to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastaxis(const Tensor& x);

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> index;  // arg-max per row, lowest index on ties
};
MaxResult max_lastaxis(const Tensor& x);

Tensor concat_lastaxis(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// Inverse of gather for unique indices: row i of x lands in row index[i] of an
// n_rows-row zero matrix. Duplicate destinations are rejected.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t n_rows);
// Channel-wise max over consecutive row segments [offsets[s], offsets[s+1]).
Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets);
// weights: [n, k], rows: [n * k, d] -> [n, d] with out_i = sum_k w_ik rows_{i*k+k}.
Tensor weighted_row_sum(const Tensor& weights, const Tensor& rows);
Tensor sum_all(const Tensor& x);
// Sum of absolute differences.
Tensor l1(const Tensor& a, const Tensor& b);
// Sum over rows of -log(max(p[r, class_index[r]], kProbClamp)).
Tensor neg_log_prob(const Tensor& p, std::span<const std::size_t> class_index);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

// 3x3 convolution with zero padding 1. x: [height * width, c_in] (HWC),
// weight: [9 * c_in, c_out] with row (ky * 3 + kx) * c_in + c.
Tensor conv2d_3x3(const Tensor& x, std::size_t height, std::size_t width, const Tensor& weight,
                  std::size_t stride);

// Bilinear lookup on an HWC grid. points: [n, 2] as (x, y) in continuous cell
// units, cell (i, j) centred at (i + 0.5, j + 0.5); coordinates are clamped
// to the border cell centres. Differentiable in both grid and points.
Tensor bilinear_sample(const Tensor& grid, std::size_t height, std::size_t width, const Tensor& points);

}  // namespace odgcnn::ops
