#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "odgcnn/geometry.hpp"
#include "odgcnn/params.hpp"
#include "odgcnn/scene.hpp"
#include "odgcnn/tensor.hpp"

namespace odgcnn {

// Ground-plane raster. Cell (ix, iy) covers [x_min + ix*cell, x_min + (ix+1)*cell)
// x [y_min + iy*cell, ...); flat index iy * width + ix.
struct GridSpec {
  double x_min = -16.0;
  double y_min = -16.0;
  double cell = 0.5;
  std::size_t width = 64;
  std::size_t height = 64;

  void validate() const;
  std::size_t cells() const { return width * height; }
  double x_max() const { return x_min + cell * static_cast<double>(width); }
  double y_max() const { return y_min + cell * static_cast<double>(height); }
  Point2 cell_center(std::size_t ix, std::size_t iy) const;
  GridSpec downsampled(std::size_t factor) const;
  bool operator==(const GridSpec&) const = default;
};

// Dense H x W x C feature map stored as a [H*W, C] tensor.
struct BevGrid {
  GridSpec spec;
  std::size_t channels = 0;
  Tensor data;
};

struct PillarAssignment {
  std::vector<std::size_t> cells;                       // ascending flat cell indices of non-empty pillars
  std::vector<std::vector<std::size_t>> point_indices;  // members of each pillar, ascending
  std::size_t dropped = 0;                              // points outside the grid
};

PillarAssignment pillarize(const PointCloud& cloud, const GridSpec& spec);

// Per-point pillar input: intensity, x / E, y / E, z / 2 m, offsets to the
// pillar centre in cell units (x, y), and z minus the pillar's mean z.
inline constexpr std::size_t kPointFeatureDim = 7;

// Everything about a scene the featurizer needs that does not depend on
// learned weights; computed once per scene.
struct PillarBatch {
  GridSpec spec;
  Tensor features;                   // [total member points, kPointFeatureDim]; undefined when empty
  std::vector<std::size_t> offsets;  // pillar p owns rows [offsets[p], offsets[p+1])
  std::vector<std::size_t> cells;
  std::size_t dropped = 0;

  std::size_t pillar_count() const { return cells.size(); }
};

PillarBatch make_pillar_batch(const PointCloud& cloud, const GridSpec& spec, double half_extent);

struct PointNetParams {
  Tensor w1, b1, w2, b2;
};

// Shared two-layer ReLU MLP per point, then channel-wise max over the points.
Tensor pointnet_pillar(const Tensor& point_features, const PointNetParams& params);
// Batched form over all pillars of a scene: [P, C].
Tensor pointnet_pillars(const Tensor& point_features, std::span<const std::size_t> offsets, const PointNetParams& params);

BevGrid scatter_to_grid(const Tensor& pillar_features, std::span<const std::size_t> cells, const GridSpec& spec);

struct ConvBlock {
  Tensor weight;  // [9 * c_in, c_out]
  Tensor bias;    // [c_out]
  std::size_t stride = 1;
};

// 3x3 conv + ReLU blocks. Every stride must divide the current grid evenly.
BevGrid conv_backbone(const BevGrid& grid, std::span<const ConvBlock> blocks);

struct BevConfig {
  GridSpec grid;
  double half_extent = 16.0;
  std::size_t pointnet_hidden = 16;
  std::size_t pointnet_out = 16;
  std::vector<std::size_t> conv_channels = {16, 32, 32};
  std::vector<std::size_t> conv_strides = {1, 2, 1};

  std::size_t out_channels() const { return conv_channels.back(); }
  GridSpec out_spec() const;
};

// Pillar featurizer plus convolutional backbone producing F^d. Parameters
// live in a registry under "<prefix>." so several models can share one.
class BevEncoder {
 public:
  BevEncoder(BevConfig config, std::string prefix = "bev");

  void register_params(ParamRegistry& params, Rng& rng) const;
  BevGrid forward(const PillarBatch& batch, const ParamRegistry& params) const;

  const BevConfig& config() const { return config_; }

 private:
  BevConfig config_;
  std::string prefix_;
};

}  // namespace odgcnn
