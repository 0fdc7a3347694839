#include "odgcnn/bev.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "odgcnn/nn.hpp"
#include "odgcnn/ops.hpp"

namespace odgcnn {

void GridSpec::validate() const {
  if (!(cell > 0)) throw std::invalid_argument("grid spec: cell size must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("grid spec: width and height must be >= 1");
}

Point2 GridSpec::cell_center(std::size_t ix, std::size_t iy) const {
  return {x_min + (static_cast<double>(ix) + 0.5) * cell, y_min + (static_cast<double>(iy) + 0.5) * cell};
}

GridSpec GridSpec::downsampled(std::size_t factor) const {
  if (factor == 0 || width % factor || height % factor) {
    throw std::invalid_argument("grid " + std::to_string(height) + "x" + std::to_string(width) +
                                " cannot be downsampled by " + std::to_string(factor));
  }
  GridSpec out = *this;
  out.cell = cell * static_cast<double>(factor);
  out.width = width / factor;
  out.height = height / factor;
  return out;
}

PillarAssignment pillarize(const PointCloud& cloud, const GridSpec& spec) {
  spec.validate();
  std::map<std::size_t, std::vector<std::size_t>> members;
  PillarAssignment out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double fx = std::floor((cloud[i].x - spec.x_min) / spec.cell);
    const double fy = std::floor((cloud[i].y - spec.y_min) / spec.cell);
    if (fx < 0 || fy < 0 || fx >= static_cast<double>(spec.width) || fy >= static_cast<double>(spec.height)) {
      ++out.dropped;
      continue;
    }
    members[static_cast<std::size_t>(fy) * spec.width + static_cast<std::size_t>(fx)].push_back(i);
  }
  for (auto& [cell, idx] : members) {
    out.cells.push_back(cell);
    out.point_indices.push_back(std::move(idx));
  }
  return out;
}

PillarBatch make_pillar_batch(const PointCloud& cloud, const GridSpec& spec, double half_extent) {
  const PillarAssignment pillars = pillarize(cloud, spec);
  PillarBatch batch;
  batch.spec = spec;
  batch.cells = pillars.cells;
  batch.dropped = pillars.dropped;
  batch.offsets.push_back(0);
  std::vector<double> feats;
  for (std::size_t p = 0; p < pillars.cells.size(); ++p) {
    const auto& idx = pillars.point_indices[p];
    const Point2 centre = spec.cell_center(pillars.cells[p] % spec.width, pillars.cells[p] / spec.width);
    // Sorted summation keeps the mean independent of point order.
    std::vector<double> zs;
    zs.reserve(idx.size());
    for (std::size_t i : idx) zs.push_back(cloud[i].z);
    std::sort(zs.begin(), zs.end());
    double mean_z = 0.0;
    for (double z : zs) mean_z += z;
    mean_z /= static_cast<double>(idx.size());
    for (std::size_t i : idx) {
      const LidarPoint& pt = cloud[i];
      feats.insert(feats.end(), {pt.intensity, pt.x / half_extent, pt.y / half_extent, pt.z / 2.0,
                                 (pt.x - centre.x) / spec.cell, (pt.y - centre.y) / spec.cell, pt.z - mean_z});
    }
    batch.offsets.push_back(batch.offsets.back() + idx.size());
  }
  if (!feats.empty()) batch.features = Tensor::from({batch.offsets.back(), kPointFeatureDim}, std::move(feats));
  return batch;
}

namespace {

Tensor point_mlp(const Tensor& x, const PointNetParams& p) {
  if (x.cols() != p.w1.dim(0)) {
    throw std::invalid_argument("pointnet: point feature dimension " + std::to_string(x.cols()) + " but layer expects " +
                                std::to_string(p.w1.dim(0)));
  }
  Tensor h = ops::relu(ops::add_bias(ops::matmul(x, p.w1), p.b1));
  return ops::relu(ops::add_bias(ops::matmul(h, p.w2), p.b2));
}

}  // namespace

Tensor pointnet_pillar(const Tensor& point_features, const PointNetParams& params) {
  const std::size_t offsets[] = {0, point_features.rows()};
  return ops::segment_max(point_mlp(point_features, params), offsets);
}

Tensor pointnet_pillars(const Tensor& point_features, std::span<const std::size_t> offsets, const PointNetParams& params) {
  return ops::segment_max(point_mlp(point_features, params), offsets);
}

BevGrid scatter_to_grid(const Tensor& pillar_features, std::span<const std::size_t> cells, const GridSpec& spec) {
  for (std::size_t c : cells) {
    if (c >= spec.cells()) throw std::out_of_range("scatter_to_grid: pillar cell " + std::to_string(c) + " outside grid");
  }
  return BevGrid{spec, pillar_features.cols(), ops::scatter_rows(pillar_features, cells, spec.cells())};
}

BevGrid conv_backbone(const BevGrid& grid, std::span<const ConvBlock> blocks) {
  if (grid.spec.width % 2 || grid.spec.height % 2) {
    throw std::invalid_argument("conv_backbone: input grid " + std::to_string(grid.spec.height) + "x" +
                                std::to_string(grid.spec.width) + " must have even dimensions");
  }
  BevGrid cur = grid;
  for (const ConvBlock& block : blocks) {
    if (block.weight.dim(0) != 9 * cur.channels) {
      throw std::invalid_argument("conv_backbone: block expects " + std::to_string(block.weight.dim(0) / 9) +
                                  " input channels, grid has " + std::to_string(cur.channels));
    }
    const GridSpec next_spec = cur.spec.downsampled(block.stride);
    Tensor y = ops::conv2d_3x3(cur.data, cur.spec.height, cur.spec.width, block.weight, block.stride);
    y = ops::relu(ops::add_bias(y, block.bias));
    cur = BevGrid{next_spec, block.weight.dim(1), y};
  }
  return cur;
}

GridSpec BevConfig::out_spec() const {
  GridSpec spec = grid;
  for (std::size_t s : conv_strides) spec = spec.downsampled(s);
  return spec;
}

BevEncoder::BevEncoder(BevConfig config, std::string prefix) : config_(std::move(config)), prefix_(std::move(prefix)) {
  config_.grid.validate();
  if (config_.conv_channels.empty() || config_.conv_channels.size() != config_.conv_strides.size()) {
    throw std::invalid_argument("bev config: conv channel and stride lists must be non-empty and equal length");
  }
  (void)config_.out_spec();
}

void BevEncoder::register_params(ParamRegistry& params, Rng& rng) const {
  nn::register_linear(params, rng, prefix_ + ".pointnet.l1", kPointFeatureDim, config_.pointnet_hidden);
  nn::register_linear(params, rng, prefix_ + ".pointnet.l2", config_.pointnet_hidden, config_.pointnet_out);
  std::size_t c_in = config_.pointnet_out;
  for (std::size_t b = 0; b < config_.conv_channels.size(); ++b) {
    const std::string name = prefix_ + ".conv" + std::to_string(b);
    params.add(name + ".w", init_weight(rng, 9 * c_in, config_.conv_channels[b]));
    params.add(name + ".b", Tensor::zeros({config_.conv_channels[b]}, true));
    c_in = config_.conv_channels[b];
  }
}

BevGrid BevEncoder::forward(const PillarBatch& batch, const ParamRegistry& params) const {
  BevGrid pillars;
  if (batch.pillar_count() == 0) {
    pillars = BevGrid{config_.grid, config_.pointnet_out, Tensor::zeros({config_.grid.cells(), config_.pointnet_out})};
  } else {
    const PointNetParams pn{params.get(prefix_ + ".pointnet.l1.w"), params.get(prefix_ + ".pointnet.l1.b"),
                            params.get(prefix_ + ".pointnet.l2.w"), params.get(prefix_ + ".pointnet.l2.b")};
    pillars = scatter_to_grid(pointnet_pillars(batch.features, batch.offsets, pn), batch.cells, config_.grid);
  }
  std::vector<ConvBlock> blocks;
  for (std::size_t b = 0; b < config_.conv_channels.size(); ++b) {
    const std::string name = prefix_ + ".conv" + std::to_string(b);
    blocks.push_back({params.get(name + ".w"), params.get(name + ".b"), config_.conv_strides[b]});
  }
  return conv_backbone(pillars, blocks);
}

}  // namespace odgcnn
