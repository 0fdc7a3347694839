#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "odgcnn/bev.hpp"
#include "odgcnn/geometry.hpp"
#include "odgcnn/params.hpp"

namespace odgcnn {

inline constexpr long kNoTarget = -1;

// Per-pixel predictions over the F^d grid, one row per pixel.
struct DenseHead {
  GridSpec spec;
  Tensor probs;  // [H*W, C + 1]
  Tensor boxes;  // [H*W, 10] box encoding, pixel centre already added
};

// Pixel j takes the target whose BEV footprint covers the pixel centre; the
// nearest centre wins when several do. kNoTarget otherwise.
std::vector<long> assign_overlap(std::span<const LabeledBox> targets, const GridSpec& spec);

// Sum over pixels of -log p(assigned class) + L1 box term on assigned pixels;
// unassigned pixels add negative_weight * -log p(no object).
Tensor dense_loss(const DenseHead& head, std::span<const LabeledBox> targets, std::span<const long> assignment,
                  double negative_weight = 0.05);

// Every pixel whose best real-class score reaches score_floor.
std::vector<Detection> decode_dense(const DenseHead& head, double score_floor);

// Greedy suppression in descending score (ties by index): a detection is
// dropped when its IoU with a kept one is strictly greater than the threshold.
// Returns kept indices in the order they were kept.
std::vector<std::size_t> nms(std::span<const Detection> detections, double iou_threshold, bool class_agnostic = true);

// Indices of the k best scores, ordered by score then index.
std::vector<std::size_t> top_k(std::span<const Detection> detections, std::size_t k);

template <typename T>
std::vector<T> select(std::span<const T> items, std::span<const std::size_t> index) {
  std::vector<T> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(items[i]);
  return out;
}

struct DenseConfig {
  std::size_t hidden = 64;
  std::size_t num_classes = 3;
  double negative_weight = 0.05;
};

// Pillar backbone plus per-pixel class and box heads.
class DenseDetector {
 public:
  struct Output {
    BevGrid features;
    DenseHead head;
  };

  DenseDetector(BevConfig bev, DenseConfig head);

  void register_params(ParamRegistry& params, Rng& rng) const;
  DenseHead forward_head(const BevGrid& fd, const ParamRegistry& params) const;
  Output forward(const PillarBatch& batch, const ParamRegistry& params) const;

  const BevEncoder& encoder() const { return encoder_; }
  const DenseConfig& head_config() const { return head_; }

 private:
  BevEncoder encoder_;
  DenseConfig head_;
};

}  // namespace odgcnn
