#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "odgcnn/geometry.hpp"
#include "odgcnn/object_dgcnn.hpp"
#include "odgcnn/tensor.hpp"

namespace odgcnn {

// Ground truth padded with no-object entries up to the prediction set size.
// label == num_classes marks padding.
struct PaddedTargets {
  std::size_t num_classes = 0;
  std::vector<std::size_t> labels;
  std::vector<BoxEncoding> boxes;  // unspecified (zero) for padding

  std::size_t size() const { return labels.size(); }
  bool is_padding(std::size_t j) const { return labels[j] == num_classes; }
  std::size_t real_count() const;
};

PaddedTargets pad_targets(std::span<const LabeledBox> boxes, std::size_t set_size, std::size_t num_classes);

// Row j = target, column i = prediction.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t size, std::vector<double> v);
  double operator()(std::size_t j, std::size_t i) const { return values[j * n + i]; }
};

struct Assignment {
  std::vector<std::size_t> pred_of_target;  // target j -> prediction pred_of_target[j]
  double total_cost = 0.0;
};

double assignment_cost(const CostMatrix& cost, std::span<const std::size_t> pred_of_target);

// How the no-object indicator enters the matching cost and supervised loss.
// detr: class term for every target, box term and -p cost only for real
// targets. literal: the indicator polarity exactly as printed (box term and
// cost only on padding, against a zero encoding); kept for comparison runs.
enum class IndicatorMode { detr, literal };

CostMatrix match_cost(const PaddedTargets& targets, const SetPrediction& preds, IndicatorMode mode = IndicatorMode::detr);

// Minimum-cost perfect matching; among optimal matchings the lexicographically
// smallest pred_of_target is returned.
Assignment hungarian(const CostMatrix& cost);
// Exhaustive reference for n <= 8 with the same tie rule.
Assignment brute_force_match(const CostMatrix& cost);
// hungarian over match_cost after putting targets and predictions in an order
// defined by their values. Ties between optimal matchings are then broken the
// same way however the sets are arranged, so the matched loss is exactly
// permutation invariant.
Assignment set_match(const PaddedTargets& targets, const SetPrediction& preds, IndicatorMode mode = IndicatorMode::detr);

Tensor set_loss(const PaddedTargets& targets, const SetPrediction& preds, const Assignment& matching,
                IndicatorMode mode = IndicatorMode::detr);

// Teacher's hard labels (argmax over all C + 1 entries) and box encodings.
PaddedTargets teacher_targets(const SetPrediction& teacher);

CostMatrix distill_cost(const SetPrediction& teacher, const SetPrediction& student);
// Same value-defined ordering as set_match.
Assignment distill_match(const SetPrediction& teacher, const SetPrediction& student);
Tensor distill_loss(const SetPrediction& teacher, const SetPrediction& student, const Assignment& matching,
                    bool mask_no_object = false);

Tensor combined_loss(const Tensor& supervised, const Tensor& distill, double alpha = 1.0, double beta = 1.0);

}  // namespace odgcnn
