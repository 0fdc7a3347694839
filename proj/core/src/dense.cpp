#include "odgcnn/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "odgcnn/nn.hpp"
#include "odgcnn/ops.hpp"

namespace odgcnn {

std::vector<long> assign_overlap(std::span<const LabeledBox> targets, const GridSpec& spec) {
  std::vector<long> out(spec.cells(), kNoTarget);
  std::vector<double> best(spec.cells(), 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const RotatedBoxBEV fp = bev_footprint(targets[t].box);
    // Only scan the pixels under the footprint's bounding square.
    const double reach = 0.5 * std::hypot(fp.w, fp.l);
    const auto lo_x = static_cast<long>(std::floor((fp.x - reach - spec.x_min) / spec.cell));
    const auto hi_x = static_cast<long>(std::floor((fp.x + reach - spec.x_min) / spec.cell));
    const auto lo_y = static_cast<long>(std::floor((fp.y - reach - spec.y_min) / spec.cell));
    const auto hi_y = static_cast<long>(std::floor((fp.y + reach - spec.y_min) / spec.cell));
    for (long iy = std::max(0L, lo_y); iy <= std::min(static_cast<long>(spec.height) - 1, hi_y); ++iy)
      for (long ix = std::max(0L, lo_x); ix <= std::min(static_cast<long>(spec.width) - 1, hi_x); ++ix) {
        const Point2 c = spec.cell_center(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
        if (!footprint_contains(fp, c.x, c.y)) continue;
        const std::size_t pix = static_cast<std::size_t>(iy) * spec.width + static_cast<std::size_t>(ix);
        const double d = std::hypot(c.x - fp.x, c.y - fp.y);
        if (out[pix] == kNoTarget || d < best[pix]) {
          out[pix] = static_cast<long>(t);
          best[pix] = d;
        }
      }
  }
  return out;
}

Tensor dense_loss(const DenseHead& head, std::span<const LabeledBox> targets, std::span<const long> assignment,
                  double negative_weight) {
  const std::size_t n = head.probs.rows();
  if (assignment.size() != n) throw std::invalid_argument("dense_loss: assignment does not cover every pixel");
  const std::size_t no_object = head.probs.cols() - 1;
  std::vector<std::size_t> pos_rows, pos_labels, neg_rows;
  std::vector<double> wanted;
  for (std::size_t p = 0; p < n; ++p) {
    if (assignment[p] == kNoTarget) {
      neg_rows.push_back(p);
      continue;
    }
    const LabeledBox& lb = targets[static_cast<std::size_t>(assignment[p])];
    pos_rows.push_back(p);
    pos_labels.push_back(lb.label);
    const BoxEncoding enc = encode_box(lb.box);
    wanted.insert(wanted.end(), enc.begin(), enc.end());
  }
  Tensor loss;
  if (!pos_rows.empty()) {
    loss = ops::add(ops::neg_log_prob(ops::gather_rows(head.probs, pos_rows), pos_labels),
                    ops::l1(ops::gather_rows(head.boxes, pos_rows), nn::constant({pos_rows.size(), kBoxEncodingDim}, std::move(wanted))));
  }
  if (!neg_rows.empty()) {
    const std::vector<std::size_t> labels(neg_rows.size(), no_object);
    Tensor neg = ops::scale(ops::neg_log_prob(ops::gather_rows(head.probs, neg_rows), labels), negative_weight);
    loss = loss.defined() ? ops::add(loss, neg) : neg;
  }
  return loss;
}

std::vector<Detection> decode_dense(const DenseHead& head, double score_floor) {
  const std::size_t n = head.probs.rows(), c = head.probs.cols();
  std::vector<Detection> out;
  for (std::size_t p = 0; p < n; ++p) {
    Detection d;
    d.probs.assign(head.probs.data().begin() + static_cast<long>(p * c), head.probs.data().begin() + static_cast<long>((p + 1) * c));
    if (d.score() < score_floor) continue;
    d.box = decode_box(head.boxes.data().subspan(p * kBoxEncodingDim, kBoxEncodingDim));
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) score[i] = detections[i].score();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

}  // namespace

std::vector<std::size_t> nms(std::span<const Detection> detections, double iou_threshold, bool class_agnostic) {
  std::vector<std::size_t> kept;
  std::vector<RotatedBoxBEV> kept_fp;
  for (std::size_t i : score_order(detections)) {
    const RotatedBoxBEV fp = bev_footprint(detections[i].box);
    bool suppressed = false;
    for (std::size_t k = 0; k < kept.size() && !suppressed; ++k) {
      if (!class_agnostic && detections[kept[k]].label() != detections[i].label()) continue;
      suppressed = rotated_iou_bev(kept_fp[k], fp) > iou_threshold;
    }
    if (!suppressed) {
      kept.push_back(i);
      kept_fp.push_back(fp);
    }
  }
  return kept;
}

std::vector<std::size_t> top_k(std::span<const Detection> detections, std::size_t k) {
  if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
  std::vector<std::size_t> order = score_order(detections);
  if (order.size() > k) order.resize(k);
  return order;
}

DenseDetector::DenseDetector(BevConfig bev, DenseConfig head) : encoder_(std::move(bev)), head_(head) {}

void DenseDetector::register_params(ParamRegistry& params, Rng& rng) const {
  encoder_.register_params(params, rng);
  const std::size_t c = encoder_.config().out_channels();
  nn::register_linear(params, rng, "dense.cls.l1", c, head_.hidden);
  nn::register_linear(params, rng, "dense.cls.l2", head_.hidden, head_.num_classes + 1, 0.1);
  nn::register_linear(params, rng, "dense.box.l1", c, head_.hidden);
  nn::register_linear(params, rng, "dense.box.l2", head_.hidden, kBoxEncodingDim, 0.1);
}

DenseHead DenseDetector::forward_head(const BevGrid& fd, const ParamRegistry& params) const {
  DenseHead head;
  head.spec = fd.spec;
  head.probs = ops::softmax_lastaxis(nn::linear(params, "dense.cls.l2", ops::relu(nn::linear(params, "dense.cls.l1", fd.data))));
  const Tensor raw = nn::linear(params, "dense.box.l2", ops::relu(nn::linear(params, "dense.box.l1", fd.data)));
  std::vector<double> anchor(fd.spec.cells() * kBoxEncodingDim, 0.0);
  for (std::size_t iy = 0; iy < fd.spec.height; ++iy)
    for (std::size_t ix = 0; ix < fd.spec.width; ++ix) {
      const Point2 c = fd.spec.cell_center(ix, iy);
      const std::size_t p = iy * fd.spec.width + ix;
      anchor[p * kBoxEncodingDim] = c.x;
      anchor[p * kBoxEncodingDim + 1] = c.y;
    }
  head.boxes = ops::add(raw, nn::constant({fd.spec.cells(), kBoxEncodingDim}, std::move(anchor)));
  return head;
}

DenseDetector::Output DenseDetector::forward(const PillarBatch& batch, const ParamRegistry& params) const {
  Output out;
  out.features = encoder_.forward(batch, params);
  out.head = forward_head(out.features, params);
  return out;
}

}  // namespace odgcnn
