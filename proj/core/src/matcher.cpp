#include "odgcnn/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "odgcnn/nn.hpp"
#include "odgcnn/ops.hpp"

namespace odgcnn {

std::size_t PaddedTargets::real_count() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [&](std::size_t l) { return l != num_classes; }));
}

PaddedTargets pad_targets(std::span<const LabeledBox> boxes, std::size_t set_size, std::size_t num_classes) {
  if (boxes.size() > set_size) {
    throw std::invalid_argument("pad_targets: " + std::to_string(boxes.size()) + " ground-truth boxes exceed set size " +
                                std::to_string(set_size));
  }
  PaddedTargets t;
  t.num_classes = num_classes;
  t.labels.assign(set_size, num_classes);
  t.boxes.assign(set_size, BoxEncoding{});
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (boxes[j].label >= num_classes) throw std::invalid_argument("pad_targets: label out of range");
    t.labels[j] = boxes[j].label;
    t.boxes[j] = encode_box(boxes[j].box);
  }
  return t;
}

CostMatrix::CostMatrix(std::size_t size, std::vector<double> v) : n(size), values(std::move(v)) {
  if (values.size() != n * n) throw std::invalid_argument("cost matrix must be square");
}

double assignment_cost(const CostMatrix& cost, std::span<const std::size_t> pred_of_target) {
  double total = 0.0;
  for (std::size_t j = 0; j < pred_of_target.size(); ++j) total += cost(j, pred_of_target[j]);
  return total;
}

namespace {

double l1_distance(const BoxEncoding& target, std::span<const double> pred) {
  double d = 0.0;
  for (std::size_t c = 0; c < kBoxEncodingDim; ++c) d += std::abs(target[c] - pred[c]);
  return d;
}

// Row indices sorted by row contents, lowest index among identical rows.
std::vector<std::size_t> content_order(std::size_t n, const std::function<std::vector<double>(std::size_t)>& key) {
  std::vector<std::vector<double>> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = key(i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return order;
}

std::vector<std::size_t> prediction_order(const SetPrediction& p) {
  const std::size_t c = p.probs.cols();
  return content_order(p.size(), [&](std::size_t i) {
    std::vector<double> k(p.probs.data().begin() + static_cast<long>(i * c), p.probs.data().begin() + static_cast<long>((i + 1) * c));
    const auto box = p.boxes.data().subspan(i * kBoxEncodingDim, kBoxEncodingDim);
    k.insert(k.end(), box.begin(), box.end());
    return k;
  });
}

// Solves the matching on the reordered matrix and maps it back.
Assignment ordered_hungarian(const CostMatrix& cost, const std::vector<std::size_t>& row_order,
                             const std::vector<std::size_t>& col_order) {
  const std::size_t n = cost.n;
  std::vector<double> v(n * n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) v[a * n + b] = cost(row_order[a], col_order[b]);
  const Assignment inner = hungarian(CostMatrix(n, std::move(v)));
  Assignment out;
  out.pred_of_target.resize(n);
  for (std::size_t a = 0; a < n; ++a) out.pred_of_target[row_order[a]] = col_order[inner.pred_of_target[a]];
  out.total_cost = assignment_cost(cost, out.pred_of_target);
  return out;
}

void require_sizes(const char* op, std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": set sizes differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

CostMatrix match_cost(const PaddedTargets& targets, const SetPrediction& preds, IndicatorMode mode) {
  const std::size_t n = targets.size();
  require_sizes("match_cost", n, preds.size());
  const std::size_t c = preds.probs.cols();
  std::vector<double> v(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const bool padding = targets.is_padding(j);
    if (padding != (mode == IndicatorMode::literal)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      v[j * n + i] = -preds.probs[i * c + targets.labels[j]] +
                     l1_distance(targets.boxes[j], preds.boxes.data().subspan(i * kBoxEncodingDim, kBoxEncodingDim));
    }
  }
  return CostMatrix(n, std::move(v));
}

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.n;
  for (double v : cost.values) {
    if (std::isnan(v)) throw std::invalid_argument("hungarian: cost matrix contains NaN");
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian: cost matrix contains a non-finite entry");
  }
  Assignment out;
  if (n == 0) return out;

  // Shortest augmenting path with potentials (1-based internally).
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r = owner[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(r - 1, c - 1) - u[r] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[owner[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      owner[col0] = owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> row_to_col(n), col_to_row(n);
  for (std::size_t c = 1; c <= n; ++c) {
    row_to_col[owner[c] - 1] = c - 1;
    col_to_row[c - 1] = owner[c] - 1;
  }

  // Optimal matchings are exactly the perfect matchings on edges with zero
  // reduced cost. Walk rows in order and give each the smallest tight column
  // that still leaves a perfect matching for the remaining rows.
  double scale = 1.0;
  for (double val : cost.values) scale = std::max(scale, std::abs(val));
  const double tol = 1e-11 * scale * static_cast<double>(n);
  const auto tight = [&](std::size_t r, std::size_t c) { return cost(r, c) - u[r + 1] - v[c + 1] <= tol; };
  std::vector<char> fixed_row(n, 0), fixed_col(n, 0);
  std::vector<std::size_t> prev_row(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed_col[i] || !tight(j, i)) continue;
      if (row_to_col[j] == i) break;
      // Row r currently holds column i; find an alternating path that moves r
      // (and whoever it displaces) onto the column j gives up.
      const std::size_t target_col = row_to_col[j];
      const std::size_t r = col_to_row[i];
      std::vector<char> seen_row(n, 0);
      std::vector<std::size_t> via_col(n, n);  // column through which a row was reached
      std::deque<std::size_t> queue{r};
      seen_row[r] = 1;
      seen_row[j] = 1;
      std::size_t last_row = n;
      while (!queue.empty() && last_row == n) {
        const std::size_t row = queue.front();
        queue.pop_front();
        for (std::size_t c = 0; c < n; ++c) {
          if (fixed_col[c] || c == i || c == row_to_col[row] || !tight(row, c)) continue;
          if (c == target_col) {
            last_row = row;
            break;
          }
          const std::size_t next = col_to_row[c];
          if (seen_row[next] || fixed_row[next]) continue;
          seen_row[next] = 1;
          prev_row[next] = row;
          via_col[next] = c;
          queue.push_back(next);
        }
      }
      if (last_row == n) continue;
      // Shift every row on the path one column along.
      std::size_t row = last_row, col = target_col;
      while (true) {
        const std::size_t freed = row_to_col[row];
        row_to_col[row] = col;
        col_to_row[col] = row;
        if (row == r) break;
        col = freed;
        row = prev_row[row];
      }
      row_to_col[j] = i;
      col_to_row[i] = j;
      break;
    }
    fixed_row[j] = 1;
    fixed_col[row_to_col[j]] = 1;
  }
  out.pred_of_target = std::move(row_to_col);
  out.total_cost = assignment_cost(cost, out.pred_of_target);
  return out;
}

Assignment brute_force_match(const CostMatrix& cost) {
  const std::size_t n = cost.n;
  if (n > 8) throw std::invalid_argument("brute_force_match: size " + std::to_string(n) + " exceeds 8");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best{perm, assignment_cost(cost, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double total = assignment_cost(cost, perm);
    if (total < best.total_cost) best = {perm, total};
  }
  return best;
}

Assignment set_match(const PaddedTargets& targets, const SetPrediction& preds, IndicatorMode mode) {
  const CostMatrix cost = match_cost(targets, preds, mode);
  const std::vector<std::size_t> rows = content_order(targets.size(), [&](std::size_t j) {
    std::vector<double> k{static_cast<double>(targets.labels[j])};
    k.insert(k.end(), targets.boxes[j].begin(), targets.boxes[j].end());
    return k;
  });
  return ordered_hungarian(cost, rows, prediction_order(preds));
}

Tensor set_loss(const PaddedTargets& targets, const SetPrediction& preds, const Assignment& matching, IndicatorMode mode) {
  const std::size_t n = targets.size();
  require_sizes("set_loss", n, preds.size());
  require_sizes("set_loss", n, matching.pred_of_target.size());
  Tensor loss = ops::neg_log_prob(ops::gather_rows(preds.probs, matching.pred_of_target), targets.labels);
  std::vector<std::size_t> rows;
  std::vector<double> wanted;
  for (std::size_t j = 0; j < n; ++j) {
    if (targets.is_padding(j) != (mode == IndicatorMode::literal)) continue;
    rows.push_back(matching.pred_of_target[j]);
    wanted.insert(wanted.end(), targets.boxes[j].begin(), targets.boxes[j].end());
  }
  if (!rows.empty()) {
    const Tensor box = ops::l1(ops::gather_rows(preds.boxes, rows), nn::constant({rows.size(), kBoxEncodingDim}, std::move(wanted)));
    loss = ops::add(loss, box);
  }
  return loss;
}

PaddedTargets teacher_targets(const SetPrediction& teacher) {
  const std::size_t n = teacher.size(), c = teacher.probs.cols();
  PaddedTargets t;
  t.num_classes = c - 1;
  t.labels.resize(n);
  t.boxes.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (teacher.probs[j * c + k] > teacher.probs[j * c + best]) best = k;
    t.labels[j] = best;
    std::copy_n(teacher.boxes.data().begin() + static_cast<long>(j * kBoxEncodingDim), kBoxEncodingDim, t.boxes[j].begin());
  }
  return t;
}

CostMatrix distill_cost(const SetPrediction& teacher, const SetPrediction& student) {
  const std::size_t n = teacher.size();
  require_sizes("distill_match", n, student.size());
  const PaddedTargets t = teacher_targets(teacher);
  const std::size_t c = student.probs.cols();
  std::vector<double> v(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      v[j * n + i] = -std::log(std::max(student.probs[i * c + t.labels[j]], ops::kProbClamp)) +
                     l1_distance(t.boxes[j], student.boxes.data().subspan(i * kBoxEncodingDim, kBoxEncodingDim));
    }
  return CostMatrix(n, std::move(v));
}

Assignment distill_match(const SetPrediction& teacher, const SetPrediction& student) {
  return ordered_hungarian(distill_cost(teacher, student), prediction_order(teacher), prediction_order(student));
}

Tensor distill_loss(const SetPrediction& teacher, const SetPrediction& student, const Assignment& matching,
                    bool mask_no_object) {
  const std::size_t n = teacher.size();
  require_sizes("distill_loss", n, student.size());
  require_sizes("distill_loss", n, matching.pred_of_target.size());
  const PaddedTargets t = teacher_targets(teacher);
  Tensor loss = ops::neg_log_prob(ops::gather_rows(student.probs, matching.pred_of_target), t.labels);
  std::vector<std::size_t> rows;
  std::vector<double> wanted;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask_no_object && t.is_padding(j)) continue;
    rows.push_back(matching.pred_of_target[j]);
    wanted.insert(wanted.end(), t.boxes[j].begin(), t.boxes[j].end());
  }
  if (!rows.empty()) {
    loss = ops::add(loss, ops::l1(ops::gather_rows(student.boxes, rows), nn::constant({rows.size(), kBoxEncodingDim}, std::move(wanted))));
  }
  return loss;
}

Tensor combined_loss(const Tensor& supervised, const Tensor& distill, double alpha, double beta) {
  return ops::add(ops::scale(supervised, alpha), ops::scale(distill, beta));
}

}  // namespace odgcnn
