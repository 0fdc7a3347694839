#include "odgcnn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace odgcnn::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                              shape_string(b.shape()));
}

bool needs_record(std::initializer_list<const Tensor*> operands) {
  if (active_tape() == nullptr) return false;
  return std::any_of(operands.begin(), operands.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Builds the result tensor and, when recording, registers the backward rule
// produced by make_backward(result_node).
template <typename MakeBackward>
Tensor finish(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> operands,
              MakeBackward&& make_backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  if (needs_record(operands)) {
    out.set_requires_grad(true);
    std::vector<NodePtr> nodes;
    nodes.reserve(operands.size());
    for (const Tensor* t : operands) nodes.push_back(t->node());
    active_tape()->record(std::move(nodes), out.node(), make_backward(out.node()));
  }
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m);
  MutMap(out.data(), n, m).noalias() = ConstMap(a.data().data(), n, k) * ConstMap(b.data().data(), k, m);
  return finish({n, m}, std::move(out), {&a, &b}, [an = a.node(), bn = b.node(), n, k, m](const NodePtr&) {
    return [an, bn, n, k, m](std::span<const double> g) {
      ConstMap go(g.data(), n, m);
      if (an->requires_grad) {
        MutMap(an->grad.data(), n, k).noalias() += go * ConstMap(bn->value.data(), k, m).transpose();
      }
      if (bn->requires_grad) {
        MutMap(bn->grad.data(), k, m).noalias() += ConstMap(an->value.data(), n, k).transpose() * go;
      }
    };
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [an = a.node(), bn = b.node()](const NodePtr&) {
    return [an, bn](std::span<const double> g) {
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [an = a.node(), bn = b.node()](const NodePtr&) {
    return [an, bn](std::span<const double> g) {
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [an = a.node(), bn = b.node()](const NodePtr&) {
    return [an, bn](std::span<const double> g) {
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->value[i];
    };
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return finish(x.shape(), std::move(out), {&x}, [xn = x.node(), factor](const NodePtr&) {
    return [xn, factor](std::span<const double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i] * factor;
    };
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.numel() != x.cols()) shape_error("add_bias", x, bias);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + bias[c];
  return finish(x.shape(), std::move(out), {&x, &bias}, [xn = x.node(), bn = bias.node(), rows, cols](const NodePtr&) {
    return [xn, bn, rows, cols](std::span<const double> g) {
      if (xn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
      if (bn->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) bn->grad[c] += g[r * cols + c];
    };
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return finish(x.shape(), std::move(out), {&x}, [xn = x.node()](const NodePtr&) {
    return [xn](std::span<const double> g) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->value[i] > 0.0) xn->grad[i] += g[i];
    };
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return finish(x.shape(), std::move(out), {&x}, [xn = x.node()](const NodePtr& result) {
    std::weak_ptr<TensorNode> weak = result;
    return [xn, weak](std::span<const double> g) {
      const auto res = weak.lock();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = res->value[i];
        xn->grad[i] += g[i] * s * (1.0 - s);
      }
    };
  });
}

Tensor softmax_lastaxis(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return finish(x.shape(), std::move(out), {&x}, [xn = x.node(), rows, cols](const NodePtr& result) {
    std::weak_ptr<TensorNode> weak = result;
    return [xn, weak, rows, cols](std::span<const double> g) {
      const auto res = weak.lock();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* s = res->value.data() + r * cols;
        const double* go = g.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += go[c] * s[c];
        for (std::size_t c = 0; c < cols; ++c) xn->grad[r * cols + c] += s[c] * (go[c] - dot);
      }
    };
  });
}

MaxResult max_lastaxis(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(rows);
  std::vector<std::size_t> index(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (x[r * cols + c] > x[r * cols + best]) best = c;
    index[r] = best;
    out[r] = x[r * cols + best];
  }
  Shape shape = x.shape();
  shape.back() = 1;
  Tensor values = finish(std::move(shape), std::move(out), {&x}, [xn = x.node(), index, cols](const NodePtr&) {
    return [xn, index, cols](std::span<const double> g) {
      for (std::size_t r = 0; r < index.size(); ++r) xn->grad[r * cols + index[r]] += g[r];
    };
  });
  return MaxResult{std::move(values), std::move(index)};
}

Tensor concat_lastaxis(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.rank() != b.rank()) shape_error("concat_lastaxis", a, b);
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return finish(std::move(shape), std::move(out), {&a, &b}, [an = a.node(), bn = b.node(), rows, ca, cb](const NodePtr&) {
    return [an, bn, rows, ca, cb](std::span<const double> g) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* go = g.data() + r * (ca + cb);
        if (an->requires_grad)
          for (std::size_t c = 0; c < ca; ++c) an->grad[r * ca + c] += go[c];
        if (bn->requires_grad)
          for (std::size_t c = 0; c < cb; ++c) bn->grad[r * cb + c] += go[ca + c];
      }
    };
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (index.empty()) throw std::invalid_argument("gather_rows: empty index");
  for (std::size_t i : index) {
    if (i >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of range for shape " +
                              shape_string(x.shape()));
    }
  }
  std::vector<double> out(index.size() * cols);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(x.data().data() + index[r] * cols, cols, out.data() + r * cols);
  std::vector<std::size_t> idx(index.begin(), index.end());
  return finish({index.size(), cols}, std::move(out), {&x}, [xn = x.node(), idx = std::move(idx), cols](const NodePtr&) {
    return [xn, idx, cols](std::span<const double> g) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) xn->grad[idx[r] * cols + c] += g[r * cols + c];
    };
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t n_rows) {
  const std::size_t cols = x.cols();
  if (index.size() != x.rows()) {
    throw std::invalid_argument("scatter_rows: " + std::to_string(index.size()) + " indices for shape " +
                                shape_string(x.shape()));
  }
  std::vector<char> taken(n_rows, 0);
  std::vector<double> out(n_rows * cols, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n_rows) throw std::out_of_range("scatter_rows: destination " + std::to_string(index[r]) + " out of range");
    if (taken[index[r]]) throw std::invalid_argument("scatter_rows: duplicate destination " + std::to_string(index[r]));
    taken[index[r]] = 1;
    std::copy_n(x.data().data() + r * cols, cols, out.data() + index[r] * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return finish({n_rows, cols}, std::move(out), {&x}, [xn = x.node(), idx = std::move(idx), cols](const NodePtr&) {
    return [xn, idx, cols](std::span<const double> g) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) xn->grad[r * cols + c] += g[idx[r] * cols + c];
    };
  });
}

Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets) {
  const std::size_t cols = x.cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw std::invalid_argument("segment_max: offsets do not partition the rows of " + shape_string(x.shape()));
  }
  const std::size_t n_seg = offsets.size() - 1;
  std::vector<double> out(n_seg * cols);
  std::vector<std::size_t> arg(n_seg * cols);
  for (std::size_t s = 0; s < n_seg; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw std::invalid_argument("segment_max: empty segment");
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r)
        if (x[r * cols + c] > x[best * cols + c]) best = r;
      arg[s * cols + c] = best;
      out[s * cols + c] = x[best * cols + c];
    }
  }
  return finish({n_seg, cols}, std::move(out), {&x}, [xn = x.node(), arg = std::move(arg), cols](const NodePtr&) {
    return [xn, arg, cols](std::span<const double> g) {
      for (std::size_t i = 0; i < arg.size(); ++i) xn->grad[arg[i] * cols + i % cols] += g[i];
    };
  });
}

Tensor weighted_row_sum(const Tensor& weights, const Tensor& rows) {
  const std::size_t n = weights.rows(), k = weights.cols(), d = rows.cols();
  if (rows.rows() != n * k) shape_error("weighted_row_sum", weights, rows);
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double w = weights[i * k + j];
      const double* src = rows.data().data() + (i * k + j) * d;
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += w * src[c];
    }
  return finish({n, d}, std::move(out), {&weights, &rows}, [wn = weights.node(), rn = rows.node(), n, k, d](const NodePtr&) {
    return [wn, rn, n, k, d](std::span<const double> g) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t row = i * k + j;
          if (wn->requires_grad) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += g[i * d + c] * rn->value[row * d + c];
            wn->grad[i * k + j] += acc;
          }
          if (rn->requires_grad) {
            const double w = wn->value[i * k + j];
            for (std::size_t c = 0; c < d; ++c) rn->grad[row * d + c] += w * g[i * d + c];
          }
        }
    };
  });
}

namespace {

// Sum of the terms in ascending order, so the result depends only on the
// multiset of terms and not on their arrangement.
double order_free_sum(std::vector<double> terms) {
  for (double v : terms)
    if (std::isnan(v)) return v;
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double v : terms) total += v;
  return total;
}

}  // namespace

Tensor sum_all(const Tensor& x) {
  const double total = order_free_sum({x.data().begin(), x.data().end()});
  return finish({1}, {total}, {&x}, [xn = x.node()](const NodePtr&) {
    return [xn](std::span<const double> g) {
      for (double& gi : xn->grad) gi += g[0];
    };
  });
}

Tensor l1(const Tensor& a, const Tensor& b) {
  require_same_shape("l1", a, b);
  std::vector<double> terms(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) terms[i] = std::abs(a[i] - b[i]);
  const double total = order_free_sum(std::move(terms));
  return finish({1}, {total}, {&a, &b}, [an = a.node(), bn = b.node()](const NodePtr&) {
    return [an, bn](std::span<const double> g) {
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        const double diff = an->value[i] - bn->value[i];
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (an->requires_grad) an->grad[i] += g[0] * sign;
        if (bn->requires_grad) bn->grad[i] -= g[0] * sign;
      }
    };
  });
}

Tensor neg_log_prob(const Tensor& p, std::span<const std::size_t> class_index) {
  const std::size_t rows = p.rows(), cols = p.cols();
  if (class_index.size() != rows) {
    throw std::invalid_argument("neg_log_prob: " + std::to_string(class_index.size()) + " labels for shape " +
                                shape_string(p.shape()));
  }
  std::vector<double> terms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (class_index[r] >= cols) throw std::out_of_range("neg_log_prob: class index " + std::to_string(class_index[r]));
    const double v = p[r * cols + class_index[r]];
    // NaN passes through so callers can report where training diverged.
    terms[r] = std::isnan(v) ? v : -std::log(std::max(v, kProbClamp));
  }
  const double total = order_free_sum(std::move(terms));
  std::vector<std::size_t> idx(class_index.begin(), class_index.end());
  return finish({1}, {total}, {&p}, [pn = p.node(), idx = std::move(idx), cols](const NodePtr&) {
    return [pn, idx, cols](std::span<const double> g) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t at = r * cols + idx[r];
        const double v = pn->value[at];
        if (v > kProbClamp) pn->grad[at] -= g[0] / v;
      }
    };
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish(std::move(shape), std::move(out), {&x}, [xn = x.node()](const NodePtr&) {
    return [xn](std::span<const double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
    };
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: expected a matrix, got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(n * m);
  MutMap(out.data(), m, n) = ConstMap(x.data().data(), n, m).transpose();
  return finish({m, n}, std::move(out), {&x}, [xn = x.node(), n, m](const NodePtr&) {
    return [xn, n, m](std::span<const double> g) {
      MutMap(xn->grad.data(), n, m) += ConstMap(g.data(), m, n).transpose();
    };
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > cols) {
    throw std::out_of_range("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                            shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * cols + begin, w, out.data() + r * w);
  Shape shape = x.shape();
  shape.back() = w;
  return finish(std::move(shape), std::move(out), {&x}, [xn = x.node(), rows, cols, begin, w](const NodePtr&) {
    return [xn, rows, cols, begin, w](std::span<const double> g) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) xn->grad[r * cols + begin + c] += g[r * w + c];
    };
  });
}

Tensor conv2d_3x3(const Tensor& x, std::size_t height, std::size_t width, const Tensor& weight, std::size_t stride) {
  const std::size_t c_in = x.cols();
  if (x.rows() != height * width) {
    throw std::invalid_argument("conv2d_3x3: input " + shape_string(x.shape()) + " is not " + std::to_string(height) +
                                "x" + std::to_string(width));
  }
  if (weight.rank() != 2 || weight.dim(0) != 9 * c_in) shape_error("conv2d_3x3", x, weight);
  if (stride == 0) throw std::invalid_argument("conv2d_3x3: stride must be positive");
  const std::size_t c_out = weight.dim(1);
  const std::size_t out_h = (height - 1) / stride + 1, out_w = (width - 1) / stride + 1;
  const std::size_t patch = 9 * c_in;

  // im2col: one row per output pixel.
  std::vector<double> cols(out_h * out_w * patch, 0.0);
  const double* src = x.data().data();
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double* dst = cols.data() + (oy * out_w + ox) * patch;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - 1;
        if (iy < 0 || iy >= static_cast<long>(height)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - 1;
          if (ix < 0 || ix >= static_cast<long>(width)) continue;
          std::copy_n(src + (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * c_in, c_in,
                      dst + (ky * 3 + kx) * c_in);
        }
      }
    }
  std::vector<double> out(out_h * out_w * c_out);
  MutMap(out.data(), out_h * out_w, c_out).noalias() =
      ConstMap(cols.data(), out_h * out_w, patch) * ConstMap(weight.data().data(), patch, c_out);

  return finish({out_h * out_w, c_out}, std::move(out), {&x, &weight},
                [xn = x.node(), wn = weight.node(), cols = std::move(cols), height, width, stride, c_in, c_out, out_h,
                 out_w, patch](const NodePtr&) mutable {
                  return [xn, wn, cols = std::move(cols), height, width, stride, c_in, c_out, out_h, out_w,
                          patch](std::span<const double> g) {
                    const std::size_t n_out = out_h * out_w;
                    ConstMap go(g.data(), n_out, c_out);
                    if (wn->requires_grad) {
                      MutMap(wn->grad.data(), patch, c_out).noalias() += ConstMap(cols.data(), n_out, patch).transpose() * go;
                    }
                    if (!xn->requires_grad) return;
                    RowMat gcol = go * ConstMap(wn->value.data(), patch, c_out).transpose();
                    for (std::size_t oy = 0; oy < out_h; ++oy)
                      for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const double* row = gcol.data() + (oy * out_w + ox) * patch;
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                          const long iy = static_cast<long>(oy * stride + ky) - 1;
                          if (iy < 0 || iy >= static_cast<long>(height)) continue;
                          for (std::size_t kx = 0; kx < 3; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - 1;
                            if (ix < 0 || ix >= static_cast<long>(width)) continue;
                            double* dst = xn->grad.data() +
                                          (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * c_in;
                            const double* part = row + (ky * 3 + kx) * c_in;
                            for (std::size_t c = 0; c < c_in; ++c) dst[c] += part[c];
                          }
                        }
                      }
                  };
                });
}

namespace {

struct BilinearCoord {
  std::size_t lo, hi;
  double frac;
  bool clamped;
};

BilinearCoord bilinear_coord(double continuous, std::size_t extent) {
  double t = continuous - 0.5;
  const double top = static_cast<double>(extent - 1);
  bool clamped = false;
  if (t <= 0.0) {
    clamped = t < 0.0;
    t = 0.0;
  } else if (t >= top) {
    clamped = t > top;
    t = top;
  }
  if (extent == 1) return {0, 0, 0.0, true};
  std::size_t lo = static_cast<std::size_t>(std::floor(t));
  if (lo >= extent - 1) lo = extent - 2;
  return {lo, lo + 1, t - static_cast<double>(lo), clamped};
}

}  // namespace

Tensor bilinear_sample(const Tensor& grid, std::size_t height, std::size_t width, const Tensor& points) {
  if (grid.rows() != height * width) {
    throw std::invalid_argument("bilinear_sample: grid " + shape_string(grid.shape()) + " is not " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  if (points.cols() != 2) shape_error("bilinear_sample", grid, points);
  const std::size_t n = points.rows(), c = grid.cols();
  std::vector<BilinearCoord> xs(n), ys(n);
  std::vector<double> out(n * c);
  const double* g = grid.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = bilinear_coord(points[2 * i], width);
    ys[i] = bilinear_coord(points[2 * i + 1], height);
    const auto& bx = xs[i];
    const auto& by = ys[i];
    const double w00 = (1 - bx.frac) * (1 - by.frac), w01 = bx.frac * (1 - by.frac);
    const double w10 = (1 - bx.frac) * by.frac, w11 = bx.frac * by.frac;
    const double* v00 = g + (by.lo * width + bx.lo) * c;
    const double* v01 = g + (by.lo * width + bx.hi) * c;
    const double* v10 = g + (by.hi * width + bx.lo) * c;
    const double* v11 = g + (by.hi * width + bx.hi) * c;
    for (std::size_t ch = 0; ch < c; ++ch)
      out[i * c + ch] = w00 * v00[ch] + w01 * v01[ch] + w10 * v10[ch] + w11 * v11[ch];
  }
  return finish({n, c}, std::move(out), {&grid, &points},
                [gn = grid.node(), pn = points.node(), xs = std::move(xs), ys = std::move(ys), width, n, c](const NodePtr&) {
                  return [gn, pn, xs, ys, width, n, c](std::span<const double> go) {
                    const double* g = gn->value.data();
                    for (std::size_t i = 0; i < n; ++i) {
                      const auto& bx = xs[i];
                      const auto& by = ys[i];
                      const std::size_t i00 = (by.lo * width + bx.lo) * c, i01 = (by.lo * width + bx.hi) * c;
                      const std::size_t i10 = (by.hi * width + bx.lo) * c, i11 = (by.hi * width + bx.hi) * c;
                      const double* gi = go.data() + i * c;
                      if (gn->requires_grad) {
                        const double w00 = (1 - bx.frac) * (1 - by.frac), w01 = bx.frac * (1 - by.frac);
                        const double w10 = (1 - bx.frac) * by.frac, w11 = bx.frac * by.frac;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          gn->grad[i00 + ch] += w00 * gi[ch];
                          gn->grad[i01 + ch] += w01 * gi[ch];
                          gn->grad[i10 + ch] += w10 * gi[ch];
                          gn->grad[i11 + ch] += w11 * gi[ch];
                        }
                      }
                      if (pn->requires_grad) {
                        double dx = 0.0, dy = 0.0;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const double dfx = (1 - by.frac) * (g[i01 + ch] - g[i00 + ch]) + by.frac * (g[i11 + ch] - g[i10 + ch]);
                          const double dfy = (1 - bx.frac) * (g[i10 + ch] - g[i00 + ch]) + bx.frac * (g[i11 + ch] - g[i01 + ch]);
                          dx += gi[ch] * dfx;
                          dy += gi[ch] * dfy;
                        }
                        if (!bx.clamped) pn->grad[2 * i] += dx;
                        if (!by.clamped) pn->grad[2 * i + 1] += dy;
                      }
                    }
                  };
                });
}

}  // namespace odgcnn::ops
