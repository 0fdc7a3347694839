#include "odgcnn/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace odgcnn {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_string(shape) + " has a zero dimension");
  }
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::rows() const { return rank() == 0 ? 1 : numel() / node_->shape.back(); }
std::size_t Tensor::cols() const { return rank() == 0 ? 1 : node_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(numel(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->value, requires_grad); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::vector<NodePtr> operands, NodePtr result, BackwardFn backward) {
  records_.push_back(Record{std::move(operands), std::move(result), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  // Every node that takes part in the graph gets a gradient buffer up front so
  // that leaves the loss does not reach still end with an explicit zero.
  for (const Record& rec : records_) {
    for (const NodePtr& op : rec.operands) {
      if (op->requires_grad && op->grad.empty()) op->grad.assign(op->value.size(), 0.0);
    }
    if (rec.result->grad.empty()) rec.result->grad.assign(rec.result->value.size(), 0.0);
  }
  const NodePtr& root = loss.node();
  if (root->grad.empty()) root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->backward(it->result->grad);
  }
}

void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace odgcnn
