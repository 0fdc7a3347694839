#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace odgcnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  // Empty until a backward pass (or zero_grad) allocates it.
  std::vector<double> grad;
  bool requires_grad = false;
};

// Dense row-major array of doubles with shared ownership of its storage.
// Copies alias the same node; use clone() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const;  // product of all but the last dim
  std::size_t cols() const;  // last dim

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t row, std::size_t col) const { return node_->value[row * cols() + col]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  // Fresh leaf with copied values (no grad, no tape history).
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

using NodePtr = std::shared_ptr<TensorNode>;
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

// Ordered record of differentiable operations. Operations append to the tape
// that is active on the calling thread (see TapeScope); replaying the records
// in reverse accumulates gradients into every reachable node.
class Tape {
 public:
  struct Record {
    std::vector<NodePtr> operands;
    NodePtr result;
    BackwardFn backward;
  };

  void record(std::vector<NodePtr> operands, NodePtr result, BackwardFn backward);
  void backward(const Tensor& loss);
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

void backward(Tape& tape, const Tensor& loss);

}  // namespace odgcnn
