#pragma once

// Dense row-major tensors with tape-free reverse-mode autodiff.
//
// Every operation that receives at least one input with requires_grad()
// produces an output node holding shared references to its inputs and a
// backward closure. The computation graph is therefore implicit in the node
// references; backward() recovers a topological order by depth-first search
// from the loss and runs each node's rule exactly once, in reverse order.
//
// Only the operations the classifier needs are provided. There is no
// general broadcasting: the one broadcast the model uses (adding a row
// vector to every row of a matrix) is its own operation.
//
// Tensor<float> is the working precision. Tensor<double> exists so that
// finite-difference checks can be run at a precision where they are
// meaningful.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace minibert {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; allocated (zero-filled) on first access.
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();

  // Independent leaf holding a copy of the data (no graph, no grad).
  Tensor clone() const;

  // True when both handles refer to the same node.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by operations and backward().
  explicit Tensor(std::shared_ptr<detail::Node<T>> node)
      : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// While alive, operations on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations. All validate shapes and throw ShapeError on mismatch.

// [m x k] . [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// [m x n] -> [n x m]
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

// Elementwise, identical shapes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// x [m x n] plus bias [n] added to every row.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Sum of all elements -> scalar (shape {}).
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Numerically stable softmax along `axis` (max subtracted per slice).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Normalizes each row of the last dimension, then applies gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T epsilon);

// tanh approximation:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// Mean over the batch of -log softmax(logits)[label]. Throws ValidationError
// for labels outside [0, C).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Rows of `table` [v x h] selected by `ids` -> [ids.size() x h].
// Backward scatter-adds into the table. Throws ValidationError for ids out
// of range.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids);

// Columns [start, start + count) of x [m x n].
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);

// Horizontal / vertical concatenation of 2-D tensors.
template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

// Populates grads of every tensor reachable from `loss`. Leaf gradients
// accumulate across calls; intermediate gradients are recomputed each call.
// Throws UsageError if loss is not a single-element tensor.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace minibert
