#include "minibert/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "minibert/errors.hpp"

namespace minibert {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
NodePtr<T> make_node(Shape shape, std::vector<T> data) {
  if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end()) {
    throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

// Output node wired to `inputs` if any of them participates in autodiff.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<NodePtr<T>> inputs,
                      std::function<void(detail::Node<T>&)> rule) {
  auto node = make_node<T>(std::move(shape), std::move(data));
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->inputs.assign(inputs.begin(), inputs.end());
    node->backward = std::move(rule);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (!x.defined()) throw UsageError(std::string(op) + ": undefined tensor");
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     shape_to_string(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// out[m x n] += a[m x k] . b[k x n]
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* out, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* out_row = out + i * n;
    const T* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T scale = a_row[p];
      if (scale == T(0)) continue;
      const T* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += scale * b_row[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* x, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor members

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto node = make_node<T>(std::move(shape), std::vector<T>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data,
                               bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from_data: shape " + shape_to_string(shape) +
                     " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  auto node = make_node<T>(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= dim(0) || col >= dim(1)) {
    throw ShapeError("at(" + std::to_string(row) + "," + std::to_string(col) +
                     ") out of range for " + shape_to_string(shape()));
  }
  return node_->data[row * dim(1) + col];
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto node = make_node<T>(node_->shape, node_->data);
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Operations

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " +
                     shape_to_string(a.shape()) + " . " +
                     shape_to_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_accumulate(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result<T>({m, n}, std::move(out), {a.node(), b.node()},
                        [m, k, n](detail::Node<T>& self) {
                          auto& an = *self.inputs[0];
                          auto& bn = *self.inputs[1];
                          if (an.requires_grad) {
                            // dA = dC . B^T
                            an.ensure_grad();
                            auto bt = transposed(bn.data.data(), k, n);
                            gemm_accumulate(self.grad.data(), bt.data(),
                                            an.grad.data(), m, n, k);
                          }
                          if (bn.requires_grad) {
                            // dB = A^T . dC
                            bn.ensure_grad();
                            auto at = transposed(an.data.data(), m, k);
                            gemm_accumulate(at.data(), self.grad.data(),
                                            bn.grad.data(), k, m, n);
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  return make_result<T>({cols, rows}, transposed(x.data().data(), rows, cols),
                        {x.node()}, [rows, cols](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < cols; ++j)
                              xn.grad[i * cols + j] += self.grad[j * rows + i];
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()},
                        [](detail::Node<T>& self) {
                          for (auto& in : self.inputs) {
                            if (!in->requires_grad) continue;
                            in->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              in->grad[i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()},
                        [](detail::Node<T>& self) {
                          auto& an = *self.inputs[0];
                          auto& bn = *self.inputs[1];
                          // Read both data arrays before touching grads so the
                          // a == b case (x * x) stays correct.
                          const std::size_t n = self.grad.size();
                          if (an.requires_grad) {
                            an.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              an.grad[i] += self.grad[i] * bn.data[i];
                          }
                          if (bn.requires_grad) {
                            bn.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              bn.grad[i] += self.grad[i] * an.data[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [factor](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            xn.grad[i] += self.grad[i] * factor;
                        });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(x, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw ShapeError("add_row_bias: bias " + shape_to_string(bias.shape()) +
                     " does not match columns of " +
                     shape_to_string(x.shape()));
  }
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  const auto bd = bias.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = xd[i * cols + j] + bd[j];
  return make_result<T>(x.shape(), std::move(out), {x.node(), bias.node()},
                        [rows, cols](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          auto& bn = *self.inputs[1];
                          if (xn.requires_grad) {
                            xn.ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i)
                              xn.grad[i] += self.grad[i];
                          }
                          if (bn.requires_grad) {
                            bn.ensure_grad();
                            for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < cols; ++j)
                                bn.grad[j] += self.grad[i * cols + j];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>({}, {total}, {x.node()}, [](detail::Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    for (auto& g : xn.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " invalid for shape " + shape_to_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = x.dim(axis);
  const auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T max_v = xd[base];
      for (std::size_t i = 1; i < len; ++i) max_v = std::max(max_v, xd[base + i * inner]);
      T total = T(0);
      for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(xd[base + i * inner] - max_v);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x.node()},
      [outer, inner, len](detail::Node<T>& self) {
        auto& xn = *self.inputs[0];
        xn.ensure_grad();
        const auto& y = self.data;
        const auto& dy = self.grad;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T dot = T(0);
            for (std::size_t i = 0; i < len; ++i)
              dot += y[base + i * inner] * dy[base + i * inner];
            for (std::size_t i = 0; i < len; ++i) {
              const std::size_t idx = base + i * inner;
              xn.grad[idx] += y[idx] * (dy[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T epsilon) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  const std::size_t n = x.shape().back();
  if (gain.dim(0) != n || bias.dim(0) != n) {
    throw ShapeError("layer_norm: gain " + shape_to_string(gain.shape()) +
                     " / bias " + shape_to_string(bias.shape()) +
                     " do not match last dimension of " +
                     shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<T> normalized(x.numel());
  std::vector<T> inv_std(rows);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    inv_std[r] = static_cast<T>(istd);
    for (std::size_t j = 0; j < n; ++j) {
      const T xhat = static_cast<T>((row[j] - mean) * istd);
      normalized[r * n + j] = xhat;
      out[r * n + j] = xhat * gd[j] + bd[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [rows, n, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& xn = *self.inputs[0];
        auto& gn = *self.inputs[1];
        auto& bn = *self.inputs[2];
        const auto& dy = self.grad;
        if (gn.requires_grad) {
          gn.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j)
              gn.grad[j] += dy[r * n + j] * normalized[r * n + j];
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) bn.grad[j] += dy[r * n + j];
        }
        if (xn.requires_grad) {
          xn.ensure_grad();
          std::vector<T> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = T(0), mean_dx = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = dy[r * n + j] * gn.data[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * normalized[r * n + j];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              xn.grad[r * n + j] +=
                  inv_std[r] *
                  (dxhat[j] - mean_d - normalized[r * n + j] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T k = static_cast<T>(0.044715);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v)));
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [c, k](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T v = xn.data[i];
                            const T t = std::tanh(c * (v + k * v * v * v));
                            const T d = T(0.5) * (T(1) + t) +
                                        T(0.5) * v * (T(1) - t * t) * c *
                                            (T(1) + T(3) * k * v * v);
                            xn.grad[i] += self.grad[i] * d;
                          }
                        });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T y = self.data[i];
                            xn.grad[i] += self.grad[i] * (T(1) - y * y);
                          }
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_to_string(logits.shape()));
  }
  if (batch == 0) throw ShapeError("cross_entropy: empty batch");
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ValidationError("cross_entropy: label " + std::to_string(labels[i]) +
                            " at row " + std::to_string(i) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
  const auto xd = logits.data();
  std::vector<T> probs(logits.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const T* row = xd.data() + i * classes;
    const T max_v = *std::max_element(row, row + classes);
    T denom = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[i * classes + c] = std::exp(row[c] - max_v);
      denom += probs[i * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] /= denom;
    const T log_sum = max_v + std::log(denom);
    total += static_cast<double>(log_sum - row[labels[i]]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(batch));
  std::vector<int> label_copy(labels.begin(), labels.end());
  return make_result<T>(
      {}, {loss}, {logits.node()},
      [batch, classes, probs = std::move(probs),
       label_copy = std::move(label_copy)](detail::Node<T>& self) {
        auto& xn = *self.inputs[0];
        xn.ensure_grad();
        const T upstream = self.grad[0] / static_cast<T>(batch);
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t c = 0; c < classes; ++c) {
            T g = probs[i * classes + c];
            if (static_cast<int>(c) == label_copy[i]) g -= T(1);
            xn.grad[i * classes + c] += upstream * g;
          }
        }
      });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<T> out(ids.size() * cols);
  const auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw ValidationError("gather_rows: id " + std::to_string(ids[i]) +
                            " outside table of " + std::to_string(rows) +
                            " rows");
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * cols, cols,
                out.data() + i * cols);
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  return make_result<T>({ids.size(), cols}, std::move(out), {table.node()},
                        [cols, id_copy = std::move(id_copy)](detail::Node<T>& self) {
                          auto& tn = *self.inputs[0];
                          tn.ensure_grad();
                          for (std::size_t i = 0; i < id_copy.size(); ++i) {
                            T* dst = tn.grad.data() +
                                     static_cast<std::size_t>(id_copy[i]) * cols;
                            const T* src = self.grad.data() + i * cols;
                            for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
                          }
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (start + count > cols) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " +
                     shape_to_string(x.shape()));
  }
  std::vector<T> out(rows * count);
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xd.data() + i * cols + start, count, out.data() + i * count);
  return make_result<T>({rows, count}, std::move(out), {x.node()},
                        [rows, cols, start, count](detail::Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          xn.ensure_grad();
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < count; ++j)
                              xn.grad[i * cols + start + j] += self.grad[i * count + j];
                        });
}

namespace {

template <typename T>
Tensor<T> concat_impl(std::span<const Tensor<T>> parts, bool by_columns) {
  const char* op = by_columns ? "concat_cols" : "concat_rows";
  if (parts.empty()) throw ShapeError(std::string(op) + ": no inputs");
  for (const auto& p : parts) require_rank(p, 2, op);
  const std::size_t fixed = by_columns ? parts[0].dim(0) : parts[0].dim(1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t f = by_columns ? p.dim(0) : p.dim(1);
    if (f != fixed) {
      throw ShapeError(std::string(op) + ": mismatched part " +
                       shape_to_string(p.shape()) + " vs " +
                       shape_to_string(parts[0].shape()));
    }
    total += by_columns ? p.dim(1) : p.dim(0);
  }
  const std::size_t rows = by_columns ? fixed : total;
  const std::size_t cols = by_columns ? total : fixed;
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto pd = p.data();
    if (by_columns) {
      const std::size_t w = p.dim(1);
      for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(pd.data() + i * w, w, out.data() + i * cols + offset);
      offset += w;
    } else {
      std::copy(pd.begin(), pd.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.dim(0);
    }
  }

  auto node = make_node<T>({rows, cols}, std::move(out));
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parts) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    node->backward = [rows, cols, by_columns,
                      offsets = std::move(offsets)](detail::Node<T>& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        auto& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        in.ensure_grad();
        if (by_columns) {
          const std::size_t w = in.shape[1];
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j)
              in.grad[i * w + j] += self.grad[i * cols + offsets[k] + j];
        } else {
          const std::size_t base = offsets[k] * cols;
          for (std::size_t i = 0; i < in.grad.size(); ++i)
            in.grad[i] += self.grad[base + i];
        }
      }
    };
  }
  return Tensor<T>(std::move(node));
}

}  // namespace

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  return concat_impl(parts, true);
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  return concat_impl(parts, false);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward: loss must be a single-element tensor, got " +
                     (loss.defined() ? shape_to_string(loss.shape())
                                     : std::string("undefined")));
  }
  using Node = detail::Node<T>;
  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward) node->grad.assign(node->data.size(), T(0));
  }
  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

#define MINIBERT_INSTANTIATE_TENSOR(T)                                       \
  template class Tensor<T>;                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> transpose(const Tensor<T>&);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> scale(const Tensor<T>&, T);                             \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> sum(const Tensor<T>&);                                  \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,          \
                                const Tensor<T>&, T);                        \
  template Tensor<T> gelu(const Tensor<T>&);                                 \
  template Tensor<T> tanh(const Tensor<T>&);                                 \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);  \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);    \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                \
  template void backward(const Tensor<T>&);

MINIBERT_INSTANTIATE_TENSOR(float)
MINIBERT_INSTANTIATE_TENSOR(double)

#undef MINIBERT_INSTANTIATE_TENSOR

}  // namespace minibert
