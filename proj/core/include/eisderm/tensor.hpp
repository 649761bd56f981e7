#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eisderm/errors.hpp"

namespace eisderm::ad {

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. Edges point from an op's output to its
// inputs; backward() walks them in reverse topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, kept in sync with shape
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  double item() const;  // scalar tensors only

  NodePtr node() const { return node_; }
  Node* raw() const { return node_.get(); }

 private:
  NodePtr node_;
};

// --- forward ops -----------------------------------------------------------

// (m,k) x (k,n) -> (m,n), row-major, BLAS-backed.
Tensor matmul(const Tensor& a, const Tensor& b);

// Same shape, or b of shape (m,1) broadcast over the columns of a (m,n).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor sub(const Tensor& a, const Tensor& b);

// a * t + b, elementwise with scalar coefficients.
Tensor affine(const Tensor& t, double a, double b);
Tensor scale(const Tensor& t, double a);

Tensor sigmoid(const Tensor& t);
Tensor tanh_op(const Tensor& t);
Tensor relu(const Tensor& t);

// Concatenate 2-d tensors along columns (axis 1) or rows (axis 0).
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Columns [j0, j1) of a 2-d tensor.
Tensor slice_cols(const Tensor& t, size_t j0, size_t j1);

// (m,n) -> (m,1); max routes gradient to the first argmax per row.
Tensor seq_max_pool(const Tensor& t);
Tensor seq_mean_pool(const Tensor& t);

// x (C,H,W), w (O,C,kh,kw), b (O,1); stride 1, zero "same" padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// 2x2 stride-2 max pooling on (C,H,W); H and W must be even.
Tensor maxpool2d(const Tensor& x);

// (C,H,W) -> (C,1)
Tensor global_avg_pool(const Tensor& x);

// logits (1,B), targets.size() == B; mean sigmoid cross-entropy, scalar out.
Tensor bce_with_logits_mean(const Tensor& logits,
                            const std::vector<double>& targets);

Tensor sum(const Tensor& t);  // scalar

// --- backward --------------------------------------------------------------

// Reverse-mode sweep from a scalar loss; accumulates into .grad of every
// requires_grad node reachable from it.
void backward(const Tensor& loss);

void zero_grad(const std::vector<Tensor>& params);

// Row-major GEMM helper (wraps BLAS dgemm): C = alpha*op(A)*op(B) + beta*C.
void gemm_rm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
             const double* a, const double* b, double beta, double* c);

}  // namespace eisderm::ad
