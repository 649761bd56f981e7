#include "eisderm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

extern "C" void dgemm_(const char* transa, const char* transb, const int* m,
                       const int* n, const int* k, const double* alpha,
                       const double* a, const int* lda, const double* b,
                       const int* ldb, const double* beta, double* c,
                       const int* ldc);

namespace eisderm::ad {

size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

void gemm_rm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
             const double* a, const double* b, double beta, double* c) {
  // Row-major C = op(A)op(B) via the column-major identity C^T = op(B)^T op(A)^T.
  char ta = trans_a ? 'T' : 'N';
  char tb = trans_b ? 'T' : 'N';
  int lda = trans_a ? m : k;
  int ldb = trans_b ? k : n;
  dgemm_(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &n);
}

namespace {

void check_finite(const Node& n) {
  for (double v : n.value) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by op '") +
                         n.op + "'");
  }
}

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (n->value.size() != shape_size(n->shape))
    throw DimensionError("data length does not match shape " +
                         shape_str(n->shape));
  return n;
}

NodePtr make_op(const char* op, Shape shape, std::vector<double> value,
                std::vector<NodePtr> parents,
                std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  check_finite(*n);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(op) + ": expected 2-d tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  size_t n = shape_size(shape);
  return Tensor(
      make_leaf(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return from({1, 1}, {v}); }

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item(): tensor is not scalar, shape " +
                        shape_str(shape()));
  return node_->value[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0],
         n = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner dims differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  if (m && n && k)
    gemm_rm(false, false, (int)m, (int)n, (int)k, 1.0, a.data().data(),
            b.data().data(), 0.0, out.data());
  auto an = a.node(), bn = b.node();
  return Tensor(make_op(
      "matmul", {m, n}, std::move(out), {an, bn},
      [an, bn, m, n, k](Node& nd) {
        if (an->requires_grad) {
          an->ensure_grad();
          gemm_rm(false, true, (int)m, (int)k, (int)n, 1.0, nd.grad.data(),
                  bn->value.data(), 1.0, an->grad.data());
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          gemm_rm(true, false, (int)k, (int)n, (int)m, 1.0, an->value.data(),
                  nd.grad.data(), 1.0, bn->grad.data());
        }
      }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  bool bias = false;
  if (a.shape() == b.shape()) {
    bias = false;
  } else if (a.shape().size() == 2 && b.shape().size() == 2 &&
             b.shape()[0] == a.shape()[0] && b.shape()[1] == 1) {
    bias = true;
  } else {
    throw DimensionError("add: incompatible shapes " + shape_str(a.shape()) +
                         " + " + shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  if (!bias) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  } else {
    size_t rows = a.shape()[0], cols = a.shape()[1];
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c)
        out[r * cols + c] = a.data()[r * cols + c] + b.data()[r];
  }
  auto an = a.node(), bn = b.node();
  Shape sh = a.shape();
  return Tensor(make_op(
      "add", sh, std::move(out), {an, bn},
      [an, bn, bias](Node& nd) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < nd.grad.size(); ++i)
            an->grad[i] += nd.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (!bias) {
            for (size_t i = 0; i < nd.grad.size(); ++i)
              bn->grad[i] += nd.grad[i];
          } else {
            size_t rows = nd.shape[0], cols = nd.shape[1];
            for (size_t r = 0; r < rows; ++r) {
              double s = 0.0;
              for (size_t c = 0; c < cols; ++c) s += nd.grad[r * cols + c];
              bn->grad[r] += s;
            }
          }
        }
      }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul: shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor(make_op(
      "mul", a.shape(), std::move(out), {an, bn},
      [an, bn](Node& nd) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (size_t i = 0; i < nd.grad.size(); ++i)
            an->grad[i] += nd.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t i = 0; i < nd.grad.size(); ++i)
            bn->grad[i] += nd.grad[i] * an->value[i];
        }
      }));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor affine(const Tensor& t, double a, double b) {
  std::vector<double> out(t.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a * t.data()[i] + b;
  auto tn = t.node();
  return Tensor(make_op(
      "affine", t.shape(), std::move(out), {tn},
      [tn, a](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i)
          tn->grad[i] += a * nd.grad[i];
      }));
}

Tensor scale(const Tensor& t, double a) { return affine(t, a, 0.0); }

Tensor sigmoid(const Tensor& t) {
  std::vector<double> out(t.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = t.data()[i];
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }
  auto tn = t.node();
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor(make_op(
      "sigmoid", t.shape(), std::move(out), {tn},
      [tn, y](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i)
          tn->grad[i] += nd.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
      }));
}

Tensor tanh_op(const Tensor& t) {
  std::vector<double> out(t.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(t.data()[i]);
  auto tn = t.node();
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor(make_op(
      "tanh", t.shape(), std::move(out), {tn},
      [tn, y](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i)
          tn->grad[i] += nd.grad[i] * (1.0 - (*y)[i] * (*y)[i]);
      }));
}

Tensor relu(const Tensor& t) {
  std::vector<double> out(t.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = t.data()[i] > 0 ? t.data()[i] : 0.0;
  auto tn = t.node();
  return Tensor(make_op(
      "relu", t.shape(), std::move(out), {tn},
      [tn](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i)
          if (tn->value[i] > 0) tn->grad[i] += nd.grad[i];
      }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  size_t rows = parts[0].shape()[0], cols = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.shape()[0] != rows)
      throw DimensionError("concat_cols: row count mismatch");
    cols += p.shape()[1];
  }
  std::vector<double> out(rows * cols);
  std::vector<NodePtr> parents;
  size_t off = 0;
  for (const auto& p : parts) {
    size_t pc = p.shape()[1];
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < pc; ++c)
        out[r * cols + off + c] = p.data()[r * pc + c];
    off += pc;
    parents.push_back(p.node());
  }
  return Tensor(make_op(
      "concat_cols", {rows, cols}, std::move(out), parents,
      [parents, rows, cols](Node& nd) {
        size_t off = 0;
        for (const auto& p : parents) {
          size_t pc = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            for (size_t r = 0; r < rows; ++r)
              for (size_t c = 0; c < pc; ++c)
                p->grad[r * pc + c] += nd.grad[r * cols + off + c];
          }
          off += pc;
        }
      }));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  size_t cols = parts[0].shape()[1], rows = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.shape()[1] != cols)
      throw DimensionError("concat_rows: column count mismatch");
    rows += p.shape()[0];
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  return Tensor(make_op(
      "concat_rows", {rows, cols}, std::move(out), parents,
      [parents](Node& nd) {
        size_t off = 0;
        for (const auto& p : parents) {
          size_t sz = p->value.size();
          if (p->requires_grad) {
            p->ensure_grad();
            for (size_t i = 0; i < sz; ++i) p->grad[i] += nd.grad[off + i];
          }
          off += sz;
        }
      }));
}

Tensor slice_cols(const Tensor& t, size_t j0, size_t j1) {
  require_2d(t, "slice_cols");
  size_t rows = t.shape()[0], cols = t.shape()[1];
  if (j0 >= j1 || j1 > cols)
    throw DimensionError("slice_cols: bad range");
  size_t w = j1 - j0;
  std::vector<double> out(rows * w);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < w; ++c) out[r * w + c] = t.data()[r * cols + j0 + c];
  auto tn = t.node();
  return Tensor(make_op(
      "slice_cols", {rows, w}, std::move(out), {tn},
      [tn, j0, w, cols, rows](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < w; ++c)
            tn->grad[r * cols + j0 + c] += nd.grad[r * w + c];
      }));
}

Tensor seq_max_pool(const Tensor& t) {
  require_2d(t, "seq_max_pool");
  size_t rows = t.shape()[0], cols = t.shape()[1];
  if (cols == 0) throw ContractError("seq_max_pool: empty sequence");
  std::vector<double> out(rows);
  auto argmax = std::make_shared<std::vector<size_t>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    size_t best = 0;
    double bv = t.data()[r * cols];
    for (size_t c = 1; c < cols; ++c) {
      double v = t.data()[r * cols + c];
      if (v > bv) {  // strict: first occurrence wins ties
        bv = v;
        best = c;
      }
    }
    out[r] = bv;
    (*argmax)[r] = best;
  }
  auto tn = t.node();
  return Tensor(make_op(
      "seq_max_pool", {rows, 1}, std::move(out), {tn},
      [tn, argmax, cols](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t r = 0; r < nd.grad.size(); ++r)
          tn->grad[r * cols + (*argmax)[r]] += nd.grad[r];
      }));
}

Tensor seq_mean_pool(const Tensor& t) {
  require_2d(t, "seq_mean_pool");
  size_t rows = t.shape()[0], cols = t.shape()[1];
  if (cols == 0) throw ContractError("seq_mean_pool: empty sequence");
  std::vector<double> out(rows, 0.0);
  for (size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (size_t c = 0; c < cols; ++c) s += t.data()[r * cols + c];
    out[r] = s / (double)cols;
  }
  auto tn = t.node();
  return Tensor(make_op(
      "seq_mean_pool", {rows, 1}, std::move(out), {tn},
      [tn, cols](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        double inv = 1.0 / (double)cols;
        for (size_t r = 0; r < nd.grad.size(); ++r)
          for (size_t c = 0; c < cols; ++c)
            tn->grad[r * cols + c] += nd.grad[r] * inv;
      }));
}

namespace {

// im2col for 3x3-style same-padded convolution, K = C*kh*kw rows, H*W cols.
void im2col(const double* x, size_t C, size_t H, size_t W, size_t kh, size_t kw,
            double* cols) {
  size_t ph = kh / 2, pw = kw / 2, hw = H * W;
  size_t r = 0;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ki = 0; ki < kh; ++ki) {
      for (size_t kj = 0; kj < kw; ++kj, ++r) {
        double* row = cols + r * hw;
        for (size_t i = 0; i < H; ++i) {
          long yi = (long)(i + ki) - (long)ph;
          if (yi < 0 || yi >= (long)H) {
            std::fill(row + i * W, row + (i + 1) * W, 0.0);
            continue;
          }
          const double* src = x + (c * H + (size_t)yi) * W;
          for (size_t j = 0; j < W; ++j) {
            long xj = (long)(j + kj) - (long)pw;
            row[i * W + j] =
                (xj < 0 || xj >= (long)W) ? 0.0 : src[(size_t)xj];
          }
        }
      }
    }
  }
}

void col2im_acc(const double* cols, size_t C, size_t H, size_t W, size_t kh,
                size_t kw, double* gx) {
  size_t ph = kh / 2, pw = kw / 2, hw = H * W;
  size_t r = 0;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ki = 0; ki < kh; ++ki) {
      for (size_t kj = 0; kj < kw; ++kj, ++r) {
        const double* row = cols + r * hw;
        for (size_t i = 0; i < H; ++i) {
          long yi = (long)(i + ki) - (long)ph;
          if (yi < 0 || yi >= (long)H) continue;
          double* dst = gx + (c * H + (size_t)yi) * W;
          for (size_t j = 0; j < W; ++j) {
            long xj = (long)(j + kj) - (long)pw;
            if (xj >= 0 && xj < (long)W) dst[(size_t)xj] += row[i * W + j];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 3)
    throw DimensionError("conv2d: input must be (C,H,W), got " +
                         shape_str(x.shape()));
  if (w.shape().size() != 4)
    throw DimensionError("conv2d: weight must be (O,C,kh,kw)");
  size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  size_t O = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != C)
    throw DimensionError("conv2d: channel mismatch, input " +
                         shape_str(x.shape()) + " weight " +
                         shape_str(w.shape()));
  if (b.shape() != Shape{O, 1})
    throw DimensionError("conv2d: bias must be (O,1)");
  size_t K = C * kh * kw, hw = H * W;
  auto cols = std::make_shared<std::vector<double>>(K * hw);
  im2col(x.data().data(), C, H, W, kh, kw, cols->data());
  std::vector<double> out(O * hw);
  gemm_rm(false, false, (int)O, (int)hw, (int)K, 1.0, w.data().data(),
          cols->data(), 0.0, out.data());
  for (size_t o = 0; o < O; ++o) {
    double bo = b.data()[o];
    for (size_t i = 0; i < hw; ++i) out[o * hw + i] += bo;
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Tensor(make_op(
      "conv2d", {O, H, W}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, cols, C, H, W, O, kh, kw, K, hw](Node& nd) {
        if (wn->requires_grad) {
          wn->ensure_grad();
          gemm_rm(false, true, (int)O, (int)K, (int)hw, 1.0, nd.grad.data(),
                  cols->data(), 1.0, wn->grad.data());
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (size_t o = 0; o < O; ++o) {
            double s = 0.0;
            for (size_t i = 0; i < hw; ++i) s += nd.grad[o * hw + i];
            bn->grad[o] += s;
          }
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<double> gcols(K * hw);
          gemm_rm(true, false, (int)K, (int)hw, (int)O, 1.0, wn->value.data(),
                  nd.grad.data(), 0.0, gcols.data());
          col2im_acc(gcols.data(), C, H, W, kh, kw, xn->grad.data());
        }
      }));
}

Tensor maxpool2d(const Tensor& x) {
  if (x.shape().size() != 3)
    throw DimensionError("maxpool2d: input must be (C,H,W)");
  size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  if (H % 2 || W % 2)
    throw DimensionError("maxpool2d: H and W must be even");
  size_t Ho = H / 2, Wo = W / 2;
  std::vector<double> out(C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<size_t>>(C * Ho * Wo);
  for (size_t c = 0; c < C; ++c) {
    for (size_t i = 0; i < Ho; ++i) {
      for (size_t j = 0; j < Wo; ++j) {
        size_t best = (c * H + 2 * i) * W + 2 * j;
        double bv = x.data()[best];
        const size_t cand[3] = {(c * H + 2 * i) * W + 2 * j + 1,
                                (c * H + 2 * i + 1) * W + 2 * j,
                                (c * H + 2 * i + 1) * W + 2 * j + 1};
        for (size_t idx : cand) {
          if (x.data()[idx] > bv) {
            bv = x.data()[idx];
            best = idx;
          }
        }
        size_t oi = (c * Ho + i) * Wo + j;
        out[oi] = bv;
        (*argmax)[oi] = best;
      }
    }
  }
  auto xn = x.node();
  return Tensor(make_op(
      "maxpool2d", {C, Ho, Wo}, std::move(out), {xn},
      [xn, argmax](Node& nd) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < nd.grad.size(); ++i)
          xn->grad[(*argmax)[i]] += nd.grad[i];
      }));
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.shape().size() != 3)
    throw DimensionError("global_avg_pool: input must be (C,H,W)");
  size_t C = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  std::vector<double> out(C, 0.0);
  for (size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < hw; ++i) s += x.data()[c * hw + i];
    out[c] = s / (double)hw;
  }
  auto xn = x.node();
  return Tensor(make_op(
      "global_avg_pool", {C, 1}, std::move(out), {xn},
      [xn, hw](Node& nd) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double inv = 1.0 / (double)hw;
        for (size_t c = 0; c < nd.grad.size(); ++c)
          for (size_t i = 0; i < hw; ++i)
            xn->grad[c * hw + i] += nd.grad[c] * inv;
      }));
}

Tensor bce_with_logits_mean(const Tensor& logits,
                            const std::vector<double>& targets) {
  require_2d(logits, "bce_with_logits_mean");
  if (logits.shape()[0] != 1 || logits.shape()[1] != targets.size())
    throw DimensionError("bce_with_logits_mean: logits must be (1,B) with B "
                         "matching targets");
  size_t B = targets.size();
  double loss = 0.0;
  for (size_t i = 0; i < B; ++i) {
    double l = logits.data()[i], y = targets[i];
    loss += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
  }
  loss /= (double)B;
  auto ln = logits.node();
  auto tgt = std::make_shared<std::vector<double>>(targets);
  return Tensor(make_op(
      "bce_with_logits", {1, 1}, {loss}, {ln},
      [ln, tgt, B](Node& nd) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        double g = nd.grad[0] / (double)B;
        for (size_t i = 0; i < B; ++i) {
          double l = ln->value[i];
          double s = l >= 0 ? 1.0 / (1.0 + std::exp(-l))
                            : std::exp(l) / (1.0 + std::exp(l));
          ln->grad[i] += g * (s - (*tgt)[i]);
        }
      }));
}

Tensor sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  auto tn = t.node();
  return Tensor(make_op(
      "sum", {1, 1}, {s}, {tn},
      [tn](Node& nd) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (double& g : tn->grad) g += nd.grad[0];
      }));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a defined scalar tensor");
  Node* root = loss.raw();
  // Iterative post-order DFS: topo has children after all their descendants.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    auto& g = p.node()->grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
}

}  // namespace eisderm::ad
