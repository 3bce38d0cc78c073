// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "oie/tensor.hpp"

// Minimal tape-based reverse-mode differentiation over dense matrices.
// Only what the backbone, guider and loss need; every op has a matching
// finite-difference test in tests/test_autograd.cpp.
namespace oie::ag {

template <class T>
struct Node {
  Mat<T> value;
  Mat<T> grad;
  bool requires_grad = false;
  std::function<void()> backward;

  // Products are evaluated straight into `grad` (no temporary).
  template <class Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad.noalias() = g;
    } else {
      grad.noalias() += g;
    }
  }
  void accumulate(Mat<T>&& g) {
    if (grad.size() == 0) {
      grad = std::move(g);
    } else {
      grad += g;
    }
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
class Graph {
 public:
  // With record == false no backward closures are kept (inference mode).
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var<T> constant(Mat<T> value) const;
  Var<T> leaf(Mat<T> value, bool requires_grad);

  // Creates a node; `backward` is stored only when some input needs grad.
  Var<T> make(Mat<T> value, std::initializer_list<Var<T>> inputs,
              std::function<void(Node<T>&)> backward);

  // Seeds d(out)/d(out) = 1 for a 1x1 output and runs the tape backwards.
  void backward(const Var<T>& out);

 private:
  bool record_;
  std::vector<Var<T>> tape_;
};

template <class T> Var<T> matmul(Graph<T>& g, const Var<T>& a, const Var<T>& b);
// a * b^T
template <class T> Var<T> matmul_bt(Graph<T>& g, const Var<T>& a, const Var<T>& b);
// x * W + bias (bias is 1 x out, broadcast over rows; may be null)
template <class T> Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias);
template <class T> Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(Graph<T>& g, const Var<T>& a, T s);
// Broadcast-adds a 1 x n row to every row of a.
template <class T> Var<T> add_row(Graph<T>& g, const Var<T>& a, const Var<T>& row);
// Adds `b` to rows [offset, offset + b.rows) of `a`.
template <class T> Var<T> add_rows_at(Graph<T>& g, const Var<T>& a, const Var<T>& b, int offset);
template <class T> Var<T> silu(Graph<T>& g, const Var<T>& a);
template <class T> Var<T> gelu(Graph<T>& g, const Var<T>& a);
// Per-row normalisation without affine parameters.
template <class T> Var<T> layer_norm(Graph<T>& g, const Var<T>& a, T eps = T(1e-6));
// x * (1 + scale) + shift with 1 x n scale/shift rows.
template <class T> Var<T> modulate(Graph<T>& g, const Var<T>& x, const Var<T>& shift, const Var<T>& scale);
// h + gate (1 x n, broadcast) * y
template <class T> Var<T> gated_add(Graph<T>& g, const Var<T>& h, const Var<T>& gate, const Var<T>& y);
template <class T> Var<T> slice_rows(Graph<T>& g, const Var<T>& a, int start, int count);
template <class T> Var<T> slice_cols(Graph<T>& g, const Var<T>& a, int start, int count);
template <class T> Var<T> concat_rows(Graph<T>& g, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> gather_row(Graph<T>& g, const Var<T>& table, int row);
// Multi-head scaled dot-product attention, heads split along columns.
template <class T>
Var<T> attention(Graph<T>& g, const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads);
// Mean of squared differences over every element; returns 1x1.
template <class T> Var<T> mse(Graph<T>& g, const Var<T>& pred, const Mat<T>& target);

// 3-D convolution, kernel 3x3x3, zero padding 1. Activations are stored as
// (frames*height*width) x channels rows in frame-major, then row, then column
// order. Weight is (27 * c_in) x c_out with rows ordered (kt, ky, kx, c_in).
struct Conv3dShape {
  int frames = 0, height = 0, width = 0;
  int stride_t = 1, stride_h = 1, stride_w = 1;

  int out_frames() const { return (frames - 1) / stride_t + 1; }
  int out_height() const { return (height - 1) / stride_h + 1; }
  int out_width() const { return (width - 1) / stride_w + 1; }
};

template <class T>
Var<T> conv3d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              const Conv3dShape& shape);

}  // namespace oie::ag
