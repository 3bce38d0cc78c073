// SPDX-License-Identifier: Apache-2.0
#include "oie/autograd.hpp"

#include <cmath>
#include <numbers>

namespace oie::ag {

template <class T>
Var<T> Graph<T>::constant(Mat<T> value) const {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <class T>
Var<T> Graph<T>::leaf(Mat<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && record_;
  return n;
}

template <class T>
Var<T> Graph<T>::make(Mat<T> value, std::initializer_list<Var<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (!record_) return n;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  if (!needs) return n;
  n->requires_grad = true;
  Node<T>* self = n.get();
  n->backward = [fn = std::move(backward), self]() { fn(*self); };
  tape_.push_back(n);
  return n;
}

template <class T>
void Graph<T>::backward(const Var<T>& out) {
  if (out->value.rows() != 1 || out->value.cols() != 1) {
    throw ConfigError("backward: output must be a 1x1 scalar");
  }
  out->grad = Mat<T>::Ones(1, 1);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node<T>& n = **it;
    if (n.grad.size() != 0 && n.backward) n.backward();
  }
  tape_.clear();
}

namespace {

template <class T>
void check(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("shape mismatch in ") + what);
}

}  // namespace

template <class T>
Var<T> matmul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  check<T>(a->value.cols() == b->value.rows(), "matmul");
  Mat<T> out;
  out.noalias() = a->value * b->value;
  return g.make(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad * b->value.transpose());
    if (b->requires_grad) b->accumulate(a->value.transpose() * self.grad);
  });
}

template <class T>
Var<T> matmul_bt(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  check<T>(a->value.cols() == b->value.cols(), "matmul_bt");
  Mat<T> out;
  out.noalias() = a->value * b->value.transpose();
  return g.make(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad * b->value);
    if (b->requires_grad) b->accumulate(self.grad.transpose() * a->value);
  });
}

template <class T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  check<T>(x->value.cols() == w->value.rows(), "linear");
  Mat<T> out;
  out.noalias() = x->value * w->value;
  if (bias) {
    check<T>(bias->value.rows() == 1 && bias->value.cols() == w->value.cols(), "linear bias");
    out.rowwise() += bias->value.row(0);
  }
  return g.make(std::move(out), {x, w, bias}, [x, w, bias](Node<T>& self) {
    if (x->requires_grad) x->accumulate(self.grad * w->value.transpose());
    if (w->requires_grad) w->accumulate(x->value.transpose() * self.grad);
    if (bias && bias->requires_grad) bias->accumulate(self.grad.colwise().sum());
  });
}

template <class T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  check<T>(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(), "add");
  return g.make(a->value + b->value, {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) b->accumulate(self.grad);
  });
}

template <class T>
Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  check<T>(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(), "sub");
  return g.make(a->value - b->value, {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) b->accumulate(-self.grad);
  });
}

template <class T>
Var<T> scale(Graph<T>& g, const Var<T>& a, T s) {
  return g.make(a->value * s, {a}, [a, s](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad * s);
  });
}

template <class T>
Var<T> add_row(Graph<T>& g, const Var<T>& a, const Var<T>& row) {
  check<T>(row->value.rows() == 1 && row->value.cols() == a->value.cols(), "add_row");
  Mat<T> out = a->value;
  out.rowwise() += row->value.row(0);
  return g.make(std::move(out), {a, row}, [a, row](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (row->requires_grad) row->accumulate(self.grad.colwise().sum());
  });
}

template <class T>
Var<T> add_rows_at(Graph<T>& g, const Var<T>& a, const Var<T>& b, int offset) {
  check<T>(offset >= 0 && b->value.cols() == a->value.cols() &&
               offset + b->value.rows() <= a->value.rows(),
           "add_rows_at");
  Mat<T> out = a->value;
  out.middleRows(offset, b->value.rows()) += b->value;
  return g.make(std::move(out), {a, b}, [a, b, offset](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) b->accumulate(self.grad.middleRows(offset, b->value.rows()));
  });
}

template <class T>
Var<T> silu(Graph<T>& g, const Var<T>& a) {
  const Mat<T> sig = (T(1) + (-a->value.array()).exp()).inverse().matrix();
  Mat<T> out = (a->value.array() * sig.array()).matrix();
  return g.make(std::move(out), {a}, [a, sig](Node<T>& self) {
    if (!a->requires_grad) return;
    const auto s = sig.array();
    a->accumulate((self.grad.array() * (s * (T(1) + a->value.array() * (T(1) - s)))).matrix());
  });
}

template <class T>
Var<T> gelu(Graph<T>& g, const Var<T>& a) {
  // tanh approximation
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T k = T(0.044715);
  const auto x = a->value.array();
  Mat<T> th = (c * (x + k * x.cube())).tanh().matrix();
  Mat<T> out = (T(0.5) * x * (T(1) + th.array())).matrix();
  return g.make(std::move(out), {a}, [a, th, c, k](Node<T>& self) {
    if (!a->requires_grad) return;
    const auto xa = a->value.array();
    const auto t = th.array();
    const auto d = T(0.5) * (T(1) + t) +
                   T(0.5) * xa * (T(1) - t.square()) * c * (T(1) + T(3) * k * xa.square());
    a->accumulate((self.grad.array() * d).matrix());
  });
}

template <class T>
Var<T> layer_norm(Graph<T>& g, const Var<T>& a, T eps) {
  const Eigen::Index n = a->value.cols();
  Mat<T> xhat(a->value.rows(), n);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(a->value.rows());
  for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
    const auto row = a->value.row(r).array();
    const T mean = row.mean();
    const T var = (row - mean).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = ((row - mean) * inv_std(r)).matrix();
  }
  Mat<T> out = xhat;
  return g.make(std::move(out), {a}, [a, xhat, inv_std, n](Node<T>& self) {
    if (!a->requires_grad) return;
    Mat<T> dx(self.grad.rows(), n);
    for (Eigen::Index r = 0; r < self.grad.rows(); ++r) {
      const auto dy = self.grad.row(r).array();
      const auto xh = xhat.row(r).array();
      const T mean_dy = dy.mean();
      const T mean_dy_xh = (dy * xh).mean();
      dx.row(r) = ((dy - mean_dy - xh * mean_dy_xh) * inv_std(r)).matrix();
    }
    a->accumulate(dx);
  });
}

template <class T>
Var<T> modulate(Graph<T>& g, const Var<T>& x, const Var<T>& shift, const Var<T>& scale) {
  check<T>(shift->value.rows() == 1 && scale->value.rows() == 1 &&
               shift->value.cols() == x->value.cols() && scale->value.cols() == x->value.cols(),
           "modulate");
  Mat<T> out = x->value;
  const auto factor = (scale->value.array() + T(1)).matrix().eval();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = (out.row(r).array() * factor.row(0).array()).matrix() + shift->value.row(0);
  }
  return g.make(std::move(out), {x, shift, scale}, [x, shift, scale, factor](Node<T>& self) {
    if (x->requires_grad) {
      Mat<T> dx = self.grad;
      for (Eigen::Index r = 0; r < dx.rows(); ++r) dx.row(r).array() *= factor.row(0).array();
      x->accumulate(dx);
    }
    if (shift->requires_grad) shift->accumulate(self.grad.colwise().sum());
    if (scale->requires_grad) {
      scale->accumulate((self.grad.array() * x->value.array()).matrix().colwise().sum());
    }
  });
}

template <class T>
Var<T> gated_add(Graph<T>& g, const Var<T>& h, const Var<T>& gate, const Var<T>& y) {
  check<T>(gate->value.rows() == 1 && gate->value.cols() == y->value.cols() &&
               h->value.rows() == y->value.rows() && h->value.cols() == y->value.cols(),
           "gated_add");
  Mat<T> out = h->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r).array() += y->value.row(r).array() * gate->value.row(0).array();
  }
  return g.make(std::move(out), {h, gate, y}, [h, gate, y](Node<T>& self) {
    if (h->requires_grad) h->accumulate(self.grad);
    if (gate->requires_grad) {
      gate->accumulate((self.grad.array() * y->value.array()).matrix().colwise().sum());
    }
    if (y->requires_grad) {
      Mat<T> dy = self.grad;
      for (Eigen::Index r = 0; r < dy.rows(); ++r) dy.row(r).array() *= gate->value.row(0).array();
      y->accumulate(dy);
    }
  });
}

template <class T>
Var<T> slice_rows(Graph<T>& g, const Var<T>& a, int start, int count) {
  check<T>(start >= 0 && count >= 0 && start + count <= a->value.rows(), "slice_rows");
  Mat<T> out = a->value.middleRows(start, count);
  return g.make(std::move(out), {a}, [a, start, count](Node<T>& self) {
    if (!a->requires_grad) return;
    Mat<T> d = Mat<T>::Zero(a->value.rows(), a->value.cols());
    d.middleRows(start, count) = self.grad;
    a->accumulate(d);
  });
}

template <class T>
Var<T> slice_cols(Graph<T>& g, const Var<T>& a, int start, int count) {
  check<T>(start >= 0 && count >= 0 && start + count <= a->value.cols(), "slice_cols");
  Mat<T> out = a->value.middleCols(start, count);
  return g.make(std::move(out), {a}, [a, start, count](Node<T>& self) {
    if (!a->requires_grad) return;
    Mat<T> d = Mat<T>::Zero(a->value.rows(), a->value.cols());
    d.middleCols(start, count) = self.grad;
    a->accumulate(d);
  });
}

template <class T>
Var<T> concat_rows(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  check<T>(a->value.cols() == b->value.cols(), "concat_rows");
  Mat<T> out(a->value.rows() + b->value.rows(), a->value.cols());
  out.topRows(a->value.rows()) = a->value;
  out.bottomRows(b->value.rows()) = b->value;
  return g.make(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad.topRows(a->value.rows()));
    if (b->requires_grad) b->accumulate(self.grad.bottomRows(b->value.rows()));
  });
}

template <class T>
Var<T> gather_row(Graph<T>& g, const Var<T>& table, int row) {
  check<T>(row >= 0 && row < table->value.rows(), "gather_row");
  Mat<T> out = table->value.row(row);
  return g.make(std::move(out), {table}, [table, row](Node<T>& self) {
    if (!table->requires_grad) return;
    Mat<T> d = Mat<T>::Zero(table->value.rows(), table->value.cols());
    d.row(row) = self.grad.row(0);
    table->accumulate(d);
  });
}

template <class T>
Var<T> attention(Graph<T>& g, const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads) {
  const Eigen::Index d = q->value.cols();
  check<T>(heads > 0 && d % heads == 0 && k->value.cols() == d && v->value.cols() == d &&
               k->value.rows() == v->value.rows(),
           "attention");
  const Eigen::Index dh = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<std::vector<Mat<T>>>(heads);
  Mat<T> out(q->value.rows(), d);
  for (int h = 0; h < heads; ++h) {
    Mat<T> s;
    s.noalias() = q->value.middleCols(h * dh, dh) * k->value.middleCols(h * dh, dh).transpose();
    s *= sc;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const T mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp().matrix();
      s.row(r) /= s.row(r).sum();
    }
    out.middleCols(h * dh, dh).noalias() = s * v->value.middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  return g.make(std::move(out), {q, k, v}, [q, k, v, probs, heads, dh, sc](Node<T>& self) {
    Mat<T> dq, dk, dv;
    if (q->requires_grad) dq.setZero(q->value.rows(), q->value.cols());
    if (k->requires_grad) dk.setZero(k->value.rows(), k->value.cols());
    if (v->requires_grad) dv.setZero(v->value.rows(), v->value.cols());
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& p = (*probs)[h];
      const auto gout = self.grad.middleCols(h * dh, dh);
      if (v->requires_grad) dv.middleCols(h * dh, dh).noalias() = p.transpose() * gout;
      if (!q->requires_grad && !k->requires_grad) continue;
      Mat<T> dp;
      dp.noalias() = gout * v->value.middleCols(h * dh, dh).transpose();
      const auto rowdot = (dp.array() * p.array()).rowwise().sum().eval();
      Mat<T> ds = (p.array() * (dp.array().colwise() - rowdot)).matrix();
      ds *= sc;
      if (q->requires_grad) dq.middleCols(h * dh, dh).noalias() = ds * k->value.middleCols(h * dh, dh);
      if (k->requires_grad) {
        dk.middleCols(h * dh, dh).noalias() = ds.transpose() * q->value.middleCols(h * dh, dh);
      }
    }
    if (q->requires_grad) q->accumulate(std::move(dq));
    if (k->requires_grad) k->accumulate(std::move(dk));
    if (v->requires_grad) v->accumulate(std::move(dv));
  });
}

template <class T>
Var<T> mse(Graph<T>& g, const Var<T>& pred, const Mat<T>& target) {
  check<T>(pred->value.rows() == target.rows() && pred->value.cols() == target.cols(), "mse");
  const Mat<T> diff = pred->value - target;
  const T n = static_cast<T>(diff.size());
  Mat<T> out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return g.make(std::move(out), {pred}, [pred, diff, n](Node<T>& self) {
    if (pred->requires_grad) pred->accumulate(diff * (T(2) * self.grad(0, 0) / n));
  });
}

namespace {

// Builds the (out_voxels) x (27 * c_in) patch matrix.
template <class T>
Mat<T> im2col(const Mat<T>& x, const Conv3dShape& s) {
  const int cin = static_cast<int>(x.cols());
  const int of = s.out_frames(), oh = s.out_height(), ow = s.out_width();
  Mat<T> col = Mat<T>::Zero(static_cast<Eigen::Index>(of) * oh * ow, 27 * cin);
  for (int f = 0; f < of; ++f) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const Eigen::Index orow = (static_cast<Eigen::Index>(f) * oh + y) * ow + xx;
        for (int kt = 0; kt < 3; ++kt) {
          const int sf = f * s.stride_t + kt - 1;
          if (sf < 0 || sf >= s.frames) continue;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y * s.stride_h + ky - 1;
            if (sy < 0 || sy >= s.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = xx * s.stride_w + kx - 1;
              if (sx < 0 || sx >= s.width) continue;
              const Eigen::Index irow = (static_cast<Eigen::Index>(sf) * s.height + sy) * s.width + sx;
              const int k = (kt * 3 + ky) * 3 + kx;
              col.row(orow).segment(k * cin, cin) = x.row(irow);
            }
          }
        }
      }
    }
  }
  return col;
}

template <class T>
Mat<T> col2im(const Mat<T>& dcol, int cin, const Conv3dShape& s) {
  const int of = s.out_frames(), oh = s.out_height(), ow = s.out_width();
  Mat<T> dx = Mat<T>::Zero(static_cast<Eigen::Index>(s.frames) * s.height * s.width, cin);
  for (int f = 0; f < of; ++f) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const Eigen::Index orow = (static_cast<Eigen::Index>(f) * oh + y) * ow + xx;
        for (int kt = 0; kt < 3; ++kt) {
          const int sf = f * s.stride_t + kt - 1;
          if (sf < 0 || sf >= s.frames) continue;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y * s.stride_h + ky - 1;
            if (sy < 0 || sy >= s.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = xx * s.stride_w + kx - 1;
              if (sx < 0 || sx >= s.width) continue;
              const Eigen::Index irow = (static_cast<Eigen::Index>(sf) * s.height + sy) * s.width + sx;
              const int k = (kt * 3 + ky) * 3 + kx;
              dx.row(irow) += dcol.row(orow).segment(k * cin, cin);
            }
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace

template <class T>
Var<T> conv3d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              const Conv3dShape& shape) {
  const int cin = static_cast<int>(x->value.cols());
  check<T>(x->value.rows() == static_cast<Eigen::Index>(shape.frames) * shape.height * shape.width &&
               w->value.rows() == 27 * cin,
           "conv3d");
  auto col = std::make_shared<Mat<T>>(im2col(x->value, shape));
  Mat<T> out;
  out.noalias() = *col * w->value;
  if (bias) out.rowwise() += bias->value.row(0);
  return g.make(std::move(out), {x, w, bias}, [x, w, bias, col, cin, shape](Node<T>& self) {
    if (w->requires_grad) w->accumulate(col->transpose() * self.grad);
    if (bias && bias->requires_grad) bias->accumulate(self.grad.colwise().sum());
    if (x->requires_grad) {
      Mat<T> dcol;
      dcol.noalias() = self.grad * w->value.transpose();
      x->accumulate(col2im(dcol, cin, shape));
    }
  });
}

#define OIE_INSTANTIATE(T)                                                                  \
  template class Graph<T>;                                                                  \
  template Var<T> matmul(Graph<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> matmul_bt(Graph<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> linear(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);           \
  template Var<T> add(Graph<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> sub(Graph<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(Graph<T>&, const Var<T>&, T);                                       \
  template Var<T> add_row(Graph<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> add_rows_at(Graph<T>&, const Var<T>&, const Var<T>&, int);                \
  template Var<T> silu(Graph<T>&, const Var<T>&);                                           \
  template Var<T> gelu(Graph<T>&, const Var<T>&);                                           \
  template Var<T> layer_norm(Graph<T>&, const Var<T>&, T);                                  \
  template Var<T> modulate(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);         \
  template Var<T> gated_add(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);        \
  template Var<T> slice_rows(Graph<T>&, const Var<T>&, int, int);                           \
  template Var<T> slice_cols(Graph<T>&, const Var<T>&, int, int);                           \
  template Var<T> concat_rows(Graph<T>&, const Var<T>&, const Var<T>&);                     \
  template Var<T> gather_row(Graph<T>&, const Var<T>&, int);                                \
  template Var<T> attention(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, int);   \
  template Var<T> mse(Graph<T>&, const Var<T>&, const Mat<T>&);                             \
  template Var<T> conv3d(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&,            \
                         const Conv3dShape&);

OIE_INSTANTIATE(float)
OIE_INSTANTIATE(double)

#undef OIE_INSTANTIATE

}  // namespace oie::ag
