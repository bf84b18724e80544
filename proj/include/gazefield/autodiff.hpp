#pragma once

// Reverse-mode tape over dense tensors. Matrix products go through Eigen;
// everything else is plain loops. Single-threaded by design: training
// determinism contracts require a fixed accumulation order.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "gazefield/tensor.hpp"

namespace gazefield::ad {

template <class T>
using EigenMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatter node.grad into parents

  Tensor<T>& ensure_grad() {
    if (grad.size() == 0) grad = Tensor<T>::zeros(val.shape());
    return grad;
  }
};

/// Shared handle to a tape node.
template <class T>
class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Value leaf(Tensor<T> t, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    return Value(std::move(n));
  }
  static Value constant(Tensor<T> t) { return leaf(std::move(t), false); }

  bool defined() const { return n_ != nullptr; }
  const Tensor<T>& val() const { return n_->val; }
  Tensor<T>& val() { return n_->val; }
  Tensor<T>& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  std::shared_ptr<Node<T>> node() const { return n_; }

  T item() const { return n_->val[0]; }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
Value<T> make_op(Tensor<T> out, std::vector<Value<T>> parents,
                 std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(out);
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Value<T>(std::move(n));
}

}  // namespace detail

/// Backpropagate from a scalar root; accumulates into every reachable
/// node's grad (so parameter grads sum over multiple uses).
template <class T>
void backward(const Value<T>& root) {
  if (root.val().size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  // Iterative post-order topological sort.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx == 0 && seen.count(n)) {
      stack.pop_back();
      continue;
    }
    seen.insert(n);
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx].get();
      ++idx;
      if (!seen.count(p) && p->requires_grad) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->grad.size() > 0) n->backprop(*n);
  }
}

template <class T>
void zero_grad(std::vector<Value<T>>& params) {
  for (auto& p : params) {
    auto& g = p.grad();
    std::fill(g.data(), g.data() + g.size(), T(0));
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <class T>
Value<T> add(const Value<T>& a, const Value<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::invalid_argument("add: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bp[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *n.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Value<T> sub(const Value<T>& a, const Value<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::invalid_argument("sub: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) {
      auto& g = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Value<T> mul(const Value<T>& a, const Value<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::invalid_argument("mul: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const Tensor<T>& av = n.parents[0]->val;
    const Tensor<T>& bv = n.parents[1]->val;
    if (n.parents[0]->requires_grad) {
      auto& g = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

/// y = s * x + c (scalar affine)
template <class T>
Value<T> affine(const Value<T>& x, T s, T c = T(0)) {
  Tensor<T> out = x.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = s * out[i] + c;
  return detail::make_op<T>(std::move(out), {x}, [s](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

template <class T>
Value<T> scale(const Value<T>& x, T s) { return affine(x, s); }

/// Elementwise multiply by a constant tensor (e.g. a mask).
template <class T>
Value<T> mul_const(const Value<T>& x, const Tensor<T>& m) {
  if (!x.val().same_shape(m)) throw std::invalid_argument("mul_const: shape mismatch");
  Tensor<T> out = x.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return detail::make_op<T>(std::move(out), {x}, [m](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * m[i];
  });
}

template <class T>
Value<T> sub_const(const Value<T>& x, const Tensor<T>& c) {
  if (!x.val().same_shape(c)) throw std::invalid_argument("sub_const: shape mismatch");
  Tensor<T> out = x.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= c[i];
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

namespace detail {

template <class T, class F, class DF>
Value<T> unary(const Value<T>& x, F f, DF df) {
  Tensor<T> out = x.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
  return make_op<T>(std::move(out), {x}, [df](Node<T>& n) {
    const Tensor<T>& xv = n.parents[0]->val;
    const Tensor<T>& yv = n.val;
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

template <class T>
Value<T> tanh_op(const Value<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
Value<T> sigmoid(const Value<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Value<T> softplus(const Value<T>& x) {
  return detail::unary(
      x,
      [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
      [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <class T>
Value<T> gelu(const Value<T>& x) {
  // tanh approximation
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return detail::unary(
      x,
      [](T v) {
        double vd = static_cast<double>(v);
        return static_cast<T>(0.5 * vd * (1.0 + std::tanh(k * (vd + 0.044715 * vd * vd * vd))));
      },
      [](T v, T) {
        double vd = static_cast<double>(v);
        double t = std::tanh(k * (vd + 0.044715 * vd * vd * vd));
        double dt = (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * vd * vd);
        return static_cast<T>(0.5 * (1.0 + t) + 0.5 * vd * dt);
      });
}

template <class T>
Value<T> abs_op(const Value<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v >= T(0) ? T(1) : T(-1); });
}

template <class T>
Value<T> exp_neg(const Value<T>& x) {  // exp(-x)
  return detail::unary(
      x, [](T v) { return std::exp(-v); },
      [](T, T y) { return -y; });
}

// ---------------------------------------------------------------------------
// Reductions & shape ops

template <class T>
Value<T> sum_all(const Value<T>& x) {
  T s = 0;
  for (int64_t i = 0; i < x.val().size(); ++i) s += x.val()[i];
  return detail::make_op<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

template <class T>
Value<T> mean_all(const Value<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.val().size()));
}

/// Reduce the last axis of a rank-2 tensor: [m,n] -> [m].
template <class T>
Value<T> sum_last(const Value<T>& x) {
  int64_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> out({m});
  for (int64_t i = 0; i < m; ++i) {
    T s = 0;
    for (int64_t j = 0; j < n; ++j) s += x.val().at(i, j);
    out[i] = s;
  }
  return detail::make_op<T>(std::move(out), {x}, [n](Node<T>& n_) {
    auto& g = n_.parents[0]->ensure_grad();
    int64_t m_ = n_.grad.dim(0);
    for (int64_t i = 0; i < m_; ++i)
      for (int64_t j = 0; j < n; ++j) g.at(i, j) += n_.grad[i];
  });
}

template <class T>
Value<T> reshape(const Value<T>& x, std::vector<int64_t> shape) {
  if (Tensor<T>::count(shape) != x.val().size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor<T> out(std::move(shape));
  std::copy(x.val().data(), x.val().data() + x.val().size(), out.data());
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

/// Columns [c0, c1) of a [m,n] tensor.
template <class T>
Value<T> slice_cols(const Value<T>& x, int64_t c0, int64_t c1) {
  int64_t m = x.val().dim(0), n = x.val().dim(1), w = c1 - c0;
  Tensor<T> out({m, w});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < w; ++j) out.at(i, j) = x.val().at(i, c0 + j);
  return detail::make_op<T>(std::move(out), {x}, [c0, n](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    int64_t m_ = nd.grad.dim(0), w_ = nd.grad.dim(1);
    (void)n;
    for (int64_t i = 0; i < m_; ++i)
      for (int64_t j = 0; j < w_; ++j) g.at(i, c0 + j) += nd.grad.at(i, j);
  });
}

template <class T>
Value<T> concat_cols(const Value<T>& a, const Value<T>& b) {
  int64_t m = a.val().dim(0), na = a.val().dim(1), nb = b.val().dim(1);
  if (b.val().dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
  Tensor<T> out({m, na + nb});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < na; ++j) out.at(i, j) = a.val().at(i, j);
    for (int64_t j = 0; j < nb; ++j) out.at(i, na + j) = b.val().at(i, j);
  }
  return detail::make_op<T>(std::move(out), {a, b}, [na, nb](Node<T>& nd) {
    int64_t m_ = nd.grad.dim(0);
    if (nd.parents[0]->requires_grad) {
      auto& g = nd.parents[0]->ensure_grad();
      for (int64_t i = 0; i < m_; ++i)
        for (int64_t j = 0; j < na; ++j) g.at(i, j) += nd.grad.at(i, j);
    }
    if (nd.parents[1]->requires_grad) {
      auto& g = nd.parents[1]->ensure_grad();
      for (int64_t i = 0; i < m_; ++i)
        for (int64_t j = 0; j < nb; ++j) g.at(i, j) += nd.grad.at(i, na + j);
    }
  });
}

/// Stack k same-length vectors into a [k, m] matrix.
template <class T>
Value<T> stack_rows(const std::vector<Value<T>>& rows) {
  int64_t k = static_cast<int64_t>(rows.size());
  int64_t m = rows[0].val().size();
  Tensor<T> out({k, m});
  for (int64_t r = 0; r < k; ++r)
    std::copy(rows[r].val().data(), rows[r].val().data() + m, out.data() + r * m);
  return detail::make_op<T>(std::move(out), rows, [m](Node<T>& nd) {
    for (size_t r = 0; r < nd.parents.size(); ++r) {
      if (!nd.parents[r]->requires_grad) continue;
      auto& g = nd.parents[r]->ensure_grad();
      for (int64_t i = 0; i < m; ++i) g[i] += nd.grad[static_cast<int64_t>(r) * m + i];
    }
  });
}

template <class T>
Value<T> transpose(const Value<T>& x) {
  int64_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = x.val().at(i, j);
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    int64_t n_ = nd.grad.dim(0), m_ = nd.grad.dim(1);
    for (int64_t j = 0; j < n_; ++j)
      for (int64_t i = 0; i < m_; ++i) g.at(i, j) += nd.grad.at(j, i);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Value<T> matmul(const Value<T>& a, const Value<T>& b) {
  int64_t m = a.val().dim(0), k = a.val().dim(1), n = b.val().dim(1);
  if (b.val().dim(0) != k) throw std::invalid_argument("matmul: inner dim mismatch");
  Tensor<T> out({m, n});
  ConstEigenMap<T> A(a.val().data(), m, k), B(b.val().data(), k, n);
  EigenMap<T> C(out.data(), m, n);
  C.noalias() = A * B;
  return detail::make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& nd) {
    ConstEigenMap<T> G(nd.grad.data(), m, n);
    ConstEigenMap<T> A(nd.parents[0]->val.data(), m, k);
    ConstEigenMap<T> B(nd.parents[1]->val.data(), k, n);
    if (nd.parents[0]->requires_grad) {
      EigenMap<T> GA(nd.parents[0]->ensure_grad().data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (nd.parents[1]->requires_grad) {
      EigenMap<T> GB(nd.parents[1]->ensure_grad().data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

/// x[m,k] * w[k,n] + b[n]
template <class T>
Value<T> linear(const Value<T>& x, const Value<T>& w, const Value<T>& b) {
  int64_t m = x.val().dim(0), k = x.val().dim(1), n = w.val().dim(1);
  if (w.val().dim(0) != k || b.val().size() != n)
    throw std::invalid_argument("linear: shape mismatch");
  Tensor<T> out({m, n});
  ConstEigenMap<T> X(x.val().data(), m, k), W(w.val().data(), k, n);
  EigenMap<T> Y(out.data(), m, n);
  Y.noalias() = X * W;
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i, j) += b.val()[j];
  return detail::make_op<T>(std::move(out), {x, w, b}, [m, k, n](Node<T>& nd) {
    ConstEigenMap<T> G(nd.grad.data(), m, n);
    ConstEigenMap<T> X(nd.parents[0]->val.data(), m, k);
    ConstEigenMap<T> W(nd.parents[1]->val.data(), k, n);
    if (nd.parents[0]->requires_grad) {
      EigenMap<T> GX(nd.parents[0]->ensure_grad().data(), m, k);
      GX.noalias() += G * W.transpose();
    }
    if (nd.parents[1]->requires_grad) {
      EigenMap<T> GW(nd.parents[1]->ensure_grad().data(), k, n);
      GW.noalias() += X.transpose() * G;
    }
    if (nd.parents[2]->requires_grad) {
      auto& gb = nd.parents[2]->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gb[j] += nd.grad.at(i, j);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization / attention pieces

template <class T>
Value<T> softmax_last(const Value<T>& x) {
  int64_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    T mx = x.val().at(i, 0);
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x.val().at(i, j));
    T s = 0;
    for (int64_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(x.val().at(i, j) - mx);
      s += out.at(i, j);
    }
    for (int64_t j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  return detail::make_op<T>(std::move(out), {x}, [m, n](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    for (int64_t i = 0; i < m; ++i) {
      T dot = 0;
      for (int64_t j = 0; j < n; ++j) dot += nd.grad.at(i, j) * nd.val.at(i, j);
      for (int64_t j = 0; j < n; ++j)
        g.at(i, j) += nd.val.at(i, j) * (nd.grad.at(i, j) - dot);
    }
  });
}

/// Row-wise layer norm over the last axis of [m,n], with learned gain/bias.
template <class T>
Value<T> layer_norm(const Value<T>& x, const Value<T>& gain, const Value<T>& bias,
                    T eps = T(1e-5)) {
  int64_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> out({m, n});
  Tensor<T> inv_std({m}), mean({m});
  for (int64_t i = 0; i < m; ++i) {
    T mu = 0;
    for (int64_t j = 0; j < n; ++j) mu += x.val().at(i, j);
    mu /= static_cast<T>(n);
    T var = 0;
    for (int64_t j = 0; j < n; ++j) {
      T d = x.val().at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    T is = T(1) / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    for (int64_t j = 0; j < n; ++j)
      out.at(i, j) = (x.val().at(i, j) - mu) * is * gain.val()[j] + bias.val()[j];
  }
  return detail::make_op<T>(
      std::move(out), {x, gain, bias}, [m, n, mean, inv_std](Node<T>& nd) {
        const Tensor<T>& xv = nd.parents[0]->val;
        const Tensor<T>& gv = nd.parents[1]->val;
        for (int64_t i = 0; i < m; ++i) {
          T is = inv_std[i], mu = mean[i];
          // xhat_j and reductions
          T sum_gy = 0, sum_gyx = 0;
          for (int64_t j = 0; j < n; ++j) {
            T xh = (xv.at(i, j) - mu) * is;
            T gy = nd.grad.at(i, j) * gv[j];
            sum_gy += gy;
            sum_gyx += gy * xh;
          }
          if (nd.parents[0]->requires_grad) {
            auto& gx = nd.parents[0]->ensure_grad();
            for (int64_t j = 0; j < n; ++j) {
              T xh = (xv.at(i, j) - mu) * is;
              T gy = nd.grad.at(i, j) * gv[j];
              gx.at(i, j) += is * (gy - sum_gy / static_cast<T>(n) -
                                   xh * sum_gyx / static_cast<T>(n));
            }
          }
          if (nd.parents[1]->requires_grad) {
            auto& gg = nd.parents[1]->ensure_grad();
            for (int64_t j = 0; j < n; ++j)
              gg[j] += nd.grad.at(i, j) * (xv.at(i, j) - mu) * is;
          }
          if (nd.parents[2]->requires_grad) {
            auto& gb = nd.parents[2]->ensure_grad();
            for (int64_t j = 0; j < n; ++j) gb[j] += nd.grad.at(i, j);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution & spatial ops (NCHW, single image [C,H,W])

namespace detail {

template <class T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad,
            Tensor<T>& cols, int64_t& oh, int64_t& ow) {
  int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  oh = (H + 2 * pad - kh) / stride + 1;
  ow = (W + 2 * pad - kw) / stride + 1;
  cols = Tensor<T>({oh * ow, C * kh * kw});
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      T* row = cols.data() + (oy * ow + ox) * C * kh * kw;
      int64_t idx = 0;
      for (int64_t c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx, ++idx) {
            int64_t iy = oy * stride + ky - pad;
            int64_t ix = ox * stride + kx - pad;
            row[idx] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x.at(c, iy, ix) : T(0);
          }
    }
}

template <class T>
void col2im_add(const Tensor<T>& cols, int64_t C, int64_t H, int64_t W, int kh,
                int kw, int stride, int pad, Tensor<T>& x) {
  int64_t oh = (H + 2 * pad - kh) / stride + 1;
  int64_t ow = (W + 2 * pad - kw) / stride + 1;
  for (int64_t oy = 0; oy < oh; ++oy)
    for (int64_t ox = 0; ox < ow; ++ox) {
      const T* row = cols.data() + (oy * ow + ox) * C * kh * kw;
      int64_t idx = 0;
      for (int64_t c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx, ++idx) {
            int64_t iy = oy * stride + ky - pad;
            int64_t ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W) x.at(c, iy, ix) += row[idx];
          }
    }
}

}  // namespace detail

/// 2D convolution: x [Ci,H,W], w [Co, Ci*kh*kw], b [Co]; square kernel.
template <class T>
Value<T> conv2d(const Value<T>& x, const Value<T>& w, const Value<T>& b, int k,
                int stride = 1, int pad = -1) {
  if (pad < 0) pad = k / 2;
  int64_t Ci = x.val().dim(0);
  int64_t Co = w.val().dim(0);
  if (w.val().dim(1) != Ci * k * k)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  Tensor<T> cols;
  int64_t oh, ow;
  detail::im2col(x.val(), k, k, stride, pad, cols, oh, ow);
  // Y[ohw, Co] = cols[ohw, Cikk] * W^T
  Tensor<T> y({oh * ow, Co});
  {
    ConstEigenMap<T> Cm(cols.data(), oh * ow, Ci * k * k);
    ConstEigenMap<T> Wm(w.val().data(), Co, Ci * k * k);
    EigenMap<T> Ym(y.data(), oh * ow, Co);
    Ym.noalias() = Cm * Wm.transpose();
  }
  // to [Co, oh, ow] with bias
  Tensor<T> out({Co, oh, ow});
  for (int64_t c = 0; c < Co; ++c)
    for (int64_t p = 0; p < oh * ow; ++p)
      out[c * oh * ow + p] = y[p * Co + c] + b.val()[c];
  int64_t H = x.val().dim(1), W = x.val().dim(2);
  return detail::make_op<T>(
      std::move(out), {x, w, b},
      [cols = std::move(cols), Ci, Co, k, stride, pad, oh, ow, H, W](Node<T>& nd) {
        // grad as [ohw, Co]
        Tensor<T> gy({oh * ow, Co});
        for (int64_t c = 0; c < Co; ++c)
          for (int64_t p = 0; p < oh * ow; ++p) gy[p * Co + c] = nd.grad[c * oh * ow + p];
        ConstEigenMap<T> Gy(gy.data(), oh * ow, Co);
        if (nd.parents[1]->requires_grad) {
          EigenMap<T> GW(nd.parents[1]->ensure_grad().data(), Co, Ci * k * k);
          ConstEigenMap<T> Cm(cols.data(), oh * ow, Ci * k * k);
          GW.noalias() += Gy.transpose() * Cm;
        }
        if (nd.parents[2]->requires_grad) {
          auto& gb = nd.parents[2]->ensure_grad();
          for (int64_t c = 0; c < Co; ++c)
            for (int64_t p = 0; p < oh * ow; ++p) gb[c] += nd.grad[c * oh * ow + p];
        }
        if (nd.parents[0]->requires_grad) {
          Tensor<T> gcols({oh * ow, Ci * k * k});
          EigenMap<T> Gc(gcols.data(), oh * ow, Ci * k * k);
          ConstEigenMap<T> Wm(nd.parents[1]->val.data(), Co, Ci * k * k);
          Gc.noalias() = Gy * Wm;
          detail::col2im_add(gcols, Ci, H, W, k, k, stride, pad,
                             nd.parents[0]->ensure_grad());
        }
      });
}

/// Average pooling with window = stride = k; x [C,H,W].
template <class T>
Value<T> avgpool2d(const Value<T>& x, int k) {
  int64_t C = x.val().dim(0), H = x.val().dim(1), W = x.val().dim(2);
  int64_t oh = H / k, ow = W / k;
  Tensor<T> out({C, oh, ow});
  T inv = T(1) / static_cast<T>(k * k);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        T s = 0;
        for (int y = 0; y < k; ++y)
          for (int z = 0; z < k; ++z) s += x.val().at(c, i * k + y, j * k + z);
        out.at(c, i, j) = s * inv;
      }
  return detail::make_op<T>(std::move(out), {x}, [k, inv](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    int64_t C = nd.grad.dim(0), oh = nd.grad.dim(1), ow = nd.grad.dim(2);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          T gv = nd.grad.at(c, i, j) * inv;
          for (int y = 0; y < k; ++y)
            for (int z = 0; z < k; ++z) g.at(c, i * k + y, j * k + z) += gv;
        }
  });
}

template <class T>
Value<T> upsample_nearest2x(const Value<T>& x) {
  int64_t C = x.val().dim(0), H = x.val().dim(1), W = x.val().dim(2);
  Tensor<T> out({C, H * 2, W * 2});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < H * 2; ++i)
      for (int64_t j = 0; j < W * 2; ++j) out.at(c, i, j) = x.val().at(c, i / 2, j / 2);
  return detail::make_op<T>(std::move(out), {x}, [](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    int64_t C = g.dim(0), H = g.dim(1), W = g.dim(2);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H * 2; ++i)
        for (int64_t j = 0; j < W * 2; ++j) g.at(c, i / 2, j / 2) += nd.grad.at(c, i, j);
  });
}

/// Concatenate two [C,H,W] maps along channels.
template <class T>
Value<T> concat_channels(const Value<T>& a, const Value<T>& b) {
  int64_t Ca = a.val().dim(0), Cb = b.val().dim(0);
  int64_t H = a.val().dim(1), W = a.val().dim(2);
  if (b.val().dim(1) != H || b.val().dim(2) != W)
    throw std::invalid_argument("concat_channels: spatial mismatch");
  Tensor<T> out({Ca + Cb, H, W});
  std::copy(a.val().data(), a.val().data() + Ca * H * W, out.data());
  std::copy(b.val().data(), b.val().data() + Cb * H * W, out.data() + Ca * H * W);
  return detail::make_op<T>(std::move(out), {a, b}, [Ca, Cb, H, W](Node<T>& nd) {
    if (nd.parents[0]->requires_grad) {
      auto& g = nd.parents[0]->ensure_grad();
      for (int64_t i = 0; i < Ca * H * W; ++i) g[i] += nd.grad[i];
    }
    if (nd.parents[1]->requires_grad) {
      auto& g = nd.parents[1]->ensure_grad();
      for (int64_t i = 0; i < Cb * H * W; ++i) g[i] += nd.grad[Ca * H * W + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Exclusive cumulative sum along the last axis of [m,n] (for transmittance).

template <class T>
Value<T> exclusive_cumsum_last(const Value<T>& x) {
  int64_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    T acc = 0;
    for (int64_t j = 0; j < n; ++j) {
      out.at(i, j) = acc;
      acc += x.val().at(i, j);
    }
  }
  return detail::make_op<T>(std::move(out), {x}, [m, n](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    for (int64_t i = 0; i < m; ++i) {
      T acc = 0;
      for (int64_t j = n - 1; j >= 0; --j) {
        g.at(i, j) += acc;          // dy_k/dx_j = 1 for k > j
        acc += nd.grad.at(i, j);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Triplane bilinear sampling. Planes: [3, C, R, R] in plane order
// (XY, XZ, YZ); points: [P, 3] in [-1,1]^3 (clamped). Output: [P, C],
// the sum of the three per-plane bilinear lookups.

template <class T>
Value<T> triplane_sample(const Value<T>& planes, const Tensor<T>& points) {
  int64_t C = planes.val().dim(1), R = planes.val().dim(2);
  int64_t P = points.dim(0);
  // Per point and plane: cell indices + weights, reused in backward.
  struct Tap {
    int64_t i0, j0;
    T wi, wj;  // fractional offsets
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(P * 3));
  auto grid_coord = [R](T v, int64_t& i0, T& w) {
    v = std::clamp(v, T(-1), T(1));
    T u = (v + T(1)) * T(0.5) * static_cast<T>(R - 1);
    i0 = std::min<int64_t>(static_cast<int64_t>(std::floor(u)), R - 2);
    i0 = std::max<int64_t>(i0, 0);
    w = u - static_cast<T>(i0);
  };
  // plane axis pairs: XY -> (x,y), XZ -> (x,z), YZ -> (y,z)
  static constexpr int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int64_t p = 0; p < P; ++p)
    for (int pl = 0; pl < 3; ++pl) {
      Tap& t = (*taps)[static_cast<size_t>(p * 3 + pl)];
      grid_coord(points.at(p, axes[pl][0]), t.j0, t.wj);  // first axis -> column
      grid_coord(points.at(p, axes[pl][1]), t.i0, t.wi);  // second axis -> row
    }
  Tensor<T> out({P, C});
  const Tensor<T>& pv = planes.val();
  int64_t plane_stride = C * R * R;
  for (int64_t p = 0; p < P; ++p) {
    T* orow = out.data() + p * C;
    for (int pl = 0; pl < 3; ++pl) {
      const Tap& t = (*taps)[static_cast<size_t>(p * 3 + pl)];
      T w00 = (T(1) - t.wi) * (T(1) - t.wj), w01 = (T(1) - t.wi) * t.wj;
      T w10 = t.wi * (T(1) - t.wj), w11 = t.wi * t.wj;
      const T* base = pv.data() + pl * plane_stride;
      for (int64_t c = 0; c < C; ++c) {
        const T* pc = base + c * R * R;
        orow[c] += w00 * pc[t.i0 * R + t.j0] + w01 * pc[t.i0 * R + t.j0 + 1] +
                   w10 * pc[(t.i0 + 1) * R + t.j0] + w11 * pc[(t.i0 + 1) * R + t.j0 + 1];
      }
    }
  }
  return detail::make_op<T>(std::move(out), {planes}, [taps, C, R, P](Node<T>& nd) {
    auto& g = nd.parents[0]->ensure_grad();
    int64_t plane_stride = C * R * R;
    for (int64_t p = 0; p < P; ++p) {
      const T* grow = nd.grad.data() + p * C;
      for (int pl = 0; pl < 3; ++pl) {
        const auto& t = (*taps)[static_cast<size_t>(p * 3 + pl)];
        T w00 = (T(1) - t.wi) * (T(1) - t.wj), w01 = (T(1) - t.wi) * t.wj;
        T w10 = t.wi * (T(1) - t.wj), w11 = t.wi * t.wj;
        T* base = g.data() + pl * plane_stride;
        for (int64_t c = 0; c < C; ++c) {
          T* pc = base + c * R * R;
          T gv = grow[c];
          pc[t.i0 * R + t.j0] += w00 * gv;
          pc[t.i0 * R + t.j0 + 1] += w01 * gv;
          pc[(t.i0 + 1) * R + t.j0] += w10 * gv;
          pc[(t.i0 + 1) * R + t.j0 + 1] += w11 * gv;
        }
      }
    }
  });
}

}  // namespace gazefield::ad
