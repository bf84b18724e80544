#pragma once

#include <map>
#include <string>

#include "gazefield/autodiff.hpp"
#include "gazefield/rng.hpp"

namespace gazefield::nn {

using ad::Value;

/// Named parameter registry. Modules register their tensors here so the
/// optimizer and checkpoint code see one flat list.
template <class T>
struct ParamStore {
  std::vector<std::pair<std::string, Value<T>>> items;

  Value<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
    auto v = Value<T>::leaf(std::move(init), trainable);
    items.emplace_back(name, v);
    return v;
  }

  std::vector<Value<T>> trainable() const {
    std::vector<Value<T>> out;
    for (auto& [k, v] : items)
      if (v.requires_grad()) out.push_back(v);
    return out;
  }

  Value<T> find(const std::string& name) const {
    for (auto& [k, v] : items)
      if (k == name) return v;
    throw std::out_of_range("parameter not found: " + name);
  }

  /// Trainable parameters whose name starts with `prefix`.
  std::vector<Value<T>> group(const std::string& prefix) const {
    std::vector<Value<T>> out;
    for (auto& [k, v] : items)
      if (v.requires_grad() && k.rfind(prefix, 0) == 0) out.push_back(v);
    return out;
  }
};

template <class T>
Tensor<T> normal_init(Rng& rng, std::vector<int64_t> shape, double stddev) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

/// Fully connected layer, x [m,in] -> [m,out].
template <class T>
struct Dense {
  Value<T> w, b;
  Dense() = default;
  Dense(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, Rng& rng,
        double gain = 1.0, bool trainable = true) {
    w = ps.add(name + ".w", normal_init<T>(rng, {in, out}, gain / std::sqrt(double(in))),
               trainable);
    b = ps.add(name + ".b", Tensor<T>({out}), trainable);
  }
  Value<T> operator()(const Value<T>& x) const { return ad::linear(x, w, b); }
};

/// 3x3 (or kxk) conv layer on [C,H,W].
template <class T>
struct Conv {
  Value<T> w, b;
  int k = 3, stride = 1;
  Conv() = default;
  Conv(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, int k_,
       int stride_, Rng& rng, double gain = 1.0, bool trainable = true)
      : k(k_), stride(stride_) {
    double fan_in = double(in) * k_ * k_;
    w = ps.add(name + ".w", normal_init<T>(rng, {out, in * k_ * k_}, gain / std::sqrt(fan_in)),
               trainable);
    b = ps.add(name + ".b", Tensor<T>({out}), trainable);
  }
  Value<T> operator()(const Value<T>& x) const { return ad::conv2d(x, w, b, k, stride); }
};

/// Learned per-row layer norm params over feature dim n.
template <class T>
struct LayerNorm {
  Value<T> gain, bias;
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, int64_t n, bool trainable = true) {
    gain = ps.add(name + ".g", Tensor<T>::full({n}, T(1)), trainable);
    bias = ps.add(name + ".b", Tensor<T>({n}), trainable);
  }
  Value<T> operator()(const Value<T>& x) const { return ad::layer_norm(x, gain, bias); }
};

/// Multi-head self-attention block with pre-LN and a small FFN,
/// tokens [S, C].
template <class T>
struct SelfAttentionBlock {
  int heads;
  int64_t dim;
  LayerNorm<T> ln1, ln2;
  Dense<T> wq, wk, wv, wo, ff1, ff2;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParamStore<T>& ps, const std::string& name, int64_t c, int heads_,
                     Rng& rng, bool trainable = true)
      : heads(heads_), dim(c) {
    ln1 = LayerNorm<T>(ps, name + ".ln1", c, trainable);
    ln2 = LayerNorm<T>(ps, name + ".ln2", c, trainable);
    wq = Dense<T>(ps, name + ".q", c, c, rng, 1.0, trainable);
    wk = Dense<T>(ps, name + ".k", c, c, rng, 1.0, trainable);
    wv = Dense<T>(ps, name + ".v", c, c, rng, 1.0, trainable);
    wo = Dense<T>(ps, name + ".o", c, c, rng, 1.0, trainable);
    ff1 = Dense<T>(ps, name + ".ff1", c, 2 * c, rng, 1.0, trainable);
    ff2 = Dense<T>(ps, name + ".ff2", 2 * c, c, rng, 1.0, trainable);
  }

  Value<T> operator()(const Value<T>& x) const {
    auto xn = ln1(x);
    auto q = wq(xn), k = wk(xn), v = wv(xn);
    int64_t hd = dim / heads;
    T scale = static_cast<T>(1.0 / std::sqrt(double(hd)));
    std::vector<Value<T>> head_outs;
    for (int h = 0; h < heads; ++h) {
      auto qh = ad::slice_cols(q, h * hd, (h + 1) * hd);
      auto kh = ad::slice_cols(k, h * hd, (h + 1) * hd);
      auto vh = ad::slice_cols(v, h * hd, (h + 1) * hd);
      auto att = ad::softmax_last(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
      head_outs.push_back(ad::matmul(att, vh));
    }
    Value<T> cat = head_outs[0];
    for (size_t h = 1; h < head_outs.size(); ++h) cat = ad::concat_cols(cat, head_outs[h]);
    auto y = ad::add(x, wo(cat));
    auto z = ad::add(y, ff2(ad::gelu(ff1(ln2(y)))));
    return z;
  }
};

/// AdamW with decoupled weight decay and optional per-group learning rates.
template <class T>
class AdamW {
 public:
  struct Group {
    std::vector<Value<T>> params;
    double lr;
  };

  AdamW(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8, double weight_decay = 0.01)
      : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps),
        wd_(weight_decay) {
    for (auto& g : groups_)
      for (auto& p : g.params) {
        m_.push_back(Tensor<double>::zeros(p.val().shape()));
        v_.push_back(Tensor<double>::zeros(p.val().shape()));
      }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    size_t idx = 0;
    for (auto& g : groups_) {
      for (auto& p : g.params) {
        Tensor<T>& w = p.val();
        Tensor<T>& gr = p.grad();
        Tensor<double>& m = m_[idx];
        Tensor<double>& v = v_[idx];
        ++idx;
        for (int64_t i = 0; i < w.size(); ++i) {
          double gi = static_cast<double>(gr[i]);
          m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
          v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
          double mhat = m[i] / bc1, vhat = v[i] / bc2;
          double wi = static_cast<double>(w[i]);
          wi -= g.lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * wi);
          w[i] = static_cast<T>(wi);
        }
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) {
        auto& gr = p.grad();
        std::fill(gr.data(), gr.data() + gr.size(), T(0));
      }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<Tensor<double>>& moments_m() { return m_; }
  std::vector<Tensor<double>>& moments_v() { return v_; }

 private:
  std::vector<Group> groups_;
  double beta1_, beta2_, eps_, wd_;
  int64_t t_ = 0;
  std::vector<Tensor<double>> m_, v_;
};

}  // namespace gazefield::nn
