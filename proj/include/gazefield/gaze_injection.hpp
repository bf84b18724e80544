#pragma once

// Gaze prompt embedding, cross-attention injection and stream fusion.
// The gaze embedding is a single token, so each spatial query attends to
// it with weight exactly 1; the injection reduces to a learned, gaze-
// dependent channel shift applied through a residual connection.

#include "gazefield/geometry.hpp"
#include "gazefield/nn.hpp"

namespace gazefield {

template <class T>
class GazeEmbedder {
 public:
  GazeEmbedder() = default;
  GazeEmbedder(nn::ParamStore<T>& ps, const std::string& name, int64_t c_out, Rng& rng) {
    l1_ = nn::Dense<T>(ps, name + ".l1", 2, 32, rng);
    l2_ = nn::Dense<T>(ps, name + ".l2", 32, c_out, rng);
  }

  /// angles: [1,2] (pitch, yaw) -> [1, c_out]
  ad::Value<T> operator()(const ad::Value<T>& angles) const {
    return l2_(ad::gelu(l1_(angles)));
  }

  ad::Value<T> operator()(const GazePrompt& g) const {
    Tensor<T> a({1, 2});
    a[0] = static_cast<T>(g.pitch);
    a[1] = static_cast<T>(g.yaw);
    return (*this)(ad::Value<T>::constant(std::move(a)));
  }

 private:
  nn::Dense<T> l1_, l2_;
};

/// Cross-attention with spatial features as queries and the gaze token as
/// the single key/value. Output projection carries no bias so a zeroed
/// value projection leaves the input untouched through the residual.
template <class T>
class CrossAttentionInjector {
 public:
  CrossAttentionInjector() = default;
  CrossAttentionInjector(nn::ParamStore<T>& ps, const std::string& name, int64_t c, int heads,
                         Rng& rng)
      : channels_(c), heads_(heads) {
    wq_ = nn::Dense<T>(ps, name + ".q", c, c, rng);
    wk_ = nn::Dense<T>(ps, name + ".k", c, c, rng);
    wv_ = nn::Dense<T>(ps, name + ".v", c, c, rng);
    wo_ = ps.add(name + ".o.w", nn::normal_init<T>(rng, {c, c}, 1.0 / std::sqrt(double(c))));
  }

  ad::Value<T> wv_weight() const { return wv_.w; }
  ad::Value<T> wv_bias() const { return wv_.b; }

  /// feature [C,H,W], embedding [1,C] -> [C,H,W]
  ad::Value<T> operator()(const ad::Value<T>& feature, const ad::Value<T>& embedding) const {
    const auto& fv = feature.val();
    if (fv.rank() != 3 || fv.dim(0) != channels_ || embedding.val().dim(1) != channels_)
      throw std::invalid_argument("inject: channel mismatch (feature " + fv.shape_str() + ")");
    int64_t h = fv.dim(1), w = fv.dim(2);
    auto tokens = ad::transpose(ad::reshape(feature, {channels_, h * w}));  // [S,C]
    auto q = wq_(tokens);
    auto k = wk_(embedding);  // [1,C]
    auto v = wv_(embedding);
    int64_t hd = channels_ / heads_;
    T scl = static_cast<T>(1.0 / std::sqrt(double(hd)));
    std::vector<ad::Value<T>> outs;
    for (int hh = 0; hh < heads_; ++hh) {
      auto qh = ad::slice_cols(q, hh * hd, (hh + 1) * hd);
      auto kh = ad::slice_cols(k, hh * hd, (hh + 1) * hd);
      auto vh = ad::slice_cols(v, hh * hd, (hh + 1) * hd);
      // [S,1] scores over the singleton key; softmax gives exactly 1.
      auto att = ad::softmax_last(ad::scale(ad::matmul(qh, ad::transpose(kh)), scl));
      outs.push_back(ad::matmul(att, vh));
    }
    ad::Value<T> cat = outs[0];
    for (size_t i = 1; i < outs.size(); ++i) cat = ad::concat_cols(cat, outs[i]);
    auto injected = ad::add(tokens, ad::matmul(cat, wo_));
    return ad::reshape(ad::transpose(injected), {channels_, h, w});
  }

 private:
  int64_t channels_ = 0;
  int heads_ = 4;
  nn::Dense<T> wq_, wk_, wv_;
  ad::Value<T> wo_;
};

/// Channel concat + learned 1x1 projection.
template <class T>
class StreamFuser {
 public:
  StreamFuser() = default;
  StreamFuser(nn::ParamStore<T>& ps, const std::string& name, int64_t c_high, int64_t c_low,
              int64_t c_out, Rng& rng) {
    proj_ = nn::Conv<T>(ps, name + ".proj", c_high + c_low, c_out, 1, 1, rng);
  }

  ad::Value<T> operator()(const ad::Value<T>& high, const ad::Value<T>& low) const {
    if (high.val().dim(1) != low.val().dim(1) || high.val().dim(2) != low.val().dim(2))
      throw std::invalid_argument("fuse: spatial mismatch");
    return proj_(ad::concat_channels(high, low));
  }

 private:
  nn::Conv<T> proj_;
};

}  // namespace gazefield
