#pragma once

// Dual image encoders. The high-frequency path is a stride-preserving conv
// stack pooled down to the feature resolution; the low-frequency path is a
// strided conv trunk refined by self-attention blocks with a final layer
// norm (transformer-style), so its features come out unit-scale.

#include "gazefield/nn.hpp"

namespace gazefield {

struct EncoderDims {
  int64_t resolution = 64;
  int64_t feature_res = 16;  // resolution / 4
  int64_t c_high = 64;
  int64_t c_low = 64;
  int attention_heads = 4;
};

namespace detail {

template <class T>
void check_image(const ad::Value<T>& image, int64_t resolution) {
  const auto& v = image.val();
  if (v.rank() != 3 || v.dim(0) != 3 || v.dim(1) != resolution || v.dim(2) != resolution)
    throw std::invalid_argument("encoder: expected [3," + std::to_string(resolution) + "," +
                                std::to_string(resolution) + "] image, got " + v.shape_str());
}

/// [C,H,W] -> tokens [H*W, C]
template <class T>
ad::Value<T> to_tokens(const ad::Value<T>& x) {
  int64_t c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
  return ad::transpose(ad::reshape(x, {c, h * w}));
}

template <class T>
ad::Value<T> from_tokens(const ad::Value<T>& t, int64_t h, int64_t w) {
  int64_t c = t.val().dim(1);
  return ad::reshape(ad::transpose(t), {c, h, w});
}

}  // namespace detail

template <class T>
class HighFreqEncoder {
 public:
  HighFreqEncoder() = default;
  HighFreqEncoder(nn::ParamStore<T>& ps, const std::string& name, const EncoderDims& dims,
                  Rng& rng)
      : dims_(dims) {
    c1_ = nn::Conv<T>(ps, name + ".c1", 3, 16, 3, 1, rng);
    c2_ = nn::Conv<T>(ps, name + ".c2", 16, 24, 3, 1, rng);
    c3_ = nn::Conv<T>(ps, name + ".c3", 24, 32, 3, 1, rng);
    c4_ = nn::Conv<T>(ps, name + ".c4", 32, dims.c_high, 3, 1, rng);
  }

  ad::Value<T> operator()(const ad::Value<T>& image) const {
    detail::check_image(image, dims_.resolution);
    auto x = ad::gelu(c1_(image));
    x = ad::gelu(c2_(x));
    x = ad::gelu(c3_(x));
    x = c4_(x);
    int pool = static_cast<int>(dims_.resolution / dims_.feature_res);
    return ad::avgpool2d(x, pool);
  }

 private:
  EncoderDims dims_;
  nn::Conv<T> c1_, c2_, c3_, c4_;
};

template <class T>
class LowFreqEncoder {
 public:
  LowFreqEncoder() = default;
  LowFreqEncoder(nn::ParamStore<T>& ps, const std::string& name, const EncoderDims& dims,
                 Rng& rng)
      : dims_(dims) {
    t1_ = nn::Conv<T>(ps, name + ".t1", 3, 16, 3, 2, rng);
    t2_ = nn::Conv<T>(ps, name + ".t2", 16, 32, 3, 1, rng);
    t3_ = nn::Conv<T>(ps, name + ".t3", 32, dims.c_low, 3, 2, rng);
    t4_ = nn::Conv<T>(ps, name + ".t4", dims.c_low, dims.c_low, 3, 1, rng);
    a1_ = nn::SelfAttentionBlock<T>(ps, name + ".a1", dims.c_low, dims.attention_heads, rng);
    a2_ = nn::SelfAttentionBlock<T>(ps, name + ".a2", dims.c_low, dims.attention_heads, rng);
    ln_ = nn::LayerNorm<T>(ps, name + ".ln", dims.c_low);
  }

  ad::Value<T> operator()(const ad::Value<T>& image) const {
    detail::check_image(image, dims_.resolution);
    auto x = ad::gelu(t1_(image));
    x = ad::gelu(t2_(x));
    x = ad::gelu(t3_(x));
    x = t4_(x);
    auto tokens = detail::to_tokens(x);
    tokens = a1_(tokens);
    tokens = a2_(tokens);
    tokens = ln_(tokens);
    return detail::from_tokens(tokens, dims_.feature_res, dims_.feature_res);
  }

 private:
  EncoderDims dims_;
  nn::Conv<T> t1_, t2_, t3_, t4_;
  nn::SelfAttentionBlock<T> a1_, a2_;
  nn::LayerNorm<T> ln_;
};

}  // namespace gazefield
