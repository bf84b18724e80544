#pragma once

// The full gaze-redirection model: encoders -> gaze injection -> fusion ->
// triplane decoder -> field head, plus the frozen perceptual pyramid.
// Inference is a single feedforward pass; nothing here mutates weights.

#include "gazefield/config.hpp"
#include "gazefield/encoders.hpp"
#include "gazefield/gaze_injection.hpp"
#include "gazefield/losses.hpp"
#include "gazefield/triplane.hpp"

namespace gazefield {

template <class T>
class GazeModel {
 public:
  GazeModel() = default;

  explicit GazeModel(const Config& cfg) : cfg_(cfg) {
    Rng rng(static_cast<uint64_t>(cfg.model_seed));
    EncoderDims dims;
    dims.resolution = cfg.data_resolution;
    dims.feature_res = cfg.feature_resolution();
    dims.c_high = cfg.model_c_high;
    dims.c_low = cfg.model_c_low;
    dims.attention_heads = cfg.model_heads;
    enc_high_ = HighFreqEncoder<T>(params_, "enc.encoder_high", dims, rng);
    enc_low_ = LowFreqEncoder<T>(params_, "enc.encoder_low", dims, rng);
    embed_ = GazeEmbedder<T>(params_, "enc.gaze_embed", cfg.model_c_high, rng);
    injector_ = CrossAttentionInjector<T>(params_, "enc.inject", cfg.model_c_high,
                                          cfg.model_heads, rng);
    fuser_ = StreamFuser<T>(params_, "enc.fuse", cfg.model_c_high, cfg.model_c_low,
                            cfg.model_c_fused, rng);
    decoder_ = TriplaneDecoder<T>(params_, "rend.decoder", cfg.model_c_fused,
                                  cfg.model_c_triplane, rng);
    field_ = FieldMlp<T>(params_, "rend.field", cfg.model_c_triplane, cfg.model_field_hidden, rng);
    perceptual_ = PerceptualNet<T>(params_, "frozen.perceptual", rng);
  }

  const Config& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  const HighFreqEncoder<T>& encoder_high() const { return enc_high_; }
  const LowFreqEncoder<T>& encoder_low() const { return enc_low_; }
  const GazeEmbedder<T>& gaze_embedder() const { return embed_; }
  const CrossAttentionInjector<T>& injector() const { return injector_; }
  const StreamFuser<T>& fuser() const { return fuser_; }
  const TriplaneDecoder<T>& decoder() const { return decoder_; }
  const FieldMlp<T>& field() const { return field_; }
  const PerceptualNet<T>& perceptual() const { return perceptual_; }

  /// Fused facial representation for one image + gaze prompt. The config
  /// selects whether the prompt is injected into the high- or the
  /// low-frequency stream (the latter is the ablation path).
  ad::Value<T> facial_representation(const ad::Value<T>& image, const GazePrompt& gaze) const {
    auto z_h = enc_high_(image);
    auto z_l = enc_low_(image);
    auto e = embed_(gaze);
    if (cfg_.injection_target == "low")
      z_l = injector_(z_l, e);
    else
      z_h = injector_(z_h, e);
    return fuser_(z_h, z_l);
  }

  ad::Value<T> decode_triplane(const ad::Value<T>& f) const { return decoder_(f); }

  RenderSettings render_settings(bool training, uint64_t jitter_seed = 0) const {
    RenderSettings rs;
    rs.resolution = cfg_.data_resolution;
    rs.samples_per_ray = training ? cfg_.render_samples : cfg_.render_eval_samples;
    rs.near = cfg_.render_near;
    rs.far = cfg_.render_far;
    rs.background = Eigen::Vector3d::Constant(cfg_.render_background);
    rs.stratified = training;
    rs.seed = jitter_seed;
    return rs;
  }

  /// One feedforward redirection pass (evaluation mode, deterministic).
  RenderResult<T> redirect(const Tensor<T>& image, const GazePrompt& gaze,
                           const CameraPose& pose) const {
    auto img = ad::Value<T>::constant(image);
    auto planes = decode_triplane(facial_representation(img, gaze));
    return render_triplane(planes, field_, pose, render_settings(false));
  }

  /// FNV-1a over all parameter bytes; the feedforward-contract tests use
  /// this to assert that inference never updates weights.
  uint64_t parameter_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, v] : params_.items) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(v.val().data());
      size_t n = static_cast<size_t>(v.val().size()) * sizeof(T);
      for (size_t i = 0; i < n; ++i) h = (h ^ bytes[i]) * 1099511628211ULL;
    }
    return h;
  }

 private:
  Config cfg_;
  nn::ParamStore<T> params_;
  HighFreqEncoder<T> enc_high_;
  LowFreqEncoder<T> enc_low_;
  GazeEmbedder<T> embed_;
  CrossAttentionInjector<T> injector_;
  StreamFuser<T> fuser_;
  TriplaneDecoder<T> decoder_;
  FieldMlp<T> field_;
  PerceptualNet<T> perceptual_;
};

}  // namespace gazefield
