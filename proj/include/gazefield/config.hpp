#pragma once

#include <string>

namespace gazefield {

/// Flat plain-text key=value configuration. Every field is overridable via
/// `set(key, value)` (the CLI's --set flag).
struct Config {
  // data
  int data_resolution = 64;
  int data_identities = 8;
  int data_gazes = 6;
  int data_views = 6;
  long long data_seed = 1;
  std::string data_dir = "dataset";

  // model
  int model_c_high = 64;
  int model_c_low = 64;
  int model_c_fused = 96;
  int model_c_triplane = 16;
  int model_field_hidden = 32;
  int model_heads = 4;
  long long model_seed = 7;

  std::string injection_target = "high";  // high | low
  std::string teacher_kind = "analytic";  // analytic | external

  // render
  int render_samples = 16;       // training-time samples per ray
  int render_eval_samples = 24;  // evaluation-time samples per ray
  double render_near = 0.5;
  double render_far = 2.5;
  double render_background = 0.0;  // gray level, composited on miss

  // losses
  double loss_alpha = 1.0;
  double loss_beta = 1.0;
  double loss_gamma = 0.8;
  double loss_alpha1 = 1.0;
  double loss_alpha2 = 2.0;

  // training
  double train_lr_encoder = 1e-5;
  double train_lr_renderer = 1e-5;
  int train_batch = 4;
  int train_steps = 2000;
  int train_epochs = 0;  // when > 0 and steps == 0: steps = epochs * tuples / batch
  double train_weight_decay = 0.01;
  double train_beta1 = 0.9;
  double train_beta2 = 0.999;
  long long train_seed = 3;
  int train_checkpoint_every = 500;
  int train_log_every = 25;

  int feature_resolution() const { return data_resolution / 4; }
  int triplane_resolution() const { return data_resolution; }  // feature_res * 4

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string serialize() const;

  static Config from_string(const std::string& text);
  static Config load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace gazefield
