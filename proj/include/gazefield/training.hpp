#pragma once

// Dataset loading, pair sampling, the optimization loop, evaluation and
// benchmarking. The trainer is templated on the scalar type; production
// training runs in float, the gradient test-bench instantiates double.

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>

#include "gazefield/checkpoint.hpp"
#include "gazefield/evaluation.hpp"
#include "gazefield/io.hpp"
#include "gazefield/model.hpp"

namespace gazefield {

struct LoadedView {
  ViewRecord rec;
  Tensor<double> image;  // [3,H,W]
  Tensor<double> mask;   // [H,W]
  Tensor<double> depth;  // [H,W]
  double mask_sum = 0.0;
};

/// Whole dataset preloaded into memory, indexed [identity][gaze][view].
class Dataset {
 public:
  static Dataset load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::string manifest = fs::is_directory(dir) ? (fs::path(dir) / "manifest").string() : dir;
    Dataset d;
    for (ViewRecord& rec : read_manifest(manifest)) {
      d.identities_ = std::max(d.identities_, rec.identity + 1);
      d.gazes_ = std::max(d.gazes_, rec.gaze_index + 1);
      d.views_ = std::max(d.views_, rec.view_index + 1);
      LoadedView v;
      v.image = read_ppm(rec.image_path);
      v.mask = read_pgm(rec.mask_path);
      v.depth = read_depth(rec.depth_path);
      for (int64_t i = 0; i < v.mask.size(); ++i) v.mask_sum += v.mask[i];
      v.rec = std::move(rec);
      d.list_.push_back(std::move(v));
    }
    if (d.list_.empty()) throw std::runtime_error("empty dataset: " + manifest);
    if (static_cast<int64_t>(d.list_.size()) !=
        int64_t(d.identities_) * d.gazes_ * d.views_)
      throw std::runtime_error("dataset: manifest does not form a full grid");
    d.grid_.resize(d.list_.size());
    for (const LoadedView& v : d.list_)
      d.grid_[d.index(v.rec.identity, v.rec.gaze_index, v.rec.view_index)] = &v;
    for (const LoadedView* p : d.grid_)
      if (!p) throw std::runtime_error("dataset: duplicate or missing grid entry");
    d.resolution_ = static_cast<int>(d.list_.front().image.dim(1));
    return d;
  }

  int identities() const { return identities_; }
  int gazes() const { return gazes_; }
  int views() const { return views_; }
  int resolution() const { return resolution_; }
  int64_t size() const { return static_cast<int64_t>(list_.size()); }

  const LoadedView& view(int id, int gi, int vi) const { return *grid_[index(id, gi, vi)]; }
  const LoadedView& operator[](int64_t i) const { return list_[static_cast<size_t>(i)]; }

 private:
  size_t index(int id, int gi, int vi) const {
    return (static_cast<size_t>(id) * gazes_ + gi) * views_ + vi;
  }

  int identities_ = 0, gazes_ = 0, views_ = 0, resolution_ = 0;
  std::vector<LoadedView> list_;     // stable storage, manifest order
  std::vector<const LoadedView*> grid_;
};

inline DatasetSpec spec_from_config(const Config& cfg) {
  DatasetSpec spec;
  spec.n_identities = cfg.data_identities;
  spec.gazes_per_identity = cfg.data_gazes;
  spec.views_per_identity = cfg.data_views;
  spec.resolution = cfg.data_resolution;
  spec.seed = static_cast<uint64_t>(cfg.data_seed);
  return spec;
}

struct TrainPair {
  const LoadedView* source = nullptr;
  const LoadedView* target = nullptr;
  Tensor<double> teacher;  // target-view depth prior
};

struct StepMetrics {
  int64_t step = 0;
  double recon = 0, distill = 0, perceptual = 0, total = 0;
};

template <class T>
class Trainer {
 public:
  Trainer(const Config& cfg, const Dataset& data)
      : cfg_(cfg), data_(&data), model_(cfg), rng_(static_cast<uint64_t>(cfg.train_seed)) {
    check_dataset();
    init_optimizer();
  }

  /// Restores model weights, optimizer moments, RNG state and step count.
  Trainer(const std::string& checkpoint_path, const Dataset& data)
      : data_(&data) {
    CheckpointExtras ex;
    model_ = load_checkpoint<T>(checkpoint_path, &ex);
    cfg_ = model_.config();
    check_dataset();
    init_optimizer();
    step_ = ex.step;
    opt_->set_step_count(ex.adam_step);
    if (!ex.adam_m.empty()) {
      if (ex.adam_m.size() != opt_->moments_m().size())
        throw std::runtime_error("checkpoint optimizer state size mismatch");
      opt_->moments_m() = std::move(ex.adam_m);
      opt_->moments_v() = std::move(ex.adam_v);
    }
    if (auto it = ex.rng_states.find("train"); it != ex.rng_states.end())
      rng_.deserialize(it->second);
  }

  const Config& config() const { return cfg_; }
  GazeModel<T>& model() { return model_; }
  const GazeModel<T>& model() const { return model_; }
  int64_t step_count() const { return step_; }

  int64_t total_steps() const {
    if (cfg_.train_steps > 0) return cfg_.train_steps;
    if (cfg_.train_epochs > 0)
      return int64_t(cfg_.train_epochs) * data_->size() / std::max(1, cfg_.train_batch);
    throw std::invalid_argument("train: need train.steps or train.epochs");
  }

  /// Same-identity pair with distinct (gaze, view); targets with an empty
  /// eye mask are rejected so the eye loss term is always defined.
  TrainPair sample_pair() {
    const int n = data_->gazes() * data_->views();
    for (int attempt = 0; attempt < 256; ++attempt) {
      int id = static_cast<int>(rng_.uniform_int(data_->identities()));
      int a = static_cast<int>(rng_.uniform_int(n));
      int b = static_cast<int>(rng_.uniform_int(n));
      if (a == b) continue;
      const LoadedView& src = data_->view(id, a / data_->views(), a % data_->views());
      const LoadedView& tgt = data_->view(id, b / data_->views(), b % data_->views());
      if (tgt.mask_sum <= 0.0) continue;
      TrainPair p;
      p.source = &src;
      p.target = &tgt;
      if (cfg_.teacher_kind == "external") {
        p.teacher = tgt.depth;
      } else {
        TeacherScene scene = make_frontal_scene(
            dataset_identity_seed(spec_from_config(cfg_), id), tgt.rec.gaze);
        p.teacher = teacher_depth(scene, tgt.rec.pose, data_->resolution(), data_->resolution());
      }
      return p;
    }
    throw std::runtime_error("sample_pair: could not draw a usable pair");
  }

  LossWeights loss_weights() const {
    LossWeights w;
    w.alpha = cfg_.loss_alpha;
    w.beta = cfg_.loss_beta;
    w.gamma = cfg_.loss_gamma;
    w.alpha1 = cfg_.loss_alpha1;
    w.alpha2 = cfg_.loss_alpha2;
    return w;
  }

  StepMetrics train_step() {
    const LossWeights w = loss_weights();
    const T inv_batch = T(1) / static_cast<T>(cfg_.train_batch);
    opt_->zero_grad();
    StepMetrics m;
    for (int b = 0; b < cfg_.train_batch; ++b) {
      TrainPair pr = sample_pair();
      auto src = ad::Value<T>::constant(pr.source->image.template cast<T>());
      auto planes = model_.decode_triplane(
          model_.facial_representation(src, pr.target->rec.gaze));
      RenderSettings rs = model_.render_settings(/*training=*/true, rng_.next_u64());
      RenderResult<T> out = render_triplane(planes, model_.field(), pr.target->rec.pose, rs);

      Tensor<T> tgt = pr.target->image.template cast<T>();
      Tensor<T> mask = pr.target->mask.template cast<T>();
      auto l_r = recon_loss(out.image, tgt, mask, w);
      auto l_d = distill_loss(out.depth, pr.teacher.template cast<T>());
      auto l_p = perceptual_loss(out.image, tgt, model_.perceptual());
      auto l = total_loss(l_r, l_d, l_p, w);
      ad::backward(ad::scale(l, inv_batch));

      m.recon += static_cast<double>(l_r.item()) / cfg_.train_batch;
      m.distill += static_cast<double>(l_d.item()) / cfg_.train_batch;
      m.perceptual += static_cast<double>(l_p.item()) / cfg_.train_batch;
      m.total += static_cast<double>(l.item()) / cfg_.train_batch;
    }
    opt_->step();
    m.step = ++step_;
    return m;
  }

  void save(const std::string& path) {
    CheckpointExtras ex;
    ex.step = step_;
    ex.adam_step = opt_->step_count();
    ex.adam_m = opt_->moments_m();
    ex.adam_v = opt_->moments_v();
    ex.rng_states["train"] = rng_.serialize();
    save_checkpoint(path, model_, ex);
  }

  /// Runs to `total_steps()`, logging and checkpointing into out_dir.
  /// Returns the final-step metrics.
  StepMetrics run(const std::string& out_dir, std::ostream* log = &std::cout) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const int64_t steps = total_steps();
    StepMetrics last;
    auto t0 = std::chrono::steady_clock::now();
    while (step_ < steps) {
      last = train_step();
      if (log && (cfg_.train_log_every > 0) &&
          (last.step % cfg_.train_log_every == 0 || last.step == steps)) {
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        *log << "step " << std::setw(6) << last.step << "/" << steps
             << "  total " << std::fixed << std::setprecision(5) << last.total
             << "  recon " << last.recon << "  distill " << last.distill
             << "  perc " << last.perceptual
             << "  (" << std::setprecision(1) << secs << "s)\n"
             << std::defaultfloat << std::setprecision(6);
        log->flush();
      }
      if (cfg_.train_checkpoint_every > 0 && last.step % cfg_.train_checkpoint_every == 0) {
        std::ostringstream name;
        name << "checkpoint_" << std::setw(6) << std::setfill('0') << last.step << ".gfck";
        save((fs::path(out_dir) / name.str()).string());
      }
    }
    save((fs::path(out_dir) / "final.gfck").string());
    return last;
  }

 private:
  void check_dataset() const {
    if (data_->resolution() != cfg_.data_resolution)
      throw std::invalid_argument("trainer: dataset resolution does not match config");
  }

  void init_optimizer() {
    std::vector<typename nn::AdamW<T>::Group> groups;
    groups.push_back({model_.params().group("enc."), cfg_.train_lr_encoder});
    groups.push_back({model_.params().group("rend."), cfg_.train_lr_renderer});
    opt_.emplace(std::move(groups), cfg_.train_beta1, cfg_.train_beta2, 1e-8,
                 cfg_.train_weight_decay);
  }

  Config cfg_;
  const Dataset* data_ = nullptr;
  GazeModel<T> model_;
  Rng rng_;
  std::optional<nn::AdamW<T>> opt_;
  int64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation: redirect frontal source views to held-out gaze prompts and
// score them with the pupil oracle, plus depth / image-quality metrics.

struct GazeEvalResult {
  double mean_error_deg = 0.0;
  double detection_rate = 0.0;
  int probes = 0, detected = 0;
};

/// Held-out gaze prompt: drawn from a stream disjoint from dataset_gaze.
inline GazePrompt eval_gaze(const DatasetSpec& spec, uint64_t seed, int probe) {
  Rng rng(seed ^ (0xe7a10000ULL + static_cast<uint64_t>(probe) * 7919ULL));
  return GazePrompt(rng.uniform(-spec.max_pitch, spec.max_pitch),
                    rng.uniform(-spec.max_yaw, spec.max_yaw));
}

template <class T>
GazeEvalResult gaze_redirection_error(const GazeModel<T>& model, const Dataset& data,
                                      int n_probes, uint64_t seed) {
  const Config& cfg = model.config();
  DatasetSpec spec = spec_from_config(cfg);
  CameraPose frontal = frontal_pose(data.resolution());
  GazeEvalResult res;
  res.probes = n_probes;
  double err_sum = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    int id = p % data.identities();
    // Frontal source view (view 0), cycling over its training gazes.
    const LoadedView& src = data.view(id, p % data.gazes(), 0);
    GazePrompt want = eval_gaze(spec, seed, p);
    RenderResult<T> out =
        model.redirect(src.image.template cast<T>(), want, frontal);
    IdentityAppearance app = make_identity(dataset_identity_seed(spec, id));
    // The eye mask is gaze-independent, so the stored frontal mask applies.
    PupilDetection det =
        recover_gaze(out.image.val().template cast<double>(), src.mask, app, frontal);
    if (!det.found) continue;
    ++res.detected;
    err_sum += angular_error_deg(det.gaze, want);
  }
  res.detection_rate = n_probes > 0 ? double(res.detected) / n_probes : 0.0;
  // Undetected pupils score as the worst case so a collapsed model cannot
  // look good by being unreadable.
  res.mean_error_deg =
      n_probes > 0 ? (err_sum + (n_probes - res.detected) * 90.0) / n_probes : 0.0;
  return res;
}

/// Mean |rendered depth - analytic prior| over redirections of frontal views.
template <class T>
double depth_distill_l1(const GazeModel<T>& model, const Dataset& data, int n_probes,
                        uint64_t seed) {
  DatasetSpec spec = spec_from_config(model.config());
  CameraPose frontal = frontal_pose(data.resolution());
  double sum = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    int id = p % data.identities();
    const LoadedView& src = data.view(id, p % data.gazes(), 0);
    GazePrompt want = eval_gaze(spec, seed, p);
    RenderResult<T> out = model.redirect(src.image.template cast<T>(), want, frontal);
    TeacherScene scene = make_frontal_scene(dataset_identity_seed(spec, id), want);
    Tensor<double> prior =
        teacher_depth(scene, frontal, data.resolution(), data.resolution());
    Tensor<double> d = out.depth.val().template cast<double>();
    double acc = 0.0;
    for (int64_t i = 0; i < d.size(); ++i) acc += std::abs(d[i] - prior[i]);
    sum += acc / static_cast<double>(d.size());
  }
  return n_probes > 0 ? sum / n_probes : 0.0;
}

/// Reconstruction quality on dataset tuples: redirect one view of an
/// identity to another view's (gaze, pose) and compare to the rendered
/// ground truth.
template <class T>
std::map<std::string, double> evaluate_model(const GazeModel<T>& model, const Dataset& data,
                                             int n_probes, uint64_t seed) {
  Rng rng(seed);
  double psnr_sum = 0.0, ssim_sum = 0.0;
  const int n = data.gazes() * data.views();
  for (int p = 0; p < n_probes; ++p) {
    int id = static_cast<int>(rng.uniform_int(data.identities()));
    int a = static_cast<int>(rng.uniform_int(n)), b = static_cast<int>(rng.uniform_int(n));
    if (a == b) b = (b + 1) % n;
    const LoadedView& src = data.view(id, a / data.views(), a % data.views());
    const LoadedView& tgt = data.view(id, b / data.views(), b % data.views());
    RenderResult<T> out =
        model.redirect(src.image.template cast<T>(), tgt.rec.gaze, tgt.rec.pose);
    Tensor<double> img = out.image.val().template cast<double>();
    psnr_sum += psnr(img, tgt.image);
    ssim_sum += ssim(img, tgt.image);
  }
  GazeEvalResult g = gaze_redirection_error(model, data, n_probes, seed);
  std::map<std::string, double> rep;
  rep["psnr"] = n_probes > 0 ? psnr_sum / n_probes : 0.0;
  rep["ssim"] = n_probes > 0 ? ssim_sum / n_probes : 0.0;
  rep["gaze_error_deg"] = g.mean_error_deg;
  rep["gaze_detection_rate"] = g.detection_rate;
  rep["depth_l1"] = depth_distill_l1(model, data, n_probes, seed);
  rep["probes"] = n_probes;
  return rep;
}

// ---------------------------------------------------------------------------
// Benchmark: encode / render / total wall-clock per feedforward pass.

struct BenchmarkResult {
  int iterations = 0;
  double encode_ms_mean = 0, encode_ms_std = 0;
  double render_ms_mean = 0, render_ms_std = 0;
  double total_ms_mean = 0, total_ms_std = 0;
  uint64_t param_hash_before = 0, param_hash_after = 0;
};

template <class T>
BenchmarkResult benchmark_model(const GazeModel<T>& model, int iterations, int warmup = 10) {
  using clock = std::chrono::steady_clock;
  const Config& cfg = model.config();
  Rng rng(42);
  Tensor<T> image({3, cfg.data_resolution, cfg.data_resolution});
  for (int64_t i = 0; i < image.size(); ++i) image[i] = static_cast<T>(rng.uniform());
  CameraPose pose = frontal_pose(cfg.data_resolution);
  GazePrompt gaze(0.1, -0.2);

  BenchmarkResult res;
  res.iterations = iterations;
  res.param_hash_before = model.parameter_hash();
  std::vector<double> enc, ren, tot;
  for (int it = 0; it < warmup + iterations; ++it) {
    auto t0 = clock::now();
    auto img = ad::Value<T>::constant(image);
    auto planes = model.decode_triplane(model.facial_representation(img, gaze));
    auto t1 = clock::now();
    RenderResult<T> out =
        render_triplane(planes, model.field(), pose, model.render_settings(false));
    auto t2 = clock::now();
    (void)out;
    if (it < warmup) continue;
    enc.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    ren.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    tot.push_back(std::chrono::duration<double, std::milli>(t2 - t0).count());
  }
  res.param_hash_after = model.parameter_hash();
  auto stats = [](const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= xs.empty() ? 1 : xs.size();
    sd = 0;
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = xs.size() > 1 ? std::sqrt(sd / (xs.size() - 1)) : 0.0;
  };
  stats(enc, res.encode_ms_mean, res.encode_ms_std);
  stats(ren, res.render_ms_mean, res.render_ms_std);
  stats(tot, res.total_ms_mean, res.total_ms_std);
  return res;
}

/// Flat key=value report, stable key order.
inline void write_report(const std::string& path, const std::map<std::string, double>& rep) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report: " + path);
  f.precision(17);
  for (const auto& [k, v] : rep) f << k << "=" << v << "\n";
}

}  // namespace gazefield
