// Command line front end: dataset generation, training, single-image
// redirection, evaluation and benchmarking. All subcommands share the
// plain-text config plus --set key=value overrides.

#include <CLI11.hpp>
#include <json.hpp>

#include "gazefield/training.hpp"

using namespace gazefield;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "config file (key=value lines)");
  cmd->add_option("--set", c.overrides, "override, e.g. --set train.steps=100");
}

Config resolve_config(const CommonOpts& c) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const std::string& kv : c.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

int cmd_gen_data(const CommonOpts& c, const std::string& out_override) {
  Config cfg = resolve_config(c);
  std::string out = out_override.empty() ? cfg.data_dir : out_override;
  DatasetSpec spec = spec_from_config(cfg);
  std::string manifest = build_dataset(spec, out);
  std::cout << "wrote " << spec.n_identities * spec.gazes_per_identity * spec.views_per_identity
            << " views, manifest at " << manifest << "\n";
  return 0;
}

int cmd_train(const CommonOpts& c, const std::string& out_dir, const std::string& resume) {
  Config cfg = resolve_config(c);
  Dataset data = Dataset::load(cfg.data_dir);
  std::optional<Trainer<float>> trainer;
  if (resume.empty())
    trainer.emplace(cfg, data);
  else
    trainer.emplace(resume, data);
  std::cout << "training " << trainer->total_steps() << " steps, "
            << data.identities() << " identities x " << data.gazes() << " gazes x "
            << data.views() << " views\n";
  StepMetrics last = trainer->run(out_dir);
  std::cout << "done, final loss " << last.total << ", checkpoint at "
            << out_dir << "/final.gfck\n";
  return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& image_path,
               double pitch_deg, double yaw_deg, double azimuth_deg, double elevation_deg,
               int samples, const std::string& out_prefix) {
  GazeModel<float> model = load_checkpoint<float>(checkpoint);
  Config cfg = model.config();
  Tensor<double> image = read_ppm(image_path);
  if (image.dim(1) != cfg.data_resolution || image.dim(2) != cfg.data_resolution)
    throw std::runtime_error("render: input image resolution does not match the model");
  GazePrompt gaze(pitch_deg * M_PI / 180.0, yaw_deg * M_PI / 180.0);
  CameraPose pose = orbit_pose(azimuth_deg * M_PI / 180.0, elevation_deg * M_PI / 180.0,
                               cfg.data_resolution);
  RenderSettings rs = model.render_settings(false);
  if (samples > 0) rs.samples_per_ray = samples;
  auto img = ad::Value<float>::constant(image.cast<float>());
  auto planes = model.decode_triplane(model.facial_representation(img, gaze));
  RenderResult<float> out = render_triplane(planes, model.field(), pose, rs);
  write_ppm(out_prefix + ".ppm", out.image.val().cast<double>());
  write_depth(out_prefix + ".gfdp", out.depth.val().cast<double>());
  std::cout << "wrote " << out_prefix << ".ppm and " << out_prefix << ".gfdp\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& c, const std::string& checkpoint, int probes,
                 const std::string& out_txt, const std::string& out_json) {
  GazeModel<float> model = load_checkpoint<float>(checkpoint);
  Config cfg = resolve_config(c);
  // The dataset location may be overridden; everything else comes from the
  // checkpointed config.
  Dataset data = Dataset::load(c.config_path.empty() && c.overrides.empty()
                                   ? model.config().data_dir
                                   : cfg.data_dir);
  auto rep = evaluate_model(model, data, probes, 1234);
  for (const auto& [k, v] : rep) std::cout << k << "=" << v << "\n";
  if (!out_txt.empty()) write_report(out_txt, rep);
  if (!out_json.empty()) {
    nlohmann::json j;
    for (const auto& [k, v] : rep) j[k] = v;
    std::ofstream f(out_json);
    f << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_benchmark(const CommonOpts& c, const std::string& checkpoint, int iterations) {
  std::optional<GazeModel<float>> model;
  if (!checkpoint.empty())
    model.emplace(load_checkpoint<float>(checkpoint));
  else
    model.emplace(resolve_config(c));
  BenchmarkResult r = benchmark_model(*model, iterations);
  std::cout << "iterations " << r.iterations << "\n"
            << "encode_ms " << r.encode_ms_mean << " +- " << r.encode_ms_std << "\n"
            << "render_ms " << r.render_ms_mean << " +- " << r.render_ms_std << "\n"
            << "total_ms  " << r.total_ms_mean << " +- " << r.total_ms_std << "\n"
            << "param_hash_stable "
            << (r.param_hash_before == r.param_hash_after ? "yes" : "NO") << "\n";
  return r.param_hash_before == r.param_hash_after ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaze-controllable 3D face renderer"};
  app.require_subcommand(1);

  CommonOpts gen_c, train_c, eval_c, bench_c;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "output directory (default: data.dir)");

  std::string train_out = "runs/train", train_resume;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_c);
  train->add_option("--out", train_out, "run directory for logs + checkpoints");
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  std::string r_ckpt, r_image, r_out = "render_out";
  double r_pitch = 0, r_yaw = 0, r_az = 0, r_el = 0;
  int r_samples = 0;
  auto* render = app.add_subcommand("render", "redirect one image");
  render->add_option("--checkpoint", r_ckpt)->required();
  render->add_option("--image", r_image, "source PPM image")->required();
  render->add_option("--pitch", r_pitch, "gaze pitch, degrees");
  render->add_option("--yaw", r_yaw, "gaze yaw, degrees");
  render->add_option("--azimuth", r_az, "camera azimuth, degrees");
  render->add_option("--elevation", r_el, "camera elevation, degrees");
  render->add_option("--samples", r_samples, "samples per ray (0 = model default)");
  render->add_option("--out", r_out, "output prefix (.ppm / .gfdp appended)");

  std::string e_ckpt, e_txt, e_json;
  int e_probes = 32;
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on the dataset");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", e_ckpt)->required();
  eval->add_option("--probes", e_probes, "number of evaluation probes");
  eval->add_option("--report", e_txt, "write key=value report here");
  eval->add_option("--json", e_json, "write JSON report here");

  std::string b_ckpt;
  int b_iters = 20;
  auto* bench = app.add_subcommand("benchmark", "time the feedforward pass");
  add_common(bench, bench_c);
  bench->add_option("--checkpoint", b_ckpt, "checkpoint (otherwise a fresh model)");
  bench->add_option("--iterations", b_iters);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_c, gen_out);
    if (train->parsed()) return cmd_train(train_c, train_out, train_resume);
    if (render->parsed())
      return cmd_render(r_ckpt, r_image, r_pitch, r_yaw, r_az, r_el, r_samples, r_out);
    if (eval->parsed()) return cmd_evaluate(eval_c, e_ckpt, e_probes, e_txt, e_json);
    if (bench->parsed()) return cmd_benchmark(bench_c, b_ckpt, b_iters);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
