#include "gazefield/synthetic_data.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gazefield/io.hpp"
#include "gazefield/rng.hpp"

namespace gazefield {

namespace {

const Eigen::Vector3d kLightDir = Eigen::Vector3d(-0.4, 0.5, -0.8).normalized();

double lambert(const Eigen::Vector3d& normal) {
  return 0.35 + 0.65 * std::max(0.0, normal.dot(-kLightDir));
}

}  // namespace

IdentityAppearance make_identity(uint64_t identity_seed) {
  IdentityAppearance id;
  id.scene = make_frontal_scene(identity_seed, GazePrompt{});
  Rng rng(0xface0000u ^ identity_seed * 0xda942042e4dd58b5ULL);
  id.base_color = {rng.uniform(0.55, 0.9), rng.uniform(0.4, 0.75), rng.uniform(0.35, 0.65)};
  id.band_freq = rng.uniform(5.0, 14.0);
  id.band_phase = rng.uniform(0.0, 2.0 * M_PI);
  id.band_dir = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)).normalized();
  id.pupil_radius = rng.uniform(0.045, 0.06);
  id.iris_radius = rng.uniform(0.085, 0.10);
  id.iris_color = {rng.uniform(0.1, 0.5), rng.uniform(0.2, 0.55), rng.uniform(0.3, 0.7)};
  return id;
}

Eigen::Vector3d pupil_center(const IdentityAppearance& id, int eye, const GazePrompt& gaze) {
  Eigen::Vector3d dir = head_to_world() * gaze_to_vector(gaze);
  return id.scene.eye_center[eye] + id.scene.eye_radius * dir;
}

RenderedView render_view(const IdentityAppearance& id, const GazePrompt& gaze,
                         const CameraPose& pose, int resolution) {
  RenderedView out;
  out.image = Tensor<double>({3, resolution, resolution});
  out.eye_mask = Tensor<double>({resolution, resolution});
  out.depth = Tensor<double>({resolution, resolution});
  RayBundle rays = generate_rays(pose, resolution, resolution);
  Eigen::Vector3d pupils[2] = {pupil_center(id, 0, gaze), pupil_center(id, 1, gaze)};
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      const Ray& r = rays.at(i, j);
      SceneHit hit = trace_scene(id.scene, r.origin, r.direction);
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      if (hit.kind != HitKind::kNone) {
        Eigen::Vector3d p = r.origin + hit.t * r.direction;
        out.depth.at(i, j) = hit.t;
        if (hit.kind == HitKind::kHead) {
          Eigen::Vector3d n =
              (p - id.scene.head_center).cwiseQuotient(id.scene.head_axes.cwiseAbs2()).normalized();
          double band = 0.78 + 0.22 * std::sin(id.band_freq * id.band_dir.dot(p) + id.band_phase);
          color = id.base_color * band * lambert(n);
        } else {
          int eye = hit.kind == HitKind::kEyeLeft ? 0 : 1;
          out.eye_mask.at(i, j) = 1.0;
          Eigen::Vector3d n = (p - id.scene.eye_center[eye]).normalized();
          double dist = (p - pupils[eye]).norm();
          Eigen::Vector3d albedo;
          if (dist <= id.pupil_radius)
            albedo = {0.03, 0.03, 0.03};
          else if (dist <= id.iris_radius)
            albedo = id.iris_color;
          else
            albedo = {0.93, 0.92, 0.90};
          color = albedo * lambert(n);
        }
      }
      for (int c = 0; c < 3; ++c)
        out.image.at(c, i, j) = std::clamp(color[c], 0.0, 1.0);
    }
  return out;
}

Sample generate_sample(uint64_t identity_seed, const GazePrompt& gaze_source,
                       const GazePrompt& gaze_target, const CameraPose& pose_source,
                       const CameraPose& pose_target, int resolution) {
  IdentityAppearance id = make_identity(identity_seed);
  RenderedView src = render_view(id, gaze_source, pose_source, resolution);
  RenderedView tgt = render_view(id, gaze_target, pose_target, resolution);
  RenderedView frontal = render_view(id, gaze_target, frontal_pose(resolution), resolution);
  Sample s;
  s.source_image = std::move(src.image);
  s.target_image = std::move(tgt.image);
  s.frontal_image = std::move(frontal.image);
  s.eye_mask = std::move(tgt.eye_mask);
  s.teacher_depth = std::move(tgt.depth);
  s.gaze_source = gaze_source;
  s.gaze_target = gaze_target;
  s.pose_source = pose_source;
  s.pose_target = pose_target;
  s.identity_seed = identity_seed;
  return s;
}

uint64_t dataset_identity_seed(const DatasetSpec& spec, int identity) {
  return spec.seed * 1000003ULL + static_cast<uint64_t>(identity);
}

GazePrompt dataset_gaze(const DatasetSpec& spec, int identity, int gaze_index) {
  Rng rng(spec.seed ^ (0x6a7e0000ULL + static_cast<uint64_t>(identity) * 977 +
                       static_cast<uint64_t>(gaze_index)));
  return GazePrompt(rng.uniform(-spec.max_pitch, spec.max_pitch),
                    rng.uniform(-spec.max_yaw, spec.max_yaw));
}

CameraPose dataset_pose(const DatasetSpec& spec, int identity, int view_index) {
  if (view_index == 0) return frontal_pose(spec.resolution);
  Rng rng(spec.seed ^ (0x90e50000ULL + static_cast<uint64_t>(identity) * 1409 +
                       static_cast<uint64_t>(view_index)));
  return orbit_pose(rng.uniform(-spec.max_azimuth, spec.max_azimuth),
                    rng.uniform(-spec.max_elevation, spec.max_elevation), spec.resolution);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string build_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  if (spec.n_identities <= 0 || spec.gazes_per_identity <= 0 || spec.views_per_identity <= 0)
    throw std::invalid_argument("build_dataset: counts must be positive");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  fs::create_directories(fs::path(out_dir) / "depth");
  std::string manifest_path = (fs::path(out_dir) / "manifest").string();
  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path);
  for (int idn = 0; idn < spec.n_identities; ++idn) {
    IdentityAppearance id = make_identity(dataset_identity_seed(spec, idn));
    for (int gi = 0; gi < spec.gazes_per_identity; ++gi) {
      GazePrompt gaze = dataset_gaze(spec, idn, gi);
      for (int vi = 0; vi < spec.views_per_identity; ++vi) {
        CameraPose pose = dataset_pose(spec, idn, vi);
        RenderedView view = render_view(id, gaze, pose, spec.resolution);
        char stem[64];
        std::snprintf(stem, sizeof(stem), "id%03d_g%02d_v%02d", idn, gi, vi);
        std::string img_rel = std::string("images/") + stem + ".ppm";
        std::string mask_rel = std::string("masks/") + stem + ".pgm";
        std::string depth_rel = std::string("depth/") + stem + ".gfdp";
        write_ppm((fs::path(out_dir) / img_rel).string(), view.image);
        write_pgm((fs::path(out_dir) / mask_rel).string(), view.eye_mask);
        write_depth((fs::path(out_dir) / depth_rel).string(), view.depth);
        Eigen::Vector3d gv = gaze_to_vector(gaze);
        manifest << img_rel << " " << mask_rel << " " << depth_rel << " " << idn << " " << gi
                 << " " << vi << " " << (vi == 0 ? 1 : 0);
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) manifest << " " << fmt(pose.extrinsics(r, c));
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) manifest << " " << fmt(pose.intrinsics(r, c));
        manifest << " " << fmt(gaze.pitch) << " " << fmt(gaze.yaw) << " " << fmt(gv.x()) << " "
                 << fmt(gv.y()) << "\n";
      }
    }
  }
  return manifest_path;
}

std::vector<ViewRecord> read_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot read " + manifest_path);
  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  std::vector<ViewRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ViewRecord rec;
    std::string img, mask, depth;
    int frontal = 0;
    is >> img >> mask >> depth >> rec.identity >> rec.gaze_index >> rec.view_index >> frontal;
    rec.frontal = frontal != 0;
    rec.image_path = (base / img).string();
    rec.mask_path = (base / mask).string();
    rec.depth_path = (base / depth).string();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) is >> rec.pose.extrinsics(r, c);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) is >> rec.pose.intrinsics(r, c);
    double pitch = 0, yaw = 0;
    is >> pitch >> yaw >> rec.gaze_vec_xy.x() >> rec.gaze_vec_xy.y();
    if (!is) throw std::runtime_error("malformed manifest row: " + line);
    rec.gaze = GazePrompt(pitch, yaw);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace gazefield
