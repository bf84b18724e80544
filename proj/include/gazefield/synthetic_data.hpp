#pragma once

// Procedural face-like training data: a shaded, banded head ellipsoid with
// two eye spheres whose pupil texture moves with the gaze vector. Every
// label (gaze, pose, mask, depth) is exact by construction.

#include <string>
#include <vector>

#include "gazefield/geometry.hpp"
#include "gazefield/teacher.hpp"

namespace gazefield {

struct IdentityAppearance {
  TeacherScene scene;
  Eigen::Vector3d base_color;
  double band_freq = 8.0;
  double band_phase = 0.0;
  Eigen::Vector3d band_dir;  // band orientation on the head surface
  double pupil_radius = 0.055;
  double iris_radius = 0.095;
  Eigen::Vector3d iris_color;
};

/// Deterministic appearance + geometry for one identity seed.
IdentityAppearance make_identity(uint64_t identity_seed);

/// World-space pupil centre on eye sphere `eye` (0 = left) for a gaze.
Eigen::Vector3d pupil_center(const IdentityAppearance& id, int eye, const GazePrompt& gaze);

struct RenderedView {
  Tensor<double> image;  // [3,H,W]
  Tensor<double> eye_mask;  // [H,W] binary, 1 where the nearest hit is an eye
  Tensor<double> depth;  // [H,W] analytic ray depth, 0 on miss
};

RenderedView render_view(const IdentityAppearance& id, const GazePrompt& gaze,
                         const CameraPose& pose, int resolution);

struct Sample {
  Tensor<double> source_image, target_image, frontal_image;
  Tensor<double> eye_mask;  // target-view eye mask
  Tensor<double> teacher_depth;  // target-view teacher depth
  GazePrompt gaze_source, gaze_target;
  CameraPose pose_source, pose_target;
  uint64_t identity_seed = 0;
};

Sample generate_sample(uint64_t identity_seed, const GazePrompt& gaze_source,
                       const GazePrompt& gaze_target, const CameraPose& pose_source,
                       const CameraPose& pose_target, int resolution);

/// One manifest row = one rendered view.
struct ViewRecord {
  std::string image_path, mask_path, depth_path;
  int identity = 0, gaze_index = 0, view_index = 0;
  bool frontal = false;
  CameraPose pose;
  GazePrompt gaze;
  Eigen::Vector2d gaze_vec_xy;  // first two components of gaze_to_vector
};

struct DatasetSpec {
  int n_identities = 8;
  int gazes_per_identity = 6;
  int views_per_identity = 6;  // view 0 is always the canonical frontal pose
  int resolution = 64;
  uint64_t seed = 1;
  double max_pitch = 0.45, max_yaw = 0.70;  // radians
  double max_azimuth = 35.0 * M_PI / 180.0, max_elevation = 20.0 * M_PI / 180.0;
};

/// Gaze / pose grids are deterministic functions of (spec.seed, indices).
GazePrompt dataset_gaze(const DatasetSpec& spec, int identity, int gaze_index);
CameraPose dataset_pose(const DatasetSpec& spec, int identity, int view_index);
uint64_t dataset_identity_seed(const DatasetSpec& spec, int identity);

/// Renders all views and writes images/, masks/, depth/ and `manifest`
/// under out_dir. Returns the manifest path.
std::string build_dataset(const DatasetSpec& spec, const std::string& out_dir);

std::vector<ViewRecord> read_manifest(const std::string& manifest_path);

}  // namespace gazefield
