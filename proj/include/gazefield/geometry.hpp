#pragma once

// Camera model, ray generation and gaze-angle math. Conventions:
//   - extrinsics are camera-to-world; camera frame is x-right, y-down,
//     z-forward (pinhole looks along +z of its own frame)
//   - pixel centers sit at half-integer coordinates
//   - gaze (pitch, yaw) maps to the unit vector
//     (cos(pitch)sin(yaw), sin(pitch), cos(pitch)cos(yaw)); (0,0) is frontal

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gazefield {

inline constexpr double kDefaultNear = 0.5;
inline constexpr double kDefaultFar = 2.5;
inline constexpr double kHeadDistance = 1.5;

struct CameraPose {
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();  // camera-to-world
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();  // pixels

  void validate() const {
    Eigen::Matrix3d r = extrinsics.topLeftCorner<3, 3>();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5 ||
        std::abs(r.determinant() - 1.0) > 1e-5)
      throw std::invalid_argument("camera pose: rotation block is not a proper rotation");
    if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0 || std::abs(intrinsics(0, 1)) > 0)
      throw std::invalid_argument("camera pose: intrinsics must be skewless with positive focals");
  }

  Eigen::Vector3d position() const { return extrinsics.topRightCorner<3, 1>(); }
  Eigen::Matrix3d rotation() const { return extrinsics.topLeftCorner<3, 3>(); }
};

struct GazePrompt {
  double pitch = 0.0;  // radians
  double yaw = 0.0;

  GazePrompt() = default;
  GazePrompt(double p, double y) {
    if (!std::isfinite(p) || !std::isfinite(y))
      throw std::invalid_argument("gaze prompt: non-finite angle");
    pitch = std::clamp(p, -M_PI / 2, M_PI / 2);
    yaw = std::clamp(y, -M_PI, M_PI);
  }
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit
  double near = kDefaultNear;
  double far = kDefaultFar;
};

struct RayBundle {
  int height = 0, width = 0;
  std::vector<Ray> rays;  // row-major, one per pixel
  CameraPose pose;

  const Ray& at(int i, int j) const { return rays[static_cast<size_t>(i) * width + j]; }
};

inline Eigen::Vector3d gaze_to_vector(const GazePrompt& g) {
  return {std::cos(g.pitch) * std::sin(g.yaw), std::sin(g.pitch),
          std::cos(g.pitch) * std::cos(g.yaw)};
}

inline double angular_error_deg(const GazePrompt& a, const GazePrompt& b) {
  double d = gaze_to_vector(a).dot(gaze_to_vector(b));
  return std::acos(std::clamp(d, -1.0, 1.0)) * 180.0 / M_PI;
}

inline RayBundle generate_rays(const CameraPose& pose, int height, int width,
                               double near = kDefaultNear, double far = kDefaultFar) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("generate_rays: non-positive resolution");
  if (!(near > 0.0) || near >= far) throw std::invalid_argument("generate_rays: need 0 < near < far");
  pose.validate();
  RayBundle rb;
  rb.height = height;
  rb.width = width;
  rb.pose = pose;
  rb.rays.reserve(static_cast<size_t>(height) * width);
  const double fx = pose.intrinsics(0, 0), fy = pose.intrinsics(1, 1);
  const double cx = pose.intrinsics(0, 2), cy = pose.intrinsics(1, 2);
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d org = pose.position();
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      Eigen::Vector3d dc((j + 0.5 - cx) / fx, (i + 0.5 - cy) / fy, 1.0);
      Ray r;
      r.origin = org;
      r.direction = (rot * dc).normalized();
      r.near = near;
      r.far = far;
      rb.rays.push_back(r);
    }
  return rb;
}

/// Project a world point to pixel coordinates under `pose`.
inline Eigen::Vector2d project_point(const CameraPose& pose, const Eigen::Vector3d& p) {
  Eigen::Vector3d pc = pose.rotation().transpose() * (p - pose.position());
  if (pc.z() <= 0) throw std::domain_error("project_point: point behind camera");
  return {pose.intrinsics(0, 0) * pc.x() / pc.z() + pose.intrinsics(0, 2),
          pose.intrinsics(1, 1) * pc.y() / pc.z() + pose.intrinsics(1, 2)};
}

/// Camera-to-world look-at with the y-down camera convention.
inline Eigen::Matrix4d look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               const Eigen::Vector3d& up = {0, 1, 0}) {
  Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up).normalized();
  Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 1>(0, 0) = x;
  m.block<3, 1>(0, 1) = y;
  m.block<3, 1>(0, 2) = z;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

/// Orbit camera around the head at `kHeadDistance`; azimuth/elevation in
/// radians, (0,0) is the canonical frontal pose on the -z axis.
inline CameraPose orbit_pose(double azimuth, double elevation, int resolution,
                             double focal_px = -1.0) {
  if (focal_px <= 0) focal_px = static_cast<double>(resolution);
  Eigen::Vector3d eye(kHeadDistance * std::cos(elevation) * std::sin(azimuth),
                      kHeadDistance * std::sin(elevation),
                      -kHeadDistance * std::cos(elevation) * std::cos(azimuth));
  CameraPose pose;
  pose.extrinsics = look_at(eye, Eigen::Vector3d::Zero());
  pose.intrinsics << focal_px, 0, resolution / 2.0, 0, focal_px, resolution / 2.0, 0, 0, 1;
  return pose;
}

inline CameraPose frontal_pose(int resolution) { return orbit_pose(0.0, 0.0, resolution); }

/// Head-to-world rotation: the synthetic head faces the frontal camera
/// (-z in world), so the gaze convention's +z-forward frame is rotated
/// 180 degrees about y.
inline Eigen::Matrix3d head_to_world() {
  Eigen::Matrix3d m;
  m << -1, 0, 0, 0, 1, 0, 0, 0, -1;
  return m;
}

}  // namespace gazefield
