#pragma once

// Frozen geometric-prior teacher. The built-in implementation is analytic:
// a head ellipsoid plus two eye spheres, intersected in closed form, so the
// distillation target is exact. Misses map to depth 0, matching the
// student's transparent-field convention.

#include <optional>

#include "gazefield/geometry.hpp"
#include "gazefield/rng.hpp"
#include "gazefield/tensor.hpp"

namespace gazefield {

struct TeacherScene {
  Eigen::Vector3d head_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d head_axes = {0.55, 0.65, 0.5};  // semi-axes
  Eigen::Vector3d eye_center[2];
  double eye_radius = 0.13;
  double background_depth = 0.0;

  void validate() const {
    if (!(head_axes.minCoeff() > 0) || !(eye_radius > 0))
      throw std::invalid_argument("teacher scene: non-positive dimensions");
  }
};

/// Nearest positive root of the ray/ellipsoid intersection, solved as a
/// ray/unit-sphere quadratic in axis-scaled coordinates.
inline std::optional<double> intersect_ellipsoid(const Eigen::Vector3d& origin,
                                                 const Eigen::Vector3d& dir,
                                                 const Eigen::Vector3d& center,
                                                 const Eigen::Vector3d& axes) {
  Eigen::Vector3d o = (origin - center).cwiseQuotient(axes);
  Eigen::Vector3d d = dir.cwiseQuotient(axes);
  double a = d.squaredNorm();
  double b = 2.0 * o.dot(d);
  double c = o.squaredNorm() - 1.0;
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0 || a == 0.0) return std::nullopt;
  double sq = std::sqrt(disc);
  double t0 = (-b - sq) / (2.0 * a);
  double t1 = (-b + sq) / (2.0 * a);
  if (t0 >= 0.0) return t0;
  if (t1 >= 0.0) return t1;
  return std::nullopt;
}

inline std::optional<double> intersect_sphere(const Eigen::Vector3d& origin,
                                              const Eigen::Vector3d& dir,
                                              const Eigen::Vector3d& center, double radius) {
  return intersect_ellipsoid(origin, dir, center, Eigen::Vector3d::Constant(radius));
}

/// Hit classification used by the synthetic data renderer as well.
enum class HitKind { kNone, kHead, kEyeLeft, kEyeRight };

struct SceneHit {
  HitKind kind = HitKind::kNone;
  double t = 0.0;
};

inline SceneHit trace_scene(const TeacherScene& scene, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir) {
  SceneHit hit;
  double best = std::numeric_limits<double>::infinity();
  if (auto t = intersect_ellipsoid(origin, dir, scene.head_center, scene.head_axes)) {
    best = *t;
    hit = {HitKind::kHead, *t};
  }
  for (int e = 0; e < 2; ++e) {
    if (auto t = intersect_sphere(origin, dir, scene.eye_center[e], scene.eye_radius)) {
      if (*t < best) {
        best = *t;
        hit = {e == 0 ? HitKind::kEyeLeft : HitKind::kEyeRight, *t};
      }
    }
  }
  return hit;
}

inline Tensor<double> teacher_depth(const TeacherScene& scene, const CameraPose& pose,
                                    int height, int width) {
  scene.validate();
  RayBundle rb = generate_rays(pose, height, width);
  Tensor<double> depth({height, width});
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      SceneHit h = trace_scene(scene, rb.at(i, j).origin, rb.at(i, j).direction);
      depth.at(i, j) = h.kind == HitKind::kNone ? scene.background_depth : h.t;
    }
  return depth;
}

/// Deterministic per-identity scene. Eye placement is gaze-independent:
/// the prior models geometry only, and gaze moves the pupil texture, not
/// the eyeball surface.
inline TeacherScene make_frontal_scene(uint64_t identity_seed, const GazePrompt& /*gaze*/) {
  Rng rng(0x7ea0c0de ^ identity_seed * 0x9e3779b97f4a7c15ULL);
  TeacherScene s;
  s.head_axes = {rng.uniform(0.50, 0.60), rng.uniform(0.58, 0.68), rng.uniform(0.44, 0.52)};
  s.eye_radius = rng.uniform(0.12, 0.14);
  double ex = rng.uniform(0.30, 0.36), ey = rng.uniform(0.14, 0.20);
  for (int e = 0; e < 2; ++e) {
    // Direction from head center toward the eye socket (front is -z).
    Eigen::Vector3d u(e == 0 ? -ex : ex, ey, -0.92);
    u.normalize();
    // Surface point along u, then pull the sphere centre slightly inside
    // so it protrudes ~half a radius.
    double t = 1.0 / std::sqrt((u.cwiseQuotient(s.head_axes)).squaredNorm());
    s.eye_center[e] = u * t - u * (0.5 * s.eye_radius);
  }
  return s;
}

}  // namespace gazefield
