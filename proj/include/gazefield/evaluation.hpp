#pragma once

// Image-quality metrics and the analytic pupil oracle used to score gaze
// redirection on synthetic faces.

#include <optional>

#include "gazefield/synthetic_data.hpp"

namespace gazefield {

inline constexpr double kPsnrCap = 99.0;

inline double psnr(const Tensor<double>& pred, const Tensor<double>& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline Tensor<double> to_gray(const Tensor<double>& img) {
  if (img.rank() == 2) return img;
  Tensor<double> g({img.dim(1), img.dim(2)});
  for (int64_t i = 0; i < g.dim(0); ++i)
    for (int64_t j = 0; j < g.dim(1); ++j)
      g.at(i, j) = 0.299 * img.at(0, i, j) + 0.587 * img.at(1, i, j) + 0.114 * img.at(2, i, j);
  return g;
}

inline std::vector<double> gaussian_window_11() {
  std::vector<double> w(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    double x = i - 5.0;
    w[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    sum += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Standard single-scale SSIM: grayscale, 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2 on unit dynamic range, valid windows only.
inline double ssim(const Tensor<double>& pred, const Tensor<double>& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("ssim: shape mismatch");
  Tensor<double> a = detail::to_gray(pred), b = detail::to_gray(target);
  const int64_t h = a.dim(0), w = a.dim(1);
  if (h < 11 || w < 11) throw std::invalid_argument("ssim: image smaller than window");
  static const std::vector<double> win = detail::gaussian_window_11();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i + 11 <= h; ++i)
    for (int64_t j = 0; j + 11 <= w; ++j) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
          double wgt = win[static_cast<size_t>(y)] * win[static_cast<size_t>(x)];
          double va = a.at(i + y, j + x), vb = b.at(i + y, j + x);
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      double var_a = aa - mu_a * mu_a, var_b = bb - mu_b * mu_b, cov = ab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Pupil oracle: recovers the gaze prompt from a rendered synthetic face by
// locating the darkness centroid inside each projected eye region and
// inverting it through the eye-sphere geometry.

struct PupilDetection {
  bool found = false;
  GazePrompt gaze;
};

inline double luminance_at(const Tensor<double>& img, int64_t i, int64_t j) {
  return 0.299 * img.at(0, i, j) + 0.587 * img.at(1, i, j) + 0.114 * img.at(2, i, j);
}

/// Darkness-weighted centroid of the masked eye pixels, split per eye by
/// the known scene geometry, then back-projected onto the eye sphere.
inline PupilDetection recover_gaze(const Tensor<double>& image, const Tensor<double>& eye_mask,
                                   const IdentityAppearance& id, const CameraPose& pose) {
  const int64_t h = image.dim(1), w = image.dim(2);
  RayBundle rays = generate_rays(pose, static_cast<int>(h), static_cast<int>(w));
  const Eigen::Matrix3d hw = head_to_world();

  double sum_pitch = 0.0, sum_yaw = 0.0;
  int eyes_found = 0;
  for (int eye = 0; eye < 2; ++eye) {
    double wsum = 0.0, ci = 0.0, cj = 0.0, darkest = 1.0;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        if (eye_mask.at(i, j) < 0.5) continue;
        const Ray& r = rays.at(static_cast<int>(i), static_cast<int>(j));
        SceneHit hit = trace_scene(id.scene, r.origin, r.direction);
        int hit_eye = hit.kind == HitKind::kEyeLeft ? 0 : hit.kind == HitKind::kEyeRight ? 1 : -1;
        if (hit_eye != eye) continue;
        double lum = luminance_at(image, i, j);
        darkest = std::min(darkest, lum);
        double wgt = std::pow(std::max(0.0, 1.0 - lum), 6.0);
        wsum += wgt;
        ci += wgt * (static_cast<double>(i) + 0.5);
        cj += wgt * (static_cast<double>(j) + 0.5);
      }
    if (wsum <= 0.0 || darkest > 0.55) continue;  // no dark disc in this eye
    ci /= wsum;
    cj /= wsum;
    // Back-project the centroid onto the eye sphere.
    const double fx = pose.intrinsics(0, 0), fy = pose.intrinsics(1, 1);
    const double cx = pose.intrinsics(0, 2), cy = pose.intrinsics(1, 2);
    Eigen::Vector3d dir_cam((cj - cx) / fx, (ci - cy) / fy, 1.0);
    Eigen::Vector3d dir = (pose.rotation() * dir_cam).normalized();
    Eigen::Vector3d origin = pose.position();
    const Eigen::Vector3d& center = id.scene.eye_center[eye];
    Eigen::Vector3d surface;
    if (auto t = intersect_sphere(origin, dir, center, id.scene.eye_radius)) {
      surface = origin + *t * dir;
    } else {
      // Grazing miss: snap the closest ray point onto the sphere.
      double tc = (center - origin).dot(dir);
      Eigen::Vector3d p = origin + tc * dir;
      surface = center + id.scene.eye_radius * (p - center).normalized();
    }
    Eigen::Vector3d g = hw.transpose() * ((surface - center) / id.scene.eye_radius);
    sum_pitch += std::asin(std::clamp(g.y(), -1.0, 1.0));
    sum_yaw += std::atan2(g.x(), g.z());
    ++eyes_found;
  }
  PupilDetection det;
  if (eyes_found == 0) return det;
  det.found = true;
  det.gaze = GazePrompt(sum_pitch / eyes_found, sum_yaw / eyes_found);
  return det;
}

}  // namespace gazefield
