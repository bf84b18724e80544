#pragma once

// Triplane decoding, field evaluation and differentiable volume rendering.
// Depth is the unnormalized expected depth
//   D(r) = sum_i W_i (1 - exp(-sigma_i delta_i)) d_i,  W_i = exp(-sum_{j<i} sigma_j delta_j)
// and RGB composites residual transmittance onto a fixed background color.

#include "gazefield/geometry.hpp"
#include "gazefield/nn.hpp"

namespace gazefield {

struct RenderSettings {
  int resolution = 64;
  int samples_per_ray = 64;
  double near = kDefaultNear;
  double far = kDefaultFar;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  bool stratified = false;  // jittered bins in training, midpoints in eval
  uint64_t seed = 0;
};

/// Upsampling conv decoder: [C_f, H_f, W_f] -> triplane [3, C_t, R, R].
/// Requires R = 4 * H_f.
template <class T>
class TriplaneDecoder {
 public:
  TriplaneDecoder() = default;
  TriplaneDecoder(nn::ParamStore<T>& ps, const std::string& name, int64_t c_in,
                  int64_t c_triplane, Rng& rng)
      : c_triplane_(c_triplane) {
    d1_ = nn::Conv<T>(ps, name + ".d1", c_in, 64, 3, 1, rng);
    d2_ = nn::Conv<T>(ps, name + ".d2", 64, 64, 3, 1, rng);
    d3_ = nn::Conv<T>(ps, name + ".d3", 64, 3 * c_triplane, 3, 1, rng);
  }

  ad::Value<T> operator()(const ad::Value<T>& f) const {
    auto x = ad::upsample_nearest2x(ad::gelu(d1_(f)));
    x = ad::upsample_nearest2x(ad::gelu(d2_(x)));
    x = d3_(x);
    int64_t r = x.val().dim(1);
    return ad::reshape(x, {3, c_triplane_, r, r});
  }

  int64_t channels() const { return c_triplane_; }

 private:
  int64_t c_triplane_ = 16;
  nn::Conv<T> d1_, d2_, d3_;
};

/// Two-hidden-layer field head: triplane feature -> (density, rgb).
/// Density through softplus (with a slightly negative bias at init so the
/// untrained field starts near-transparent), color through sigmoid.
template <class T>
class FieldMlp {
 public:
  FieldMlp() = default;
  FieldMlp(nn::ParamStore<T>& ps, const std::string& name, int64_t c_in, int64_t hidden,
           Rng& rng) {
    l1_ = nn::Dense<T>(ps, name + ".l1", c_in, hidden, rng);
    l2_ = nn::Dense<T>(ps, name + ".l2", hidden, hidden, rng);
    l3_ = nn::Dense<T>(ps, name + ".l3", hidden, 4, rng);
    l3_.b.val()[0] = T(-1);
  }

  /// features [P, c_in] -> raw head output [P, 4] (pre-activation).
  ad::Value<T> raw(const ad::Value<T>& features) const {
    return l3_(ad::gelu(l2_(ad::gelu(l1_(features)))));
  }

  /// features [P, c_in] -> (density [P,1], color [P,3]).
  std::pair<ad::Value<T>, ad::Value<T>> operator()(const ad::Value<T>& features) const {
    auto out = raw(features);
    auto density = ad::softplus(ad::slice_cols(out, 0, 1));
    auto color = ad::sigmoid(ad::slice_cols(out, 1, 4));
    return {density, color};
  }

 private:
  nn::Dense<T> l1_, l2_, l3_;
};

/// Plain single-ray integrator (Eqs. above), double precision. This is the
/// production path for per-ray queries and the reference the batched
/// renderer is tested against.
struct RayIntegral {
  Eigen::Vector3d rgb;
  double depth;
  double weight_sum;
};

inline RayIntegral integrate_ray(const std::vector<double>& density,
                                 const std::vector<Eigen::Vector3d>& color,
                                 const std::vector<double>& distance,
                                 const std::vector<double>& delta,
                                 const Eigen::Vector3d& background) {
  size_t n = density.size();
  if (n == 0 || color.size() != n || distance.size() != n || delta.size() != n)
    throw std::invalid_argument("integrate_ray: need N >= 1 equally sized inputs");
  for (size_t i = 0; i < n; ++i) {
    if (density[i] < 0) throw std::invalid_argument("integrate_ray: negative density");
    if (!(delta[i] > 0)) throw std::invalid_argument("integrate_ray: non-positive delta");
    if (i + 1 < n && !(distance[i + 1] > distance[i]))
      throw std::invalid_argument("integrate_ray: distances must be strictly increasing");
  }
  double transmittance = 1.0;  // W_1 = exp of an empty sum
  double depth = 0.0, wsum = 0.0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    double alpha = 1.0 - std::exp(-density[i] * delta[i]);
    double w = transmittance * alpha;
    depth += w * distance[i];
    rgb += w * color[i];
    wsum += w;
    transmittance *= std::exp(-density[i] * delta[i]);
  }
  rgb += (1.0 - wsum) * background;
  return {rgb, depth, wsum};
}

/// Per-ray sample positions for one render call.
struct RaySamples {
  Tensor<double> distances;  // [n_rays, N], strictly increasing per ray
  Tensor<double> deltas;     // [n_rays, N], last interval = (far-near)/N
};

inline RaySamples make_ray_samples(int64_t n_rays, int n, double near, double far,
                                   bool stratified, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("render: need at least 2 samples per ray");
  RaySamples s;
  s.distances = Tensor<double>({n_rays, n});
  s.deltas = Tensor<double>({n_rays, n});
  double bin = (far - near) / n;
  Rng rng(seed);
  for (int64_t r = 0; r < n_rays; ++r) {
    for (int i = 0; i < n; ++i) {
      double u = stratified ? rng.uniform() : 0.5;
      s.distances.at(r, i) = near + (i + u) * bin;
    }
    for (int i = 0; i + 1 < n; ++i) s.deltas.at(r, i) = s.distances.at(r, i + 1) - s.distances.at(r, i);
    s.deltas.at(r, n - 1) = bin;
  }
  return s;
}

template <class T>
struct RenderResult {
  ad::Value<T> image;       // [3,H,W]
  ad::Value<T> depth;       // [H,W]
  ad::Value<T> weight_sum;  // [H,W]
};

/// Differentiable batched renderer over a triplane Value [3,C_t,R,R].
template <class T>
RenderResult<T> render_triplane(const ad::Value<T>& planes, const FieldMlp<T>& field,
                                const CameraPose& pose, const RenderSettings& rs) {
  const int H = rs.resolution, W = rs.resolution, N = rs.samples_per_ray;
  RayBundle rays = generate_rays(pose, H, W, rs.near, rs.far);
  const int64_t n_rays = int64_t(H) * W;
  RaySamples samples = make_ray_samples(n_rays, N, rs.near, rs.far, rs.stratified, rs.seed);

  Tensor<T> points({n_rays * N, 3});
  for (int64_t r = 0; r < n_rays; ++r) {
    const Ray& ray = rays.rays[static_cast<size_t>(r)];
    for (int i = 0; i < N; ++i) {
      Eigen::Vector3d p = ray.origin + samples.distances.at(r, i) * ray.direction;
      for (int a = 0; a < 3; ++a) points.at(r * N + i, a) = static_cast<T>(p[a]);
    }
  }
  auto features = ad::triplane_sample(planes, points);
  auto [density, color] = field(features);

  auto sigma = ad::reshape(density, {n_rays, static_cast<int64_t>(N)});
  Tensor<T> deltas_t = samples.deltas.template cast<T>();
  auto sdelta = ad::mul_const(sigma, deltas_t);
  auto alpha = ad::affine(ad::exp_neg(sdelta), T(-1), T(1));  // 1 - exp(-sigma*delta)
  // transmittance = exp(-exclusive_cumsum(sigma*delta))
  auto transmittance = ad::exp_neg(ad::exclusive_cumsum_last(sdelta));
  auto weights = ad::mul(transmittance, alpha);

  auto weight_sum = ad::sum_last(weights);
  Tensor<T> dist_t = samples.distances.template cast<T>();
  auto depth = ad::sum_last(ad::mul_const(weights, dist_t));

  std::vector<ad::Value<T>> channels;
  for (int c = 0; c < 3; ++c) {
    auto ck = ad::reshape(ad::slice_cols(color, c, c + 1), {n_rays, static_cast<int64_t>(N)});
    auto pix = ad::sum_last(ad::mul(weights, ck));
    T bg = static_cast<T>(rs.background[c]);
    // + (1 - weight_sum) * bg
    channels.push_back(ad::add(pix, ad::affine(weight_sum, -bg, bg)));
  }
  RenderResult<T> out;
  out.image = ad::reshape(ad::stack_rows(channels), {3, H, W});
  out.depth = ad::reshape(depth, {H, W});
  out.weight_sum = ad::reshape(weight_sum, {H, W});
  return out;
}

}  // namespace gazefield
