#pragma once

// Training objectives: mask-guided reconstruction, perceptual distance on a
// frozen feature pyramid, depth distillation, and the weighted total.
// Masked L1 normalizes by the count of mask-selected scalar elements
// (pixels x channels), i.e. it is a mean over the selected region.

#include "gazefield/nn.hpp"

namespace gazefield {

struct LossWeights {
  double alpha = 1.0;   // reconstruction
  double beta = 1.0;    // distillation
  double gamma = 0.8;   // perceptual
  double alpha1 = 1.0;  // face region
  double alpha2 = 2.0;  // eye region

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || alpha1 < 0 || alpha2 < 0)
      throw std::invalid_argument("loss weights must be non-negative");
  }
};

struct DegenerateMaskError : std::invalid_argument {
  DegenerateMaskError() : std::invalid_argument("masked_l1: all-zero mask") {}
};

namespace detail {

template <class T>
Tensor<T> expand_mask(const Tensor<T>& mask, int64_t channels) {
  Tensor<T> out({channels, mask.dim(0), mask.dim(1)});
  for (int64_t c = 0; c < channels; ++c)
    std::copy(mask.data(), mask.data() + mask.size(), out.data() + c * mask.size());
  return out;
}

}  // namespace detail

/// ||M (pred - target)||_1 / count(M), with M broadcast over channels.
/// `denominator_override` replaces count(M) when positive (the mask-
/// partition identity in the tests uses the full-image element count).
template <class T>
ad::Value<T> masked_l1(const ad::Value<T>& pred, const Tensor<T>& target,
                       const Tensor<T>& mask, int64_t denominator_override = 0) {
  if (!pred.val().same_shape(target)) throw std::invalid_argument("masked_l1: shape mismatch");
  int64_t channels = pred.val().rank() == 3 ? pred.val().dim(0) : 1;
  Tensor<T> m = pred.val().rank() == 3 ? detail::expand_mask(mask, channels) : mask;
  if (!pred.val().same_shape(m)) throw std::invalid_argument("masked_l1: mask shape mismatch");
  int64_t count = 0;
  for (int64_t i = 0; i < m.size(); ++i)
    if (m[i] != T(0)) ++count;
  if (count == 0) throw DegenerateMaskError();
  int64_t denom = denominator_override > 0 ? denominator_override : count;
  auto diff = ad::abs_op(ad::sub_const(pred, target));
  return ad::scale(ad::sum_all(ad::mul_const(diff, m)), T(1) / static_cast<T>(denom));
}

/// alpha1 * face + alpha2 * eye, with M_f = 1 - M_e.
template <class T>
ad::Value<T> recon_loss(const ad::Value<T>& pred, const Tensor<T>& target,
                        const Tensor<T>& eye_mask, const LossWeights& w,
                        int64_t denominator_override = 0) {
  Tensor<T> face_mask = eye_mask;
  for (int64_t i = 0; i < face_mask.size(); ++i) face_mask[i] = T(1) - face_mask[i];
  auto face = masked_l1(pred, target, face_mask, denominator_override);
  auto eye = masked_l1(pred, target, eye_mask, denominator_override);
  return ad::add(ad::scale(face, static_cast<T>(w.alpha1)), ad::scale(eye, static_cast<T>(w.alpha2)));
}

/// Mean absolute depth difference (mean keeps beta resolution-independent).
template <class T>
ad::Value<T> distill_loss(const ad::Value<T>& student_depth, const Tensor<T>& teacher_depth) {
  if (!student_depth.val().same_shape(teacher_depth))
    throw std::invalid_argument("distill_loss: shape mismatch");
  return ad::mean_all(ad::abs_op(ad::sub_const(student_depth, teacher_depth)));
}

/// Frozen random conv pyramid standing in for a pretrained feature net.
/// Four stages, stride 2 each; the loss sums per-stage normalized L1.
template <class T>
class PerceptualNet {
 public:
  PerceptualNet() = default;
  PerceptualNet(nn::ParamStore<T>& ps, const std::string& name, Rng& rng) {
    int64_t chans[5] = {3, 16, 32, 48, 64};
    for (int s = 0; s < 4; ++s)
      stages_[s] = nn::Conv<T>(ps, name + ".s" + std::to_string(s), chans[s], chans[s + 1], 3,
                               2, rng, /*gain=*/1.4, /*trainable=*/false);
  }

  std::vector<ad::Value<T>> features(const ad::Value<T>& image) const {
    std::vector<ad::Value<T>> out;
    ad::Value<T> x = image;
    for (int s = 0; s < 4; ++s) {
      x = ad::gelu(stages_[s](x));
      out.push_back(x);
    }
    return out;
  }

 private:
  nn::Conv<T> stages_[4];
};

template <class T>
ad::Value<T> perceptual_loss(const ad::Value<T>& pred, const Tensor<T>& target,
                             const PerceptualNet<T>& net) {
  auto pred_feats = net.features(pred);
  auto target_feats = net.features(ad::Value<T>::constant(target));
  ad::Value<T> total;
  for (size_t i = 0; i < pred_feats.size(); ++i) {
    auto diff = ad::abs_op(ad::sub_const(pred_feats[i], target_feats[i].val()));
    auto term = ad::scale(ad::sum_all(diff), T(1) / static_cast<T>(pred_feats[i].val().size()));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

struct NonFiniteLossError : std::runtime_error {
  explicit NonFiniteLossError(const std::string& component)
      : std::runtime_error("non-finite loss component: " + component), component_name(component) {}
  std::string component_name;
};

/// alpha * L_R + beta * L_D + gamma * L_P
template <class T>
ad::Value<T> total_loss(const ad::Value<T>& recon, const ad::Value<T>& distill,
                        const ad::Value<T>& perceptual, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(static_cast<double>(recon.item()))) throw NonFiniteLossError("reconstruction");
  if (!std::isfinite(static_cast<double>(distill.item()))) throw NonFiniteLossError("distillation");
  if (!std::isfinite(static_cast<double>(perceptual.item()))) throw NonFiniteLossError("perceptual");
  return ad::add(ad::add(ad::scale(recon, static_cast<T>(w.alpha)),
                         ad::scale(distill, static_cast<T>(w.beta))),
                 ad::scale(perceptual, static_cast<T>(w.gamma)));
}

}  // namespace gazefield
