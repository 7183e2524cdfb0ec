#include "softmesh/losses.hpp"

#include <cmath>
#include <stdexcept>

SOFTMESH_BEGIN_NAMESPACE

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_batched(const Tensor& t, std::int64_t channels, const char* op) {
  if (t.rank() != 4 || t.shape()[3] != channels) {
    throw ShapeError(std::string(op) + ": expected [N,H,W," +
                     std::to_string(channels) + "], got " +
                     shape_string(t.shape()));
  }
}

// Sum over every axis but the first -> [N].
Tensor per_sample_sum(const Tensor& t) {
  const auto n = t.shape()[0];
  return sum(reshape(t, {n, t.numel() / n}), 1);
}

Tensor alpha_column(std::span<const Real> alpha, const Tensor& like) {
  Shape shape(like.rank(), 1);
  shape[0] = static_cast<std::int64_t>(alpha.size());
  return Tensor::from(std::move(shape), {alpha.begin(), alpha.end()});
}

Tensor mix(const Tensor& i1, const Tensor& i2, const Tensor& j1,
           const Tensor& j2, std::span<const Real> alpha1,
           std::span<const Real> alpha2) {
  require_same(i1, i2, "interpolate");
  require_same(i1, j1, "interpolate");
  require_same(i1, j2, "interpolate");
  const Tensor a1 = alpha_column(alpha1, i1);
  const Tensor a2 = alpha_column(alpha2, i1);
  const Tensor one = Tensor::scalar(1);
  return Real(0.5) * ((one - a1) * i1 + a1 * j1) +
         Real(0.5) * ((one - a2) * i2 + a2 * j2);
}

Tensor unbatched_mix(const Tensor& i1, const Tensor& i2, const Tensor& j1,
                     const Tensor& j2, Real alpha1, Real alpha2) {
  require_same(i1, i2, "interpolate");
  require_same(i1, j1, "interpolate");
  require_same(i1, j2, "interpolate");
  return Real(0.5) * ((1 - alpha1) * i1 + alpha1 * j1) +
         Real(0.5) * ((1 - alpha2) * i2 + alpha2 * j2);
}

Tensor component_l1(const Tensor& a, const Tensor& b) {
  require_same(a, b, "cycle_3d");
  // Mean over batch and dimensions: batch-averaged L1 / dim(c).
  return mean(abs(a - b));
}

}  // namespace

void LossWeights::validate() const {
  for (Real v : {img, sil, l2d, l3d, lc}) {
    if (!std::isfinite(v) || v < 0) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
}

Tensor image_l1(const Tensor& image, const Tensor& mask,
                const Tensor& rendered_image, const Tensor& rendered_mask) {
  require_batched(image, 3, "image_l1");
  require_batched(mask, 1, "image_l1");
  require_same(image, rendered_image, "image_l1");
  require_same(mask, rendered_mask, "image_l1");
  if (image.shape()[1] != mask.shape()[1] || image.shape()[2] != mask.shape()[2]) {
    throw ShapeError("image_l1: image and mask resolutions differ");
  }
  return mean(per_sample_sum(abs(image * mask - rendered_image * rendered_mask)));
}

Tensor silhouette_iou_loss(const Tensor& mask, const Tensor& rendered_mask) {
  require_batched(mask, 1, "silhouette_iou_loss");
  require_same(mask, rendered_mask, "silhouette_iou_loss");
  const Tensor inter = mask * rendered_mask;
  const Tensor i = per_sample_sum(inter);
  const Tensor u = per_sample_sum(mask + rendered_mask - inter);
  const Tensor iou = i / (u + kIouGuard);
  // Both empty: the guarded ratio is 0 / 1e-6 = 0, reported as loss 0.
  std::vector<Real> empty(static_cast<std::size_t>(u.numel()));
  for (std::size_t k = 0; k < empty.size(); ++k) {
    empty[k] = u.data()[k] == 0 ? Real(1) : Real(0);
  }
  return mean(Tensor::scalar(1) - iou - Tensor::from(u.shape(), empty));
}

Tensor loss_2d(const Tensor& image, const Tensor& mask,
               const Tensor& rendered_image, const Tensor& rendered_mask,
               const LossWeights& w) {
  return w.img * image_l1(image, mask, rendered_image, rendered_mask) +
         w.sil * silhouette_iou_loss(mask, rendered_mask);
}

Attributes interpolate(const Attributes& i1, const Attributes& i2,
                       const Attributes& j1, const Attributes& j2,
                       std::span<const Real> alpha1,
                       std::span<const Real> alpha2) {
  const auto n = batch_size(i1);
  if (static_cast<std::int64_t>(alpha1.size()) != n ||
      static_cast<std::int64_t>(alpha2.size()) != n) {
    throw ShapeError("interpolate: one alpha pair per sample required");
  }
  return {mix(i1.camera, i2.camera, j1.camera, j2.camera, alpha1, alpha2),
          mix(i1.light, i2.light, j1.light, j2.light, alpha1, alpha2),
          mix(i1.shape_delta, i2.shape_delta, j1.shape_delta, j2.shape_delta,
              alpha1, alpha2),
          mix(i1.texture_flow, i2.texture_flow, j1.texture_flow,
              j2.texture_flow, alpha1, alpha2)};
}

Attributes interpolate(const Attributes& i1, const Attributes& i2,
                       const Attributes& j1, const Attributes& j2, Real alpha1,
                       Real alpha2) {
  return {
      unbatched_mix(i1.camera, i2.camera, j1.camera, j2.camera, alpha1, alpha2),
      unbatched_mix(i1.light, i2.light, j1.light, j2.light, alpha1, alpha2),
      unbatched_mix(i1.shape_delta, i2.shape_delta, j1.shape_delta,
                    j2.shape_delta, alpha1, alpha2),
      unbatched_mix(i1.texture_flow, i2.texture_flow, j1.texture_flow,
                    j2.texture_flow, alpha1, alpha2)};
}

Tensor attribute_l1(const Attributes& a, const Attributes& b) {
  return component_l1(a.camera, b.camera) + component_l1(a.light, b.light) +
         component_l1(a.shape_delta, b.shape_delta) +
         component_l1(a.texture_flow, b.texture_flow);
}

BatchRender render_batch(const Attributes& a, const Tensor& texture_source,
                         const Mesh& template_mesh, const RenderConfig& cfg,
                         Real d_min) {
  require_batched(texture_source, 3, "render_batch");
  const auto n = batch_size(a);
  if (texture_source.shape()[0] != n) {
    throw ShapeError("render_batch: one texture source per sample required");
  }
  BatchRender out;
  std::vector<Tensor> rgba;
  for (std::int64_t k = 0; k < n; ++k) {
    const Tensor source = reshape(slice(texture_source, 0, k, k + 1),
                                  {texture_source.shape()[1],
                                   texture_source.shape()[2], 3});
    out.realized.push_back(
        realize_attributes(attributes_at(a, k), source, template_mesh, d_min));
    out.frames.push_back(render(out.realized.back(), template_mesh, cfg));
    rgba.push_back(reshape(out.frames.back().rgba, {1, cfg.height, cfg.width, 4}));
  }
  out.rgba = concat(std::span<const Tensor>(rgba), 0);
  out.image = slice(out.rgba, 3, 0, 3);
  out.mask = slice(out.rgba, 3, 3, 4);
  return out;
}

Tensor cycle_3d(const Attributes& a_ij, const Tensor& texture_source,
                const EncoderParams& params, const Mesh& template_mesh,
                const RenderConfig& cfg, Tensor* rendered_out) {
  const BatchRender r = render_batch(a_ij, texture_source, template_mesh, cfg,
                                     params.config.d_min);
  if (rendered_out) *rendered_out = r.rgba;
  return attribute_l1(encode(r.rgba, params), a_ij);
}

Tensor landmark_consistency(const Tensor& logits,
                            const std::vector<bool>& visible) {
  if (logits.rank() != 2 ||
      logits.shape()[0] != static_cast<std::int64_t>(visible.size())) {
    throw ShapeError("landmark_consistency: logits [V,C] with V visibility "
                     "flags expected, got " +
                     shape_string(logits.shape()));
  }
  std::vector<std::int64_t> labels(visible.size());
  std::vector<Real> weights(visible.size());
  for (std::size_t k = 0; k < visible.size(); ++k) {
    labels[k] = static_cast<std::int64_t>(k);
    weights[k] = visible[k] ? Real(1) : Real(0);
  }
  return softmax_cross_entropy(logits, labels, weights);
}

Tensor model_loss(const ModelLosses& t, const LossWeights& w) {
  return w.l2d * (w.img * t.img + w.sil * t.sil) + w.l3d * t.l3d + w.lc * t.lc;
}

Tensor total_loss(const ModelLosses& model1, const ModelLosses& model2,
                  const LossWeights& w) {
  return Real(0.5) * model_loss(model1, w) + Real(0.5) * model_loss(model2, w);
}

SOFTMESH_END_NAMESPACE
