#pragma once

#include <span>
#include <vector>

#include "softmesh/encoders.hpp"
#include "softmesh/renderer.hpp"
#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct LossWeights {
  Real img = 1;
  Real sil = 1;
  Real l2d = 1;
  Real l3d = Real(0.1);
  Real lc = Real(0.01);

  // Throws std::invalid_argument unless every weight is finite and >= 0.
  void validate() const;
};

inline constexpr Real kIouGuard = Real(1e-6);

// All images [N,H,W,3], masks [N,H,W,1]. Batch means of per-sample values.
Tensor image_l1(const Tensor& image, const Tensor& mask,
                const Tensor& rendered_image, const Tensor& rendered_mask);
Tensor silhouette_iou_loss(const Tensor& mask, const Tensor& rendered_mask);
Tensor loss_2d(const Tensor& image, const Tensor& mask,
               const Tensor& rendered_image, const Tensor& rendered_mask,
               const LossWeights& w);

// 0.5[(1-a1) a_i1 + a1 a_j1] + 0.5[(1-a2) a_i2 + a2 a_j2], componentwise.
// Batched attributes take one alpha pair per sample.
Attributes interpolate(const Attributes& a_i1, const Attributes& a_i2,
                       const Attributes& a_j1, const Attributes& a_j2,
                       std::span<const Real> alpha1,
                       std::span<const Real> alpha2);
Attributes interpolate(const Attributes& a_i1, const Attributes& a_i2,
                       const Attributes& a_j1, const Attributes& a_j2,
                       Real alpha1, Real alpha2);

struct BatchRender {
  std::vector<RealizedAttributes> realized;
  std::vector<RenderedFrame> frames;
  Tensor rgba;   // [N,H,W,4]
  Tensor image;  // [N,H,W,3]
  Tensor mask;   // [N,H,W,1]
};

// Realizes and renders every sample of a batched bundle; sample n samples
// its texture from texture_source[n].
BatchRender render_batch(const Attributes& a, const Tensor& texture_source,
                         const Mesh& template_mesh, const RenderConfig& cfg,
                         Real d_min);

// Sum over components of mean |a - b|, batch-averaged.
Tensor attribute_l1(const Attributes& a, const Attributes& b);

// Renders each sample of a_ij with texture sampled from texture_source
// [N,H,W,3], re-encodes the frames and compares. rendered_out, when given,
// receives the rendered batch [N,H,W,4].
Tensor cycle_3d(const Attributes& a_ij, const Tensor& texture_source,
                const EncoderParams& params, const Mesh& template_mesh,
                const RenderConfig& cfg, Tensor* rendered_out = nullptr);

// logits [V,V]; per-sample sum over visible rows of -log softmax[k].
Tensor landmark_consistency(const Tensor& logits,
                            const std::vector<bool>& visible);

struct ModelLosses {
  Tensor img;
  Tensor sil;
  Tensor l3d;
  Tensor lc;
};

Tensor model_loss(const ModelLosses& t, const LossWeights& w);
Tensor total_loss(const ModelLosses& model1, const ModelLosses& model2,
                  const LossWeights& w);

SOFTMESH_END_NAMESPACE
