#pragma once

#include <string>
#include <vector>

#include "softmesh/dataset.hpp"
#include "softmesh/training.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct Reconstruction {
  Attributes attributes;  // unbatched
  RealizedAttributes realized;
  RenderedFrame frame;
};

Reconstruction reconstruct(const EncoderParams& params, const Sample& sample,
                           const Mesh& template_mesh, const RenderConfig& cfg);

// Raw camera with the azimuth replaced; elevation and distance raws kept.
Attributes with_azimuth(const Attributes& a, Real azimuth_deg);

inline constexpr int kSweepViews = 12;
inline constexpr Real kSweepStepDeg = 30;

struct RotationSweep {
  std::vector<Real> azimuths_deg;    // 0, 30, ..., 330
  std::vector<RenderedFrame> frames;
  double frechet = 0;                // sweep images vs reference set
};

RotationSweep rotation_sweep(const EncoderParams& params, const Sample& sample,
                             const Mesh& template_mesh, const RenderConfig& cfg,
                             const std::vector<Tensor>& reference_images);

struct EvalRow {
  std::int64_t sample = 0;
  Real iou = 0;
  double frechet_recon = 0;
  double frechet_rotation = 0;
  Real min_sweep_mask_sum = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  Real mean_iou = 0;
  double frechet_recon = 0;
  double mean_frechet_rotation = 0;
};

// Model 1 of the state is evaluated. reference_images are the training
// images used as the Fréchet reference set.
EvalReport evaluate(const TrainState& state, const std::vector<Sample>& samples,
                    const std::vector<Tensor>& reference_images,
                    const std::string& sweep_dir = {});

void write_report(const std::string& path, const EvalReport& report);

SOFTMESH_END_NAMESPACE
