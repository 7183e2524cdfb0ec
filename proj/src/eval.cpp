#include "softmesh/eval.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "softmesh/image_io.hpp"
#include "softmesh/metrics.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace {

Tensor input_of(const Sample& s) {
  const auto h = s.image.shape()[0], w = s.image.shape()[1];
  return reshape(concat({s.image, s.mask}, 2), {1, h, w, 4});
}

}  // namespace

Reconstruction reconstruct(const EncoderParams& params, const Sample& sample,
                           const Mesh& template_mesh, const RenderConfig& cfg) {
  NoGradGuard no_grad;
  Reconstruction r;
  r.attributes = attributes_at(encode(input_of(sample), params), 0);
  r.realized = realize_attributes(r.attributes, sample.image, template_mesh,
                                  params.config.d_min);
  r.frame = render(r.realized, template_mesh, cfg);
  return r;
}

Attributes with_azimuth(const Attributes& a, Real azimuth_deg) {
  const Real rad = azimuth_deg * std::numbers::pi_v<Real> / 180;
  const auto cam = a.camera.data();
  Attributes out = a;
  out.camera = Tensor::from(a.camera.shape(),
                            {std::sin(rad), std::cos(rad), cam[2], cam[3]});
  return out;
}

RotationSweep rotation_sweep(const EncoderParams& params, const Sample& sample,
                             const Mesh& template_mesh, const RenderConfig& cfg,
                             const std::vector<Tensor>& reference_images) {
  NoGradGuard no_grad;
  const Reconstruction base = reconstruct(params, sample, template_mesh, cfg);
  RotationSweep sweep;
  std::vector<Tensor> images;
  for (int k = 0; k < kSweepViews; ++k) {
    const Real az = kSweepStepDeg * Real(k);
    const RealizedAttributes r =
        realize_attributes(with_azimuth(base.attributes, az), sample.image,
                           template_mesh, params.config.d_min);
    sweep.azimuths_deg.push_back(az);
    sweep.frames.push_back(render(r, template_mesh, cfg));
    images.push_back(sweep.frames.back().image);
  }
  sweep.frechet = rf_frechet(images, reference_images);
  return sweep;
}

EvalReport evaluate(const TrainState& state, const std::vector<Sample>& samples,
                    const std::vector<Tensor>& reference_images,
                    const std::string& sweep_dir) {
  const RenderConfig rc = state.config.render_config();
  const EncoderParams& params = state.model[0];
  EvalReport report;
  std::vector<Tensor> recon, inputs;
  for (const auto& s : samples) {
    const Reconstruction r = reconstruct(params, s, state.template_mesh, rc);
    recon.push_back(r.frame.image);
    inputs.push_back(s.image);
    EvalRow row;
    row.sample = s.index;
    row.iou = iou_metric(r.frame.mask, s.mask);
    const RotationSweep sweep = rotation_sweep(params, s, state.template_mesh,
                                               rc, reference_images);
    row.frechet_rotation = sweep.frechet;
    row.min_sweep_mask_sum = std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < sweep.frames.size(); ++k) {
      Real total = 0;
      for (Real v : sweep.frames[k].mask.data()) total += v;
      row.min_sweep_mask_sum = std::min(row.min_sweep_mask_sum, total);
      if (!sweep_dir.empty()) {
        std::filesystem::create_directories(sweep_dir);
        const std::string base = sweep_dir + "/" + sample_prefix(s.index) +
                                 "_az" +
                                 std::to_string(static_cast<int>(
                                     sweep.azimuths_deg[k]));
        write_png(base + "_img.png", sweep.frames[k].image);
        write_png(base + "_mask.png", sweep.frames[k].mask);
      }
    }
    report.rows.push_back(row);
  }
  report.frechet_recon = recon.size() >= 2 ? rf_frechet(recon, inputs) : 0.0;
  for (auto& row : report.rows) {
    row.frechet_recon = report.frechet_recon;
    report.mean_iou += row.iou;
    report.mean_frechet_rotation += row.frechet_rotation;
  }
  if (!report.rows.empty()) {
    report.mean_iou /= Real(report.rows.size());
    report.mean_frechet_rotation /= double(report.rows.size());
  }
  return report;
}

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path);
  out.precision(9);
  out << "sample,iou,rf_frechet_recon,rf_frechet_rotation\n";
  for (const auto& r : report.rows) {
    out << sample_prefix(r.sample) << ',' << r.iou << ',' << r.frechet_recon
        << ',' << r.frechet_rotation << '\n';
  }
  out << "mean," << report.mean_iou << ',' << report.frechet_recon << ','
      << report.mean_frechet_rotation << '\n';
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

SOFTMESH_END_NAMESPACE
