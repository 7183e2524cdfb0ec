#include "softmesh/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "softmesh/encoders.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace {

constexpr Real kLengthScale = Real(0.95);
constexpr Real kRadiusBottom = Real(0.19);
constexpr Real kRadiusTop = Real(0.12);

constexpr std::array<std::array<Real, 3>, 8> kPalette = {{
    {Real(0.90), Real(0.20), Real(0.15)},
    {Real(0.20), Real(0.70), Real(0.25)},
    {Real(0.20), Real(0.35), Real(0.90)},
    {Real(0.95), Real(0.80), Real(0.20)},
    {Real(0.75), Real(0.75), Real(0.78)},
    {Real(0.60), Real(0.25), Real(0.75)},
    {Real(0.15), Real(0.75), Real(0.80)},
    {Real(0.95), Real(0.55), Real(0.15)},
}};

std::mt19937_64 sample_rng(std::uint64_t seed, std::int64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace

Mesh tool_mesh(const Mesh& sphere) {
  Mesh m = sphere;
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const Real y = sphere.vertices[3 * i + 1];
    const Real t = (y + 1) / 2;
    const Real r = kRadiusBottom + (kRadiusTop - kRadiusBottom) * t;
    m.vertices[3 * i] = r * sphere.vertices[3 * i];
    m.vertices[3 * i + 1] = kLengthScale * y;
    m.vertices[3 * i + 2] = r * sphere.vertices[3 * i + 2];
  }
  return m;
}

Real aspect_ratio(const Mesh& mesh) {
  Real ymin = std::numeric_limits<Real>::infinity(), ymax = -ymin;
  Real radius = 0;
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Vec3 v = mesh.vertex(i);
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
    radius = std::max(radius, std::hypot(v.x(), v.z()));
  }
  return (ymax - ymin) / (2 * radius);
}

Real elevation_to_raw(Real elevation_deg) {
  return std::atanh(elevation_deg / Real(90));
}

Real distance_to_raw(Real distance, Real d_min) {
  // Inverse softplus.
  return std::log(std::expm1(distance - d_min));
}

Sample synthetic_sample(std::uint64_t seed, std::int64_t index,
                        const SyntheticConfig& cfg) {
  NoGradGuard no_grad;
  auto rng = sample_rng(seed, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) {
    return static_cast<Real>(lo + (hi - lo) * unit(rng));
  };

  const Mesh sphere = icosphere(cfg.icosphere_level);
  const Mesh tool = tool_mesh(sphere);

  const Real azimuth = uniform(0, 360);
  const Real elevation = uniform(-30, 30);
  const Real distance = uniform(2, 3);
  const Real a_rad = azimuth * std::numbers::pi_v<Real> / 180;

  std::vector<Real> light(kShCoefficients, Real(0));
  light[0] = uniform(0.9, 1.3) / kShY00;
  for (int k = 1; k < 4; ++k) light[static_cast<std::size_t>(k)] = uniform(-0.4, 0.4);
  for (int k = 4; k < kShCoefficients; ++k) {
    light[static_cast<std::size_t>(k)] = uniform(-0.15, 0.15);
  }

  const int bands = 2 + static_cast<int>(unit(rng) * 3.0) % 3;
  std::vector<std::size_t> colors;
  while (static_cast<int>(colors.size()) < bands) {
    const auto c = static_cast<std::size_t>(unit(rng) * kPalette.size()) %
                   kPalette.size();
    if (colors.empty() || colors.back() != c) colors.push_back(c);
  }
  const int th = cfg.texture_height, tw = cfg.texture_width;
  std::vector<Real> texture(static_cast<std::size_t>(th * tw * 3));
  for (int r = 0; r < th; ++r) {
    const Real v = (Real(r) + Real(0.5)) / Real(th);
    const auto band = std::min<std::size_t>(
        static_cast<std::size_t>(v * Real(bands)), colors.size() - 1);
    for (int c = 0; c < tw; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        texture[static_cast<std::size_t>((r * tw + c) * 3 + ch)] =
            kPalette[colors[band]][static_cast<std::size_t>(ch)];
      }
    }
  }

  RenderConfig rc;
  rc.height = cfg.height;
  rc.width = cfg.width;
  rc.sigma = cfg.sigma;
  rc.gamma = cfg.gamma;
  rc.fov_deg = cfg.fov_deg;
  const auto nv = static_cast<std::int64_t>(tool.num_vertices());
  RealizedAttributes ra;
  ra.camera = Tensor::from({4}, {std::sin(a_rad), std::cos(a_rad), elevation,
                                 distance});
  ra.light = Tensor::from({kShCoefficients}, light);
  ra.vertices = Tensor::from({nv, 3}, tool.vertices);
  ra.texture = Tensor::from({th, tw, 3}, texture);
  const RenderedFrame frame = render(ra, tool, rc);
  const Tensor screen =
      project(ra.vertices, ra.camera, cfg.height, cfg.width, cfg.fov_deg);

  Sample s;
  s.index = index;
  s.image = frame.image.detach();
  s.mask = Tensor::from(
      {cfg.height, cfg.width, 1},
      hard_silhouette(screen.data(), tool.faces, cfg.height, cfg.width));

  GroundTruth t;
  t.camera = {std::sin(a_rad), std::cos(a_rad), elevation_to_raw(elevation),
              distance_to_raw(distance, cfg.d_min)};
  t.light = light;
  t.shape_delta.resize(tool.vertices.size());
  for (std::size_t i = 0; i < tool.vertices.size(); ++i) {
    t.shape_delta[i] = tool.vertices[i] - sphere.vertices[i];
  }
  const Tensor flow = identity_flow(th, tw);
  t.texture_flow.assign(flow.data().begin(), flow.data().end());
  t.texture = texture;
  t.texture_height = th;
  t.texture_width = tw;
  s.truth = std::move(t);
  return s;
}

std::vector<Sample> gen_synthetic(int n, std::uint64_t seed,
                                  const SyntheticConfig& cfg,
                                  std::int64_t first_index) {
  if (n < 1) throw std::invalid_argument("gen_synthetic: count must be >= 1");
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(synthetic_sample(seed, first_index + i, cfg));
  }
  return out;
}

SOFTMESH_END_NAMESPACE
