#include "softmesh/grad_suites.hpp"

#include <chrono>
#include <random>

#include "softmesh/renderer.hpp"
#include "softmesh/synthetic.hpp"
#include "softmesh/training.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

GradSuiteResult renderer_grad_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) {
    return static_cast<Real>(lo + (hi - lo) * unit(rng));
  };

  const Mesh mesh = icosphere(0);
  RenderConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.sigma = Real(1e-2);
  cfg.gamma = Real(1e-2);

  std::vector<Real> verts = mesh.vertices;
  for (auto& v : verts) v *= uniform(0.8, 1.1);
  const auto nv = static_cast<std::int64_t>(mesh.num_vertices());
  Tensor vertices = Tensor::parameter({nv, 3}, verts, "vertices");
  Tensor camera = Tensor::parameter(
      {4}, {uniform(-0.5, 0.5), uniform(0.5, 1.0), uniform(-20, 20),
            uniform(2.2, 2.8)},
      "camera");
  std::vector<Real> sh(kShCoefficients);
  sh[0] = Real(2.5);
  for (int k = 1; k < kShCoefficients; ++k) {
    sh[static_cast<std::size_t>(k)] = uniform(-0.2, 0.2);
  }
  Tensor light = Tensor::parameter({kShCoefficients}, sh, "light");
  std::vector<Real> tex(8 * 8 * 3);
  for (auto& t : tex) t = uniform(0.1, 0.35);
  Tensor texture = Tensor::parameter({8, 8, 3}, tex, "texels");
  std::vector<Real> weights(16 * 16 * 4);
  for (auto& w : weights) w = uniform(-1, 1);
  const Tensor probe = Tensor::from({16, 16, 4}, weights);

  auto f = [&] {
    const RenderedFrame frame =
        render({camera, light, vertices, texture}, mesh, cfg);
    return sum(frame.rgba * probe);
  };
  GradSuiteResult result;
  result.name = "renderer";
  result.report = grad_check(f, {camera, light, vertices, texture});
  result.seconds = seconds_since(start);
  return result;
}

GradSuiteResult losses_grad_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.texture_height = 8;
  cfg.texture_width = 8;
  cfg.icosphere_level = 0;
  cfg.sigma = Real(1e-2);
  cfg.gamma = Real(1e-2);
  cfg.batch_size = 2;

  SyntheticConfig sc;
  sc.height = 16;
  sc.width = 16;
  sc.texture_height = 8;
  sc.texture_width = 8;
  sc.icosphere_level = 0;
  const std::vector<Sample> samples = gen_synthetic(4, seed, sc);

  TrainState state = init_state(cfg);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (int m = 0; m < 2; ++m) {
    for (auto& e : state.model[m].manifest()) {
      params.push_back(e.tensor);
      names.push_back("model" + std::to_string(m + 1) + "." + e.name);
    }
  }
  for (auto& e : state.classifier.manifest()) {
    params.push_back(e.tensor);
    names.push_back(e.name);
  }

  // 50 distinct coordinates drawn uniformly over all parameter entries.
  std::vector<std::int64_t> offsets{0};
  for (const auto& p : params) offsets.push_back(offsets.back() + p.numel());
  std::mt19937_64 rng(seed);
  GradCheckOptions options;
  options.coordinates.assign(params.size(), {});
  std::vector<std::int64_t> picked;
  while (picked.size() < 50) {
    const auto flat = static_cast<std::int64_t>(
        rng() % static_cast<std::uint64_t>(offsets.back()));
    if (std::find(picked.begin(), picked.end(), flat) != picked.end()) continue;
    picked.push_back(flat);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto p = static_cast<std::size_t>(it - offsets.begin() - 1);
    options.coordinates[p].push_back(flat - offsets[p]);
  }
  for (auto& c : options.coordinates) std::sort(c.begin(), c.end());

  const std::size_t batch_i[] = {0, 1};
  const std::size_t batch_j[] = {2, 3};
  auto f = [&] {
    return build_step(state, samples, batch_i, batch_j, seed).total;
  };
  GradSuiteResult result;
  result.name = "losses";
  result.report = grad_check(f, params, options);
  for (std::size_t k = 0; k < names.size(); ++k) {
    result.report.params[k].name = names[k];
  }
  result.seconds = seconds_since(start);
  return result;
}

SOFTMESH_END_NAMESPACE
