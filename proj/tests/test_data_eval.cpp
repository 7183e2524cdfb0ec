#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "softmesh/eval.hpp"
#include "softmesh/image_io.hpp"
#include "softmesh/losses.hpp"
#include "softmesh/metrics.hpp"
#include "softmesh/synthetic.hpp"
#include "softmesh/training.hpp"
#include "test_support.hpp"

using namespace softmesh;
namespace fs = std::filesystem;

namespace {

Tensor square_mask(int h, int w, int y0, int x0, int size) {
  std::vector<Real> v(std::size_t(h * w), 0);
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) v[std::size_t(y * w + x)] = 1;
  }
  return Tensor::from({h, w, 1}, v);
}

std::vector<Tensor> random_images(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(0, 1);
  std::vector<Tensor> out;
  for (int k = 0; k < n; ++k) {
    std::vector<Real> v(std::size_t(size * size * 3));
    // Smooth-ish content: a random gradient plus noise.
    const Real gx = u(rng), gy = u(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) {
          v[std::size_t((y * size + x) * 3 + c)] =
              Real(0.5) * (gx * x + gy * y) / Real(size) + Real(0.5) * u(rng);
        }
      }
    }
    out.push_back(Tensor::from({size, size, 3}, v));
  }
  return out;
}

RenderedFrame render_truth(const Sample& s, const SyntheticConfig& sc) {
  const GroundTruth& t = *s.truth;
  const Mesh sphere = icosphere(sc.icosphere_level);
  const auto nv = std::int64_t(sphere.num_vertices());
  Attributes a;
  a.camera = Tensor::from({4}, t.camera);
  a.light = Tensor::from({kShCoefficients}, t.light);
  a.shape_delta = Tensor::from({nv, 3}, t.shape_delta);
  a.texture_flow = identity_flow(t.texture_height, t.texture_width);
  const Tensor texture =
      Tensor::from({t.texture_height, t.texture_width, 3}, t.texture);
  RenderConfig rc;
  rc.height = sc.height;
  rc.width = sc.width;
  rc.fov_deg = sc.fov_deg;
  rc.sigma = sc.sigma;
  rc.gamma = sc.gamma;
  return render(realize_attributes(a, texture, sphere, sc.d_min), sphere, rc);
}

}  // namespace

TEST_CASE("load_dataset reads sorted pairs and thresholds masks") {
  const test::TempDir dir;
  const auto samples = gen_synthetic(3, 5, SyntheticConfig{16, 16, 8, 8});
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
    save_sample(dir.path.string(), *it);
  }
  // Overwrite one mask with gray levels.
  std::vector<Real> gray(16 * 16);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = Real(i % 7) / 6;
  write_png((dir.path / "0001_mask.png").string(), Tensor::from({16, 16, 1}, gray));

  const auto loaded = load_dataset(dir.path.string());
  REQUIRE(loaded.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(loaded[k].index == std::int64_t(k));
  for (Real v : loaded[1].mask.data()) CHECK((v == 0 || v == 1));
  // Level 4/6 is stored as 170, level 2/6 as 85.
  CHECK(loaded[1].mask.data()[4] == 1);
  CHECK(loaded[1].mask.data()[2] == 0);
  REQUIRE(loaded[0].truth.has_value());
  CHECK(loaded[0].truth->light == samples[0].truth->light);
  for (std::size_t i = 0; i < samples[2].image.data().size(); ++i) {
    CHECK(std::abs(loaded[2].image.data()[i] - samples[2].image.data()[i]) <= 0.5 / 255 + 1e-6);
  }
}

TEST_CASE("load_dataset rejects incomplete and mismatched pairs") {
  const test::TempDir dir;
  const auto samples = gen_synthetic(3, 5, SyntheticConfig{16, 16, 8, 8});
  for (const auto& s : samples) save_sample(dir.path.string(), s);
  SUBCASE("missing mask") {
    fs::remove(dir.path / "0002_mask.png");
    try {
      (void)load_dataset(dir.path.string());
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("0002") != std::string::npos);
    }
  }
  SUBCASE("size mismatch") {
    write_png((dir.path / "0001_mask.png").string(), Tensor::zeros({8, 8, 1}));
    CHECK_THROWS(load_dataset(dir.path.string()));
  }
}

TEST_CASE("generator is deterministic per index") {
  const test::TempDir a, b;
  for (const auto& s : gen_synthetic(4, 7)) save_sample(a.path.string(), s);
  for (const auto& s : gen_synthetic(4, 7)) save_sample(b.path.string(), s);
  for (const auto& entry : fs::directory_iterator(a.path)) {
    CHECK(test::read_file(entry.path()) ==
          test::read_file(b.path / entry.path().filename()));
  }
  // Index 5 does not depend on how many samples precede it.
  const Sample direct = synthetic_sample(7, 5);
  const auto batch = gen_synthetic(3, 7, {}, 3);
  CHECK(std::equal(direct.image.data().begin(), direct.image.data().end(),
                   batch[2].image.data().begin()));
}

TEST_CASE("synthetic tool geometry") {
  const Mesh tool = tool_mesh(icosphere(1));
  CHECK(aspect_ratio(tool) >= 5);
  CHECK_NOTHROW(face_normals(tool));
}

TEST_CASE("generated masks cover 2 to 60 percent of the frame") {
  for (const auto& s : gen_synthetic(100, 11)) {
    Real on = 0;
    for (Real v : s.mask.data()) on += v;
    const Real fraction = on / Real(s.mask.numel());
    CAPTURE(s.index);
    CHECK(fraction >= 0.02);
    CHECK(fraction <= 0.60);
  }
}

TEST_CASE("ground truth re-renders to the stored mask") {
  const SyntheticConfig sc;
  for (const auto& s : gen_synthetic(16, 7, sc)) {
    const RenderedFrame f = render_truth(s, sc);
    const Tensor hard = Tensor::from(
        {sc.height, sc.width, 1},
        hard_silhouette(f.screen.data(), icosphere(sc.icosphere_level).faces,
                        sc.height, sc.width));
    CAPTURE(s.index);
    CHECK(iou_metric(hard, s.mask) >= 0.98);
  }
}

TEST_CASE("IoU metric") {
  const Tensor a = square_mask(8, 8, 0, 0, 2);
  const Tensor b = square_mask(8, 8, 0, 1, 2);
  SUBCASE("hand case 1/3") { CHECK(iou_metric(a, b) == doctest::Approx(1.0 / 3)); }
  SUBCASE("identity and symmetry") {
    CHECK(iou_metric(a, a) == 1);
    CHECK(iou_metric(a, b) == iou_metric(b, a));
  }
  SUBCASE("disjoint") { CHECK(iou_metric(a, square_mask(8, 8, 5, 5, 2)) == 0); }
  SUBCASE("both empty") {
    CHECK(iou_metric(Tensor::zeros({8, 8, 1}), Tensor::zeros({8, 8, 1})) == 1);
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS(iou_metric(a, Tensor::zeros({4, 4, 1})));
  }
  SUBCASE("soft masks are thresholded at one half") {
    std::vector<Real> soft(a.data().begin(), a.data().end());
    for (auto& v : soft) v = v > 0 ? Real(0.6) : Real(0.4);
    CHECK(iou_metric(Tensor::from({8, 8, 1}, soft), a) == 1);
  }
  SUBCASE("matches the loss on binary masks") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution on(0.3);
    for (int t = 0; t < 20; ++t) {
      std::vector<Real> x(64), y(64);
      for (auto& v : x) v = on(rng);
      for (auto& v : y) v = on(rng);
      const Real metric =
          iou_metric(Tensor::from({8, 8, 1}, x), Tensor::from({8, 8, 1}, y));
      const Real loss = silhouette_iou_loss(Tensor::from({1, 8, 8, 1}, x),
                                            Tensor::from({1, 8, 8, 1}, y))
                            .item();
      CHECK(std::abs((1 - metric) - loss) < 1e-6);
    }
  }
}

TEST_CASE("Frechet proxy") {
  const auto a = random_images(6, 32, 1);
  const auto b = random_images(6, 32, 2);
  CHECK(rf_frechet(a, a) < 1e-6);
  std::vector<Tensor> inverted;
  for (const auto& img : a) {
    std::vector<Real> v(img.data().begin(), img.data().end());
    for (auto& x : v) x = 1 - x;
    inverted.push_back(Tensor::from(img.shape(), v));
  }
  CHECK(rf_frechet(a, inverted) > 0);
  CHECK(std::abs(rf_frechet(a, b) - rf_frechet(b, a)) < 1e-6);
  CHECK(rf_frechet(a, b) >= 0);
  const auto stats = feature_stats(a);
  CHECK(stats.mean.size() == kFrechetFeatures);
  CHECK((stats.covariance - stats.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(rf_frechet({a[0]}, b));
  CHECK(std::isfinite(rf_frechet(a, random_images(3, 16, 4))));
}

TEST_CASE("rotation sweep and evaluation report") {
  TrainConfig cfg;
  cfg.image_height = cfg.image_width = 32;
  cfg.texture_height = cfg.texture_width = 16;
  const TrainState state = init_state(cfg);
  SyntheticConfig sc;
  sc.height = sc.width = 32;
  sc.texture_height = sc.texture_width = 16;
  const auto samples = gen_synthetic(3, 7, sc);
  std::vector<Tensor> reference;
  for (const auto& s : samples) reference.push_back(s.image);
  const RenderConfig rc = cfg.render_config();

  const RotationSweep sweep =
      rotation_sweep(state.model[0], samples[0], state.template_mesh, rc, reference);
  REQUIRE(sweep.frames.size() == 12);
  REQUIRE(sweep.azimuths_deg.size() == 12);
  for (int k = 0; k < 12; ++k) CHECK(sweep.azimuths_deg[std::size_t(k)] == Real(30 * k));
  CHECK(sweep.frechet >= 0);

  // The 0 degree frame is the re-render with the azimuth overridden to 0.
  const Reconstruction r = reconstruct(state.model[0], samples[0], state.template_mesh, rc);
  const RealizedAttributes at0 = realize_attributes(
      with_azimuth(r.attributes, 0), samples[0].image, state.template_mesh, cfg.d_min);
  const RenderedFrame f0 = render(at0, state.template_mesh, rc);
  CHECK(std::equal(f0.rgba.data().begin(), f0.rgba.data().end(),
                   sweep.frames[0].rgba.data().begin()));
  const Attributes turned = with_azimuth(r.attributes, 90);
  const auto cam = turned.camera.data();
  CHECK(CameraRaw{cam[0], cam[1], 0, 2}.azimuth_deg() == doctest::Approx(90));
  CHECK(cam[2] == r.attributes.camera.data()[2]);
  CHECK(cam[3] == r.attributes.camera.data()[3]);

  const test::TempDir dir;
  const EvalReport report = evaluate(state, samples, reference, (dir.path / "sweep").string());
  REQUIRE(report.rows.size() == 3);
  const std::string csv = (dir.path / "report.csv").string();
  write_report(csv, report);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sample,iou,rf_frechet_recon,rf_frechet_rotation");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 4);
  CHECK(fs::exists(dir.path / "sweep"));
}
