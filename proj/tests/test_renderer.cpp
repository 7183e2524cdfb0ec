#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>

#include "softmesh/geometry.hpp"
#include "softmesh/renderer.hpp"

using namespace softmesh;

namespace {

RealizedAttributes sphere_attributes(const Mesh& mesh, Real distance,
                                     Real gray = Real(0.5)) {
  RealizedAttributes a;
  a.camera = Tensor::from({4}, {0, 1, 0, distance});
  std::vector<Real> light(kShCoefficients, 0);
  light[0] = 1 / kShY00;
  a.light = Tensor::from({kShCoefficients}, light);
  a.vertices = Tensor::from({Shape::value_type(mesh.num_vertices()), 3},
                            mesh.vertices);
  a.texture = Tensor::full({8, 8, 3}, gray);
  return a;
}

Real total(const Tensor& t) {
  const auto d = t.data();
  return std::accumulate(d.begin(), d.end(), Real(0));
}

// Screen-space triangle mesh: vertices given directly in pixels.
Mesh triangles(std::vector<Real> screen_xyz, std::vector<Face> faces) {
  Mesh m;
  m.vertices = std::move(screen_xyz);
  m.faces = std::move(faces);
  m.uv.assign(2 * m.num_vertices(), Real(0.5));
  return m;
}

Tensor screen_of(const Mesh& m) {
  return Tensor::from({Shape::value_type(m.num_vertices()), 3}, m.vertices);
}

}  // namespace

TEST_CASE("template sphere renders a centred disk") {
  const Mesh mesh = icosphere(2);
  RenderConfig cfg;
  const auto frame = render(sphere_attributes(mesh, 3), mesh, cfg);
  REQUIRE(frame.mask.shape() == Shape{64, 64, 1});
  REQUIRE(frame.image.shape() == Shape{64, 64, 3});
  const auto m = frame.mask.data();
  CHECK(total(frame.mask) > 0);
  // Centroid at the image centre.
  Real cx = 0, cy = 0, area = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const Real v = m[y * 64 + x];
      cx += v * (x + Real(0.5));
      cy += v * (y + Real(0.5));
      area += v;
    }
  }
  CHECK(cx / area == doctest::Approx(32).epsilon(0.01));
  CHECK(cy / area == doctest::Approx(32).epsilon(0.01));
  // Hard oracle on the same projection.
  const auto hard = hard_silhouette(frame.screen.data(), mesh.faces, 64, 64);
  const Real hard_area = std::accumulate(hard.begin(), hard.end(), Real(0));
  CHECK(std::abs(area - hard_area) / hard_area < 0.05);
  // Radius of the projected unit sphere at distance 3, 60 degree fov.
  const Real focal = 32 / std::tan(Real(30) * std::numbers::pi_v<Real> / 180);
  const Real radius = focal / std::sqrt(Real(9) - 1);
  CHECK(std::sqrt(area / std::numbers::pi_v<Real>) ==
        doctest::Approx(radius).epsilon(0.05));
}

TEST_CASE("doubling the distance shrinks the silhouette") {
  const Mesh mesh = icosphere(1);
  RenderConfig cfg;
  const Real near = total(render(sphere_attributes(mesh, 2.2), mesh, cfg).mask);
  const Real far = total(render(sphere_attributes(mesh, 4.4), mesh, cfg).mask);
  CHECK(far < near);
}

TEST_CASE("rendering is bit-identical across calls") {
  const Mesh mesh = icosphere(1);
  RenderConfig cfg;
  auto a = sphere_attributes(mesh, 2.5);
  a.camera = Tensor::from({4}, {0.3, 0.8, 12, 2.5});
  const auto f1 = render(a, mesh, cfg);
  const auto f2 = render(a, mesh, cfg);
  CHECK(std::memcmp(f1.rgba.data().data(), f2.rgba.data().data(),
                    f1.rgba.data().size() * sizeof(Real)) == 0);
}

TEST_CASE("soft silhouette saturates inside and vanishes outside") {
  RenderConfig cfg;
  cfg.height = cfg.width = 32;
  const Mesh tri = triangles({2, 2, 1, 30, 2, 1, 2, 30, 1}, {{0, 1, 2}});
  const Tensor sil = soft_silhouette(screen_of(tri), tri.faces, cfg);
  CHECK(sil.data()[8 * 32 + 8] == doctest::Approx(1).epsilon(1e-3));
  CHECK(sil.data()[28 * 32 + 28] < 1e-3);
}

TEST_CASE("soft silhouette converges to the hard one at small sigma") {
  const Mesh mesh = icosphere(1);
  RenderConfig cfg;
  cfg.sigma = Real(1e-5);
  for (const auto& cam : {std::array<Real, 4>{0, 1, 0, 2.5},
                          std::array<Real, 4>{0.7, 0.2, 25, 2.2},
                          std::array<Real, 4>{-0.4, -0.9, -30, 3}}) {
    const Tensor screen =
        project(Tensor::from({42, 3}, mesh.vertices),
                Tensor::from({4}, {cam[0], cam[1], cam[2], cam[3]}), 64, 64);
    const Tensor soft = soft_silhouette(screen, mesh.faces, cfg);
    const auto hard = hard_silhouette(screen.data(), mesh.faces, 64, 64);
    Real diff = 0;
    for (std::size_t i = 0; i < hard.size(); ++i) {
      diff += std::abs(soft.data()[i] - hard[i]);
    }
    CHECK(diff / Real(hard.size()) < 0.02);
  }
}

TEST_CASE("spherical harmonics shading") {
  const Vec3 normals[] = {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0.6, -0.8, 0),
                          Vec3(0, -1, 0)};
  SUBCASE("constant term") {
    std::vector<Real> light(9, 0);
    light[0] = 2.5;
    for (const auto& n : normals) {
      CHECK(sh_irradiance(n, light) == doctest::Approx(2.5 * 0.282095));
    }
  }
  SUBCASE("zero light") {
    const std::vector<Real> light(9, 0);
    for (const auto& n : normals) CHECK(shade_sh(n, light) == 0);
  }
  SUBCASE("first order is odd") {
    std::vector<Real> light(9, 0);
    light[1] = 1;
    for (const auto& n : normals) {
      CHECK(sh_irradiance(-n, light) == doctest::Approx(-sh_irradiance(n, light)));
      CHECK(sh_irradiance(n, light) ==
            doctest::Approx(sh_basis(n)[1]));
      CHECK(shade_sh(n, light) >= 0);
    }
  }
}

TEST_CASE("unit-shaded red triangle") {
  RenderConfig cfg;
  cfg.height = cfg.width = 32;
  const Mesh tri = triangles({2, 2, 1, 30, 2, 1, 2, 30, 1}, {{0, 1, 2}});
  Tensor texture = Tensor::zeros({4, 4, 3});
  {
    auto t = texture.mutable_data();
    for (int i = 0; i < 16; ++i) t[3 * i] = 1;
  }
  const Tensor shading = Tensor::from({1}, {1});
  const Tensor rgba = soft_rasterize(screen_of(tri), shading, texture, tri, cfg);
  const auto px = rgba.data().subspan((8 * 32 + 8) * 4, 4);
  CHECK(px[0] == doctest::Approx(1).epsilon(1e-3));
  CHECK(px[1] == doctest::Approx(0));
  CHECK(px[2] == doctest::Approx(0));
  CHECK(px[3] == doctest::Approx(1).epsilon(1e-3));
}

TEST_CASE("front triangle wins when gamma is small") {
  RenderConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.gamma = Real(1e-4);
  // Face 0 red at depth 2, face 1 green at depth 3, same footprint.
  Mesh m = triangles({2, 2, 2, 30, 2, 2, 2, 30, 2, 2, 2, 3, 30, 2, 3, 2, 30, 3},
                     {{0, 1, 2}, {3, 4, 5}});
  // Texture: left half red, right half green; uvs select one half per face.
  Tensor texture = Tensor::zeros({2, 2, 3});
  {
    auto t = texture.mutable_data();
    t[0] = t[6] = 1;      // column 0 red
    t[4] = t[10] = 1;     // column 1 green
  }
  m.uv = {0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0};
  const Tensor shading = Tensor::from({2}, {1, 1});
  for (bool swap : {false, true}) {
    Mesh mm = m;
    if (swap) std::swap(mm.faces[0], mm.faces[1]);
    const Tensor rgba = soft_rasterize(screen_of(mm), shading, texture, mm, cfg);
    const auto px = rgba.data().subspan((8 * 32 + 8) * 4, 4);
    CHECK(px[0] == doctest::Approx(1).epsilon(1e-3));
    CHECK(px[1] < 1e-3);
  }
}

TEST_CASE("render outputs stay in range and background is black") {
  const Mesh mesh = icosphere(1);
  RenderConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<Real> u(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = sphere_attributes(mesh, 2.5);
    std::vector<Real> light(9);
    for (auto& l : light) l = 2 * u(rng);
    a.light = Tensor::from({9}, light);
    std::vector<Real> tex(8 * 8 * 3);
    for (auto& t : tex) t = (u(rng) + 1) / 2;
    a.texture = Tensor::from({8, 8, 3}, tex);
    std::vector<Real> v = mesh.vertices;
    for (auto& x : v) x *= 1 + Real(0.3) * u(rng);
    a.vertices = Tensor::from({42, 3}, v);
    a.camera = Tensor::from({4}, {u(rng), u(rng), 30 * u(rng), 2.5});
    const auto f = render(a, mesh, cfg);
    for (std::size_t p = 0; p < 64 * 64; ++p) {
      const Real m = f.mask.data()[p];
      REQUIRE(m >= 0);
      REQUIRE(m <= 1);
      for (int c = 0; c < 3; ++c) {
        const Real i = f.image.data()[3 * p + std::size_t(c)];
        REQUIRE(i >= 0);
        REQUIRE(i <= 1);
        if (m < 0.01) REQUIRE(i <= m + 1e-6);
      }
    }
  }
}

TEST_CASE("azimuth plus 180 equals the mesh turned half way") {
  Mesh mesh = icosphere(1);
  // Break the sphere's symmetry.
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    mesh.vertices[3 * i] *= Real(1.6);
    mesh.vertices[3 * i + 1] *= Real(0.7);
  }
  RenderConfig cfg;
  auto a = sphere_attributes(mesh, 3);
  a.camera = Tensor::from({4}, {-0.5, -0.8, 10, 3});  // azimuth + 180
  const auto f1 = render(a, mesh, cfg);
  Mesh turned = mesh;
  for (std::size_t i = 0; i < turned.num_vertices(); ++i) {
    turned.vertices[3 * i] = -mesh.vertices[3 * i];
    turned.vertices[3 * i + 2] = -mesh.vertices[3 * i + 2];
  }
  auto b = sphere_attributes(turned, 3);
  b.camera = Tensor::from({4}, {0.5, 0.8, 10, 3});
  const auto f2 = render(b, turned, cfg);
  Real diff = 0;
  for (std::size_t i = 0; i < f1.rgba.data().size(); ++i) {
    diff += std::abs(f1.rgba.data()[i] - f2.rgba.data()[i]);
  }
  CHECK(diff / Real(f1.rgba.data().size()) < 1e-3);
}

TEST_CASE("scaling the shape never decreases coverage") {
  const Mesh mesh = icosphere(1);
  RenderConfig cfg;
  Real previous = 0;
  for (Real s : {0.5, 0.7, 0.9, 1.0, 1.1}) {
    auto a = sphere_attributes(mesh, 3);
    std::vector<Real> v = mesh.vertices;
    for (auto& x : v) x *= s;
    a.vertices = Tensor::from({42, 3}, v);
    const Real area = total(render(a, mesh, cfg).mask);
    CHECK(area >= previous);
    previous = area;
  }
}

TEST_CASE("a vertex at the eye is rejected") {
  const Mesh mesh = icosphere(0);
  RenderConfig cfg;
  auto a = sphere_attributes(mesh, Real(0.5));
  CHECK_THROWS_AS(render(a, mesh, cfg), std::domain_error);
}
