#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/LU>

#include "softmesh/geometry.hpp"

using namespace softmesh;

namespace {

bool orthonormal_rotation(const Mat4& view) {
  const Eigen::Matrix<Real, 3, 3> r = view.topLeftCorner<3, 3>();
  const Eigen::Matrix<Real, 3, 3> rrt = r * r.transpose();
  return (rrt - Eigen::Matrix<Real, 3, 3>::Identity()).cwiseAbs().maxCoeff() <
             1e-5 &&
         std::abs(r.determinant() - 1) < 1e-5;
}

Tensor camera_tensor(Real ax, Real ay, Real e, Real d) {
  return Tensor::from({4}, {ax, ay, e, d});
}

Mesh rotated_about_y(Mesh m, Real degrees) {
  const Real t = degrees * std::numbers::pi_v<Real> / 180;
  const Real c = std::cos(t), s = std::sin(t);
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const Real x = m.vertices[3 * i], z = m.vertices[3 * i + 2];
    m.vertices[3 * i] = c * x + s * z;
    m.vertices[3 * i + 2] = -s * x + c * z;
  }
  return m;
}

}  // namespace

TEST_CASE("icosphere vertex and face counts") {
  const int expected_v[] = {12, 42, 162, 642};
  const int expected_f[] = {20, 80, 320, 1280};
  for (int level = 0; level <= 3; ++level) {
    const Mesh m = icosphere(level);
    CAPTURE(level);
    CHECK(m.num_vertices() == std::size_t(expected_v[level]));
    CHECK(m.num_faces() == std::size_t(expected_f[level]));
    const auto euler = std::int64_t(m.num_vertices()) -
                       std::int64_t(m.num_edges()) +
                       std::int64_t(m.num_faces());
    CHECK(euler == 2);
    CHECK_NOTHROW(m.validate());
    CHECK(m.uv.size() == 2 * m.num_vertices());
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
      CHECK(m.vertex(i).norm() == doctest::Approx(1).epsilon(1e-5));
    }
  }
  CHECK_THROWS(icosphere(4));
}

TEST_CASE("icosphere is deterministic") {
  const Mesh a = icosphere(2), b = icosphere(2);
  CHECK(a.vertices == b.vertices);
  CHECK(a.faces == b.faces);
  CHECK(a.uv == b.uv);
}

TEST_CASE("mesh validation rejects bad faces") {
  Mesh m = icosphere(0);
  m.faces[3] = {1, 1, 2};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.faces[3] = {1, 2, 99};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("camera convention anchors") {
  SUBCASE("azimuth 0") {
    const auto cam = camera_matrices({0, 1, 0, 2}, 64, 64);
    CHECK(cam.eye.x() == doctest::Approx(0));
    CHECK(cam.eye.y() == doctest::Approx(0));
    CHECK(cam.eye.z() == doctest::Approx(2));
    CHECK(CameraRaw{0, 1, 0, 2}.azimuth_deg() == doctest::Approx(0));
    CHECK(orthonormal_rotation(cam.view));
  }
  SUBCASE("azimuth 90") {
    const auto cam = camera_matrices({1, 0, 0, 2}, 64, 64);
    CHECK(cam.eye.x() == doctest::Approx(2));
    CHECK(cam.eye.z() == doctest::Approx(0).epsilon(1e-6));
    CHECK(CameraRaw{1, 0, 0, 2}.azimuth_deg() == doctest::Approx(90));
  }
  SUBCASE("azimuth wraps into [0, 360)") {
    CHECK(CameraRaw{-1, 0, 0, 2}.azimuth_deg() == doctest::Approx(270));
  }
  SUBCASE("pole") {
    for (Real ax : {0.0, 0.7, -1.0}) {
      const auto cam = camera_matrices({Real(ax), 1, 90, 3}, 64, 64);
      CHECK(cam.eye.x() == doctest::Approx(0).epsilon(1e-6));
      CHECK(cam.eye.y() == doctest::Approx(3));
      CHECK(cam.eye.z() == doctest::Approx(0).epsilon(1e-6));
      CHECK(orthonormal_rotation(cam.view));
    }
  }
}

TEST_CASE("eye position follows the spherical formula") {
  for (Real a : {10.0, 135.0, 250.0}) {
    for (Real e : {-40.0, 0.0, 25.0}) {
      const Real ar = a * std::numbers::pi_v<Real> / 180;
      const Real er = e * std::numbers::pi_v<Real> / 180;
      const auto cam = camera_matrices(
          {Real(std::sin(ar)), Real(std::cos(ar)), Real(e), 2.5}, 32, 32);
      CHECK(cam.eye.x() == doctest::Approx(2.5 * std::cos(er) * std::sin(ar)));
      CHECK(cam.eye.y() == doctest::Approx(2.5 * std::sin(er)));
      CHECK(cam.eye.z() == doctest::Approx(2.5 * std::cos(er) * std::cos(ar)));
      CHECK(orthonormal_rotation(cam.view));
      // The eye maps to the camera-space origin.
      const Eigen::Matrix<Real, 4, 1> h(cam.eye.x(), cam.eye.y(), cam.eye.z(), 1);
      CHECK((cam.view * h).head<3>().norm() < 1e-5);
    }
  }
}

TEST_CASE("azimuth vector scale does not change the view") {
  const auto a = camera_matrices({0.3, 0.4, 12, 2.2}, 64, 64);
  const auto b = camera_matrices({0.6, 0.8, 12, 2.2}, 64, 64);
  CHECK((a.view - b.view).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("origin projects to the image centre") {
  const auto cam = camera_matrices({0.4, 0.7, 15, 2.5}, 48, 64);
  const auto p = project_point(cam, Vec3::Zero());
  CHECK(p.x == doctest::Approx(32));
  CHECK(p.y == doctest::Approx(24));
  CHECK(p.depth == doctest::Approx(2.5));
}

TEST_CASE("moving along the camera right axis increases x") {
  const auto cam = camera_matrices({0.2, 1, -10, 3}, 64, 64);
  Real previous = -1e9;
  for (int k = -5; k <= 5; ++k) {
    const auto p = project_point(cam, cam.right * Real(0.1 * k));
    CHECK(p.x > previous);
    previous = p.x;
  }
  // Up is toward smaller pixel rows.
  CHECK(project_point(cam, cam.up * Real(0.3)).y < 32);
}

TEST_CASE("a vertex behind the near plane is rejected by index") {
  Tensor v = Tensor::from({3, 3}, {0, 0, 0, 0, 0, 0, 0, 0, 5});
  try {
    (void)project(v, camera_tensor(0, 1, 0, 2), 32, 32);
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}

TEST_CASE("tensor projection agrees with the point projection") {
  const Mesh m = icosphere(1);
  const Tensor screen =
      project(Tensor::from({42, 3}, m.vertices), camera_tensor(0.5, 0.5, 20, 2.7), 64, 48);
  const auto cam = camera_matrices({0.5, 0.5, 20, 2.7}, 64, 48);
  for (std::size_t i = 0; i < 42; ++i) {
    const auto p = project_point(cam, m.vertex(i));
    CHECK(screen.data()[3 * i] == doctest::Approx(p.x));
    CHECK(screen.data()[3 * i + 1] == doctest::Approx(p.y));
    CHECK(screen.data()[3 * i + 2] == doctest::Approx(p.depth));
  }
}

TEST_CASE("projection is equivariant with azimuth") {
  const Mesh m = icosphere(1);
  for (Real delta : {30.0, 75.0, 200.0}) {
    const Real base = 40;
    const Real a1 = (base + delta) * std::numbers::pi_v<Real> / 180;
    const Real a0 = base * std::numbers::pi_v<Real> / 180;
    const Tensor rotated_camera = project(
        Tensor::from({42, 3}, m.vertices),
        camera_tensor(std::sin(a1), std::cos(a1), 15, 2.5), 64, 64);
    const Mesh turned = rotated_about_y(m, -delta);
    const Tensor rotated_mesh =
        project(Tensor::from({42, 3}, turned.vertices),
                camera_tensor(std::sin(a0), std::cos(a0), 15, 2.5), 64, 64);
    for (std::size_t i = 0; i < 42 * 3; ++i) {
      if (i % 3 == 2) continue;
      CHECK(std::abs(rotated_camera.data()[i] - rotated_mesh.data()[i]) < 1e-4);
    }
  }
}

TEST_CASE("single front-facing triangle is fully visible") {
  Mesh m;
  m.vertices = {-0.5, -0.5, 0, 0.5, -0.5, 0, 0, 0.5, 0};
  m.faces = {{0, 1, 2}};
  m.uv = {0, 0, 1, 0, 0.5, 1};
  const auto vis = visibility(m, camera_matrices({0, 1, 0, 3}, 32, 32));
  CHECK(vis == std::vector<bool>{true, true, true});
}

TEST_CASE("sphere seen from far along +z") {
  const Mesh m = icosphere(2);
  const auto vis = visibility(m, camera_matrices({0, 1, 0, 100}, 128, 128));
  for (std::size_t i = 0; i < m.num_vertices(); ++i) {
    const Real z = m.vertices[3 * i + 2];
    CAPTURE(i);
    CAPTURE(z);
    if (z > 0) CHECK(vis[i]);
    if (z < -0.1) CHECK_FALSE(vis[i]);
  }
}

TEST_CASE("12-view azimuth sweep sees every non-polar vertex") {
  const Mesh m = icosphere(1);
  std::vector<bool> seen(m.num_vertices(), false);
  for (int k = 0; k < 12; ++k) {
    const Real a = Real(30 * k) * std::numbers::pi_v<Real> / 180;
    const auto vis =
        visibility(m, camera_matrices({std::sin(a), std::cos(a), 0, 2.5}, 64, 64));
    for (std::size_t i = 0; i < vis.size(); ++i) seen[i] = seen[i] || vis[i];
  }
  // From d = 2.5 at zero elevation the horizon sits at latitude acos(1/2.5).
  const Real horizon = std::sqrt(1 - Real(1) / Real(6.25));
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const Real y = m.vertices[3 * i + 1];
    CAPTURE(i);
    CAPTURE(y);
    if (std::abs(y) < horizon - Real(0.05)) CHECK(seen[i]);
    if (std::abs(y) > horizon + Real(0.05)) CHECK_FALSE(seen[i]);
  }
}

TEST_CASE("convex visibility matches incident front faces") {
  for (int level : {1, 2}) {
    const Mesh m = icosphere(level);
    const auto normals = face_normals(m);
    for (const CameraRaw c : {CameraRaw{0, 1, 0, 2.5}, CameraRaw{0.8, -0.3, 35, 3},
                              CameraRaw{-0.5, 0.5, -60, 4}}) {
      const auto cam = camera_matrices(c, 128, 128);
      const auto vis = visibility(m, cam);
      std::vector<bool> front(m.num_vertices(), false);
      for (std::size_t f = 0; f < m.num_faces(); ++f) {
        for (int k : m.faces[f]) {
          if (normals[f].dot(cam.eye - m.vertex(std::size_t(k))) > 0) {
            front[std::size_t(k)] = true;
          }
        }
      }
      std::size_t disagreements = 0;
      for (std::size_t i = 0; i < vis.size(); ++i) {
        if (vis[i] != front[i]) ++disagreements;
      }
      CAPTURE(level);
      CHECK(disagreements == 0);
    }
  }
}

TEST_CASE("face normals") {
  SUBCASE("CCW triangle in the z=0 plane") {
    Mesh m;
    m.vertices = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    m.faces = {{0, 1, 2}};
    const auto n = face_normals(m);
    CHECK(n[0].z() == doctest::Approx(1));
    CHECK(n[0].head<2>().norm() < 1e-6);
  }
  SUBCASE("scale invariance") {
    Mesh m = icosphere(1);
    const auto n1 = face_normals(m);
    for (auto& v : m.vertices) v *= 2;
    const auto n2 = face_normals(m);
    for (std::size_t f = 0; f < n1.size(); ++f) CHECK((n1[f] - n2[f]).norm() < 1e-6);
  }
  SUBCASE("outward on the icosphere") {
    const Mesh m = icosphere(2);
    const auto n = face_normals(m);
    for (std::size_t f = 0; f < n.size(); ++f) {
      const Vec3 c = (m.vertex(m.faces[f][0]) + m.vertex(m.faces[f][1]) +
                      m.vertex(m.faces[f][2])) / 3;
      CHECK(n[f].dot(c) > 0);
      CHECK(n[f].norm() == doctest::Approx(1));
    }
  }
  SUBCASE("zero-area face") {
    Mesh m;
    m.vertices = {0, 0, 0, 1, 0, 0, 2, 0, 0};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(face_normals(m), std::domain_error);
  }
  SUBCASE("tensor variant agrees") {
    const Mesh m = icosphere(1);
    const auto n = face_normals(m);
    const Tensor t = face_normals(Tensor::from({42, 3}, m.vertices), m.faces);
    for (std::size_t f = 0; f < n.size(); ++f) {
      for (int k = 0; k < 3; ++k) {
        CHECK(t.data()[3 * f + std::size_t(k)] == doctest::Approx(n[f][k]));
      }
    }
  }
}

TEST_CASE("OBJ round trip") {
  const Mesh m = icosphere(1);
  std::stringstream s;
  write_obj(s, m);
  const Mesh r = read_obj(s);
  REQUIRE(r.num_vertices() == m.num_vertices());
  CHECK(r.faces == m.faces);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(r.vertices[i] == doctest::Approx(m.vertices[i]));
  }
  for (std::size_t i = 0; i < m.uv.size(); ++i) {
    CHECK(r.uv[i] == doctest::Approx(m.uv[i]));
  }
}
