#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

using Face = std::array<std::int32_t, 3>;
using Vec3 = Eigen::Matrix<Real, 3, 1>;
using Mat4 = Eigen::Matrix<Real, 4, 4>;

// Vertex field of view used when none is given. Wide enough that the unit
// template sphere at the initial camera distance leaves visible silhouette
// edges inside the frame.
inline constexpr Real kDefaultFovDeg = 60;

// Triangle mesh with per-vertex UVs. Faces wind counter-clockwise when seen
// from outside, so the right-hand normal points outward.
struct Mesh {
  std::vector<Real> vertices;  // V x 3, row major
  std::vector<Face> faces;     // F x 3
  std::vector<Real> uv;        // V x 2 in [0,1]^2

  std::size_t num_vertices() const { return vertices.size() / 3; }
  std::size_t num_faces() const { return faces.size(); }
  Vec3 vertex(std::size_t i) const {
    return {vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]};
  }
  std::size_t num_edges() const;

  // Throws std::invalid_argument on out-of-range or repeated indices.
  void validate() const;
};

// Unit icosphere; subdivisions in [0, 3]. Vertex order is deterministic.
Mesh icosphere(int subdivisions);

// Camera as consumed by the projection: azimuth encoded as a 2-vector,
// elevation in degrees, distance in object units.
struct CameraRaw {
  Real a_x = 0;
  Real a_y = 1;
  Real elevation_deg = 0;
  Real distance = 2;

  // atan2(a_x, a_y) wrapped to [0, 360).
  Real azimuth_deg() const;
};

struct CameraMatrices {
  Mat4 view = Mat4::Identity();  // world -> camera, camera looks down -Z
  Mat4 proj = Mat4::Identity();  // OpenGL-style perspective
  int height = 0;
  int width = 0;
  Real fov_deg = kDefaultFovDeg;
  Real near = 0;
  Vec3 eye = Vec3::Zero();
  Vec3 right = Vec3::UnitX();
  Vec3 up = Vec3::UnitY();
  Vec3 back = Vec3::UnitZ();  // unit vector from origin toward the eye
};

// Eye at d*(cos e sin a, sin e, cos e cos a) looking at the origin with +Y
// up. Exactly at |e| = 90 the up vector falls back to +Z.
CameraMatrices camera_matrices(const CameraRaw& camera, int height, int width,
                               Real fov_deg = kDefaultFovDeg,
                               Real near_fraction = Real(0.01));

struct ProjectedPoint {
  Real x = 0;  // pixels, 0 at the left edge
  Real y = 0;  // pixels, 0 at the top edge
  Real depth = 0;
};

// Throws std::domain_error when the point is not beyond the near plane.
ProjectedPoint project_point(const CameraMatrices& cam, const Vec3& p);

// Differentiable projection of vertices [V,3] with camera [4] =
// (a_x, a_y, elevation_deg, distance). Returns [V,3] = (x_px, y_px, depth).
// Throws std::domain_error naming the first vertex not beyond the near plane.
Tensor project(const Tensor& vertices, const Tensor& camera, int height,
               int width, Real fov_deg = kDefaultFovDeg,
               Real near_fraction = Real(0.01));

// Hard z-buffer visibility per vertex.
std::vector<bool> visibility(const Mesh& mesh, const CameraMatrices& cam);

// Unit outward normals per face; throws std::domain_error naming the first
// zero-area face.
std::vector<Vec3> face_normals(const Mesh& mesh);
// Differentiable variant over vertices [V,3]; returns [F,3].
Tensor face_normals(const Tensor& vertices, std::span<const Face> faces);

// Wavefront OBJ with `v`, `vt` and `f v/vt` records.
void write_obj(std::ostream& out, const Mesh& mesh);
void write_obj(const std::string& path, const Mesh& mesh);
Mesh read_obj(std::istream& in);
Mesh read_obj(const std::string& path);

SOFTMESH_END_NAMESPACE
