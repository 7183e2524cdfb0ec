#pragma once

#include <array>

#include "softmesh/geometry.hpp"
#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

// Order-2 real spherical harmonics.
inline constexpr int kShCoefficients = 9;
inline constexpr Real kShY00 = Real(0.282095);

struct RenderConfig {
  int height = 64;
  int width = 64;
  // Soft coverage sharpness, in squared normalized-device units.
  Real sigma = Real(1e-4);
  // Depth softmax temperature, in object units.
  Real gamma = Real(1e-4);
  Real fov_deg = kDefaultFovDeg;
  Real near_fraction = Real(0.01);
  std::array<Real, 3> background{0, 0, 0};
};

// Raw per-image description predicted by an encoder. All components live in
// encoder-output space so convex combinations are taken componentwise.
//   camera        [4]        (a_x, a_y, elevation_raw, distance_raw)
//   light         [9]        SH coefficients
//   shape_delta   [V,3]      offsets from the template vertices
//   texture_flow  [Ht,Wt,2]  sampling coordinates into a source image
struct Attributes {
  Tensor camera;
  Tensor light;
  Tensor shape_delta;
  Tensor texture_flow;
};

// What the renderer consumes.
//   camera    [4]        (a_x, a_y, elevation_deg, distance)
//   light     [9]
//   vertices  [V,3]
//   texture   [Ht,Wt,3]  UV map; u runs along columns, v along rows
struct RealizedAttributes {
  Tensor camera;
  Tensor light;
  Tensor vertices;
  Tensor texture;
};

struct RenderedFrame {
  Tensor image;  // [H,W,3]
  Tensor mask;   // [H,W,1]
  Tensor rgba;   // [H,W,4], image and mask concatenated
  Tensor screen; // [V,3] projected vertices (x_px, y_px, depth)
};

std::array<Real, kShCoefficients> sh_basis(const Vec3& normal);
// Irradiance before clamping; useful for parity checks.
Real sh_irradiance(const Vec3& normal, std::span<const Real> light);
// Clamped to [0, inf).
Real shade_sh(const Vec3& normal, std::span<const Real> light);

// Differentiable flat shading: normals [F,3], light [9] -> [F].
Tensor shade_faces(const Tensor& normals, const Tensor& light);

// Soft rasterization of projected vertices screen [V,3] = (x_px, y_px,
// depth). Produces [H,W,4]: RGB composited over the background by the soft
// silhouette, then the silhouette itself. Coverage of face f at pixel p is
// sigmoid(-D(p,f)/sigma) with D the signed squared distance to the projected
// triangle in normalized device units, negative inside. Colors are blended
// by a softmax over -depth/gamma weighted by coverage.
Tensor soft_rasterize(const Tensor& screen, const Tensor& face_shading,
                      const Tensor& texture, const Mesh& topology,
                      const RenderConfig& cfg);

// Silhouette-only path: M(p) = 1 - prod_f (1 - coverage). Returns [H,W].
Tensor soft_silhouette(const Tensor& screen, std::span<const Face> faces,
                       const RenderConfig& cfg);

// Hard silhouette [H,W] in {0,1}: pixel centres inside any projected face.
std::vector<Real> hard_silhouette(std::span<const Real> screen,
                                  std::span<const Face> faces, int height,
                                  int width);

// Differentiable renderer: no trainable state. Throws std::domain_error when
// a vertex is not beyond the near plane.
RenderedFrame render(const RealizedAttributes& attributes,
                     const Mesh& topology, const RenderConfig& cfg);

SOFTMESH_END_NAMESPACE
