#pragma once

#include <cstdint>
#include <vector>

#include "softmesh/dataset.hpp"
#include "softmesh/geometry.hpp"
#include "softmesh/renderer.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct SyntheticConfig {
  int height = 64;
  int width = 64;
  int texture_height = 32;
  int texture_width = 32;
  int icosphere_level = 1;
  Real fov_deg = kDefaultFovDeg;
  Real d_min = Real(1.5);
  // Coverage sharpness used for the color image; the mask is hard.
  Real sigma = Real(1e-5);
  Real gamma = Real(1e-4);
};

// Template sphere deformed into a tapered shaft along +Y.
Mesh tool_mesh(const Mesh& sphere);

// Length along Y over the largest cross-section diameter.
Real aspect_ratio(const Mesh& mesh);

// Sample `index` of the stream identified by seed; independent of how many
// other samples are drawn.
Sample synthetic_sample(std::uint64_t seed, std::int64_t index,
                        const SyntheticConfig& cfg = {});

// Samples first_index .. first_index + n - 1.
std::vector<Sample> gen_synthetic(int n, std::uint64_t seed,
                                  const SyntheticConfig& cfg = {},
                                  std::int64_t first_index = 0);

// Inverses of the camera squashing used by the encoders.
Real elevation_to_raw(Real elevation_deg);
Real distance_to_raw(Real distance, Real d_min);

SOFTMESH_END_NAMESPACE
