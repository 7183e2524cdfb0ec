#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

// Labeled float arrays describing how a synthetic sample was produced.
struct GroundTruth {
  std::vector<Real> camera;       // raw (a_x, a_y, elevation_raw, distance_raw)
  std::vector<Real> light;        // 9
  std::vector<Real> shape_delta;  // V x 3
  std::vector<Real> texture_flow; // Ht x Wt x 2
  std::vector<Real> texture;      // Ht x Wt x 3, the generating UV map
  int texture_height = 0;
  int texture_width = 0;
};

struct Sample {
  std::int64_t index = 0;
  Tensor image;  // [H,W,3] in [0,1]
  Tensor mask;   // [H,W,1] in {0,1}
  std::optional<GroundTruth> truth;
};

// Reads NNNN_img.png / NNNN_mask.png pairs sorted by index; masks are
// thresholded at 128. NNNN_truth.txt sidecars are attached when present.
// Throws std::runtime_error naming the index of an incomplete pair.
std::vector<Sample> load_dataset(const std::string& directory);

// Single pair: path to either file of a pair, or the shared NNNN prefix.
Sample load_sample(const std::string& path);

void save_sample(const std::string& directory, const Sample& sample);

void write_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_truth(const std::string& path);

// [N,H,W,4] (image then mask) for the given sample positions.
Tensor stack_inputs(const std::vector<Sample>& samples,
                    std::span<const std::size_t> positions);
// [N,H,W,3] images only.
Tensor stack_images(const std::vector<Sample>& samples,
                    std::span<const std::size_t> positions);

std::string sample_prefix(std::int64_t index);

SOFTMESH_END_NAMESPACE
