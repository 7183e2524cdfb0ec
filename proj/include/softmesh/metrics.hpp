#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

// |A ∩ B| / |A ∪ B| after thresholding both at 0.5. Two empty masks give 1.
Real iou_metric(const Tensor& a, const Tensor& b);

inline constexpr std::uint64_t kFrechetExtractorSeed = 20230807;
inline constexpr int kFrechetFeatures = 64;

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd centered;  // rows are centred feature vectors
  std::uint64_t extractor_seed = kFrechetExtractorSeed;
};

// Seeded random four-layer strided convolution network with global average
// pooling; images [H,W,3] -> [64] each, returned as rows.
Eigen::MatrixXd random_features(const std::vector<Tensor>& images,
                                std::uint64_t seed = kFrechetExtractorSeed);

FeatureStats feature_stats(const std::vector<Tensor>& images,
                           std::uint64_t seed = kFrechetExtractorSeed);

// Fréchet distance between Gaussian fits of the two feature sets. Each set
// needs at least two images of the same size.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);
double rf_frechet(const std::vector<Tensor>& set_a,
                  const std::vector<Tensor>& set_b,
                  std::uint64_t seed = kFrechetExtractorSeed);

SOFTMESH_END_NAMESPACE
