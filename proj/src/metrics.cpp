#include "softmesh/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <stdexcept>

SOFTMESH_BEGIN_NAMESPACE

Real iou_metric(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("iou_metric: size mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  std::int64_t inter = 0, uni = 0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const bool x = da[i] >= Real(0.5), y = db[i] >= Real(0.5);
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? Real(1) : Real(inter) / Real(uni);
}

Eigen::MatrixXd random_features(const std::vector<Tensor>& images,
                                std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("random_features: no images");
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  constexpr int kChannels[] = {3, 16, 32, 64, kFrechetFeatures};
  std::vector<Tensor> weights;
  for (int l = 0; l < 4; ++l) {
    const int cin = kChannels[l], cout = kChannels[l + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * cin)));
    std::vector<Real> w(static_cast<std::size_t>(9 * cin * cout));
    for (auto& x : w) x = static_cast<Real>(dist(rng));
    weights.push_back(Tensor::from({3, 3, cin, cout}, std::move(w)));
  }
  const Shape& shape = images.front().shape();
  Eigen::MatrixXd features(static_cast<Eigen::Index>(images.size()),
                           kFrechetFeatures);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != shape || shape.size() != 3 || shape[2] != 3) {
      throw ShapeError("random_features: images must share one [H,W,3] shape");
    }
    Tensor h = reshape(images[i], {1, shape[0], shape[1], 3});
    for (const auto& w : weights) h = relu(conv2d(h, w, 2, 1));
    const Tensor pooled =
        mean(reshape(h, {h.numel() / kFrechetFeatures, kFrechetFeatures}), 0);
    for (int k = 0; k < kFrechetFeatures; ++k) {
      features(static_cast<Eigen::Index>(i), k) = pooled.data()[static_cast<std::size_t>(k)];
    }
  }
  return features;
}

FeatureStats feature_stats(const std::vector<Tensor>& images,
                           std::uint64_t seed) {
  if (images.size() < 2) {
    throw std::invalid_argument("rf_frechet: each set needs at least 2 images");
  }
  FeatureStats s;
  s.extractor_seed = seed;
  const Eigen::MatrixXd f = random_features(images, seed);
  s.mean = f.colwise().mean().transpose();
  s.centered = f.rowwise() - s.mean.transpose();
  s.covariance = s.centered.transpose() * s.centered / double(f.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.extractor_seed != b.extractor_seed) {
    throw std::invalid_argument("rf_frechet: extractor seeds differ");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  // tr sqrt(Sa Sb) equals the nuclear norm of Xa Xb^T / sqrt((na-1)(nb-1)),
  // whose singular values are the square roots of the eigenvalues of Sa Sb.
  const Eigen::MatrixXd cross = a.centered * b.centered.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const double scale =
      std::sqrt(double(a.centered.rows() - 1) * double(b.centered.rows() - 1));
  const double tr_sqrt = svd.singularValues().sum() / scale;
  const double value =
      mean_term + a.covariance.trace() + b.covariance.trace() - 2 * tr_sqrt;
  return std::max(0.0, value);
}

double rf_frechet(const std::vector<Tensor>& set_a,
                  const std::vector<Tensor>& set_b, std::uint64_t seed) {
  return frechet_distance(feature_stats(set_a, seed),
                          feature_stats(set_b, seed));
}

SOFTMESH_END_NAMESPACE
