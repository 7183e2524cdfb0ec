#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmesh/geometry.hpp"
#include "softmesh/renderer.hpp"
#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct EncoderConfig {
  int image_height = 64;
  int image_width = 64;
  int texture_height = 32;
  int texture_width = 32;
  int num_vertices = 42;
  int hidden = 256;
  Real d_min = Real(1.5);
  // shape_delta = shape_bound * tanh(raw).
  Real shape_bound = Real(1.0);
};

struct Dense {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

// Shared convolutional backbone followed by four two-layer heads.
struct EncoderParams {
  EncoderConfig config;
  std::vector<Tensor> conv_weight;  // [3,3,Cin,Cout]
  std::vector<Tensor> conv_bias;
  Dense camera[2];
  Dense light[2];
  Dense shape[2];
  Dense texture[2];

  // Every trainable array once, in a fixed order.
  std::vector<NamedTensor> manifest() const;
  std::size_t parameter_count() const;
};

// Feature extractor and the vertex-index classifier shared by both models.
struct LandmarkClassifier {
  std::vector<Tensor> conv_weight;  // stride 1, padding 1
  std::vector<Tensor> conv_bias;
  Dense mlp[2];

  std::vector<NamedTensor> manifest() const;
  int num_classes() const;
};

inline constexpr int kLandmarkFeatures = 32;

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);
LandmarkClassifier init_landmark_classifier(int num_vertices,
                                            std::uint64_t seed);

class NonFiniteActivation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// x: [N,H,W,4] (RGB then mask). Returns batched attributes with a leading N
// axis on every component. Throws NonFiniteActivation naming the layer that
// produced a non-finite activation.
Attributes encode(const Tensor& x, const EncoderParams& params);

std::int64_t batch_size(const Attributes& a);
// Sample n of a batched bundle, without the leading axis.
Attributes attributes_at(const Attributes& a, std::int64_t n);

// Identity texture flow [Ht,Wt,2]: texel (r, c) samples the image at the
// same normalized position.
Tensor identity_flow(int texture_height, int texture_width);

// Unbatched attributes to renderer inputs. image: [H,W,3].
RealizedAttributes realize_attributes(const Attributes& a, const Tensor& image,
                                      const Mesh& template_mesh,
                                      Real d_min = Real(1.5));

// x_pair: [N,H,W,8] -> [N,H,W,32].
Tensor landmark_feature_map(const Tensor& x_pair,
                            const LandmarkClassifier& cls);

// features [H,W,C], landmarks [V,2] in pixels -> logits [V,V].
Tensor pool_and_classify(const Tensor& features, const Tensor& landmarks,
                         const LandmarkClassifier& cls);

SOFTMESH_END_NAMESPACE
