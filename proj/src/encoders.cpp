#include "softmesh/encoders.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

SOFTMESH_BEGIN_NAMESPACE

namespace {

constexpr int kBackboneChannels[] = {16, 32, 64, 128};
constexpr int kLandmarkChannels[] = {32, 32, kLandmarkFeatures};
constexpr int kLandmarkHidden = 64;
constexpr Real kOutputScale = Real(0.01);

std::vector<Real> he_normal(std::mt19937_64& rng, std::int64_t count,
                            std::int64_t fan_in, Real scale = 1) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  std::vector<Real> v(static_cast<std::size_t>(count));
  for (auto& x : v) x = static_cast<Real>(dist(rng)) * scale;
  return v;
}

Tensor conv_weight(std::mt19937_64& rng, int cin, int cout,
                   const std::string& name) {
  return Tensor::parameter({3, 3, cin, cout},
                           he_normal(rng, 9 * cin * cout, 9 * cin), name);
}

Dense dense(std::mt19937_64& rng, int in, int out, const std::string& name,
            Real scale = 1, std::vector<Real> bias = {}) {
  if (bias.empty()) bias.assign(static_cast<std::size_t>(out), Real(0));
  return {Tensor::parameter({in, out},
                            he_normal(rng, std::int64_t(in) * out, in, scale),
                            name + ".weight"),
          Tensor::parameter({out}, std::move(bias), name + ".bias")};
}

Tensor apply_dense(const Tensor& x, const Dense& d) {
  return matmul(x, d.weight) + d.bias;
}

void guard_finite(const Tensor& t, const char* layer) {
  for (Real v : t.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteActivation(std::string("encode: non-finite activation in ") +
                               layer);
    }
  }
}

void push_dense(std::vector<NamedTensor>& out, const std::string& prefix,
                const Dense& d) {
  out.push_back({prefix + ".weight", d.weight});
  out.push_back({prefix + ".bias", d.bias});
}

Tensor head(const Tensor& features, const Dense (&layers)[2],
            const char* name) {
  Tensor h = relu(apply_dense(features, layers[0]));
  guard_finite(h, name);
  Tensor out = apply_dense(h, layers[1]);
  guard_finite(out, name);
  return out;
}

}  // namespace

std::vector<NamedTensor> EncoderParams::manifest() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < conv_weight.size(); ++i) {
    out.push_back({"backbone.conv" + std::to_string(i) + ".weight",
                   conv_weight[i]});
    out.push_back({"backbone.conv" + std::to_string(i) + ".bias",
                   conv_bias[i]});
  }
  for (int i = 0; i < 2; ++i) {
    const std::string layer = std::to_string(i);
    push_dense(out, "camera.fc" + layer, camera[i]);
    push_dense(out, "light.fc" + layer, light[i]);
    push_dense(out, "shape.fc" + layer, shape[i]);
    push_dense(out, "texture.fc" + layer, texture[i]);
  }
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : manifest()) n += static_cast<std::size_t>(e.tensor.numel());
  return n;
}

std::vector<NamedTensor> LandmarkClassifier::manifest() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < conv_weight.size(); ++i) {
    out.push_back({"landmark.conv" + std::to_string(i) + ".weight",
                   conv_weight[i]});
    out.push_back({"landmark.conv" + std::to_string(i) + ".bias",
                   conv_bias[i]});
  }
  push_dense(out, "landmark.fc0", mlp[0]);
  push_dense(out, "landmark.fc1", mlp[1]);
  return out;
}

int LandmarkClassifier::num_classes() const {
  return static_cast<int>(mlp[1].bias.numel());
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  if (config.image_height % 16 != 0 || config.image_width % 16 != 0) {
    throw std::invalid_argument("encoder: image size must be a multiple of 16");
  }
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.config = config;
  int cin = 4;
  for (int i = 0; i < 4; ++i) {
    const int cout = kBackboneChannels[i];
    p.conv_weight.push_back(
        conv_weight(rng, cin, cout, "backbone.conv" + std::to_string(i) + ".weight"));
    p.conv_bias.push_back(Tensor::parameter(
        {cout}, std::vector<Real>(static_cast<std::size_t>(cout), Real(0)),
        "backbone.conv" + std::to_string(i) + ".bias"));
    cin = cout;
  }
  const int features =
      (config.image_height / 16) * (config.image_width / 16) * cin;
  const int hidden = config.hidden;

  p.camera[0] = dense(rng, features, hidden, "camera.fc0");
  p.camera[1] = dense(rng, hidden, 4, "camera.fc1", kOutputScale, {0, 1, 0, 0});
  p.light[0] = dense(rng, features, hidden, "light.fc0");
  std::vector<Real> light_bias(kShCoefficients, Real(0));
  light_bias[0] = Real(1) / kShY00;
  p.light[1] = dense(rng, hidden, kShCoefficients, "light.fc1", kOutputScale,
                     light_bias);
  p.shape[0] = dense(rng, features, hidden, "shape.fc0");
  p.shape[1] =
      dense(rng, hidden, 3 * config.num_vertices, "shape.fc1", kOutputScale);
  p.texture[0] = dense(rng, features, hidden, "texture.fc0");
  p.texture[1] = dense(rng, hidden,
                       2 * config.texture_height * config.texture_width,
                       "texture.fc1", kOutputScale);
  return p;
}

LandmarkClassifier init_landmark_classifier(int num_vertices,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LandmarkClassifier c;
  int cin = 8;
  for (int i = 0; i < 3; ++i) {
    const int cout = kLandmarkChannels[i];
    c.conv_weight.push_back(
        conv_weight(rng, cin, cout, "landmark.conv" + std::to_string(i) + ".weight"));
    c.conv_bias.push_back(Tensor::parameter(
        {cout}, std::vector<Real>(static_cast<std::size_t>(cout), Real(0)),
        "landmark.conv" + std::to_string(i) + ".bias"));
    cin = cout;
  }
  c.mlp[0] = dense(rng, kLandmarkFeatures, kLandmarkHidden, "landmark.fc0");
  c.mlp[1] = dense(rng, kLandmarkHidden, num_vertices, "landmark.fc1");
  return c;
}

Attributes encode(const Tensor& x, const EncoderParams& p) {
  const auto& cfg = p.config;
  if (x.rank() != 4 || x.shape()[1] != cfg.image_height ||
      x.shape()[2] != cfg.image_width || x.shape()[3] != 4) {
    throw ShapeError("encode: expected [N," + std::to_string(cfg.image_height) +
                     "," + std::to_string(cfg.image_width) + ",4], got " +
                     shape_string(x.shape()));
  }
  static const char* kLayerNames[] = {"backbone.conv0", "backbone.conv1",
                                      "backbone.conv2", "backbone.conv3"};
  const auto n = x.shape()[0];
  Tensor h = x;
  for (std::size_t i = 0; i < p.conv_weight.size(); ++i) {
    h = relu(conv2d(h, p.conv_weight[i], 2, 1) + p.conv_bias[i]);
    guard_finite(h, kLayerNames[i]);
  }
  const Tensor features = reshape(h, {n, h.numel() / n});

  Attributes a;
  a.camera = head(features, p.camera, "camera head");
  a.light = head(features, p.light, "light head");
  a.shape_delta =
      reshape(tanh(head(features, p.shape, "shape head")) * cfg.shape_bound,
              {n, cfg.num_vertices, 3});
  const Tensor flow = reshape(head(features, p.texture, "texture head"),
                              {n, cfg.texture_height, cfg.texture_width, 2});
  a.texture_flow =
      flow + identity_flow(cfg.texture_height, cfg.texture_width);
  return a;
}

std::int64_t batch_size(const Attributes& a) { return a.camera.shape()[0]; }

Attributes attributes_at(const Attributes& a, std::int64_t n) {
  auto pick = [n](const Tensor& t) {
    Shape rest(t.shape().begin() + 1, t.shape().end());
    return reshape(slice(t, 0, n, n + 1), std::move(rest));
  };
  return {pick(a.camera), pick(a.light), pick(a.shape_delta),
          pick(a.texture_flow)};
}

Tensor identity_flow(int th, int tw) {
  std::vector<Real> v(static_cast<std::size_t>(th * tw * 2));
  for (int r = 0; r < th; ++r) {
    for (int c = 0; c < tw; ++c) {
      const auto o = static_cast<std::size_t>((r * tw + c) * 2);
      v[o] = tw > 1 ? Real(-1) + Real(2) * Real(c) / Real(tw - 1) : Real(0);
      v[o + 1] = th > 1 ? Real(-1) + Real(2) * Real(r) / Real(th - 1) : Real(0);
    }
  }
  return Tensor::from({th, tw, 2}, std::move(v));
}

RealizedAttributes realize_attributes(const Attributes& a, const Tensor& image,
                                      const Mesh& template_mesh, Real d_min) {
  const auto nv = static_cast<std::int64_t>(template_mesh.num_vertices());
  if (a.camera.numel() != 4 || a.light.numel() != kShCoefficients ||
      a.shape_delta.rank() != 2 || a.shape_delta.shape()[0] != nv ||
      a.texture_flow.rank() != 3 || a.texture_flow.shape()[2] != 2) {
    throw ShapeError("realize_attributes: unbatched attributes expected");
  }
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw ShapeError("realize_attributes: image must be [H,W,3], got " +
                     shape_string(image.shape()));
  }
  const Tensor cam = reshape(a.camera, {4});
  RealizedAttributes r;
  r.camera = concat({slice(cam, 0, 0, 2), tanh(slice(cam, 0, 2, 3)) * Real(90),
                     softplus(slice(cam, 0, 3, 4)) + d_min},
                    0);
  r.light = reshape(a.light, {kShCoefficients});
  r.vertices = a.shape_delta + Tensor::from({nv, 3}, template_mesh.vertices);
  const auto th = a.texture_flow.shape()[0], tw = a.texture_flow.shape()[1];
  r.texture = reshape(grid_sample(image, reshape(a.texture_flow, {th * tw, 2})),
                      {th, tw, 3});
  return r;
}

Tensor landmark_feature_map(const Tensor& x_pair,
                            const LandmarkClassifier& cls) {
  if (x_pair.rank() != 4 || x_pair.shape()[3] != 8) {
    throw ShapeError("landmark_feature_map: expected [N,H,W,8], got " +
                     shape_string(x_pair.shape()));
  }
  Tensor h = x_pair;
  for (std::size_t i = 0; i < cls.conv_weight.size(); ++i) {
    h = conv2d(h, cls.conv_weight[i], 1, 1) + cls.conv_bias[i];
    if (i + 1 < cls.conv_weight.size()) h = relu(h);
  }
  return h;
}

Tensor pool_and_classify(const Tensor& features, const Tensor& landmarks,
                         const LandmarkClassifier& cls) {
  if (features.rank() != 3 || landmarks.rank() != 2 ||
      landmarks.shape()[1] != 2) {
    throw ShapeError("pool_and_classify: expected features [H,W,C] and "
                     "landmarks [V,2], got " +
                     shape_string(features.shape()) + " and " +
                     shape_string(landmarks.shape()));
  }
  const auto h = features.shape()[0], w = features.shape()[1];
  // Pixel centre j sits at j + 0.5; grid -1 and +1 are the outer centres.
  const std::vector<Real> scale{Real(2) / Real(std::max<std::int64_t>(w - 1, 1)),
                                Real(2) / Real(std::max<std::int64_t>(h - 1, 1))};
  const std::vector<Real> offset{-Real(0.5) * scale[0] - 1,
                                 -Real(0.5) * scale[1] - 1};
  const Tensor coords = landmarks * Tensor::from({2}, scale) +
                        Tensor::from({2}, offset);
  const Tensor f = grid_sample(features, coords);
  return apply_dense(relu(apply_dense(f, cls.mlp[0])), cls.mlp[1]);
}

SOFTMESH_END_NAMESPACE
