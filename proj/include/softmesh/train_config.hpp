#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "softmesh/losses.hpp"
#include "softmesh/renderer.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct TrainConfig {
  std::uint64_t seed = 7;
  int iterations = 2000;
  int batch_size = 4;
  Real learning_rate = Real(1e-4);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
  LossWeights weights;
  int image_height = 64;
  int image_width = 64;
  int texture_height = 32;
  int texture_width = 32;
  Real sigma = Real(1e-4);
  Real gamma = Real(1e-4);
  int icosphere_level = 1;
  int sh_dim = kShCoefficients;
  Real d_min = Real(1.5);
  Real shape_bound = Real(1.0);
  Real fov_deg = kDefaultFovDeg;
  int checkpoint_interval = 500;
  int metrics_interval = 10;
  std::string metrics_path = "metrics.csv";
  // Re-encode each model's synthesized view with the other model.
  bool cycle_cross_model = false;

  RenderConfig render_config() const;
  // Throws ConfigError on values outside their documented domains.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `key = value` lines, `#` comments. Missing keys keep their defaults.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);
// Parses and applies a single assignment, as used by command-line overrides.
void set_config_value(TrainConfig& cfg, const std::string& key,
                      const std::string& value);

// Canonical text form; parse_config(print_config(c)) == c.
std::string print_config(const TrainConfig& cfg);
// FNV-1a over the canonical text, as 16 hex digits.
std::string config_hash(const TrainConfig& cfg);

SOFTMESH_END_NAMESPACE
