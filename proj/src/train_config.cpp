#include "softmesh/train_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

SOFTMESH_BEGIN_NAMESPACE

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

struct Field {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field number_field(const char* name, T TrainConfig::*member) {
  return {name,
          [member](const TrainConfig& c) { return format_number(c.*member); },
          [name, member](TrainConfig& c, const std::string& v) {
            c.*member = parse_number<T>(name, v);
          }};
}

Field weight_field(const char* name, Real LossWeights::*member) {
  return {name,
          [member](const TrainConfig& c) {
            return format_number(c.weights.*member);
          },
          [name, member](TrainConfig& c, const std::string& v) {
            c.weights.*member = parse_number<Real>(name, v);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      number_field("seed", &TrainConfig::seed),
      number_field("iterations", &TrainConfig::iterations),
      number_field("batch_size", &TrainConfig::batch_size),
      number_field("learning_rate", &TrainConfig::learning_rate),
      number_field("beta1", &TrainConfig::beta1),
      number_field("beta2", &TrainConfig::beta2),
      number_field("epsilon", &TrainConfig::epsilon),
      weight_field("lambda_img", &LossWeights::img),
      weight_field("lambda_sil", &LossWeights::sil),
      weight_field("lambda_2d", &LossWeights::l2d),
      weight_field("lambda_3d", &LossWeights::l3d),
      weight_field("lambda_lc", &LossWeights::lc),
      number_field("image_height", &TrainConfig::image_height),
      number_field("image_width", &TrainConfig::image_width),
      number_field("texture_height", &TrainConfig::texture_height),
      number_field("texture_width", &TrainConfig::texture_width),
      number_field("sigma", &TrainConfig::sigma),
      number_field("gamma", &TrainConfig::gamma),
      number_field("icosphere_level", &TrainConfig::icosphere_level),
      number_field("sh_dim", &TrainConfig::sh_dim),
      number_field("d_min", &TrainConfig::d_min),
      number_field("shape_bound", &TrainConfig::shape_bound),
      number_field("fov_deg", &TrainConfig::fov_deg),
      number_field("checkpoint_interval", &TrainConfig::checkpoint_interval),
      number_field("metrics_interval", &TrainConfig::metrics_interval),
      {"metrics_path", [](const TrainConfig& c) { return c.metrics_path; },
       [](TrainConfig& c, const std::string& v) { c.metrics_path = v; }},
      {"cycle_cross_model",
       [](const TrainConfig& c) {
         return std::string(c.cycle_cross_model ? "true" : "false");
       },
       [](TrainConfig& c, const std::string& v) {
         if (v == "true" || v == "1") {
           c.cycle_cross_model = true;
         } else if (v == "false" || v == "0") {
           c.cycle_cross_model = false;
         } else {
           throw ConfigError("invalid value '" + v + "' for cycle_cross_model");
         }
       }},
  };
  return table;
}

}  // namespace

RenderConfig TrainConfig::render_config() const {
  RenderConfig r;
  r.height = image_height;
  r.width = image_width;
  r.sigma = sigma;
  r.gamma = gamma;
  r.fov_deg = fov_deg;
  return r;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(iterations >= 0, "iterations must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0 && std::isfinite(learning_rate),
          "learning_rate must be > 0");
  require(beta1 >= 0 && beta1 < 1, "beta1 must be in [0,1)");
  require(beta2 >= 0 && beta2 < 1, "beta2 must be in [0,1)");
  require(epsilon > 0, "epsilon must be > 0");
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(image_height > 0 && image_height % 16 == 0 && image_width > 0 &&
              image_width % 16 == 0,
          "image size must be a positive multiple of 16");
  require(texture_height >= 2 && texture_width >= 2,
          "texture size must be at least 2x2");
  require(sigma > 0 && gamma > 0, "sigma and gamma must be > 0");
  require(icosphere_level >= 0 && icosphere_level <= 3,
          "icosphere_level must be in [0,3]");
  require(sh_dim == kShCoefficients, "sh_dim must be 9");
  require(d_min > 0, "d_min must be > 0");
  require(shape_bound > 0, "shape_bound must be > 0");
  require(fov_deg > 0 && fov_deg < 180, "fov_deg must be in (0,180)");
  require(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  require(metrics_interval >= 1, "metrics_interval must be >= 1");
}

void set_config_value(TrainConfig& cfg, const std::string& key,
                      const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string::npos) {
        throw ConfigError("expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) {
        throw ConfigError("expected 'key = value'");
      }
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config " + path);
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string print_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.name << " = " << f.get(cfg) << '\n';
  return os.str();
}

std::string config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : print_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

SOFTMESH_END_NAMESPACE
