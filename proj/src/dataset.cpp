#include "softmesh/dataset.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "softmesh/image_io.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace fs = std::filesystem;

namespace {

void write_array(std::ostream& out, const char* name,
                 const std::vector<Real>& values) {
  out << name << ' ' << values.size();
  char buf[64];
  for (Real v : values) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
  }
  out << '\n';
}

Tensor binarize(const Tensor& mask) {
  std::vector<Real> v(mask.data().begin(), mask.data().end());
  // 128 / 255 after scaling.
  for (auto& x : v) x = x * Real(255) >= Real(127.5) ? Real(1) : Real(0);
  return Tensor::from(mask.shape(), std::move(v));
}

Sample read_pair(const fs::path& img, const fs::path& mask,
                 std::int64_t index) {
  Sample s;
  s.index = index;
  s.image = read_png(img.string(), 3);
  s.mask = binarize(read_png(mask.string(), 1));
  if (s.image.shape()[0] != s.mask.shape()[0] ||
      s.image.shape()[1] != s.mask.shape()[1]) {
    throw std::runtime_error("sample " + sample_prefix(index) +
                             ": image " + shape_string(s.image.shape()) +
                             " and mask " + shape_string(s.mask.shape()) +
                             " sizes differ");
  }
  return s;
}

}  // namespace

std::string sample_prefix(std::int64_t index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

void write_truth(const std::string& path, const GroundTruth& t) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path);
  out << "texture_size " << t.texture_height << ' ' << t.texture_width << '\n';
  write_array(out, "camera", t.camera);
  write_array(out, "light", t.light);
  write_array(out, "shape_delta", t.shape_delta);
  write_array(out, "texture_flow", t.texture_flow);
  write_array(out, "texture", t.texture);
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

GroundTruth read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  GroundTruth t;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    if (name == "texture_size") {
      ls >> t.texture_height >> t.texture_width;
      continue;
    }
    std::size_t count = 0;
    ls >> count;
    std::vector<Real> values;
    values.reserve(count);
    std::string tok;
    while (ls >> tok) {
      Real v{};
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw std::runtime_error(path + ": bad value in " + name);
      }
      values.push_back(v);
    }
    if (values.size() != count) {
      throw std::runtime_error(path + ": " + name + " count mismatch");
    }
    if (name == "camera") t.camera = std::move(values);
    else if (name == "light") t.light = std::move(values);
    else if (name == "shape_delta") t.shape_delta = std::move(values);
    else if (name == "texture_flow") t.texture_flow = std::move(values);
    else if (name == "texture") t.texture = std::move(values);
    else throw std::runtime_error(path + ": unknown array " + name);
  }
  return t;
}

std::vector<Sample> load_dataset(const std::string& directory) {
  if (!fs::is_directory(directory)) {
    throw std::ios_base::failure("not a directory: " + directory);
  }
  static const std::regex pattern(R"((\d{4})_(img|mask)\.png)");
  std::map<std::int64_t, std::pair<fs::path, fs::path>> pairs;
  for (const auto& entry : fs::directory_iterator(directory)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    auto& slot = pairs[std::stoll(m[1].str())];
    (m[2] == "img" ? slot.first : slot.second) = entry.path();
  }
  std::vector<Sample> samples;
  for (const auto& [index, paths] : pairs) {
    if (paths.first.empty() || paths.second.empty()) {
      throw std::runtime_error("sample " + sample_prefix(index) + ": missing " +
                               (paths.first.empty() ? "image" : "mask") +
                               " file");
    }
    Sample s = read_pair(paths.first, paths.second, index);
    const fs::path truth =
        fs::path(directory) / (sample_prefix(index) + "_truth.txt");
    if (fs::exists(truth)) s.truth = read_truth(truth.string());
    samples.push_back(std::move(s));
  }
  if (!samples.empty()) {
    const auto& first = samples.front().image.shape();
    for (const auto& s : samples) {
      if (s.image.shape() != first) {
        throw std::runtime_error("sample " + sample_prefix(s.index) +
                                 ": size differs from the rest of the set");
      }
    }
  }
  return samples;
}

Sample load_sample(const std::string& path) {
  static const std::regex pattern(R"((.*?)(\d{4})(_img\.png|_mask\.png)?)");
  std::smatch m;
  if (!std::regex_match(path, m, pattern)) {
    throw std::runtime_error("cannot identify sample pair from " + path);
  }
  const std::string prefix = m[1].str() + m[2].str();
  return read_pair(prefix + "_img.png", prefix + "_mask.png",
                   std::stoll(m[2].str()));
}

void save_sample(const std::string& directory, const Sample& s) {
  fs::create_directories(directory);
  const fs::path base = fs::path(directory) / sample_prefix(s.index);
  write_png(base.string() + "_img.png", s.image);
  write_png(base.string() + "_mask.png", s.mask);
  if (s.truth) write_truth(base.string() + "_truth.txt", *s.truth);
}

namespace {

Tensor stack(const std::vector<Sample>& samples,
             std::span<const std::size_t> positions, bool with_mask) {
  if (positions.empty()) throw ShapeError("stack: no samples");
  const auto& ref = samples.at(positions[0]).image;
  const auto h = ref.shape()[0], w = ref.shape()[1];
  const std::int64_t c = with_mask ? 4 : 3;
  std::vector<Real> out;
  out.reserve(static_cast<std::size_t>(
      static_cast<std::int64_t>(positions.size()) * h * w * c));
  for (auto p : positions) {
    const Sample& s = samples.at(p);
    const auto img = s.image.data();
    const auto mask = s.mask.data();
    for (std::int64_t i = 0; i < h * w; ++i) {
      out.insert(out.end(), img.begin() + 3 * i, img.begin() + 3 * i + 3);
      if (with_mask) out.push_back(mask[static_cast<std::size_t>(i)]);
    }
  }
  return Tensor::from({static_cast<std::int64_t>(positions.size()), h, w, c},
                      std::move(out));
}

}  // namespace

Tensor stack_inputs(const std::vector<Sample>& samples,
                    std::span<const std::size_t> positions) {
  return stack(samples, positions, true);
}

Tensor stack_images(const std::vector<Sample>& samples,
                    std::span<const std::size_t> positions) {
  return stack(samples, positions, false);
}

SOFTMESH_END_NAMESPACE
