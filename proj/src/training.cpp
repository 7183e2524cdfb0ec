#include "softmesh/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "softmesh/metrics.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (std::uint64_t(words[0]) << 32) | words[1];
  return out[0];
}

constexpr std::uint64_t kStreamModel1 = 1;
constexpr std::uint64_t kStreamModel2 = 2;
constexpr std::uint64_t kStreamClassifier = 3;
constexpr std::uint64_t kStreamShuffle = 4;
constexpr std::uint64_t kStreamStep = 5;

std::vector<NamedTensor> all_params(const TrainState& s) {
  std::vector<NamedTensor> out;
  for (int m = 0; m < 2; ++m) {
    for (auto& e : s.model[m].manifest()) {
      out.push_back({"model" + std::to_string(m + 1) + "." + e.name, e.tensor});
    }
  }
  for (auto& e : s.classifier.manifest()) {
    out.push_back({"classifier." + e.name, e.tensor});
  }
  return out;
}

Tensor mask_of(const Tensor& x) { return slice(x, 3, 3, 4); }

Real to_real(const Tensor& t) { return t.item(); }

}  // namespace

Adam::Adam(std::vector<NamedTensor> params, Real lr, Real beta1, Real beta2,
           Real epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), Real(0));
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), Real(0));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(double(beta1_), double(steps_));
  const double bc2 = 1.0 - std::pow(double(beta2_), double(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto x = t.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      const Real mh = static_cast<Real>(m[i] / bc1);
      const Real vh = static_cast<Real>(v[i] / bc2);
      x[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
  zero_grad();
}

EncoderConfig encoder_config(const TrainConfig& cfg, int num_vertices) {
  EncoderConfig e;
  e.image_height = cfg.image_height;
  e.image_width = cfg.image_width;
  e.texture_height = cfg.texture_height;
  e.texture_width = cfg.texture_width;
  e.num_vertices = num_vertices;
  e.d_min = cfg.d_min;
  e.shape_bound = cfg.shape_bound;
  return e;
}

TrainState init_state(const TrainConfig& cfg, bool identical_models) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.template_mesh = icosphere(cfg.icosphere_level);
  const int nv = static_cast<int>(s.template_mesh.num_vertices());
  const EncoderConfig ec = encoder_config(cfg, nv);
  s.model[0] = init_encoder(ec, mix_seed(cfg.seed, kStreamModel1, 0));
  s.model[1] = init_encoder(
      ec, mix_seed(cfg.seed, identical_models ? kStreamModel1 : kStreamModel2, 0));
  s.classifier =
      init_landmark_classifier(nv, mix_seed(cfg.seed, kStreamClassifier, 0));
  for (int m = 0; m < 2; ++m) {
    s.optimizer[m] = Adam(s.model[m].manifest(), cfg.learning_rate, cfg.beta1,
                          cfg.beta2, cfg.epsilon);
  }
  s.classifier_optimizer = Adam(s.classifier.manifest(), cfg.learning_rate,
                                cfg.beta1, cfg.beta2, cfg.epsilon);
  return s;
}

std::uint64_t step_seed(const TrainConfig& cfg, std::int64_t iteration) {
  return mix_seed(cfg.seed, kStreamStep, static_cast<std::uint64_t>(iteration));
}

BatchPair batches_for(const TrainConfig& cfg, std::size_t dataset_size,
                      std::int64_t iteration) {
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  if (dataset_size < 2 * n) {
    throw DatasetTooSmall("dataset has " + std::to_string(dataset_size) +
                          " samples; at least 2 x batch_size = " +
                          std::to_string(2 * n) + " are required");
  }
  const std::size_t per_epoch = dataset_size / n;
  const auto epoch = static_cast<std::uint64_t>(iteration) / per_epoch;
  const std::size_t b = static_cast<std::size_t>(iteration) % per_epoch;
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::mt19937_64 rng(mix_seed(cfg.seed, kStreamShuffle, epoch));
  // Fisher-Yates with an explicit draw so the order is library independent.
  for (std::size_t k = dataset_size - 1; k > 0; --k) {
    std::swap(order[k], order[rng() % (k + 1)]);
  }
  const std::size_t bj = (b + 1) % per_epoch;
  BatchPair p;
  p.i.assign(order.begin() + static_cast<std::ptrdiff_t>(b * n),
             order.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
  p.j.assign(order.begin() + static_cast<std::ptrdiff_t>(bj * n),
             order.begin() + static_cast<std::ptrdiff_t>((bj + 1) * n));
  return p;
}

StepGraph build_step(const TrainState& state, const std::vector<Sample>& samples,
                     std::span<const std::size_t> batch_i,
                     std::span<const std::size_t> batch_j,
                     std::uint64_t seed) {
  const TrainConfig& cfg = state.config;
  const RenderConfig rc = cfg.render_config();
  const Mesh& mesh = state.template_mesh;
  const auto n = static_cast<std::int64_t>(batch_i.size());
  if (n == 0 || batch_j.size() != batch_i.size()) {
    throw std::invalid_argument("train_step: batches must be nonempty and equal");
  }
  for (auto a : batch_i) {
    if (std::find(batch_j.begin(), batch_j.end(), a) != batch_j.end()) {
      throw std::invalid_argument("train_step: batches must be disjoint");
    }
  }

  const Tensor x_i = stack_inputs(samples, batch_i);
  const Tensor x_j = stack_inputs(samples, batch_j);
  const Tensor img_i = stack_images(samples, batch_i);
  const Tensor img_j = stack_images(samples, batch_j);
  const Tensor m_i = mask_of(x_i);

  Attributes a_i[2], a_j[2];
  BatchRender r_i[2];
  ModelLosses losses[2];
  for (int m = 0; m < 2; ++m) {
    a_i[m] = encode(x_i, state.model[m]);
    a_j[m] = encode(x_j, state.model[m]);
    r_i[m] = render_batch(a_i[m], img_i, mesh, rc, cfg.d_min);
    losses[m].img = image_l1(img_i, m_i, r_i[m].image, r_i[m].mask);
    losses[m].sil = silhouette_iou_loss(m_i, r_i[m].mask);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Real> alpha1(static_cast<std::size_t>(n)),
      alpha2(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    alpha1[static_cast<std::size_t>(k)] = static_cast<Real>(unit(rng));
    alpha2[static_cast<std::size_t>(k)] = static_cast<Real>(unit(rng));
  }
  const Attributes a_ij =
      interpolate(a_i[0], a_i[1], a_j[0], a_j[1], alpha1, alpha2);
  const Tensor blend = Real(0.5) * (img_i + img_j);
  const BatchRender r_ij = render_batch(a_ij, blend, mesh, rc, cfg.d_min);

  for (int m = 0; m < 2; ++m) {
    const int encoder = cfg.cycle_cross_model ? 1 - m : m;
    losses[m].l3d = attribute_l1(encode(r_ij.rgba, state.model[encoder]), a_ij);

    const Tensor features = landmark_feature_map(
        concat({r_i[m].rgba, r_ij.rgba}, 3), state.classifier);
    Tensor lc = Tensor::scalar(0);
    for (std::int64_t k = 0; k < n; ++k) {
      const auto& frame = r_i[m].frames[static_cast<std::size_t>(k)];
      const auto& realized = r_i[m].realized[static_cast<std::size_t>(k)];
      const Tensor f = reshape(slice(features, 0, k, k + 1),
                               {cfg.image_height, cfg.image_width,
                                kLandmarkFeatures});
      const Tensor logits =
          pool_and_classify(f, slice(frame.screen, 1, 0, 2), state.classifier);
      Mesh shaped = mesh;
      shaped.vertices.assign(realized.vertices.data().begin(),
                             realized.vertices.data().end());
      const auto cam = realized.camera.data();
      const CameraMatrices cm = camera_matrices(
          CameraRaw{cam[0], cam[1], cam[2], cam[3]}, cfg.image_height,
          cfg.image_width, cfg.fov_deg);
      lc = lc + landmark_consistency(logits, visibility(shaped, cm));
    }
    losses[m].lc = lc * (Real(1) / Real(n));
  }

  StepGraph graph;
  graph.total = total_loss(losses[0], losses[1], cfg.weights);
  graph.losses[0] = losses[0];
  graph.losses[1] = losses[1];
  const Tensor& total = graph.total;

  StepLosses& out = graph.values;
  out.total = to_real(total);
  for (int m = 0; m < 2; ++m) {
    out.img[m] = to_real(losses[m].img);
    out.sil[m] = to_real(losses[m].sil);
    out.l3d[m] = to_real(losses[m].l3d);
    out.lc[m] = to_real(losses[m].lc);
  }
  Real iou = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    iou += iou_metric(r_i[0].frames[static_cast<std::size_t>(k)].mask,
                      reshape(slice(m_i, 0, k, k + 1),
                              {cfg.image_height, cfg.image_width, 1}));
  }
  out.train_iou = iou / Real(n);
  return graph;
}

StepLosses train_step(TrainState& state, const std::vector<Sample>& samples,
                      std::span<const std::size_t> batch_i,
                      std::span<const std::size_t> batch_j,
                      std::uint64_t seed, const StepOptions& options) {
  std::optional<StepGraph> built;
  try {
    built.emplace(build_step(state, samples, batch_i, batch_j, seed));
  } catch (const NonFiniteActivation& e) {
    throw NonFiniteLoss("non-finite total loss at iteration " +
                        std::to_string(state.iteration) + ": " + e.what());
  }
  const StepGraph& graph = *built;
  const StepLosses& out = graph.values;
  if (!std::isfinite(out.total)) {
    throw NonFiniteLoss("non-finite total loss at iteration " +
                        std::to_string(state.iteration) + ": " +
                        metrics_row(state.iteration, out));
  }

  backward(graph.total);
  state.optimizer[0].step();
  if (options.freeze_model2) {
    state.optimizer[1].zero_grad();
  } else {
    state.optimizer[1].step();
  }
  state.classifier_optimizer.step();
  ++state.iteration;
  return out;
}

std::string metrics_header() {
  return "iter,loss_total,loss_img_1,loss_sil_1,loss_3d_1,loss_lc_1,"
         "loss_img_2,loss_sil_2,loss_3d_2,loss_lc_2,train_iou";
}

std::string metrics_row(std::int64_t iteration, const StepLosses& l) {
  std::ostringstream os;
  os.precision(9);
  os << iteration << ',' << l.total;
  for (int m = 0; m < 2; ++m) {
    os << ',' << l.img[m] << ',' << l.sil[m] << ',' << l.l3d[m] << ','
       << l.lc[m];
  }
  os << ',' << l.train_iou;
  return os.str();
}

CheckpointFile make_checkpoint(const TrainState& s) {
  CheckpointFile file;
  file.config = s.config;
  file.iteration = s.iteration;
  auto add = [&](const std::string& name, const Tensor& t) {
    file.arrays.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  };
  for (const auto& e : all_params(s)) add(e.name, e.tensor);
  const Adam* opts[3] = {&s.optimizer[0], &s.optimizer[1],
                         &s.classifier_optimizer};
  const char* names[3] = {"model1", "model2", "classifier"};
  std::vector<Real> steps;
  for (int k = 0; k < 3; ++k) {
    const auto& params = opts[k]->params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Shape& shape = params[p].tensor.shape();
      file.arrays.push_back({std::string("adam.") + names[k] + ".m." +
                                 params[p].name,
                             shape, opts[k]->first_moment()[p]});
      file.arrays.push_back({std::string("adam.") + names[k] + ".v." +
                                 params[p].name,
                             shape, opts[k]->second_moment()[p]});
    }
    steps.push_back(static_cast<Real>(opts[k]->steps()));
  }
  file.arrays.push_back({"adam.steps", {3}, steps});
  return file;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  write_checkpoint(path, make_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path,
                           const std::string& expected_hash) {
  const CheckpointFile file = read_checkpoint(path, expected_hash);
  TrainState s = init_state(file.config);
  s.iteration = file.iteration;
  std::size_t used = 0;
  auto fill = [&](const std::string& name, std::span<Real> dst,
                  const Shape& shape) {
    const CheckpointArray& a = file.at(name);
    if (a.shape != shape) {
      throw CheckpointError(path + ": entry " + name + " has shape " +
                            shape_string(a.shape) + ", expected " +
                            shape_string(shape));
    }
    std::copy(a.values.begin(), a.values.end(), dst.begin());
    ++used;
  };
  for (auto& e : all_params(s)) {
    fill(e.name, e.tensor.mutable_data(), e.tensor.shape());
  }
  Adam* opts[3] = {&s.optimizer[0], &s.optimizer[1], &s.classifier_optimizer};
  const char* names[3] = {"model1", "model2", "classifier"};
  const CheckpointArray& steps = file.at("adam.steps");
  if (steps.values.size() != 3) {
    throw CheckpointError(path + ": entry adam.steps must hold 3 values");
  }
  ++used;
  for (int k = 0; k < 3; ++k) {
    const auto& params = opts[k]->params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Shape& shape = params[p].tensor.shape();
      fill(std::string("adam.") + names[k] + ".m." + params[p].name,
           opts[k]->first_moment()[p], shape);
      fill(std::string("adam.") + names[k] + ".v." + params[p].name,
           opts[k]->second_moment()[p], shape);
    }
    opts[k]->set_steps(static_cast<std::int64_t>(steps.values[static_cast<std::size_t>(k)]));
  }
  if (used != file.arrays.size()) {
    std::set<std::string> expected{"adam.steps"};
    for (const auto& e : all_params(s)) expected.insert(e.name);
    for (int k = 0; k < 3; ++k) {
      for (const auto& p : opts[k]->params()) {
        expected.insert(std::string("adam.") + names[k] + ".m." + p.name);
        expected.insert(std::string("adam.") + names[k] + ".v." + p.name);
      }
    }
    for (const auto& a : file.arrays) {
      if (!expected.count(a.name)) {
        throw CheckpointError(path + ": unexpected entry " + a.name);
      }
    }
    throw CheckpointError(path + ": duplicate entries in manifest");
  }
  return s;
}

TrainState fit(const std::vector<Sample>& samples, const TrainConfig& cfg,
               const FitOptions& options) {
  cfg.validate();
  if (samples.size() < 2 * static_cast<std::size_t>(cfg.batch_size)) {
    throw DatasetTooSmall("dataset has " + std::to_string(samples.size()) +
                          " samples; at least 2 x batch_size = " +
                          std::to_string(2 * cfg.batch_size) +
                          " are required");
  }
  for (const auto& s : samples) {
    if (s.image.shape()[0] != cfg.image_height ||
        s.image.shape()[1] != cfg.image_width) {
      throw std::invalid_argument("sample " + sample_prefix(s.index) +
                                  " is " + shape_string(s.image.shape()) +
                                  " but the config expects " +
                                  std::to_string(cfg.image_height) + "x" +
                                  std::to_string(cfg.image_width));
    }
  }
  TrainState state = options.resume_from.empty()
                         ? init_state(cfg)
                         : load_checkpoint(options.resume_from, config_hash(cfg));

  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    std::vector<std::string> kept;
    if (state.iteration > 0) {
      // Keep rows that precede the resume point.
      std::ifstream prev(options.metrics_path);
      std::string line;
      std::getline(prev, line);
      while (std::getline(prev, line)) {
        if (std::stoll(line.substr(0, line.find(','))) < state.iteration) {
          kept.push_back(line);
        }
      }
    }
    metrics.open(options.metrics_path, std::ios::trunc);
    if (!metrics) {
      throw std::ios_base::failure("cannot write " + options.metrics_path);
    }
    metrics << metrics_header() << '\n';
    for (const auto& line : kept) metrics << line << '\n';
  }
  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
  }

  while (state.iteration < cfg.iterations) {
    const std::int64_t t = state.iteration;
    const BatchPair batches = batches_for(cfg, samples.size(), t);
    const StepLosses losses =
        train_step(state, samples, batches.i, batches.j, step_seed(cfg, t));
    if (metrics.is_open() && t % cfg.metrics_interval == 0) {
      metrics << metrics_row(t, losses) << '\n';
      metrics.flush();
    }
    if (options.on_step) options.on_step(t, losses);
    if (!options.checkpoint_dir.empty() && cfg.checkpoint_interval > 0 &&
        state.iteration % cfg.checkpoint_interval == 0) {
      save_checkpoint(state, options.checkpoint_dir + "/checkpoint_" +
                                 std::to_string(state.iteration) + ".bin");
    }
  }
  if (!options.checkpoint_dir.empty()) {
    save_checkpoint(state, options.checkpoint_dir + "/final.bin");
  }
  return state;
}

SOFTMESH_END_NAMESPACE
