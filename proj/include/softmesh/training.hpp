#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmesh/checkpoint.hpp"
#include "softmesh/dataset.hpp"
#include "softmesh/encoders.hpp"
#include "softmesh/losses.hpp"
#include "softmesh/train_config.hpp"

SOFTMESH_BEGIN_NAMESPACE

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor> params, Real lr, Real beta1, Real beta2,
       Real epsilon);

  // Applies one update from the accumulated grads, then clears them.
  void step();
  void zero_grad();

  const std::vector<NamedTensor>& params() const { return params_; }
  std::int64_t steps() const { return steps_; }
  std::vector<std::vector<Real>>& first_moment() { return m_; }
  std::vector<std::vector<Real>>& second_moment() { return v_; }
  const std::vector<std::vector<Real>>& first_moment() const { return m_; }
  const std::vector<std::vector<Real>>& second_moment() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<Real>> m_, v_;
  Real lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  std::int64_t steps_ = 0;
};

struct TrainState {
  TrainConfig config;
  Mesh template_mesh;
  EncoderParams model[2];
  LandmarkClassifier classifier;
  Adam optimizer[2];
  Adam classifier_optimizer;
  std::int64_t iteration = 0;
};

EncoderConfig encoder_config(const TrainConfig& cfg, int num_vertices);

// Independent seeds for the two models unless identical_models is set.
TrainState init_state(const TrainConfig& cfg, bool identical_models = false);

struct StepLosses {
  Real total = 0;
  Real img[2] = {0, 0};
  Real sil[2] = {0, 0};
  Real l3d[2] = {0, 0};
  Real lc[2] = {0, 0};
  Real train_iou = 0;  // model 1 renders vs input masks, thresholded
};

struct StepOptions {
  bool freeze_model2 = false;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Forward graph of one step without any parameter update.
struct StepGraph {
  Tensor total;
  ModelLosses losses[2];
  StepLosses values;
};
StepGraph build_step(const TrainState& state, const std::vector<Sample>& samples,
                     std::span<const std::size_t> batch_i,
                     std::span<const std::size_t> batch_j,
                     std::uint64_t step_seed);

// One optimization step on batches i and j (positions into samples).
StepLosses train_step(TrainState& state, const std::vector<Sample>& samples,
                      std::span<const std::size_t> batch_i,
                      std::span<const std::size_t> batch_j,
                      std::uint64_t step_seed, const StepOptions& options = {});

// Batch positions for iteration t: the shuffled batch and the next one.
struct BatchPair {
  std::vector<std::size_t> i;
  std::vector<std::size_t> j;
};
BatchPair batches_for(const TrainConfig& cfg, std::size_t dataset_size,
                      std::int64_t iteration);
std::uint64_t step_seed(const TrainConfig& cfg, std::int64_t iteration);

class DatasetTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string metrics_header();
std::string metrics_row(std::int64_t iteration, const StepLosses& l);

struct FitOptions {
  std::string checkpoint_dir;  // empty disables checkpoints
  std::string metrics_path;    // empty disables the trace file
  std::string resume_from;     // checkpoint to continue from
  std::function<void(std::int64_t, const StepLosses&)> on_step;
};

// Runs iterations [state.iteration, cfg.iterations). Metrics rows are
// written for every iteration that is a multiple of metrics_interval.
TrainState fit(const std::vector<Sample>& samples, const TrainConfig& cfg,
               const FitOptions& options = {});

CheckpointFile make_checkpoint(const TrainState& state);
void save_checkpoint(const TrainState& state, const std::string& path);
// Rejects files whose config hash differs from expected_hash when given.
TrainState load_checkpoint(const std::string& path,
                           const std::string& expected_hash = {});

SOFTMESH_END_NAMESPACE
