#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmesh/tensor.hpp"
#include "softmesh/train_config.hpp"

SOFTMESH_BEGIN_NAMESPACE

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointArray {
  std::string name;
  Shape shape;
  std::vector<Real> values;
};

struct CheckpointFile {
  TrainConfig config;
  std::string config_hash;
  std::int64_t iteration = 0;
  std::vector<CheckpointArray> arrays;  // manifest order

  const CheckpointArray& at(const std::string& name) const;
};

// Text header (`softmesh-checkpoint v1`, key=value lines, one `entry=` line
// per array) terminated by `end_header`, then little-endian raw arrays in
// manifest order.
void write_checkpoint(const std::string& path, const CheckpointFile& file);

// Throws CheckpointError naming the failing entry on corruption. When
// expected_hash is non-empty a different stored hash is rejected.
CheckpointFile read_checkpoint(const std::string& path,
                               const std::string& expected_hash = {});

SOFTMESH_END_NAMESPACE
