#pragma once

#include <functional>
#include <string>
#include <vector>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct GradCheckOptions {
  Real eps = sizeof(Real) == 4 ? Real(1e-3) : Real(1e-6);
  // Coordinates whose relative error exceeds this are listed as flagged.
  Real tolerance = Real(1e-2);
  // 0 checks every coordinate; otherwise a seeded subset of this size.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Explicit coordinates per parameter; overrides the subset rule when
  // non-empty. Parameters with an empty list are skipped.
  std::vector<std::vector<std::int64_t>> coordinates;
};

struct FlaggedCoordinate {
  std::size_t param = 0;
  std::int64_t index = 0;
  Real analytic = 0;
  Real numeric = 0;
  bool non_finite = false;
};

struct ParamGradReport {
  std::string name;
  std::size_t checked = 0;
  Real max_rel_error = 0;
  std::int64_t worst_index = -1;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
};

struct GradCheckReport {
  std::vector<ParamGradReport> params;
  std::vector<FlaggedCoordinate> flagged;

  Real max_rel_error() const;
  bool has_non_finite() const;
  bool passed(Real tolerance) const;
};

// Relative error used throughout: |a - n| / max(|a|, |n|, 1e-6).
Real relative_error(Real analytic, Real numeric);

// Compares reverse-mode gradients of f against central differences. f must
// rebuild its graph from the current values of params on every call.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

SOFTMESH_END_NAMESPACE
