#pragma once

#include <string>
#include <vector>

#include "softmesh/grad_check.hpp"

SOFTMESH_BEGIN_NAMESPACE

struct GradSuiteResult {
  std::string name;
  GradCheckReport report;
  Real tolerance = Real(1e-2);
  double seconds = 0;

  bool passed() const { return report.passed(tolerance); }
};

// Render output against camera raws, SH coefficients, vertices and texels
// on a level-0 icosphere at 16x16 with sigma = gamma = 1e-2.
GradSuiteResult renderer_grad_suite(std::uint64_t seed = 1);

// Total dual-model loss against 50 random encoder and classifier
// coordinates on a 16x16 configuration.
GradSuiteResult losses_grad_suite(std::uint64_t seed = 1);

SOFTMESH_END_NAMESPACE
