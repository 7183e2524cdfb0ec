#include "softmesh/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

SOFTMESH_BEGIN_NAMESPACE

Real relative_error(Real analytic, Real numeric) {
  const Real scale =
      std::max({std::abs(analytic), std::abs(numeric), Real(1e-6)});
  return std::abs(analytic - numeric) / scale;
}

Real GradCheckReport::max_rel_error() const {
  Real worst = 0;
  for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
  return worst;
}

bool GradCheckReport::has_non_finite() const {
  return std::any_of(flagged.begin(), flagged.end(),
                     [](const FlaggedCoordinate& f) { return f.non_finite; });
}

bool GradCheckReport::passed(Real tolerance) const {
  return !has_non_finite() && max_rel_error() < tolerance;
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) p.zero_grad();
  const Tensor root = f();
  backward(root);

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    ParamGradReport entry;
    entry.name = p.label().empty() ? "param" + std::to_string(pi) : p.label();
    std::vector<Real> analytic(p.data().begin(), p.data().end());
    if (p.has_grad()) {
      std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    } else {
      std::fill(analytic.begin(), analytic.end(), Real(0));
    }

    std::vector<std::int64_t> coords(analytic.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (!options.coordinates.empty()) {
      coords = pi < options.coordinates.size() ? options.coordinates[pi]
                                               : std::vector<std::int64_t>{};
    } else if (options.max_coords_per_param > 0 &&
        coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }

    auto values = p.mutable_data();
    for (const auto idx : coords) {
      const auto i = static_cast<std::size_t>(idx);
      const Real saved = values[i];
      Real plus = 0, minus = 0;
      {
        NoGradGuard guard;
        values[i] = saved + options.eps;
        plus = f().item();
        values[i] = saved - options.eps;
        minus = f().item();
      }
      values[i] = saved;
      const Real numeric = (plus - minus) / (Real(2) * options.eps);
      ++entry.checked;
      if (!std::isfinite(plus) || !std::isfinite(minus) ||
          !std::isfinite(analytic[i])) {
        report.flagged.push_back({pi, idx, analytic[i], numeric, true});
        entry.max_rel_error = std::numeric_limits<Real>::infinity();
        entry.worst_index = idx;
        continue;
      }
      const Real err = relative_error(analytic[i], numeric);
      if (err > options.tolerance) {
        report.flagged.push_back({pi, idx, analytic[i], numeric, false});
      }
      if (err > entry.max_rel_error || entry.worst_index < 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = idx;
        entry.worst_analytic = analytic[i];
        entry.worst_numeric = numeric;
      }
    }
    report.params.push_back(std::move(entry));
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

SOFTMESH_END_NAMESPACE
