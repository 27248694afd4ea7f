#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gsfuse/tape.hpp"

namespace gsfuse {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error so near-zero gradients compare absolutely.
  double abs_floor = 1e-6;
  /// Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t sample_seed = 0;
};

struct GradCheckParam {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckParam> params;
  double max_rel_error = 0.0;
  bool passed = false;

  std::string summary() const;
};

/// Builds a scalar on `tape` from one leaf per parameter tensor.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

/// Relative error between tape gradients and central differences
/// (f(x+h) - f(x-h)) / 2h for each probed coordinate. Pass iff the maximum is
/// <= tolerance. Throws NumericalError naming the parameter and coordinate when
/// f is non-finite at a perturbed point.
GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, std::span<const std::string> names,
                           const GradCheckOptions& options = {});

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double abs_floor);

}  // namespace gsfuse
