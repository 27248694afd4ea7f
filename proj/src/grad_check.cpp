#include "gsfuse/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gsfuse/errors.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error;
  for (const auto& p : params) {
    if (p.max_rel_error > 0.0 && p.max_rel_error == max_rel_error) {
      os << " worst=" << p.name << "[" << p.worst_index << "] analytic=" << p.worst_analytic
         << " numeric=" << p.worst_numeric;
      break;
    }
  }
  return os.str();
}

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  return f(tape, leaves).item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, std::span<const std::string> names,
                           const GradCheckOptions& options) {
  if (!(options.step >= 1e-6 && options.step <= 1e-4)) {
    throw ConfigError("grad_check: step must lie in [1e-6, 1e-4]");
  }
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    Var out = f(tape, leaves);
    if (!std::isfinite(out.item())) throw NumericalError("grad_check: non-finite value at the base point");
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  Rng rng(options.sample_seed);
  std::vector<Tensor> work(params.begin(), params.end());
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckParam entry;
    entry.name = p < names.size() ? names[p] : "param" + std::to_string(p);
    std::vector<std::size_t> coords(params[p].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const double base = work[p][i];
      work[p][i] = base + options.step;
      const double up = evaluate(f, work);
      work[p][i] = base - options.step;
      const double down = evaluate(f, work);
      work[p][i] = base;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("grad_check: non-finite loss when perturbing " + entry.name + " (parameter " +
                             std::to_string(p) + ", coordinate " + std::to_string(i) + ")");
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[p][i], numeric, options.abs_floor);
      ++entry.coords_checked;
      if (err > entry.max_rel_error || entry.coords_checked == 1) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.worst_analytic = analytic[p][i];
        entry.worst_numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, const GradCheckOptions& options) {
  return grad_check(f, params, {}, options);
}

}  // namespace gsfuse
