#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsfuse/data.hpp"
#include "gsfuse/model.hpp"
#include "gsfuse/trainer.hpp"

namespace gsfuse::eval {

// Reporting factors: MSE in units of 1e-4, MAE of 1e-3, DHR of 1e-2.
inline constexpr double kMseScale = 1e4;
inline constexpr double kMaeScale = 1e3;
inline constexpr double kDhrScale = 1e2;

struct MseMae {
  double mse = 0.0;
  double mae = 0.0;
};

/// Mean over instances of per-instance MSE and MAE.
MseMae metric_mse_mae(std::span<const Tensor> predictions, std::span<const Tensor> targets);

/// Step-over-step directional hit rate in [0, 1] for a single series (d_y = 1).
/// Step 0 is measured from x_last; equal signs match, and a zero move matches
/// only a zero move.
double metric_dhr(const Tensor& prediction, const Tensor& target, double x_last);

/// Per-event sign strategy: position sign(yhat_H - x_last), return
/// position * (y_H - x_last) / |x_last|.
double sign_strategy_return(const Tensor& prediction, const Tensor& target, double x_last);

/// mean / sample std of the returns; NaN (the undefined sentinel) when the std is zero.
double metric_sharpe(std::span<const double> returns);

/// Two-decimal fixed rendering of raw * factor.
std::string format_scaled(double raw, double factor);

struct BranchMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double dhr = 0.0;     // fraction; NaN when d_y != 1
  double sharpe = 0.0;  // NaN when undefined
};

struct MetricReport {
  std::string dataset;
  std::size_t horizon = 0;
  std::size_t instances = 0;
  BranchMetrics ts_only;  // raw values
  BranchMetrics full;
  double mean_text_gate = 0.0;

  /// (ts_only - full) / ts_only * 100 for MSE and MAE.
  double mse_improvement_pct() const;
  double mae_improvement_pct() const;

  /// Columns: dataset,horizon,branch,n,mse,mae,dhr,sharpe,mean_text_gate.
  /// Scaled mode multiplies by the reporting factors and prints two decimals.
  void write_csv(std::ostream& out, bool scaled) const;
};

/// Decodes the fused context z and the series-only context s on the same instances.
MetricReport compare_branches(const GsFuseModel& model, const Dataset& test, const std::string& dataset = "synthetic");
/// Same, but refuses a state that has not finished any joint-stage epoch.
MetricReport compare_branches(const train::TrainState& state, const Dataset& test,
                              const std::string& dataset = "synthetic");

struct GateRow {
  std::int64_t id = 0;
  EventCategory category = EventCategory::Fomc;
  double openness = 0.0;
  double delta = 0.0;
  double r = 0.0;
  std::optional<bool> informative;
};

inline constexpr std::size_t kHistogramBins = 20;

struct GateReport {
  std::vector<GateRow> rows;
  double mean_openness = 0.0;
  std::array<std::optional<double>, kEventCategoryCount> category_mean{};
  std::array<std::size_t, kHistogramBins> histogram{};
  /// Means over simulator-flagged informative / uninformative rows, when known.
  std::optional<double> informative_mean, uninformative_mean;

  void write_rows_csv(std::ostream& out) const;
  void write_summary_csv(std::ostream& out) const;
  void write_histogram_csv(std::ostream& out) const;
  void write_svg(std::ostream& out) const;
};

/// Bin of an openness value in [0, 1]; the last bin is closed.
std::size_t histogram_bin(double openness);

/// Gate outcomes over a whole dataset; r uses the dataset-wide Delta scale.
GateReport gate_report(const GsFuseModel& model, const Dataset& data);
GateReport build_gate_report(std::vector<GateRow> rows);

struct AlignRow {
  std::int64_t instance_id = 0;
  std::size_t position = 0;  // token position in the script
  int token_id = 0;
  double salience = 0.0;
  std::size_t argmax_step = 0;
  double similarity = 0.0;  // cosine of the token and its best-matching step
};

/// One row per salience anchor of every instance.
std::vector<AlignRow> align_report(const GsFuseModel& model, const Dataset& data);
void write_align_jsonl(std::span<const AlignRow> rows, std::ostream& out);

}  // namespace gsfuse::eval
