#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsfuse/data.hpp"
#include "gsfuse/model.hpp"
#include "gsfuse/nn.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse::train {

enum class Stage : std::uint8_t { TsOnly, TextOnly, Multimodal };

std::string_view stage_name(Stage stage);
Stage stage_from_name(std::string_view name);
/// Parameter groups a stage updates; everything else stays frozen.
nn::GroupSet stage_groups(Stage stage);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs_ts_only = 2;
  std::size_t epochs_text_only = 2;
  std::size_t epochs_multimodal = 2;
  std::size_t batch_size = 32;
  AdamConfig adam;
  double lambda_align = 0.2;
  double lambda_gate = 0.1;
  /// Global-norm clipping of the gradient; 0 disables it.
  double grad_clip = 0.0;
  /// Stride of the stage-1 sliding windows.
  std::size_t stage1_stride = 1;
  /// In the joint stage, also fit the series-only decode to the target so the
  /// restricted predictor stays a trained forecaster.
  bool train_restricted_branch = true;
  std::uint64_t seed = 0;

  std::size_t epochs(Stage stage) const;
  void validate() const;
};

/// Adam moments and per-parameter step counts, aligned with the ParamStore.
struct AdamState {
  std::vector<Tensor> m, v;
  std::vector<std::uint64_t> steps;

  static AdamState zeros(const nn::ParamStore& store);
};

/// One Adam update of every parameter in `trainable`. Other parameters, their
/// moments and step counts are untouched.
void adam_step(nn::ParamStore& store, AdamState& state, std::span<const Tensor> grads, nn::GroupSet trainable,
               const AdamConfig& config);

/// Scales `grads` in place so their joint l2 norm over `trainable` is at most
/// max_norm. Returns the norm before scaling.
double clip_grad_norm(const nn::ParamStore& store, std::span<Tensor> grads, nn::GroupSet trainable, double max_norm);

struct TrainState {
  GsFuseModel model;
  AdamState adam;
  Stage stage = Stage::TsOnly;
  /// Completed epochs of the current stage.
  std::size_t epochs_done = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  Rng rng;

  static TrainState fresh(const ModelConfig& config, std::uint64_t seed);
};

struct LossBundle {
  double forecast = 0.0;
  double ctr = 0.0;
  double tok = 0.0;
  double gate = 0.0;
  double total = 0.0;
  double mean_openness = 0.0;  // NaN outside the joint stage
};

struct GateOutcome {
  std::int64_t id = 0;
  EventCategory category = EventCategory::Fomc;
  std::vector<double> alpha_text;
  double openness = 0.0;
  double delta = 0.0;
  double r = 0.0;
};

/// (1/N) sum_i MSE(pred_i, y_i) + (1/N) sum_i MAE(pred_i, y_i).
Var forecast_loss(std::span<const Var> predictions, std::span<const Var> targets);

struct ObjectiveTerms {
  Var forecast, ctr, tok, gate;  // alignment and gate terms only in the joint stage
};

struct Objective {
  Var total;
  ObjectiveTerms terms;
  LossBundle losses;
  std::vector<GateOutcome> gates;  // joint stage only
};

/// Loss of one batch under a stage's objective, recorded on the binder's tape.
Objective stage_objective(Stage stage, nn::Binder& b, const GsFuseModel& model,
                          std::span<const EncodedInstance* const> batch, const TrainConfig& config);

struct LogRow {
  Stage stage;
  std::size_t epoch;  // 1-based epoch within the stage
  std::uint64_t step;
  LossBundle losses;
};

struct EpochRecord {
  Stage stage;
  std::size_t epoch;  // 0 = before the first update of the stage
  double val_forecast;
  bool audit_passed;
};

struct StageTransition {
  Stage from;
  Stage to;
  std::size_t from_epochs_done;
  /// False when the previous stage had not run all of its epochs.
  bool from_complete;
};

struct TrainLog {
  std::vector<LogRow> steps;
  std::vector<EpochRecord> epochs;
  std::vector<StageTransition> transitions;

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Runs the remaining epochs of `stage` on `train`, validating on `val`.
/// Moving to a later stage appends a transition record; moving back is an error.
void run_stage(TrainState& state, Stage stage, const Dataset& train, const Dataset& val, const TrainConfig& config,
               TrainLog& log);

void stage1_ts_pretrain(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        TrainLog& log);
void stage2_text_warmup(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                        TrainLog& log);
void stage3_multimodal(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config,
                       TrainLog& log);
/// Continues from wherever `state` stands through the end of the joint stage.
void train_all(TrainState& state, const Dataset& train, const Dataset& val, const TrainConfig& config, TrainLog& log);

/// Mean L_forecast of a stage's forecasts over `data` (no parameter updates).
double validation_forecast(const TrainState& state, Stage stage, const Dataset& data, const TrainConfig& config);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const TrainState& state, const std::filesystem::path& path);
void checkpoint_save(const TrainState& state, std::ostream& out);
TrainState checkpoint_load(const std::filesystem::path& path);
TrainState checkpoint_load(std::istream& in);

}  // namespace gsfuse::train
