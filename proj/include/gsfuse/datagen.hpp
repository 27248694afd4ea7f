#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsfuse/data.hpp"

namespace gsfuse::datagen {

/// Tokens 0..3 announce an upward drift, 4..7 a downward one.
inline constexpr std::array<int, 4> kBullishTokens = {0, 1, 2, 3};
inline constexpr std::array<int, 4> kBearishTokens = {4, 5, 6, 7};
inline constexpr int kFirstNeutralToken = 8;

struct ScenarioConfig {
  std::size_t num_events = 200;
  std::size_t lookback = 16;  // L
  std::size_t horizon = 16;   // H
  std::size_t d_x = 1;
  std::size_t d_y = 1;
  std::size_t vocab_size = 64;
  std::size_t script_len_min = 8;
  std::size_t script_len_max = 16;
  std::size_t signal_tokens = 3;
  /// Fraction of events whose script carries the drift direction.
  double rho_signal = 0.5;
  /// Total drift injected after an informative event.
  double kappa = 0.06;
  double sigma_noise = 0.02;
  /// Per-step pull of the path back to base_level.
  double mean_reversion = 0.05;
  double base_level = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Steps over which the drift ramps in: max(1, H / 4).
  std::size_t ramp_steps() const;
};

/// Generated instances in release order plus the full path they were cut from.
struct Scenario {
  Dataset instances;
  /// Entire simulated path, [num_events * (L + H) x d_x].
  Tensor path;
};

/// Expected drift contribution at horizon step h (1-based) for a unit-sign
/// informative event, after mean reversion: sum_k (1 - theta)^(h-k) * increment_k.
double drift_response(const ScenarioConfig& config, std::size_t h);

Scenario generate_scenario(const ScenarioConfig& config);
Dataset generate(const ScenarioConfig& config);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct Splits {
  Dataset train, val, test;
};

/// Contiguous split in release order; val and test get floor(fraction * n),
/// train takes the remainder.
Splits split(const Dataset& data, const SplitSpec& spec = {});

struct IngestOptions {
  std::optional<std::size_t> lookback, horizon, d_x, d_y, vocab_size;
};

struct IngestResult {
  Dataset instances;
  std::vector<std::string> warnings;
};

/// Reads the JSON-lines dataset format, validates every record and sorts by release time.
IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options = {});
IngestResult ingest_stream(std::istream& in, const IngestOptions& options = {});
void write_jsonl(const Dataset& data, const std::filesystem::path& path, bool with_oracle_flags = false);
void write_jsonl(const Dataset& data, std::ostream& out, bool with_oracle_flags = false);

/// Conditional-mean forecast ignoring the script: base + (1 - theta)^h (x_last - base).
Tensor text_blind_oracle(const AlignedInstance& inst, const ScenarioConfig& config);
/// Conditional-mean forecast that also reads planted tokens for the drift direction.
Tensor text_aware_oracle(const AlignedInstance& inst, const ScenarioConfig& config);
/// Direction announced by the script: +1, -1 or 0 when no signal token is present.
int script_direction(const EventScript& script);

/// Stage-1 training pair: L steps in, the next H steps out.
struct SlidingWindow {
  MarketWindow input;
  FutureSegment target;
};

/// Rebuilds contiguous runs of the path from the instances' windows and targets
/// (release-time aligned) and cuts every L + H window with the given stride.
/// Falls back to the instances themselves when d_y differs from d_x.
std::vector<SlidingWindow> sliding_windows(const Dataset& data, std::size_t stride = 1);

}  // namespace gsfuse::datagen
