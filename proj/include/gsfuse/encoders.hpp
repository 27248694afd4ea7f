#pragma once

#include <cstddef>
#include <cstdint>

#include "gsfuse/data.hpp"
#include "gsfuse/tensor.hpp"

namespace gsfuse::encoders {

/// Global constant every surrogate table derives from.
inline constexpr std::uint64_t kSurrogateSeed = 0x5eedf0a57e11ULL;

struct SurrogateConfig {
  std::size_t vocab_size = 64;
  std::size_t d_raw_text = 64;
  std::size_t d_raw_ts = 32;
  std::size_t d_x = 1;
  /// Adds a sinusoidal code of the token position to every text row.
  bool position_mix = true;
  std::uint64_t seed = kSurrogateSeed;
};

/// Frozen text featurizer: row j = E[token_j] + 0.5 PE(j + 1) + 0.5 C[category].
/// E and C are fixed Gaussian tables drawn from the config seed.
class TextSurrogate {
 public:
  explicit TextSurrogate(const SurrogateConfig& config);

  /// [m x d_raw_text]. Throws DataError for an empty script or an id outside the vocabulary.
  Tensor encode(const EventScript& script) const;
  const SurrogateConfig& config() const { return config_; }

 private:
  SurrogateConfig config_;
  Tensor token_table_;
  Tensor category_table_;
};

/// Frozen TS featurizer: per step and input dim the features
/// [value, first difference, rolling mean(5), rolling std(5)] plus step/L, lifted
/// by a fixed random affine map into d_raw_ts.
class TsSurrogate {
 public:
  explicit TsSurrogate(const SurrogateConfig& config);

  /// [L x d_raw_ts].
  Tensor encode(const MarketWindow& window) const;
  /// Un-lifted feature rows [L x (4 d_x + 1)].
  static Tensor features(const MarketWindow& window);
  const SurrogateConfig& config() const { return config_; }

 private:
  SurrogateConfig config_;
  Tensor lift_;  // [d_raw_ts x n_features]
  Tensor offset_;
};

inline constexpr std::size_t kRollingWindow = 5;

Tensor surrogate_text_encode(const EventScript& script, const SurrogateConfig& config);
Tensor surrogate_ts_encode(const MarketWindow& window, const SurrogateConfig& config);

}  // namespace gsfuse::encoders
