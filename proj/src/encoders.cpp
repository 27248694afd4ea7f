#include "gsfuse/encoders.hpp"

#include <cmath>

#include "gsfuse/errors.hpp"
#include "gsfuse/nn.hpp"
#include "gsfuse/rng.hpp"

namespace gsfuse::encoders {

namespace {

constexpr std::uint64_t kTokenTableTag = 1;
constexpr std::uint64_t kCategoryTableTag = 2;
constexpr std::uint64_t kLiftTag = 3;

Tensor gaussian_table(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace

TextSurrogate::TextSurrogate(const SurrogateConfig& config)
    : config_(config),
      token_table_(gaussian_table(config.vocab_size, config.d_raw_text, 1.0, mix_seed(config.seed, kTokenTableTag))),
      category_table_(
          gaussian_table(kEventCategoryCount, config.d_raw_text, 1.0, mix_seed(config.seed, kCategoryTableTag))) {}

Tensor TextSurrogate::encode(const EventScript& script) const {
  const std::size_t m = script.token_ids.size();
  if (m == 0) throw DataError("text surrogate: empty event script");
  const std::size_t d = config_.d_raw_text;
  Tensor out({m, d});
  const auto cat = category_table_.row(static_cast<std::size_t>(script.category));
  for (std::size_t j = 0; j < m; ++j) {
    const int tok = script.token_ids[j];
    if (tok < 0 || static_cast<std::size_t>(tok) >= config_.vocab_size) {
      throw DataError("text surrogate: token id " + std::to_string(tok) + " outside vocabulary of " +
                      std::to_string(config_.vocab_size));
    }
    const auto emb = token_table_.row(static_cast<std::size_t>(tok));
    auto row = out.row(j);
    for (std::size_t c = 0; c < d; ++c) row[c] = emb[c] + 0.5 * cat[c];
    if (config_.position_mix) {
      const Tensor pe = nn::positional_encoding(j + 1, d);
      for (std::size_t c = 0; c < d; ++c) row[c] += 0.5 * pe[c];
    }
  }
  return out;
}

TsSurrogate::TsSurrogate(const SurrogateConfig& config) : config_(config) {
  const std::size_t n_features = 4 * config.d_x + 1;
  lift_ = gaussian_table(config.d_raw_ts, n_features, 1.0 / std::sqrt(static_cast<double>(n_features)),
                         mix_seed(config.seed, kLiftTag));
  offset_ = gaussian_table(1, config.d_raw_ts, 0.1, mix_seed(config.seed, kLiftTag + 1)).reshaped({config.d_raw_ts});
}

Tensor TsSurrogate::features(const MarketWindow& window) {
  const std::size_t len = window.length(), dx = window.dim();
  const std::size_t nf = 4 * dx + 1;
  Tensor f({len, nf});
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t lo = t + 1 >= kRollingWindow ? t + 1 - kRollingWindow : 0;
    const double count = static_cast<double>(t + 1 - lo);
    for (std::size_t k = 0; k < dx; ++k) {
      const double v = window.values.at(t, k);
      const double diff = t == 0 ? 0.0 : v - window.values.at(t - 1, k);
      double mean = 0.0;
      for (std::size_t s = lo; s <= t; ++s) mean += window.values.at(s, k);
      mean /= count;
      double var = 0.0;
      for (std::size_t s = lo; s <= t; ++s) {
        const double dev = window.values.at(s, k) - mean;
        var += dev * dev;
      }
      var /= count;
      f.at(t, 4 * k + 0) = v;
      f.at(t, 4 * k + 1) = diff;
      f.at(t, 4 * k + 2) = mean;
      f.at(t, 4 * k + 3) = std::sqrt(var);
    }
    f.at(t, nf - 1) = static_cast<double>(t) / static_cast<double>(len);
  }
  return f;
}

Tensor TsSurrogate::encode(const MarketWindow& window) const {
  if (window.values.size() == 0) throw DataError("ts surrogate: empty window");
  if (window.dim() != config_.d_x) {
    throw DimensionError("ts surrogate: window has " + std::to_string(window.dim()) + " channels, expected " +
                         std::to_string(config_.d_x));
  }
  const Tensor f = features(window);
  const std::size_t len = f.rows(), nf = f.cols(), d = config_.d_raw_ts;
  Tensor out({len, d});
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = offset_[c];
      for (std::size_t k = 0; k < nf; ++k) acc += lift_.at(c, k) * f.at(t, k);
      out.at(t, c) = acc;
    }
  }
  return out;
}

Tensor surrogate_text_encode(const EventScript& script, const SurrogateConfig& config) {
  return TextSurrogate(config).encode(script);
}

Tensor surrogate_ts_encode(const MarketWindow& window, const SurrogateConfig& config) {
  return TsSurrogate(config).encode(window);
}

}  // namespace gsfuse::encoders
