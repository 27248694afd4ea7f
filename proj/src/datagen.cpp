#include "gsfuse/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gsfuse/errors.hpp"
#include "gsfuse/rng.hpp"
#include "json.hpp"

namespace gsfuse {

namespace {
constexpr std::array<std::string_view, kEventCategoryCount> kCategoryNames = {
    "fomc", "employment", "unemployment_insurance", "cpi", "ppi", "gdp"};
}

std::string_view category_name(EventCategory c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

EventCategory category_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == name) return static_cast<EventCategory>(i);
  }
  throw DataError("unknown event category '" + std::string(name) + "'");
}

}  // namespace gsfuse

namespace gsfuse::datagen {

namespace {

constexpr std::uint64_t kScriptTag = 0x5c417;
constexpr std::uint64_t kPathTag = 0x9a7f;
constexpr std::size_t kBurnIn = 64;

}  // namespace

void ScenarioConfig::validate() const {
  if (num_events == 0) throw ConfigError("scenario: num_events must be positive");
  if (lookback == 0) throw ConfigError("scenario: lookback L must be positive");
  if (horizon == 0) throw ConfigError("scenario: horizon H must be positive");
  if (d_x == 0 || d_y == 0) throw ConfigError("scenario: d_x and d_y must be positive");
  if (d_y > d_x) throw ConfigError("scenario: d_y cannot exceed d_x (targets are the leading path channels)");
  if (vocab_size <= static_cast<std::size_t>(kFirstNeutralToken)) {
    throw ConfigError("scenario: vocab_size must exceed the " + std::to_string(kFirstNeutralToken) +
                      " reserved signal tokens");
  }
  if (script_len_min == 0 || script_len_max < script_len_min) {
    throw ConfigError("scenario: need 1 <= script_len_min <= script_len_max");
  }
  if (signal_tokens == 0 || signal_tokens > script_len_min) {
    throw ConfigError("scenario: signal_tokens must lie in [1, script_len_min]");
  }
  if (!(rho_signal >= 0.0 && rho_signal <= 1.0)) throw ConfigError("scenario: rho_signal must lie in [0, 1]");
  if (!(kappa >= 0.0)) throw ConfigError("scenario: kappa must be non-negative");
  if (!(sigma_noise >= 0.0)) throw ConfigError("scenario: sigma_noise must be non-negative");
  if (!(mean_reversion >= 0.0 && mean_reversion < 1.0)) {
    throw ConfigError("scenario: mean_reversion must lie in [0, 1)");
  }
}

std::size_t ScenarioConfig::ramp_steps() const { return std::max<std::size_t>(1, horizon / 4); }

double drift_response(const ScenarioConfig& config, std::size_t h) {
  const std::size_t ramp = config.ramp_steps();
  const double keep = 1.0 - config.mean_reversion;
  double total = 0.0;
  for (std::size_t k = 1; k <= std::min(h, ramp); ++k) {
    total += std::pow(keep, static_cast<double>(h - k)) * config.kappa / static_cast<double>(ramp);
  }
  return total;
}

Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  const std::size_t L = config.lookback, H = config.horizon, N = config.num_events;
  const std::size_t period = L + H;
  const std::size_t total = N * period;

  struct EventDraw {
    EventScript script;
    bool informative = false;
    int sign = 0;
  };
  std::vector<EventDraw> draws(N);
  const std::uint64_t script_seed = mix_seed(config.seed, kScriptTag);
  for (std::size_t k = 0; k < N; ++k) {
    Rng rng(mix_seed(script_seed, k));
    auto& d = draws[k];
    d.informative = rng.uniform() < config.rho_signal;
    d.sign = rng.below(2) ? 1 : -1;
    d.script.category = static_cast<EventCategory>(rng.below(kEventCategoryCount));
    d.script.release_time = static_cast<std::int64_t>(k * period + L - 1);
    const std::size_t len = config.script_len_min + rng.below(config.script_len_max - config.script_len_min + 1);
    const std::uint64_t neutral = config.vocab_size - kFirstNeutralToken;
    d.script.token_ids.resize(len);
    for (auto& tok : d.script.token_ids) tok = kFirstNeutralToken + static_cast<int>(rng.below(neutral));
    if (d.informative) {
      std::vector<std::size_t> positions(len);
      std::iota(positions.begin(), positions.end(), 0);
      rng.shuffle(positions);
      const auto& pool = d.sign > 0 ? kBullishTokens : kBearishTokens;
      for (std::size_t s = 0; s < config.signal_tokens; ++s) {
        d.script.token_ids[positions[s]] = pool[rng.below(pool.size())];
      }
    }
  }

  std::vector<double> increments(total, 0.0);
  const std::size_t ramp = config.ramp_steps();
  for (std::size_t k = 0; k < N; ++k) {
    if (!draws[k].informative) continue;
    const std::size_t tau = static_cast<std::size_t>(draws[k].script.release_time);
    for (std::size_t h = 1; h <= ramp; ++h) {
      increments[tau + h] += draws[k].sign * config.kappa / static_cast<double>(ramp);
    }
  }

  Tensor path({total, config.d_x});
  Rng path_rng(mix_seed(config.seed, kPathTag));
  const double keep = 1.0 - config.mean_reversion;
  std::vector<double> dev(config.d_x, 0.0);
  for (std::size_t b = 0; b < kBurnIn; ++b) {
    for (auto& v : dev) v = keep * v + config.sigma_noise * path_rng.normal();
  }
  for (std::size_t t = 0; t < total; ++t) {
    for (std::size_t c = 0; c < config.d_x; ++c) {
      dev[c] = keep * dev[c] + config.sigma_noise * path_rng.normal() + increments[t];
      path.at(t, c) = config.base_level + dev[c];
    }
  }

  Scenario out;
  out.instances.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    const std::size_t tau = static_cast<std::size_t>(draws[k].script.release_time);
    AlignedInstance inst;
    inst.id = static_cast<std::int64_t>(k);
    inst.script = std::move(draws[k].script);
    Tensor x({L, config.d_x});
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < config.d_x; ++c) x.at(t, c) = path.at(tau + 1 - L + t, c);
    Tensor y({H, config.d_y});
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t c = 0; c < config.d_y; ++c) y.at(h, c) = path.at(tau + 1 + h, c);
    inst.window.values = std::move(x);
    inst.target.values = std::move(y);
    inst.text_informative = draws[k].informative;
    out.instances.push_back(std::move(inst));
  }
  out.path = std::move(path);
  return out;
}

Dataset generate(const ScenarioConfig& config) { return generate_scenario(config).instances; }

Splits split(const Dataset& data, const SplitSpec& spec) {
  const double sum = spec.train + spec.val + spec.test;
  if (std::abs(sum - 1.0) > 1e-9 || spec.train < 0 || spec.val < 0 || spec.test < 0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = data.size();
  if (n < 3) throw ConfigError("split needs at least 3 instances, got " + std::to_string(n));
  for (std::size_t i = 1; i < n; ++i) {
    if (data[i].script.release_time < data[i - 1].script.release_time) {
      throw ConfigError("split requires instances sorted by release time");
    }
  }
  const auto floor_count = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_val = floor_count(spec.val);
  const std::size_t n_test = floor_count(spec.test);
  const std::size_t n_train = n - n_val - n_test;
  Splits s;
  s.train.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(data.begin() + static_cast<std::ptrdiff_t>(n_train),
               data.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(data.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), data.end());
  return s;
}

namespace {

using nlohmann::json;

[[noreturn]] void field_error(std::size_t line, const std::string& field, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": field '" + field + "' " + what);
}

Tensor parse_matrix(const json& j, std::size_t line, const std::string& field, std::optional<std::size_t>& rows,
                    std::optional<std::size_t>& cols) {
  if (!j.is_array() || j.empty()) field_error(line, field, "must be a non-empty array of rows");
  const std::size_t r = j.size();
  if (!j[0].is_array() || j[0].empty()) field_error(line, field, "rows must be non-empty arrays of numbers");
  const std::size_t c = j[0].size();
  if (rows && *rows != r) {
    field_error(line, field, "has " + std::to_string(r) + " rows, expected " + std::to_string(*rows));
  }
  if (cols && *cols != c) {
    field_error(line, field, "has " + std::to_string(c) + " columns, expected " + std::to_string(*cols));
  }
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != c) field_error(line, field, "is ragged");
    for (const auto& v : row) {
      if (!v.is_number()) field_error(line, field, "contains a non-numeric entry");
      const double d = v.get<double>();
      if (!std::isfinite(d)) field_error(line, field, "contains a non-finite value");
      values.push_back(d);
    }
  }
  rows = r;
  cols = c;
  return Tensor({r, c}, std::move(values));
}

}  // namespace

IngestResult ingest_stream(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  auto lookback = options.lookback, horizon = options.horizon, dx = options.d_x, dy = options.d_y;
  std::string text;
  std::size_t line_no = 0;
  static const std::vector<std::string> kKnown = {"id", "category", "release_time", "tokens",
                                                  "x",  "y",        "text_informative"};
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError("line " + std::to_string(line_no) + ": record must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) field_error(line_no, key, "is not recognized");
    }
    for (const char* req : {"id", "category", "release_time", "tokens", "x", "y"}) {
      if (!j.contains(req)) field_error(line_no, req, "is missing");
    }
    AlignedInstance inst;
    if (!j["id"].is_number_integer()) field_error(line_no, "id", "must be an integer");
    inst.id = j["id"].get<std::int64_t>();
    if (!j["category"].is_string()) field_error(line_no, "category", "must be a string");
    try {
      inst.script.category = category_from_name(j["category"].get<std::string>());
    } catch (const DataError&) {
      field_error(line_no, "category", "names an unknown category");
    }
    if (!j["release_time"].is_number_integer()) field_error(line_no, "release_time", "must be an integer");
    inst.script.release_time = j["release_time"].get<std::int64_t>();
    const auto& toks = j["tokens"];
    if (!toks.is_array() || toks.empty()) field_error(line_no, "tokens", "must be a non-empty integer array");
    for (const auto& t : toks) {
      if (!t.is_number_integer()) field_error(line_no, "tokens", "must contain integers only");
      const auto v = t.get<std::int64_t>();
      if (v < 0 || (options.vocab_size && static_cast<std::size_t>(v) >= *options.vocab_size)) {
        field_error(line_no, "tokens", "contains id " + std::to_string(v) + " outside the vocabulary");
      }
      inst.script.token_ids.push_back(static_cast<int>(v));
    }
    inst.window.values = parse_matrix(j["x"], line_no, "x", lookback, dx);
    inst.target.values = parse_matrix(j["y"], line_no, "y", horizon, dy);
    if (j.contains("text_informative")) {
      if (!j["text_informative"].is_boolean()) field_error(line_no, "text_informative", "must be a boolean");
      inst.text_informative = j["text_informative"].get<bool>();
    }
    result.instances.push_back(std::move(inst));
  }
  if (result.instances.empty()) result.warnings.push_back("dataset is empty");
  std::stable_sort(result.instances.begin(), result.instances.end(), [](const auto& a, const auto& b) {
    return a.script.release_time < b.script.release_time;
  });
  return result;
}

IngestResult ingest(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return ingest_stream(in, options);
}

void write_jsonl(const Dataset& data, std::ostream& out, bool with_oracle_flags) {
  for (const auto& inst : data) {
    nlohmann::ordered_json j;
    j["id"] = inst.id;
    j["category"] = std::string(category_name(inst.script.category));
    j["release_time"] = inst.script.release_time;
    j["tokens"] = inst.script.token_ids;
    auto rows = [](const Tensor& t) {
      std::vector<std::vector<double>> r(t.rows());
      for (std::size_t i = 0; i < t.rows(); ++i) r[i].assign(t.row(i).begin(), t.row(i).end());
      return r;
    };
    j["x"] = rows(inst.window.values);
    j["y"] = rows(inst.target.values);
    if (with_oracle_flags && inst.text_informative) j["text_informative"] = *inst.text_informative;
    out << j.dump() << '\n';
  }
}

void write_jsonl(const Dataset& data, const std::filesystem::path& path, bool with_oracle_flags) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  write_jsonl(data, out, with_oracle_flags);
}

int script_direction(const EventScript& script) {
  int score = 0;
  for (int tok : script.token_ids) {
    if (std::find(kBullishTokens.begin(), kBullishTokens.end(), tok) != kBullishTokens.end()) ++score;
    if (std::find(kBearishTokens.begin(), kBearishTokens.end(), tok) != kBearishTokens.end()) --score;
  }
  return (score > 0) - (score < 0);
}

Tensor text_blind_oracle(const AlignedInstance& inst, const ScenarioConfig& config) {
  const std::size_t H = inst.target.horizon(), dy = inst.target.dim();
  const std::size_t last = inst.window.length() - 1;
  const double keep = 1.0 - config.mean_reversion;
  Tensor out({H, dy});
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t c = 0; c < dy; ++c) {
      const double dev = inst.window.values.at(last, c) - config.base_level;
      out.at(h, c) = config.base_level + std::pow(keep, static_cast<double>(h + 1)) * dev;
    }
  }
  return out;
}

Tensor text_aware_oracle(const AlignedInstance& inst, const ScenarioConfig& config) {
  Tensor out = text_blind_oracle(inst, config);
  const int dir = script_direction(inst.script);
  if (dir == 0) return out;
  for (std::size_t h = 0; h < out.rows(); ++h) {
    const double drift = dir * drift_response(config, h + 1);
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(h, c) += drift;
  }
  return out;
}

std::vector<SlidingWindow> sliding_windows(const Dataset& data, std::size_t stride) {
  if (stride == 0) throw ConfigError("sliding window stride must be positive");
  std::vector<SlidingWindow> windows;
  if (data.empty()) return windows;
  const std::size_t L = data.front().window.length(), H = data.front().target.horizon();
  const std::size_t dx = data.front().window.dim(), dy = data.front().target.dim();
  if (dx != dy) {
    for (const auto& inst : data) windows.push_back({inst.window, inst.target});
    return windows;
  }
  std::vector<const AlignedInstance*> order;
  for (const auto& inst : data) order.push_back(&inst);
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) {
    return a->script.release_time < b->script.release_time;
  });

  auto emit_run = [&](const std::vector<double>& run) {
    const std::size_t steps = run.size() / dx;
    for (std::size_t start = 0; start + L + H <= steps; start += stride) {
      Tensor x({L, dx}), y({H, dy});
      std::copy_n(run.begin() + static_cast<std::ptrdiff_t>(start * dx), L * dx, x.data().begin());
      std::copy_n(run.begin() + static_cast<std::ptrdiff_t>((start + L) * dx), H * dy, y.data().begin());
      windows.push_back({MarketWindow{std::move(x)}, FutureSegment{std::move(y)}});
    }
  };

  std::vector<double> run;
  std::int64_t run_end = 0;  // last covered time step of the current run
  for (const auto* inst : order) {
    const std::int64_t start = inst->script.release_time - static_cast<std::int64_t>(L) + 1;
    if (!run.empty() && start != run_end + 1) {
      emit_run(run);
      run.clear();
    }
    run.insert(run.end(), inst->window.values.data().begin(), inst->window.values.data().end());
    run.insert(run.end(), inst->target.values.data().begin(), inst->target.values.data().end());
    run_end = inst->script.release_time + static_cast<std::int64_t>(H);
  }
  if (!run.empty()) emit_run(run);
  return windows;
}

}  // namespace gsfuse::datagen
