#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gsfuse/datagen.hpp"
#include "gsfuse/errors.hpp"

using namespace gsfuse;
using namespace gsfuse::datagen;

namespace {

ScenarioConfig base(std::size_t n = 60, std::uint64_t seed = 3) {
  ScenarioConfig c;
  c.num_events = n;
  c.seed = seed;
  return c;
}

double mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST(Generate, DeterministicInSeed) {
  EXPECT_EQ(generate(base()), generate(base()));
  EXPECT_NE(generate(base(60, 3)), generate(base(60, 4)));
}

TEST(Generate, ShapesAndOrder) {
  auto c = base();
  auto d = generate(c);
  ASSERT_EQ(d.size(), c.num_events);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d[i].window.values.shape(), (Shape{c.lookback, c.d_x}));
    EXPECT_EQ(d[i].target.values.shape(), (Shape{c.horizon, c.d_y}));
    EXPECT_GE(d[i].script.token_ids.size(), c.script_len_min);
    EXPECT_LE(d[i].script.token_ids.size(), c.script_len_max);
    if (i) EXPECT_GT(d[i].script.release_time, d[i - 1].script.release_time);
  }
}

TEST(Generate, NoSignalMeansNoInformativeEvents) {
  auto c = base(200);
  c.rho_signal = 0;
  for (const auto& inst : generate(c)) {
    ASSERT_TRUE(inst.text_informative.has_value());
    EXPECT_FALSE(*inst.text_informative);
    EXPECT_EQ(script_direction(inst.script), 0);
  }
}

TEST(Generate, FullSignalPlantsDirection) {
  auto c = base(200);
  c.rho_signal = 1;
  for (const auto& inst : generate(c)) {
    EXPECT_TRUE(*inst.text_informative);
    EXPECT_NE(script_direction(inst.script), 0);
  }
}

TEST(Generate, ZeroKappaFlagHasNoEffect) {
  auto a = base(80);
  a.kappa = 0;
  a.rho_signal = 0;
  auto b = a;
  b.rho_signal = 1;
  const auto da = generate(a), db = generate(b);
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].window.values, db[i].window.values);
    EXPECT_EQ(da[i].target.values, db[i].target.values);
  }
}

TEST(Oracle, TextAwareBeatsBlindWhenDriftIsLarge) {
  auto c = base(400);
  c.rho_signal = 0.5;
  c.kappa = 5 * c.sigma_noise;
  double blind = 0, aware = 0;
  for (const auto& inst : generate(c)) {
    blind += mse(text_blind_oracle(inst, c), inst.target.values);
    aware += mse(text_aware_oracle(inst, c), inst.target.values);
  }
  EXPECT_LT(aware, blind);
  // With no signal both oracles coincide.
  c.rho_signal = 0;
  for (const auto& inst : generate(c)) EXPECT_EQ(text_blind_oracle(inst, c), text_aware_oracle(inst, c));
}

TEST(Oracle, DriftResponseAccumulatesRamp) {
  auto c = base();
  c.mean_reversion = 0;
  // Without reversion the full drift kappa is in place once the ramp completes.
  EXPECT_NEAR(drift_response(c, c.horizon), c.kappa, 1e-12);
  EXPECT_LT(drift_response(c, 1), c.kappa);
}

TEST(Split, PaperRatios) {
  auto d10 = generate(base(10));
  auto s = split(d10);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  auto s5 = split(generate(base(5)));
  EXPECT_EQ(s5.train.size(), 3u);
  EXPECT_EQ(s5.val.size(), 1u);
  EXPECT_EQ(s5.test.size(), 1u);
}

TEST(Split, TestStrictlyAfterTrainWithoutLeakage) {
  auto c = base(50);
  auto s = split(generate(c));
  std::int64_t last_train_target_end = 0;
  for (const auto& i : s.train)
    last_train_target_end = std::max<std::int64_t>(last_train_target_end, i.script.release_time + std::int64_t(c.horizon));
  for (const auto& i : s.test) {
    for (const auto& t : s.train) EXPECT_GT(i.script.release_time, t.script.release_time);
    // The test look-back window starts at or after the last train target ends.
    EXPECT_GE(i.script.release_time - std::int64_t(c.lookback), last_train_target_end);
  }
}

TEST(Ingest, RoundTrip) {
  auto d = generate(base(25));
  std::stringstream ss;
  write_jsonl(d, ss, true);
  auto back = ingest_stream(ss);
  EXPECT_TRUE(back.warnings.empty());
  EXPECT_EQ(back.instances, d);
}

TEST(Ingest, RejectsMislabeledLength) {
  auto c = base(3);
  std::stringstream ss;
  write_jsonl(generate(c), ss);
  IngestOptions opt;
  opt.lookback = c.lookback + 1;
  try {
    ingest_stream(ss, opt);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos) << e.what();
  }
}

TEST(Ingest, EmptyFileWarns) {
  std::stringstream ss;
  auto r = ingest_stream(ss);
  EXPECT_TRUE(r.instances.empty());
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Ingest, NamesBadFields) {
  std::stringstream ss(R"({"id":1,"category":"cpi","release_time":3,"tokens":[1,2],"x":[[1]],"y":[[1]],"extra":1})");
  EXPECT_THROW(ingest_stream(ss), DataError);
  std::stringstream bad_tok(R"({"id":1,"category":"cpi","release_time":3,"tokens":[999],"x":[[1]],"y":[[1]]})");
  IngestOptions opt;
  opt.vocab_size = 64;
  EXPECT_THROW(ingest_stream(bad_tok, opt), DataError);
}

TEST(SlidingWindows, CoverThePathWithStride) {
  auto c = base(12);
  auto d = generate(c);
  auto w1 = sliding_windows(d, 1), w4 = sliding_windows(d, 4);
  ASSERT_FALSE(w1.empty());
  EXPECT_GT(w1.size(), d.size());
  EXPECT_NEAR(static_cast<double>(w4.size()), std::ceil(static_cast<double>(w1.size()) / 4.0), 1.0);
  for (const auto& w : w1) {
    EXPECT_EQ(w.input.values.rows(), c.lookback);
    EXPECT_EQ(w.target.values.rows(), c.horizon);
  }
  // The first window is the first instance itself.
  EXPECT_EQ(w1.front().input.values, d.front().window.values);
  EXPECT_EQ(w1.front().target.values, d.front().target.values);
}

TEST(Config, Validation) {
  auto c = base();
  c.vocab_size = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base();
  c.rho_signal = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base();
  c.signal_tokens = c.script_len_min + 1;
  EXPECT_THROW(c.validate(), ConfigError);
}
