// Acceptance run: one PASS/FAIL line per criterion, exit status = number of failures.
// Criteria 3 and 4 train the desk configuration end to end on 1000-event
// scenarios over 5 seeds each and take several minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gsfuse/alignment.hpp"
#include "gsfuse/checks.hpp"
#include "gsfuse/config.hpp"
#include "gsfuse/datagen.hpp"
#include "gsfuse/eval.hpp"
#include "gsfuse/fusion.hpp"
#include "gsfuse/trainer.hpp"

using namespace gsfuse;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct RunResult {
  eval::MetricReport metrics;
  eval::GateReport gates;
  train::TrainLog log;
  std::string metrics_csv;
  std::string checkpoint;
};

RunConfig scenario_config(std::uint64_t seed, std::size_t events, double rho, double kappa_over_sigma) {
  RunConfig c = RunConfig::desk();
  c.seed = seed;
  c.scenario.num_events = events;
  c.scenario.rho_signal = rho;
  c.scenario.kappa = kappa_over_sigma * c.scenario.sigma_noise;
  c.train.epochs_ts_only = c.train.epochs_text_only = c.train.epochs_multimodal = 2;
  c.train.batch_size = 32;
  return c;
}

// generate -> serialize -> ingest -> train -> eval, all in memory.
RunResult pipeline(const RunConfig& c) {
  std::stringstream jsonl;
  datagen::write_jsonl(datagen::generate(c.scenario_config()), jsonl, true);
  const auto data = datagen::ingest_stream(jsonl).instances;
  const auto sp = datagen::split(data);
  auto st = train::TrainState::fresh(c.model_config(), c.init_seed());
  RunResult r;
  train::train_all(st, sp.train, sp.val, c.train_config(), r.log);
  r.metrics = eval::compare_branches(st, sp.test);
  r.gates = eval::gate_report(st.model, sp.test);
  std::stringstream csv, ck;
  r.metrics.write_csv(csv, true);
  train::checkpoint_save(st, ck);
  r.metrics_csv = csv.str();
  r.checkpoint = ck.str();
  return r;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = checks::check_all(20);
  const double dt = seconds_since(t0);
  std::size_t passed = 0;
  double worst = 0;
  for (const auto& r : results) {
    passed += r.report.passed;
    worst = std::max(worst, r.report.max_rel_error);
  }
  verdict(1, passed == results.size() && dt < 120.0,
          fmt("gradient checks %zu/%zu passed over 20 seeds (worst rel. error %.2e) in %.1f s", passed,
              results.size(), worst, dt));
}

void criterion2() {
  bool ok = true;
  double worst_sum = 0;
  Rng rng(2024);
  for (int trial = 0; trial < 50 && ok; ++trial) {
    nn::ParamStore store;
    const std::size_t f = 8;
    auto psi = nn::Mlp::create(store, "psi", nn::ParamGroup::Gate, {2 * f, f, 2 * f}, rng);
    for (std::size_t i = 0; i < store.size(); ++i)
      for (double& v : store.at(i).value.data()) v = rng.normal();
    Tape tape;
    nn::Binder b(tape, store);
    Tensor t(Shape{f}), s(Shape{f});
    for (double& v : t.data()) v = rng.normal();
    for (double& v : s.data()) v = rng.normal();
    const auto w = fusion::gate_weights(b, psi, tape.constant(t), tape.constant(s), {});
    for (std::size_t k = 0; k < f; ++k)
      worst_sum = std::max(worst_sum, std::abs(w.text.value()[k] + w.ts.value()[k] - 1.0));
  }
  ok = worst_sum <= 1e-12;

  const fusion::GateConfig gc;  // published defaults, c = 6
  const auto zero = fusion::responsibility(std::vector<double>{0.0, 0.3, -0.2}, gc);
  ok = ok && zero.r[0] == 0.5;

  bool monotone = true, invariant = true, bounded = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(16);
    for (double& v : d) v = rng.normal() * std::exp(rng.normal());
    const auto r = fusion::responsibility(d, gc);
    std::vector<double> d4 = d;
    for (double& v : d4) v *= 4.0;
    const auto r4 = fusion::responsibility(d4, gc);
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (std::size_t j = 0; j < d.size(); ++j)
        if (d[i] < d[j] && r.r[i] > r.r[j]) monotone = false;
      if (std::abs(r.r[i] - r4.r[i]) > 1e-12) invariant = false;
      if (r.r[i] < fusion::sigmoid(-gc.clip_c) - 1e-15 || r.r[i] > fusion::sigmoid(gc.clip_c) + 1e-15) bounded = false;
    }
  }
  // Two outliers in a batch of 16: their scaled utilities are +-8, clipped to +-6.
  std::vector<double> spikes(16, 0.0);
  spikes[0] = 1e6;
  spikes[1] = -1e6;
  const auto extreme = fusion::responsibility(spikes, gc);
  bounded = bounded && std::abs(extreme.r[0] - fusion::sigmoid(6.0)) < 1e-15 &&
            std::abs(extreme.r[1] - fusion::sigmoid(-6.0)) < 1e-15;
  ok = ok && monotone && invariant && bounded;
  verdict(2, ok,
          fmt("max |a_text + a_ts - 1| = %.1e; r(0) = %.3f; monotone %s; x4-invariant %s; within [s(-6), s(6)] %s",
              worst_sum, zero.r[0], monotone ? "yes" : "no", invariant ? "yes" : "no", bounded ? "yes" : "no"));
}

std::vector<RunResult> criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> improvement, gap;
  std::vector<RunResult> runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = pipeline(scenario_config(seed, 1000, 0.5, 3.0));
    improvement.push_back(r.metrics.mse_improvement_pct());
    gap.push_back(*r.gates.informative_mean - *r.gates.uninformative_mean);
    std::printf("  seed %llu: MSE ts-only %.4e full %.4e (%+.2f%%); openness informative %.4f uninformative %.4f\n",
                static_cast<unsigned long long>(seed), r.metrics.ts_only.mse, r.metrics.full.mse, improvement.back(),
                *r.gates.informative_mean, *r.gates.uninformative_mean);
    std::fflush(stdout);
    runs.push_back(std::move(r));
  }
  const double dt = seconds_since(t0);
  const double mi = median(improvement), mg = median(gap);
  verdict(3, mi > 0.0 && dt < 900.0,
          fmt("(a) median full-model MSE improvement over the series-only branch %+.2f%% (5 seeds, %.0f s)", mi, dt));
  verdict(3, mg >= 0.10, fmt("(b) median openness gap informative - uninformative %.4f (need >= 0.10)", mg));
  return runs;
}

// Mean per-step gate openness over each joint-stage epoch.
std::vector<double> joint_openness_by_epoch(const train::TrainLog& log) {
  std::vector<double> sum, n;
  for (const auto& row : log.steps) {
    if (row.stage != train::Stage::Multimodal) continue;
    if (sum.size() < row.epoch) sum.resize(row.epoch), n.resize(row.epoch);
    sum[row.epoch - 1] += row.losses.mean_openness;
    n[row.epoch - 1] += 1;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= n[i];
  return sum;
}

void criterion4() {
  std::vector<double> gap0, open0, drift0, imp1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = pipeline(scenario_config(seed, 1000, 0.0, 3.0));
    gap0.push_back(r.metrics.mse_improvement_pct());
    open0.push_back(r.gates.mean_openness);
    const auto by_epoch = joint_openness_by_epoch(r.log);
    drift0.push_back(by_epoch.back() - by_epoch.front());
    std::printf("  rho=0 seed %llu: MSE gap %+.2f%%, test openness %.4f, training openness by joint epoch %.4f -> %.4f\n",
                static_cast<unsigned long long>(seed), gap0.back(), open0.back(), by_epoch.front(), by_epoch.back());
    std::fflush(stdout);
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = pipeline(scenario_config(seed, 1000, 1.0, 5.0));
    imp1.push_back(r.metrics.mse_improvement_pct());
    std::printf("  rho=1 seed %llu: MSE improvement %+.2f%%\n", static_cast<unsigned long long>(seed), imp1.back());
    std::fflush(stdout);
  }
  const double g = median(gap0), o = median(open0), d = median(drift0), i = median(imp1);
  // "Drifts toward <= 0.5": either already at or below one half, or moving down over the joint stage.
  verdict(4, (o <= 0.5 || d < 0.0) && std::abs(g) <= 2.0,
          fmt("no signal: median openness %.4f, median drift over the joint stage %+.4f (need <= 0.5 or falling); "
              "median MSE gap %+.2f%% (within +-2%%)",
              o, d, g));
  verdict(4, i >= 10.0, fmt("full signal, kappa/sigma = 5: median MSE improvement %+.2f%% (need >= 10%%)", i));
}

void criterion5() {
  Rng rng(55);
  std::size_t matches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(64), k = 1 + rng.below(m);
    std::vector<double> v(m);
    for (double& x : v) x = static_cast<double>(rng.below(6)) + (trial % 2 ? rng.normal() : 0.0);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    idx.resize(k);
    matches += alignment::top_k_indices(v, k) == idx;
  }

  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(12), l = 1 + rng.below(12), f = 2 + rng.below(8);
    auto unit = [&](std::size_t rows) {
      Tensor t(Shape{rows, f});
      for (std::size_t r = 0; r < rows; ++r) {
        double n = 0;
        for (double& v : t.row(r)) n += (v = rng.normal()) * v;
        for (double& v : t.row(r)) v /= std::sqrt(n);
      }
      return t;
    };
    Tape tape;
    const auto maps = alignment::token_step_similarity(tape.constant(unit(m)), tape.constant(unit(l)), 0.2);
    for (std::size_t r = 0; r < m; ++r) {
      double sum = 0;
      for (double v : maps.transport.value().row(r)) sum += v;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    Tensor h(Shape{m, f}), w(Shape{f});
    for (double& v : h.data()) v = rng.normal();
    for (double& v : w.data()) v = rng.normal();
    const auto prof = alignment::salience_and_anchors(tape.constant(h), tape.constant(w), 4);
    double sum = 0;
    for (double v : prof.scores.value().data()) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }

  Tape tape;
  std::vector<Var> pair = {tape.constant(Tensor::vector({1, 0})), tape.constant(Tensor::vector({0, 1}))};
  const double ctr = alignment::instance_contrastive_loss(pair, pair, 1.0).item();
  const double err = std::abs(ctr - std::log1p(std::exp(-1.0)));
  verdict(5, matches == 1000 && worst <= 1e-12 && err <= 1e-9,
          fmt("top-K matches brute force %zu/1000; max |row sum - 1| %.1e; L_ctr %.8f (error %.1e)", matches, worst,
              ctr, err));
}

void criterion6(const std::vector<RunResult>& runs) {
  std::size_t audits = 0, audited = 0;
  bool stages[3] = {false, false, false};
  for (const auto& r : runs) {
    for (const auto& e : r.log.epochs) {
      if (e.epoch == 0) continue;
      ++audited;
      audits += e.audit_passed;
      stages[static_cast<int>(e.stage)] = true;
    }
  }
  // Interrupt after the first text-only epoch, round-trip the checkpoint, finish.
  const auto c = scenario_config(6, 300, 0.5, 3.0);
  const auto sp = datagen::split(datagen::generate(c.scenario_config()));
  const auto tc = c.train_config();
  auto full = train::TrainState::fresh(c.model_config(), c.init_seed());
  train::TrainLog log;
  train::train_all(full, sp.train, sp.val, tc, log);
  auto part = train::TrainState::fresh(c.model_config(), c.init_seed());
  auto tc1 = tc;
  tc1.epochs_text_only = 1;
  train::run_stage(part, train::Stage::TsOnly, sp.train, sp.val, tc, log);
  train::run_stage(part, train::Stage::TextOnly, sp.train, sp.val, tc1, log);
  std::stringstream ck;
  train::checkpoint_save(part, ck);
  auto resumed = train::checkpoint_load(ck);
  train::train_all(resumed, sp.train, sp.val, tc, log);
  std::stringstream a, b;
  train::checkpoint_save(full, a);
  train::checkpoint_save(resumed, b);
  const bool same = a.str() == b.str();
  verdict(6, audits == audited && stages[0] && stages[1] && stages[2] && same,
          fmt("frozen-group audits %zu/%zu passed across all three stages; resumed run %s the uninterrupted one",
              audits, audited, same ? "bitwise equals" : "DIFFERS from"));
}

void criterion7() {
  const auto c = scenario_config(7, 300, 0.5, 3.0);
  const auto a = pipeline(c), b = pipeline(c);
  verdict(7, a.metrics_csv == b.metrics_csv && a.checkpoint == b.checkpoint,
          fmt("two same-seed pipeline runs: metric CSVs %s (%zu bytes), checkpoints %s",
              a.metrics_csv == b.metrics_csv ? "byte-identical" : "DIFFER", a.metrics_csv.size(),
              a.checkpoint == b.checkpoint ? "byte-identical" : "DIFFER"));
}

void criterion8() {
  const auto s = eval::format_scaled(3.38e-4, eval::kMseScale);
  const Tensor y = Tensor::matrix(3, 1, {0.2, -0.1, 0.3});
  const Tensor mirrored = Tensor::matrix(3, 1, {-0.2, 0.1, -0.3});
  const auto perfect = eval::format_scaled(eval::metric_dhr(y, y, 0.0), eval::kDhrScale);
  const auto mirror = eval::format_scaled(eval::metric_dhr(mirrored, y, 0.0), eval::kDhrScale);
  verdict(8, s == "3.38" && perfect == "100.00" && mirror == "0.00",
          fmt("3.38e-4 x1e4 -> \"%s\"; DHR perfect %s, mirrored %s", s.c_str(), perfect.c_str(), mirror.c_str()));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  const auto runs = criterion3();
  criterion4();
  criterion5();
  criterion6(runs);
  criterion7();
  criterion8();
  std::printf("%d failing line(s); total %.0f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
