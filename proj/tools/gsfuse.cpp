// gsfuse: generate -> train -> eval, plus gate / alignment inspection and
// gradient checks. Exit codes: 0 ok, 1 internal, 2 usage/config, 3 data, 4 numerical.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gsfuse/checks.hpp"
#include "gsfuse/config.hpp"
#include "gsfuse/datagen.hpp"
#include "gsfuse/errors.hpp"
#include "gsfuse/eval.hpp"
#include "gsfuse/trainer.hpp"

namespace {

using namespace gsfuse;

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  std::cerr << j.dump() << '\n';
  return code;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

Dataset load_data(const std::string& path, const ModelConfig* model) {
  datagen::IngestOptions opt;
  if (model) {
    opt.horizon = model->horizon;
    opt.d_x = model->d_x;
    opt.d_y = model->d_y;
    opt.vocab_size = model->vocab_size;
  }
  auto res = datagen::ingest(path, opt);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  if (res.instances.empty()) throw DataError(path + ": no instances");
  return std::move(res.instances);
}

const Dataset& pick_split(const datagen::Splits& sp, const Dataset& all, const std::string& which) {
  if (which == "train") return sp.train;
  if (which == "val") return sp.val;
  if (which == "test") return sp.test;
  return all;
}

train::TrainState load_state(const std::string& path, std::optional<std::uint64_t> seed) {
  auto st = train::checkpoint_load(std::filesystem::path(path));
  if (seed && *seed != st.seed) {
    throw ConfigError("--seed " + std::to_string(*seed) + " does not match the checkpoint seed " +
                      std::to_string(st.seed));
  }
  return st;
}

struct Opts {
  std::string config, data, out, checkpoint, log, resume, split = "test", preset = "desk";
  std::string summary, histogram, svg, module = "all";
  std::optional<std::uint64_t> seed;
  bool raw = false, scaled = false, no_flags = false;
  std::size_t seeds = 20;
};

int cmd_config(const Opts& o) {
  RunConfig c = o.preset == "paper" ? RunConfig::paper() : RunConfig::desk();
  if (o.seed) c.seed = *o.seed;
  save_run_config(c, o.out);
  return kOk;
}

int cmd_generate(const Opts& o) {
  RunConfig c = load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  const auto data = datagen::generate(c.scenario_config());
  auto out = open_out(o.out);
  datagen::write_jsonl(data, out, !o.no_flags);
  std::cerr << "generated " << data.size() << " instances\n";
  return kOk;
}

int cmd_train(const Opts& o) {
  RunConfig c = load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  const ModelConfig mc = c.model_config();
  const Dataset data = load_data(o.data, &mc);
  const auto sp = datagen::split(data);
  const auto tc = c.train_config();
  train::TrainState st = o.resume.empty() ? train::TrainState::fresh(mc, c.init_seed())
                                          : load_state(o.resume, c.seed);
  train::TrainLog log;
  train::train_all(st, sp.train, sp.val, tc, log);
  train::checkpoint_save(st, std::filesystem::path(o.out));
  if (!o.log.empty()) log.write_csv(std::filesystem::path(o.log));
  for (const auto& e : log.epochs) {
    std::fprintf(stderr, "%s epoch %zu val_forecast %.6g\n", std::string(train::stage_name(e.stage)).c_str(),
                 e.epoch, e.val_forecast);
  }
  return kOk;
}

int cmd_eval(const Opts& o) {
  const auto st = load_state(o.checkpoint, o.seed);
  const Dataset data = load_data(o.data, &st.model.config());
  const auto sp = datagen::split(data);
  const auto report = eval::compare_branches(st, pick_split(sp, data, o.split), o.split);
  if (o.out.empty()) {
    report.write_csv(std::cout, !o.raw);
  } else {
    auto out = open_out(o.out);
    report.write_csv(out, !o.raw);
  }
  return kOk;
}

int cmd_gate_report(const Opts& o) {
  const auto st = load_state(o.checkpoint, o.seed);
  const Dataset data = load_data(o.data, &st.model.config());
  const auto sp = datagen::split(data);
  const auto rep = eval::gate_report(st.model, pick_split(sp, data, o.split));
  {
    auto out = open_out(o.out);
    rep.write_rows_csv(out);
  }
  if (!o.summary.empty()) {
    auto out = open_out(o.summary);
    rep.write_summary_csv(out);
  }
  if (!o.histogram.empty()) {
    auto out = open_out(o.histogram);
    rep.write_histogram_csv(out);
  }
  if (!o.svg.empty()) {
    auto out = open_out(o.svg);
    rep.write_svg(out);
  }
  return kOk;
}

int cmd_align_report(const Opts& o) {
  const auto st = load_state(o.checkpoint, o.seed);
  const Dataset data = load_data(o.data, &st.model.config());
  const auto sp = datagen::split(data);
  const auto rows = eval::align_report(st.model, pick_split(sp, data, o.split));
  auto out = open_out(o.out);
  eval::write_align_jsonl(rows, out);
  return kOk;
}

int cmd_grad_check(const Opts& o) {
  const std::uint64_t first = o.seed.value_or(1);
  std::vector<checks::LossCheck> results;
  if (o.module == "all") {
    results = checks::check_all(o.seeds, first);
  } else {
    const auto term = checks::term_from_name(o.module);
    for (std::uint64_t s = first; s < first + o.seeds; ++s) {
      if (term == checks::LossTerm::Forecast) {
        for (auto stage : {train::Stage::TsOnly, train::Stage::TextOnly, train::Stage::Multimodal}) {
          results.push_back(checks::check_loss(term, stage, s));
        }
      } else {
        results.push_back(checks::check_loss(term, train::Stage::Multimodal, s));
      }
    }
  }
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-8s %-10s seed %-4llu %s\n", std::string(checks::term_name(r.term)).c_str(),
                std::string(train::stage_name(r.stage)).c_str(), static_cast<unsigned long long>(r.seed),
                r.report.summary().c_str());
    ok = ok && r.report.passed;
  }
  std::printf("%s: %zu checks\n", ok ? "PASS" : "FAIL", results.size());
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsfuse: Granger-gated multimodal event forecasting"};
  app.require_subcommand(1);
  Opts o;

  auto seed_opt = [&](CLI::App* sub, const char* help) { sub->add_option("--seed", o.seed, help); };

  auto* config = app.add_subcommand("config", "Write a config template holding every knob");
  config->add_option("--out", o.out, "Output JSON path")->required();
  config->add_option("--preset", o.preset, "desk (single-core widths) or paper (published defaults)")
      ->check(CLI::IsMember({"desk", "paper"}));
  seed_opt(config, "Seed written into the template");

  auto* generate = app.add_subcommand("generate", "Simulate an event-driven market scenario");
  generate->add_option("--config", o.config, "Run config JSON")->required();
  generate->add_option("--out", o.out, "Output dataset (JSON lines)")->required();
  generate->add_flag("--no-oracle-flags", o.no_flags, "Omit the simulator's informative flags");
  seed_opt(generate, "Override the config seed");

  auto* trainc = app.add_subcommand("train", "Three-stage training; writes a checkpoint");
  trainc->add_option("--config", o.config, "Run config JSON")->required();
  trainc->add_option("--data", o.data, "Dataset (JSON lines)")->required();
  trainc->add_option("--out", o.out, "Checkpoint path")->required();
  trainc->add_option("--log", o.log, "Per-step loss CSV");
  trainc->add_option("--resume", o.resume, "Continue from this checkpoint");
  seed_opt(trainc, "Override the config seed");

  auto add_eval_inputs = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "Dataset (JSON lines)")->required();
    sub->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
    sub->add_option("--split", o.split, "train, val, test or all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    seed_opt(sub, "Must match the checkpoint seed when given");
  };

  auto* evalc = app.add_subcommand("eval", "TS-only branch vs full model metrics");
  add_eval_inputs(evalc);
  evalc->add_option("--out", o.out, "Metrics CSV (stdout when omitted)");
  auto* scaled = evalc->add_flag("--scaled", o.scaled, "Report MSE x1e4, MAE x1e3, DHR x1e2 (default)");
  evalc->add_flag("--raw", o.raw, "Report unscaled values")->excludes(scaled);

  auto* gate = app.add_subcommand("gate-report", "Per-instance gate openness, utility and responsibility");
  add_eval_inputs(gate);
  gate->add_option("--out", o.out, "Per-instance rows CSV")->required();
  gate->add_option("--summary", o.summary, "Overall and per-category means CSV");
  gate->add_option("--histogram", o.histogram, "20-bin openness histogram CSV");
  gate->add_option("--svg", o.svg, "Histogram plot (SVG)");

  auto* align = app.add_subcommand("align-report", "Top-salience tokens and their best-matching steps");
  add_eval_inputs(align);
  align->add_option("--out", o.out, "Output JSON lines")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference checks of every loss on micro models");
  gc->add_option("--module", o.module, "all, forecast, ctr, tok, gate or total");
  gc->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  seed_opt(gc, "First seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*config) return cmd_config(o);
    if (*generate) return cmd_generate(o);
    if (*trainc) return cmd_train(o);
    if (*evalc) return cmd_eval(o);
    if (*gate) return cmd_gate_report(o);
    if (*align) return cmd_align_report(o);
    if (*gc) return cmd_grad_check(o);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kUsage);
  } catch (const DimensionError& e) {
    return fail("data", e.what(), kData);
  } catch (const DataError& e) {
    return fail("data", e.what(), kData);
  } catch (const NumericalError& e) {
    return fail("numerical", e.what(), kNumerical);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
  return kInternal;
}
